"""Dense tensor kernels with reverse-mode gradients.

The model needs a fixed, small operator set (matrix multiply, row softmax,
RMS normalization, cross-entropy, a few structural ops), so each op carries a
hand-written backward closure instead of pulling in a general autodiff
framework. Arrays are numpy; ops treat the last two axes as the matrix and
broadcast leading batch axes like numpy does. Training runs in float64 so
finite-difference checks are trustworthy; inference casts parameters to
float32 and skips gradient recording entirely.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DimensionError, MaskingError, NumericError

Array = np.ndarray

RMS_EPS = 1e-6
ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPS = 1e-8


class Tensor:
    """A dense array plus an optional gradient and backward closure.

    ``backward()`` runs reverse-mode accumulation over the recorded graph.
    Tensors with ``requires_grad=False`` participate in forward math but
    record nothing, so inference pays only the cost of the numpy calls.
    """

    __slots__ = ("data", "grad", "requires_grad", "name", "_parents", "_backward")

    def __init__(self, data, requires_grad: bool = False, name: str = ""):
        arr = np.asarray(data)
        if arr.dtype not in (np.float32, np.float64):
            arr = arr.astype(np.float64)
        self.data = arr
        self.grad: Array | None = None
        self.requires_grad = requires_grad
        self.name = name
        self._parents: tuple[Tensor, ...] = ()
        self._backward = None

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    def accumulate_grad(self, g: Array) -> None:
        if self.grad is None:
            self.grad = np.zeros_like(self.data)
        self.grad += g

    def zero_grad(self) -> None:
        self.grad = None

    def backward(self) -> None:
        """Reverse-mode accumulation from this (scalar) tensor."""
        if self.data.size != 1:
            raise DimensionError("backward() requires a scalar tensor")
        topo: list[Tensor] = []
        seen: set[int] = set()
        stack: list[tuple[Tensor, bool]] = [(self, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                topo.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for p in node._parents:
                if p.requires_grad and id(p) not in seen:
                    stack.append((p, False))
        self.grad = np.ones_like(self.data)
        for node in reversed(topo):
            if node._backward is not None:
                node._backward()

    def __repr__(self) -> str:
        tag = f" name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.shape}, dtype={self.data.dtype}{tag})"


def constant(data, dtype=None) -> Tensor:
    arr = np.asarray(data)
    if dtype is not None:
        arr = arr.astype(dtype, copy=False)
    return Tensor(arr)


def parameter(data, name: str = "") -> Tensor:
    t = Tensor(np.array(data, dtype=np.float64), requires_grad=True, name=name)
    return t


def _result(data: Array, parents: tuple[Tensor, ...], backward=None) -> Tensor:
    out = Tensor(data)
    if any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = parents
        out._backward = backward
    return out


def _unbroadcast(grad: Array, shape: tuple[int, ...]) -> Array:
    """Sum-reduce ``grad`` back to ``shape`` after numpy broadcasting."""
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad


def matmul(a: Tensor, b: Tensor) -> Tensor:
    """Batched matrix product over the last two axes."""
    if a.data.ndim < 2 or b.data.ndim < 2:
        raise DimensionError("matmul expects tensors with ndim >= 2")
    if a.data.shape[-1] != b.data.shape[-2]:
        raise DimensionError(
            f"matmul inner dimensions disagree: {a.data.shape} @ {b.data.shape}"
        )
    y = a.data @ b.data
    out = _result(y, (a, b))

    def backward():
        g = out.grad
        if a.requires_grad:
            ga = g @ np.swapaxes(b.data, -1, -2)
            a.accumulate_grad(_unbroadcast(ga, a.data.shape))
        if b.requires_grad:
            gb = np.swapaxes(a.data, -1, -2) @ g
            b.accumulate_grad(_unbroadcast(gb, b.data.shape))

    out._backward = backward if out.requires_grad else None
    return out


def add(a: Tensor, b: Tensor) -> Tensor:
    y = a.data + b.data
    out = _result(y, (a, b))

    def backward():
        g = out.grad
        if a.requires_grad:
            a.accumulate_grad(_unbroadcast(g, a.data.shape))
        if b.requires_grad:
            b.accumulate_grad(_unbroadcast(g, b.data.shape))

    out._backward = backward if out.requires_grad else None
    return out


def mul(a: Tensor, b: Tensor) -> Tensor:
    y = a.data * b.data
    out = _result(y, (a, b))

    def backward():
        g = out.grad
        if a.requires_grad:
            a.accumulate_grad(_unbroadcast(g * b.data, a.data.shape))
        if b.requires_grad:
            b.accumulate_grad(_unbroadcast(g * a.data, b.data.shape))

    out._backward = backward if out.requires_grad else None
    return out


def scale(a: Tensor, c: float) -> Tensor:
    out = _result(a.data * c, (a,))

    def backward():
        a.accumulate_grad(out.grad * c)

    out._backward = backward if out.requires_grad else None
    return out


def relu(a: Tensor) -> Tensor:
    y = np.maximum(a.data, 0.0)
    out = _result(y, (a,))

    def backward():
        a.accumulate_grad(out.grad * (a.data > 0))

    out._backward = backward if out.requires_grad else None
    return out


def softplus(a: Tensor) -> Tensor:
    """log(1 + exp(x)), computed stably."""
    x = a.data
    y = np.maximum(x, 0.0) + np.log1p(np.exp(-np.abs(x)))
    out = _result(y, (a,))

    def backward():
        sig = 1.0 / (1.0 + np.exp(-x))
        a.accumulate_grad(out.grad * sig)

    out._backward = backward if out.requires_grad else None
    return out


def reshape(a: Tensor, shape: tuple[int, ...]) -> Tensor:
    out = _result(a.data.reshape(shape), (a,))

    def backward():
        a.accumulate_grad(out.grad.reshape(a.data.shape))

    out._backward = backward if out.requires_grad else None
    return out


def transpose(a: Tensor, axes: tuple[int, ...]) -> Tensor:
    out = _result(a.data.transpose(axes), (a,))
    inv = np.argsort(axes)

    def backward():
        a.accumulate_grad(out.grad.transpose(inv))

    out._backward = backward if out.requires_grad else None
    return out


def swap_last2(a: Tensor) -> Tensor:
    axes = tuple(range(a.data.ndim - 2)) + (a.data.ndim - 1, a.data.ndim - 2)
    return transpose(a, axes)


def gather_rows(a: Tensor, index: Array) -> Tensor:
    """Select rows of a 2-D tensor; output shape is index.shape + (h,).

    Backward scatter-adds, so repeated indices accumulate correctly.
    """
    if a.data.ndim != 2:
        raise DimensionError("gather_rows expects a 2-D tensor")
    idx = np.asarray(index)
    out = _result(a.data[idx], (a,))

    def backward():
        ga = np.zeros_like(a.data)
        np.add.at(ga, idx.reshape(-1), out.grad.reshape(-1, a.data.shape[1]))
        a.accumulate_grad(ga)

    out._backward = backward if out.requires_grad else None
    return out


def sum_all(a: Tensor) -> Tensor:
    out = _result(np.asarray(a.data.sum()), (a,))

    def backward():
        a.accumulate_grad(np.broadcast_to(out.grad, a.data.shape).copy())

    out._backward = backward if out.requires_grad else None
    return out


def mean_all(a: Tensor) -> Tensor:
    return scale(sum_all(a), 1.0 / a.data.size)


def softmax_rows(m: Tensor) -> Tensor:
    """Row softmax over the last axis, stabilized by row-max subtraction.

    Entries equal to -inf act as a mask and map to exactly 0. A row that is
    entirely -inf has no valid support and raises MaskingError.
    """
    x = m.data
    row_max = np.max(x, axis=-1, keepdims=True)
    if not np.all(np.isfinite(row_max)):
        if np.any(np.isneginf(row_max)):
            raise MaskingError("softmax row is entirely masked (-inf)")
        raise NumericError("softmax input contains NaN or +inf")
    z = np.exp(x - row_max)
    p = z / z.sum(axis=-1, keepdims=True)
    out = _result(p, (m,))

    def backward():
        g = out.grad
        inner = (p * g).sum(axis=-1, keepdims=True)
        m.accumulate_grad(p * (g - inner))

    out._backward = backward if out.requires_grad else None
    return out


def rms_norm(x: Tensor, gain: Tensor) -> Tensor:
    """Scale each row to unit RMS (plus epsilon guard), then apply a gain.

    x (..., h), gain (h,). The epsilon keeps zero rows at zero.
    """
    if x.data.shape[-1] != gain.data.shape[-1]:
        raise DimensionError("rms_norm gain length must match the last axis")
    h = x.data.shape[-1]
    ms = np.mean(x.data * x.data, axis=-1, keepdims=True) + RMS_EPS
    inv = 1.0 / np.sqrt(ms)
    y = x.data * inv * gain.data
    out = _result(y, (x, gain))

    def backward():
        g = out.grad
        if x.requires_grad:
            gg = g * gain.data
            dot = (gg * x.data).sum(axis=-1, keepdims=True)
            gx = inv * gg - (inv ** 3 / h) * x.data * dot
            x.accumulate_grad(gx)
        if gain.requires_grad:
            ggain = (g * x.data * inv).reshape(-1, h).sum(axis=0)
            gain.accumulate_grad(ggain)

    out._backward = backward if out.requires_grad else None
    return out


def linear_forward(x: Tensor, w: Tensor, b: Tensor) -> Tensor:
    """y = x @ w + b with w (a, b) and bias (b,) broadcast over rows."""
    if w.data.ndim != 2 or b.data.ndim != 1:
        raise DimensionError("linear_forward expects a 2-D weight and 1-D bias")
    if x.data.shape[-1] != w.data.shape[0] or w.data.shape[1] != b.data.shape[0]:
        raise DimensionError(
            f"linear_forward shapes disagree: x{x.data.shape} w{w.data.shape} b{b.data.shape}"
        )
    return add(matmul(x, w), b)


def cross_entropy(logits: Tensor, target: int) -> Tensor:
    """-log softmax(logits)[target] for a 1-D logits vector.

    Masked (-inf) entries are legal as long as the target itself is unmasked.
    """
    x = logits.data
    if x.ndim != 1:
        raise DimensionError("cross_entropy expects 1-D logits")
    k = x.shape[0]
    if not (0 <= int(target) < k):
        raise IndexError(f"target {target} out of range for {k} logits")
    target = int(target)
    m = float(np.max(x))
    if not np.isfinite(m):
        if m == -np.inf:
            raise MaskingError("all logits are masked")
        raise NumericError("logits contain NaN or +inf")
    z = np.exp(x - m)
    lse = m + np.log(z.sum())
    loss = lse - x[target]
    p = z / z.sum()
    out = _result(np.asarray(loss), (logits,))

    def backward():
        g = p.copy()
        g[target] -= 1.0
        logits.accumulate_grad(out.grad * g)

    out._backward = backward if out.requires_grad else None
    return out


def nll_rows(logits: Tensor, targets: Array) -> Tensor:
    """Per-row -log softmax(logits)[target]; logits (..., k), targets (...)."""
    x = logits.data
    idx = np.asarray(targets)
    if idx.shape != x.shape[:-1]:
        raise DimensionError("targets must index one entry per logits row")
    row_max = np.max(x, axis=-1, keepdims=True)
    if np.any(np.isneginf(row_max)):
        raise MaskingError("a logits row is entirely masked")
    z = np.exp(x - row_max)
    denom = z.sum(axis=-1, keepdims=True)
    lse = row_max[..., 0] + np.log(denom[..., 0])
    picked = np.take_along_axis(x, idx[..., None], axis=-1)[..., 0]
    losses = lse - picked
    p = z / denom
    out = _result(losses, (logits,))

    def backward():
        g = p.copy()
        np.put_along_axis(g, idx[..., None], np.take_along_axis(g, idx[..., None], axis=-1) - 1.0, axis=-1)
        logits.accumulate_grad(g * out.grad[..., None])

    out._backward = backward if out.requires_grad else None
    return out


class Adam:
    """Adam updates over a named parameter set (beta1=0.9, beta2=0.999, eps=1e-8)."""

    def __init__(self, params: dict[str, Tensor], lr: float):
        self.params = params
        self.lr = lr
        self.t = 0
        self._m = {k: np.zeros_like(p.data) for k, p in params.items()}
        self._v = {k: np.zeros_like(p.data) for k, p in params.items()}

    def zero_grad(self) -> None:
        for p in self.params.values():
            p.zero_grad()

    def step(self) -> None:
        self.t += 1
        b1c = 1.0 - ADAM_BETA1 ** self.t
        b2c = 1.0 - ADAM_BETA2 ** self.t
        for k, p in self.params.items():
            if p.grad is None:
                continue
            g = p.grad
            if not np.all(np.isfinite(g)):
                raise NumericError(f"non-finite gradient for parameter {k!r}")
            m = self._m[k]
            v = self._v[k]
            m *= ADAM_BETA1
            m += (1.0 - ADAM_BETA1) * g
            v *= ADAM_BETA2
            v += (1.0 - ADAM_BETA2) * (g * g)
            p.data -= self.lr * (m / b1c) / (np.sqrt(v / b2c) + ADAM_EPS)


@dataclass
class GradEntry:
    name: str
    analytic: float
    numeric: float
    rel_diff: float


@dataclass
class GradReport:
    """Comparison of analytic gradients against central finite differences."""

    max_abs_diff: float
    max_rel_diff: float
    per_parameter: list[GradEntry]

    def worst(self) -> GradEntry:
        return max(self.per_parameter, key=lambda e: e.rel_diff)


# Relative differences are measured against max(|analytic|, |numeric|, this
# floor) so that finite-difference noise on near-zero gradients does not
# register as failure.
GRADCHECK_REL_FLOOR = 1e-7


def check_gradients(
    loss_fn,
    params: dict[str, Tensor],
    eps: float = 1e-5,
    max_entries_per_param: int = 4,
    rng: np.random.Generator | None = None,
) -> GradReport:
    """Compare analytic gradients of ``loss_fn()`` against central differences.

    ``loss_fn`` must be a pure scalar function of the current parameter
    values (it is re-evaluated with coordinates perturbed in place). A random
    subsample of at most ``max_entries_per_param`` coordinates per parameter
    is checked.
    """
    if not (0.0 < eps <= 1e-3):
        raise ValueError("eps must lie in (0, 1e-3]")
    rng = rng or np.random.default_rng(0)

    for p in params.values():
        p.zero_grad()
    loss = loss_fn()
    if not np.isfinite(loss.data):
        raise NumericError("loss is not finite at the evaluation point")
    loss.backward()

    entries: list[GradEntry] = []
    for name, p in params.items():
        flat = p.data.reshape(-1)
        grad = np.zeros_like(flat) if p.grad is None else p.grad.reshape(-1)
        n_coords = min(max_entries_per_param, flat.size)
        coords = rng.choice(flat.size, size=n_coords, replace=False)
        for c in coords:
            orig = flat[c]
            flat[c] = orig + eps
            f_plus = float(loss_fn().data)
            flat[c] = orig - eps
            f_minus = float(loss_fn().data)
            flat[c] = orig
            if not (np.isfinite(f_plus) and np.isfinite(f_minus)):
                raise NumericError(f"non-finite loss while perturbing {name}[{c}]")
            numeric = (f_plus - f_minus) / (2.0 * eps)
            analytic = float(grad[c])
            denom = max(abs(analytic), abs(numeric), GRADCHECK_REL_FLOOR)
            entries.append(
                GradEntry(f"{name}[{c}]", analytic, numeric, abs(analytic - numeric) / denom)
            )
    max_abs = max((abs(e.analytic - e.numeric) for e in entries), default=0.0)
    max_rel = max((e.rel_diff for e in entries), default=0.0)
    return GradReport(max_abs, max_rel, entries)
