"""Forward-only numpy implementation of the model for rollouts.

The tape engine in numeric.py is the reference implementation and the only
one used for training and gradient checks. Inference loops call these fused
routines instead: same math (tests assert agreement), fewer allocations, QKV
projections merged into one matmul, and the per-head distance penalties
precomputed once per parameter set.
"""

from __future__ import annotations

import numpy as np

from .model import ModelParams
from .tsp import assign_regions


def _softplus(x: np.ndarray) -> np.ndarray:
    return np.maximum(x, 0.0) + np.log1p(np.exp(-np.abs(x)))


def _rms(x: np.ndarray, gain: np.ndarray, eps: float = 1e-6) -> np.ndarray:
    ms = np.einsum("...h,...h->...", x, x)[..., None]
    ms /= x.shape[-1]
    ms += eps
    np.sqrt(ms, out=ms)
    out = x / ms
    out *= gain
    return out


def _softmax(x: np.ndarray) -> np.ndarray:
    z = x - x.max(axis=-1, keepdims=True)
    np.exp(z, out=z)
    z /= z.sum(axis=-1, keepdims=True)
    return z


class FastParams:
    """Read-only, fused view of a parameter set for forward evaluation."""

    def __init__(self, params: ModelParams):
        cfg = params.config
        self.config = cfg
        self.dtype = params.dtype
        t = params.named()
        d = lambda k: t[k].data
        self.embed_W = d("enc.embed_W")
        self.embed_b = d("enc.embed_b")
        self.enc_Wqkv = np.concatenate([d("enc.Wq"), d("enc.Wk"), d("enc.Wv")], axis=1)
        self.enc_Wo = d("enc.Wo")
        self.enc_g1 = d("enc.norm1_g")
        self.enc_g2 = d("enc.norm2_g")
        self.enc_ffn = (d("enc.ffn_W1"), d("enc.ffn_b1"), d("enc.ffn_W2"), d("enc.ffn_b2"))
        self.layers = []
        for i in range(cfg.decoder_layers):
            p = f"dec.{i}"
            self.layers.append(
                {
                    "Wqkv": np.concatenate([d(f"{p}.Wq"), d(f"{p}.Wk"), d(f"{p}.Wv")], axis=1),
                    "Wo": d(f"{p}.Wo"),
                    "lam": _softplus(d(f"{p}.dist_lambda")).astype(self.dtype),
                    "g1": d(f"{p}.norm1_g"),
                    "g2": d(f"{p}.norm2_g"),
                    "ffn": (d(f"{p}.ffn_W1"), d(f"{p}.ffn_b1"), d(f"{p}.ffn_W2"), d(f"{p}.ffn_b2")),
                }
            )
        self.role_prev = d("dec.role_prev")
        self.role_dest = d("dec.role_dest")
        self.out_W = d("out_W")
        self.scale = 1.0 / np.sqrt(cfg.head_dim)


def ensure_fast(params) -> FastParams:
    return params if isinstance(params, FastParams) else FastParams(params)


def _split_qkv(x: np.ndarray, wqkv: np.ndarray, heads: int) -> tuple[np.ndarray, ...]:
    qkv = x @ wqkv
    lead = qkv.shape[:-1]
    h = wqkv.shape[1] // 3
    qkv = qkv.reshape(*lead, 3, heads, h // heads)
    qkv = np.moveaxis(qkv, (-3, -2), (0, -3))
    return qkv[0], qkv[1], qkv[2]


def _merge(x: np.ndarray) -> np.ndarray:
    # (B, H, n, dh) -> (B, n, H*dh)
    b, heads, n, dh = x.shape
    return np.ascontiguousarray(x.transpose(0, 2, 1, 3)).reshape(b, n, heads * dh)


def fast_encode(fp: FastParams, norm_coords: np.ndarray) -> np.ndarray:
    """Encoder forward on a (B, n, 2) batch of normalized coordinates."""
    cfg = fp.config
    batch = np.asarray(norm_coords, dtype=fp.dtype)
    b, n, _ = batch.shape
    avg = np.empty((b, 1, cfg.num_regions, n), dtype=fp.dtype)
    for i in range(b):
        regions = assign_regions(batch[i], cfg.region_rows, cfg.region_cols)
        avg[i, 0] = regions.averaging_matrix(dtype=fp.dtype)
    e0 = batch @ fp.embed_W + fp.embed_b
    x = _rms(e0, fp.enc_g1)
    q, k, v = _split_qkv(x, fp.enc_Wqkv, cfg.num_heads)
    p = avg @ q
    q_w = _softmax(q @ np.swapaxes(p, -1, -2))
    k_w = _softmax(p @ np.swapaxes(k, -1, -2))
    ctx = _merge(q_w @ (k_w @ v))
    e1 = e0 + ctx @ fp.enc_Wo
    w1, b1, w2, b2 = fp.enc_ffn
    x2 = _rms(e1, fp.enc_g2)
    return e1 + np.maximum(x2 @ w1 + b1, 0.0) @ w2 + b2


def fast_refine(fp: FastParams, d: np.ndarray, a: np.ndarray) -> np.ndarray:
    """Role-tag prev/dest rows, then run all decoder layers on (B, s, h)
    input with (B, s, s) distances."""
    heads = fp.config.num_heads
    d = d.copy()
    d[:, 0, :] += fp.role_prev
    d[:, -1, :] += fp.role_dest
    a4 = a[:, None, :, :]
    for layer in fp.layers:
        x = _rms(d, layer["g1"])
        q, k, v = _split_qkv(x, layer["Wqkv"], heads)
        logits = (q @ np.swapaxes(k, -1, -2)) * fp.scale
        logits -= layer["lam"][None, :, None, None] * a4
        ctx = _merge(_softmax(logits) @ v)
        d = d + ctx @ layer["Wo"]
        w1, b1, w2, b2 = layer["ffn"]
        x2 = _rms(d, layer["g2"])
        d = d + np.maximum(x2 @ w1 + b1, 0.0) @ w2 + b2
    return d


def fast_candidate_probs(fp: FastParams, d: np.ndarray, a: np.ndarray) -> np.ndarray:
    """(B, k) next-node probabilities; rows of d are prev, candidates, dest.

    Equivalent to masking prev/dest with -inf and softmaxing the full row:
    masked entries carry exactly zero mass either way.
    """
    refined = fast_refine(fp, d, a)
    scores = (refined @ fp.out_W)[:, 1:-1, 0]
    return _softmax(scores)
