"""Local-view decoder: stacks distance-aware attention layers over the
previous node, the candidate set, and the destination node, then scores the
candidates for the next move.

Each layer's attention logits get a per-head penalty -softplus(lambda) * A,
where A is the pairwise distance matrix of the step's nodes: far candidates
are damped, and a strongly negative lambda recovers plain attention.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import numeric as nm
from .encoder import NodeEmbeddings, _merge_heads, _split_heads
from .errors import DimensionError, ExhaustedError
from .model import ModelParams
from .numeric import Tensor
from .tsp import distance_matrix


@dataclass(frozen=True)
class DecoderStep:
    """One decoding step's local view.

    input_D rows: previous node at 0, the k candidates, destination at k+1.
    dist_A is the symmetric distance matrix over those same k+2 nodes,
    computed from normalized coordinates.
    """

    prev_node: int
    dest_node: int
    candidates: np.ndarray
    input_D: np.ndarray
    dist_A: np.ndarray

    @property
    def k(self) -> int:
        return self.candidates.shape[0]


def build_decoder_input(
    emb: NodeEmbeddings,
    prev: int,
    dest: int,
    candidates,
    norm_coords: np.ndarray,
) -> DecoderStep:
    cand = np.asarray(candidates, dtype=np.int64)
    if cand.size == 0:
        raise ExhaustedError("empty candidate list")
    sel = np.concatenate(([prev], cand, [dest]))
    return DecoderStep(
        prev_node=int(prev),
        dest_node=int(dest),
        candidates=cand,
        input_D=np.ascontiguousarray(emb.E[sel]),
        dist_A=distance_matrix(np.asarray(norm_coords), sel),
    )


def _decoder_layer_core(d: Tensor, a: Tensor, params: ModelParams, layer: int) -> Tensor:
    """One pre-norm attention + feed-forward block on (B, s, h) input.

    a is the (B, 1, s, s) distance matrix, broadcast across heads.
    """
    cfg = params.config
    p = f"dec.{layer}"
    x = nm.rms_norm(d, params[f"{p}.norm1_g"])
    q = _split_heads(nm.matmul(x, params[f"{p}.Wq"]), cfg.num_heads)
    k = _split_heads(nm.matmul(x, params[f"{p}.Wk"]), cfg.num_heads)
    v = _split_heads(nm.matmul(x, params[f"{p}.Wv"]), cfg.num_heads)
    logits = nm.scale(nm.matmul(q, nm.swap_last2(k)), 1.0 / np.sqrt(cfg.head_dim))
    lam = nm.reshape(nm.softplus(params[f"{p}.dist_lambda"]), (1, cfg.num_heads, 1, 1))
    logits = nm.add(logits, nm.scale(nm.mul(lam, a), -1.0))
    ctx = _merge_heads(nm.matmul(nm.softmax_rows(logits), v))
    d = nm.add(d, nm.matmul(ctx, params[f"{p}.Wo"]))
    x2 = nm.rms_norm(d, params[f"{p}.norm2_g"])
    f = nm.linear_forward(
        nm.relu(nm.linear_forward(x2, params[f"{p}.ffn_W1"], params[f"{p}.ffn_b1"])),
        params[f"{p}.ffn_W2"],
        params[f"{p}.ffn_b2"],
    )
    return nm.add(d, f)


def decoder_layer(d, a, params: ModelParams, layer: int):
    """Single-matrix wrapper over the batched layer core.

    d (s, h) and a (s, s); accepts numpy arrays or Tensors and returns the
    same kind.
    """
    tensor_in = isinstance(d, Tensor)
    dt = d if tensor_in else nm.constant(np.asarray(d, dtype=params.dtype))
    at = a if isinstance(a, Tensor) else nm.constant(np.asarray(a, dtype=dt.dtype))
    s, h = dt.shape
    if at.shape != (s, s):
        raise DimensionError(f"distance matrix must be ({s}, {s}), got {at.shape}")
    out = _decoder_layer_core(
        nm.reshape(dt, (1, s, h)), nm.reshape(at, (1, 1, s, s)), params, layer
    )
    out = nm.reshape(out, (s, h))
    return out if tensor_in else out.data


def add_role_markers(d: Tensor, params: ModelParams) -> Tensor:
    """Tag the prev (row 0) and dest (row s-1) rows with learned additive
    role embeddings so the layers can tell the path's head and goal apart
    from the candidates."""
    b, s, h = d.shape
    hot_prev = np.zeros((1, s, 1), dtype=d.dtype)
    hot_prev[0, 0, 0] = 1.0
    hot_dest = np.zeros((1, s, 1), dtype=d.dtype)
    hot_dest[0, s - 1, 0] = 1.0
    d = nm.add(d, nm.mul(nm.constant(hot_prev), nm.reshape(params["dec.role_prev"], (1, 1, h))))
    return nm.add(d, nm.mul(nm.constant(hot_dest), nm.reshape(params["dec.role_dest"], (1, 1, h))))


def decoder_forward(d: Tensor, a: Tensor, params: ModelParams) -> Tensor:
    """Role-tag then run all decoder layers on (B, s, h) input with
    (B, 1, s, s) distances."""
    d = add_role_markers(d, params)
    for layer in range(params.config.decoder_layers):
        d = _decoder_layer_core(d, a, params, layer)
    return d


def selection_mask(s: int, dtype=np.float64) -> np.ndarray:
    """Additive mask of length s: -inf on the prev (0) and dest (s-1) rows."""
    mask = np.zeros(s, dtype=dtype)
    mask[0] = -np.inf
    mask[s - 1] = -np.inf
    return mask


def masked_scores(refined: Tensor, params: ModelParams) -> Tensor:
    """Per-row selection logits with prev/dest masked out; (B, s)."""
    b, s, _ = refined.shape
    scores = nm.reshape(nm.matmul(refined, params["out_W"]), (b, s))
    return nm.add(scores, nm.constant(selection_mask(s, dtype=refined.dtype)))


def next_node_distribution(refined_d, params: ModelParams) -> np.ndarray:
    """Probabilities over the k candidates from the refined (k+2, h) step
    input. Prev and dest receive exactly zero mass; the k entries sum to 1."""
    arr = refined_d.data if isinstance(refined_d, Tensor) else np.asarray(refined_d)
    s, h = arr.shape
    t = nm.reshape(nm.constant(arr), (1, s, h))
    probs = nm.softmax_rows(masked_scores(t, params))
    return np.ascontiguousarray(probs.data[0, 1 : s - 1])
