"""Global-view encoder: a coordinate embedding followed by one multi-head
region-proxy linear attention block and a feed-forward block.

Attention cost is O(n*m*h): nodes talk to m grid-region proxies (the mean
query of each occupied cell) instead of to each other, and the value
aggregation is evaluated proxy-side first so no n x n matrix ever exists.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass

import numpy as np

from . import numeric as nm
from .errors import DimensionError
from .model import ModelConfig, ModelParams
from .numeric import Tensor
from .tsp import RegionAssignment, TspInstance, assign_regions, normalize_coords


@dataclass(frozen=True)
class NodeEmbeddings:
    """Per-node global embeddings plus a digest of the coordinates that
    produced them (useful for cache validation)."""

    E: np.ndarray
    source_hash: str

    @property
    def n(self) -> int:
        return self.E.shape[0]


def _split_heads(t: Tensor, num_heads: int) -> Tensor:
    b, n, h = t.shape
    t = nm.reshape(t, (b, n, num_heads, h // num_heads))
    return nm.transpose(t, (0, 2, 1, 3))


def _merge_heads(t: Tensor) -> Tensor:
    b, heads, n, dh = t.shape
    t = nm.transpose(t, (0, 2, 1, 3))
    return nm.reshape(t, (b, n, heads * dh))


def _rala_core(q: Tensor, k: Tensor, v: Tensor, avg: Tensor) -> Tensor:
    """Proxy attention on (B, H, n, dh) tensors; avg is (B, 1, m, n).

    Proxies are mean queries per region (zero rows for empty regions). No
    scaling factor is applied inside the two softmax scores.
    """
    p = nm.matmul(avg, q)
    q_w = nm.softmax_rows(nm.matmul(q, nm.swap_last2(p)))
    k_w = nm.softmax_rows(nm.matmul(p, nm.swap_last2(k)))
    return nm.matmul(q_w, nm.matmul(k_w, v))


def rala_attention(q, k, v, regions: RegionAssignment):
    """Single-head region-proxy attention over (n, h) arrays.

    Accepts numpy arrays or Tensors; returns the same kind. The region
    assignment must come from the coordinates that produced the embeddings.
    """
    tensor_in = isinstance(q, Tensor)
    qt = q if tensor_in else nm.constant(np.asarray(q, dtype=np.float64))
    kt = k if isinstance(k, Tensor) else nm.constant(np.asarray(k, dtype=qt.dtype))
    vt = v if isinstance(v, Tensor) else nm.constant(np.asarray(v, dtype=qt.dtype))
    n, h = qt.shape
    if regions.region_of.shape[0] != n:
        raise DimensionError(
            f"region assignment covers {regions.region_of.shape[0]} nodes, embeddings have {n}"
        )
    if kt.shape != (n, h) or vt.shape != (n, h):
        raise DimensionError("Q, K, V must share one (n, h) shape")
    avg = nm.constant(regions.averaging_matrix(dtype=qt.dtype).reshape(1, 1, regions.m, n))
    out = _rala_core(
        nm.reshape(qt, (1, 1, n, h)),
        nm.reshape(kt, (1, 1, n, h)),
        nm.reshape(vt, (1, 1, n, h)),
        avg,
    )
    out = nm.reshape(out, (n, h))
    return out if tensor_in else out.data


def embed_nodes(norm_coords, params: ModelParams):
    """Linear projection of normalized coordinates into the hidden space."""
    tensor_in = isinstance(norm_coords, Tensor)
    x = norm_coords if tensor_in else nm.constant(np.asarray(norm_coords, dtype=params.dtype))
    out = nm.linear_forward(x, params["enc.embed_W"], params["enc.embed_b"])
    return out if tensor_in else out.data


def encoder_forward(coords: Tensor, avg: Tensor, params: ModelParams) -> Tensor:
    """Full encoder on a (B, n, 2) coordinate batch; returns (B, n, h).

    Pre-norm residual attention block, then a pre-norm residual feed-forward
    block with 4x expansion.
    """
    cfg = params.config
    e0 = nm.linear_forward(coords, params["enc.embed_W"], params["enc.embed_b"])
    x = nm.rms_norm(e0, params["enc.norm1_g"])
    q = _split_heads(nm.matmul(x, params["enc.Wq"]), cfg.num_heads)
    k = _split_heads(nm.matmul(x, params["enc.Wk"]), cfg.num_heads)
    v = _split_heads(nm.matmul(x, params["enc.Wv"]), cfg.num_heads)
    ctx = _merge_heads(_rala_core(q, k, v, avg))
    e1 = nm.add(e0, nm.matmul(ctx, params["enc.Wo"]))
    x2 = nm.rms_norm(e1, params["enc.norm2_g"])
    f = nm.linear_forward(
        nm.relu(nm.linear_forward(x2, params["enc.ffn_W1"], params["enc.ffn_b1"])),
        params["enc.ffn_W2"],
        params["enc.ffn_b2"],
    )
    return nm.add(e1, f)


def prepare_encoder_inputs(
    norm_coords_batch: np.ndarray, config: ModelConfig, dtype
) -> tuple[Tensor, Tensor]:
    """Constants for encoder_forward: coordinates (B, n, 2) and the stacked
    region-averaging matrices (B, 1, m, n)."""
    batch = np.asarray(norm_coords_batch, dtype=dtype)
    if batch.ndim != 3 or batch.shape[2] != 2:
        raise DimensionError(f"expected (B, n, 2) coordinates, got {batch.shape}")
    b, n, _ = batch.shape
    avg = np.empty((b, 1, config.num_regions, n), dtype=dtype)
    for i in range(b):
        regions = assign_regions(batch[i], config.region_rows, config.region_cols)
        avg[i, 0] = regions.averaging_matrix(dtype=dtype)
    return nm.constant(batch), nm.constant(avg)


def encode_batch(norm_coords_batch: np.ndarray, params: ModelParams) -> Tensor:
    coords, avg = prepare_encoder_inputs(norm_coords_batch, params.config, params.dtype)
    return encoder_forward(coords, avg, params)


def coords_digest(norm_coords: np.ndarray) -> str:
    return hashlib.blake2b(
        np.ascontiguousarray(norm_coords, dtype=np.float64).tobytes(), digest_size=16
    ).hexdigest()


def encode(inst: TspInstance, params: ModelParams) -> NodeEmbeddings:
    """Normalize an instance and run the encoder once. Deterministic for
    fixed parameters."""
    if inst.n < 4:
        raise ValueError("encoder needs at least 4 nodes")
    norm = normalize_coords(inst.coords)
    out = encode_batch(norm[None, :, :], params)
    return NodeEmbeddings(E=np.ascontiguousarray(out.data[0]), source_hash=coords_digest(norm))
