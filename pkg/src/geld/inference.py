"""Solution construction and improvement: greedy rollout, beam search, and
batched segment re-construction with input diversification.

All of it is forward-only; callers normally pass float32 parameters
(ModelParams.cast(np.float32)). Randomness flows from explicit seeds so runs
reproduce exactly.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .fastpath import FastParams, ensure_fast, fast_candidate_probs, fast_encode
from .model import ModelParams
from .tsp import (
    TspInstance,
    Tour,
    cycle_length,
    normalize_coords,
    path_length,
)

CLOCKWISE = "clockwise"
COUNTERCLOCKWISE = "counterclockwise"


# ---------------------------------------------------------------------------
# x8 augmentation: the dihedral symmetries of the unit square
# ---------------------------------------------------------------------------


def augment8(norm_coords: np.ndarray, aug_id: int) -> np.ndarray:
    """Apply one of the eight unit-square symmetries to (..., 2) coordinates."""
    if not (0 <= int(aug_id) <= 7):
        raise ValueError(f"augmentation id must be in 0..7, got {aug_id}")
    c = np.asarray(norm_coords)
    x, y = c[..., 0], c[..., 1]
    table = (
        lambda: (x, y),
        lambda: (y, x),
        lambda: (x, 1.0 - y),
        lambda: (y, 1.0 - x),
        lambda: (1.0 - x, y),
        lambda: (1.0 - y, x),
        lambda: (1.0 - x, 1.0 - y),
        lambda: (1.0 - y, 1.0 - x),
    )
    nx, ny = table[int(aug_id)]()
    return np.stack([nx, ny], axis=-1)


# ---------------------------------------------------------------------------
# Batched decoding primitives
# ---------------------------------------------------------------------------


def _pairwise(pts: np.ndarray) -> np.ndarray:
    diff = pts[:, :, None, :] - pts[:, None, :, :]
    return np.sqrt((diff * diff).sum(axis=-1))


def candidate_probs(
    e_flat: np.ndarray,
    sel: np.ndarray,
    sel_coords: np.ndarray,
    params: ModelParams | FastParams,
) -> np.ndarray:
    """Next-node probabilities for a stacked batch of steps.

    e_flat (N, h) holds embedding rows; sel (B, k+2) indexes them with prev
    first and dest last; sel_coords (B, k+2, 2) are the matching normalized
    coordinates. Returns (B, k) probabilities over the candidates.
    """
    fp = ensure_fast(params)
    a = _pairwise(sel_coords).astype(e_flat.dtype)
    return fast_candidate_probs(fp, e_flat[sel], a)


def _nearest_candidates(
    dist_coords: np.ndarray,
    prev: np.ndarray,
    available: np.ndarray,
    k: int,
) -> np.ndarray:
    """(B, k) nearest available node indices per row; stable ties by index."""
    b = np.arange(dist_coords.shape[0])
    d = dist_coords - dist_coords[b, prev][:, None, :]
    dist = np.sqrt((d * d).sum(axis=-1))
    dist[~available] = np.inf
    return np.argsort(dist, axis=1, kind="stable")[:, :k]


def _greedy_paths(
    e: np.ndarray,
    coords: np.ndarray,
    dist_coords: np.ndarray,
    start: np.ndarray,
    dest: np.ndarray,
    available: np.ndarray,
    params: ModelParams | FastParams,
    k_m: int,
) -> np.ndarray:
    """Greedy autoregressive completion for a batch of open paths.

    e (B, s, h) embeddings, coords (B, s, 2) normalized coordinates feeding
    the decoder's distance matrix, dist_coords the coordinates used for the
    candidate query (same ordering, possibly a different frame). available
    marks selectable nodes; start/dest are fixed endpoints. Returns the
    (B, T) sequence of picks, T = per-row available count (equal across rows).
    """
    bsz, s, h = e.shape
    e_flat = e.reshape(bsz * s, h)
    offsets = (np.arange(bsz) * s)[:, None]
    avail = available.copy()
    prev = start.copy()
    t_total = int(avail[0].sum())
    picks = np.empty((bsz, t_total), dtype=np.int64)
    rows = np.arange(bsz)
    for t in range(t_total):
        k = min(k_m, t_total - t)
        cand = _nearest_candidates(dist_coords, prev, avail, k)
        sel = np.concatenate([prev[:, None], cand, dest[:, None]], axis=1)
        probs = candidate_probs(e_flat, sel + offsets, coords[rows[:, None], sel], params)
        pick = cand[rows, np.argmax(probs, axis=1)]
        picks[:, t] = pick
        avail[rows, pick] = False
        prev = pick
    return picks


def greedy_rollout_batch(
    instances: list[TspInstance], params: ModelParams | FastParams, k_m: int
) -> list[Tour]:
    """Greedy tours for equally-sized instances in one batched pass.

    Construction starts at node 0, which also serves as the destination.
    """
    params = ensure_fast(params)
    n = instances[0].n
    if any(inst.n != n for inst in instances):
        raise ValueError("batched rollout requires equal instance sizes")
    norm = np.stack([normalize_coords(inst.coords) for inst in instances])
    e = fast_encode(params, norm)
    bsz = len(instances)
    raw = np.stack([inst.coords for inst in instances])
    available = np.ones((bsz, n), dtype=bool)
    available[:, 0] = False
    zeros = np.zeros(bsz, dtype=np.int64)
    picks = _greedy_paths(e, norm.astype(params.dtype), raw, zeros, zeros, available, params, k_m)
    orders = np.concatenate([zeros[:, None], picks], axis=1)
    return [Tour.from_order(inst, orders[i]) for i, inst in enumerate(instances)]


def greedy_rollout(inst: TspInstance, params: ModelParams, k_m: int) -> Tour:
    """Deterministic greedy construction from node 0."""
    return greedy_rollout_batch([inst], params, k_m)[0]


def beam_search(inst: TspInstance, params: ModelParams, beam_width: int, k_m: int) -> Tour:
    """Breadth-limited search keeping the top beams by cumulative log-prob;
    the answer is the shortest completed tour among the final beams."""
    if beam_width < 1:
        raise ValueError("beam width must be >= 1")
    params = ensure_fast(params)
    n = inst.n
    norm = normalize_coords(inst.coords)
    e_flat = fast_encode(params, norm[None])[0]
    norm32 = norm.astype(params.dtype)
    orders = np.zeros((1, 1), dtype=np.int64)
    visited = np.zeros((1, n), dtype=bool)
    visited[0, 0] = True
    logp = np.zeros(1)
    for t in range(1, n):
        w = orders.shape[0]
        rows = np.arange(w)
        k = min(k_m, n - t)
        prev = orders[:, -1]
        cand = _nearest_candidates(np.broadcast_to(inst.coords, (w, n, 2)), prev, ~visited, k)
        dest = np.zeros(w, dtype=np.int64)
        sel = np.concatenate([prev[:, None], cand, dest[:, None]], axis=1)
        probs = candidate_probs(e_flat, sel, norm32[sel], params)
        with np.errstate(divide="ignore"):
            total = logp[:, None] + np.log(probs)
        flat = total.reshape(-1)
        keep = np.argsort(-flat, kind="stable")[: min(beam_width, flat.size)]
        beam_idx, cand_idx = np.divmod(keep, k)
        next_nodes = cand[beam_idx, cand_idx]
        orders = np.concatenate([orders[beam_idx], next_nodes[:, None]], axis=1)
        visited = visited[beam_idx].copy()
        visited[np.arange(orders.shape[0]), next_nodes] = True
        logp = flat[keep]
    lengths = np.array([cycle_length(inst.coords, o, inst.metric_mode) for o in orders])
    return Tour.from_order(inst, orders[int(np.argmin(lengths))])


# ---------------------------------------------------------------------------
# Re-construction
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class RcPlan:
    """One re-construction move: which cyclic segment to re-solve and how to
    present it to the model."""

    start: int
    length: int
    direction: str = CLOCKWISE
    offset: int = 0
    augment_id: int = 0

    def __post_init__(self):
        if self.length < 4:
            raise ValueError("segments below 4 nodes cannot change the tour")
        if self.direction not in (CLOCKWISE, COUNTERCLOCKWISE):
            raise ValueError(f"unknown direction {self.direction!r}")
        if not (0 <= self.augment_id <= 7):
            raise ValueError("augmentation id must be in 0..7")

    def positions(self, n: int) -> np.ndarray:
        """Tour positions covered by the segment, honoring offset/direction."""
        step = 1 if self.direction == CLOCKWISE else -1
        base = self.offset + self.start
        return (base + step * np.arange(self.length)) % n


def _resolve_segments(
    seg_coords: np.ndarray,
    aug_ids: np.ndarray,
    params: ModelParams | FastParams,
    k_m: int,
) -> np.ndarray:
    """Re-solve (S, j, 2) open sub-paths with fixed endpoints; returns local
    orders (S, j). Each sub-path is renormalized and augmented before
    encoding, which is what diversifies the model input across calls."""
    s_cnt, j, _ = seg_coords.shape
    lo = seg_coords.min(axis=1, keepdims=True)
    span = (seg_coords.max(axis=1, keepdims=True) - lo).max(axis=(1, 2))
    ok = span > 0.0
    local = np.tile(np.arange(j, dtype=np.int64), (s_cnt, 1))
    if not np.any(ok):
        return local
    norm = (seg_coords[ok] - lo[ok]) / span[ok, None, None]
    aug = norm.copy()
    for aid in range(8):
        mask = aug_ids[ok] == aid
        if np.any(mask):
            aug[mask] = augment8(norm[mask], aid)
    aug = aug.astype(params.dtype)
    e = fast_encode(params, aug)
    b = int(ok.sum())
    available = np.ones((b, j), dtype=bool)
    available[:, 0] = False
    available[:, j - 1] = False
    starts = np.zeros(b, dtype=np.int64)
    dests = np.full(b, j - 1, dtype=np.int64)
    picks = _greedy_paths(e, aug, aug, starts, dests, available, params, k_m)
    local[ok] = np.concatenate(
        [starts[:, None], picks, dests[:, None]], axis=1
    )
    return local


def rc_step(
    inst: TspInstance,
    tour: Tour,
    plan: RcPlan,
    params: ModelParams | FastParams | None,
    k_m: int = 100,
    subsolver=None,
) -> Tour:
    """Re-solve one segment and keep the result only if strictly shorter.

    The segment's interior is reordered between its fixed endpoints; edges
    outside the segment are untouched. ``subsolver`` may replace the model's
    greedy completion with fn(segment_coords, metric_mode) -> local order,
    which is how the exact-oracle harness drives the same plumbing.
    """
    n = inst.n
    pos = plan.positions(n)
    seg_nodes = tour.order[pos]
    old_len = path_length(inst.coords, seg_nodes, inst.metric_mode)
    if subsolver is not None:
        local = np.asarray(subsolver(inst.coords[seg_nodes], inst.metric_mode))
    else:
        params = ensure_fast(params)
        local = _resolve_segments(
            inst.coords[seg_nodes][None],
            np.array([plan.augment_id]),
            params,
            k_m,
        )[0]
    new_nodes = seg_nodes[local]
    new_len = path_length(inst.coords, new_nodes, inst.metric_mode)
    if not new_len < old_len:
        return tour
    order = np.array(tour.order)
    order[pos] = new_nodes
    return Tour.from_order(inst, order)


def _tile_segments(n: int, j: int, rotation: int, direction: str) -> np.ndarray:
    """(S, j) tour positions: segments of j nodes tiled around the rotated
    cycle with a one-node gap so fixed endpoints never collide."""
    if j >= n:
        starts = np.array([0])
        j = n
    else:
        count = n // (j + 1)
        starts = np.arange(count) * (j + 1)
    step = 1 if direction == CLOCKWISE else -1
    offsets = step * np.arange(j)
    return (rotation + starts[:, None] + offsets[None, :]) % n


def prc_batch(
    instances: list[TspInstance],
    tours: list[Tour],
    params: ModelParams | FastParams,
    iterations: int,
    seed: int,
    k_m: int = 100,
) -> list[Tour]:
    """Parallel re-construction over a batch of equally-sized instances.

    Per iteration one segment length is drawn, segments are tiled from a
    per-instance random rotation, every segment is re-solved in a single
    batched model call, and strictly improving replacements are applied.
    Direction alternates with iteration parity. Tour length never increases.
    """
    if iterations < 1:
        raise ValueError("iterations must be >= 1")
    params = ensure_fast(params)
    n = instances[0].n
    if any(inst.n != n for inst in instances):
        raise ValueError("batched re-construction requires equal instance sizes")
    bsz = len(instances)
    rng = np.random.default_rng(seed)
    orders = np.stack([t.order for t in tours]).astype(np.int64)
    coords = np.stack([inst.coords for inst in instances])
    metric = instances[0].metric_mode
    for it in range(iterations):
        direction = CLOCKWISE if it % 2 == 0 else COUNTERCLOCKWISE
        j = int(rng.integers(4, min(k_m, n) + 1))
        rotations = rng.integers(0, n, size=bsz)
        tile0 = _tile_segments(n, j, 0, direction)
        s_cnt, j_eff = tile0.shape
        pos = (tile0[None, :, :] + rotations[:, None, None]) % n
        seg_nodes = np.take_along_axis(
            orders[:, None, :].repeat(s_cnt, axis=1), pos, axis=2
        )
        flat_nodes = seg_nodes.reshape(bsz * s_cnt, j_eff)
        inst_idx = np.repeat(np.arange(bsz), s_cnt)
        seg_coords = coords[inst_idx[:, None], flat_nodes]
        aug_ids = rng.integers(0, 8, size=bsz * s_cnt)
        local = _resolve_segments(seg_coords, aug_ids, params, k_m)
        new_nodes = np.take_along_axis(flat_nodes, local, axis=1)
        old_len = _path_lengths(seg_coords, metric)
        new_coords = coords[inst_idx[:, None], new_nodes]
        new_len = _path_lengths(new_coords, metric)
        accept = new_len < old_len
        for s in np.nonzero(accept)[0]:
            b = inst_idx[s]
            orders[b, pos[b, s % s_cnt]] = new_nodes[s]
    return [Tour.from_order(inst, orders[i]) for i, inst in enumerate(instances)]


def _path_lengths(pts: np.ndarray, metric_mode: str) -> np.ndarray:
    d = pts[:, 1:, :] - pts[:, :-1, :]
    e = np.sqrt((d * d).sum(axis=-1))
    from .tsp import TSPLIB_ROUNDED

    if metric_mode == TSPLIB_ROUNDED:
        e = np.floor(e + 0.5)
    return e.sum(axis=1)


def prc(
    inst: TspInstance,
    tour: Tour,
    params: ModelParams | FastParams,
    iterations: int,
    seed: int,
    k_m: int = 100,
) -> Tour:
    """Iterated parallel re-construction of a single tour."""
    return prc_batch([inst], [tour], params, iterations, seed, k_m)[0]
