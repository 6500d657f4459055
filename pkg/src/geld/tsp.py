"""Problem-domain primitives: instances, tours, normalization, distances,
candidate queries, the region grid, and the percentage-gap metric."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import (
    DegenerateInstanceError,
    ExhaustedError,
    MetricError,
    RegionPreconditionError,
    TourError,
)

# Edge-length conventions. Synthetic instances use exact Euclidean edges;
# TSPLIB EUC_2D instances round each edge to the nearest integer (half away
# from zero) so lengths are comparable with published best-known values.
CONTINUOUS = "continuous-euclid"
TSPLIB_ROUNDED = "tsplib-rounded-euclid"


@dataclass(frozen=True)
class TspInstance:
    """A 2-D Euclidean TSP instance.

    coords are raw (unnormalized) coordinates; model components normalize on
    entry. Instances are immutable and safe to share across workers.
    """

    coords: np.ndarray
    name: str = ""
    metric_mode: str = CONTINUOUS

    def __post_init__(self):
        coords = np.ascontiguousarray(np.asarray(self.coords, dtype=np.float64))
        if coords.ndim != 2 or coords.shape[1] != 2:
            raise ValueError(f"coords must be (n, 2), got {coords.shape}")
        if coords.shape[0] < 3:
            raise ValueError("an instance needs at least 3 nodes")
        if not np.all(np.isfinite(coords)):
            raise ValueError("coordinates must be finite")
        if np.all(coords == coords[0]):
            raise DegenerateInstanceError("all points coincide")
        if self.metric_mode not in (CONTINUOUS, TSPLIB_ROUNDED):
            raise ValueError(f"unknown metric mode {self.metric_mode!r}")
        coords.setflags(write=False)
        object.__setattr__(self, "coords", coords)

    @property
    def n(self) -> int:
        return self.coords.shape[0]


@dataclass(frozen=True)
class Tour:
    """A closed tour: a permutation of node indices plus its cached length."""

    order: np.ndarray
    length: float
    metric_mode: str = CONTINUOUS

    def __post_init__(self):
        order = np.ascontiguousarray(np.asarray(self.order, dtype=np.int64))
        order.setflags(write=False)
        object.__setattr__(self, "order", order)

    @classmethod
    def from_order(cls, inst: TspInstance, order) -> "Tour":
        order = np.asarray(order, dtype=np.int64)
        validate_permutation(order, inst.n)
        return cls(order, cycle_length(inst.coords, order, inst.metric_mode), inst.metric_mode)

    @property
    def n(self) -> int:
        return self.order.shape[0]


def validate_permutation(order: np.ndarray, n: int) -> None:
    order = np.asarray(order)
    if order.shape != (n,) or not np.array_equal(np.sort(order), np.arange(n)):
        raise TourError(f"not a permutation of 0..{n - 1}")


def edge_length(a: np.ndarray, b: np.ndarray, metric_mode: str) -> float:
    d = float(np.hypot(a[0] - b[0], a[1] - b[1]))
    if metric_mode == TSPLIB_ROUNDED:
        return float(np.floor(d + 0.5))
    return d


def _edge_lengths(coords: np.ndarray, seq: np.ndarray, metric_mode: str, close: bool) -> np.ndarray:
    pts = coords[seq]
    nxt = np.roll(pts, -1, axis=0) if close else pts[1:]
    cur = pts if close else pts[:-1]
    d = np.hypot(cur[:, 0] - nxt[:, 0], cur[:, 1] - nxt[:, 1])
    if metric_mode == TSPLIB_ROUNDED:
        d = np.floor(d + 0.5)
    return d


def cycle_length(coords: np.ndarray, order: np.ndarray, metric_mode: str = CONTINUOUS) -> float:
    """Length of the closed tour, including the edge back to the start."""
    return float(_edge_lengths(coords, np.asarray(order), metric_mode, close=True).sum())


def path_length(coords: np.ndarray, seq: np.ndarray, metric_mode: str = CONTINUOUS) -> float:
    """Length of an open path (no closing edge)."""
    return float(_edge_lengths(coords, np.asarray(seq), metric_mode, close=False).sum())


def tour_length(inst: TspInstance, tour: Tour) -> float:
    """Recompute the tour's length under the instance's edge convention."""
    validate_permutation(tour.order, inst.n)
    return cycle_length(inst.coords, tour.order, inst.metric_mode)


def gap(model_len: float, opt_len: float) -> float:
    """Percentage excess of model_len over a positive reference length."""
    if opt_len <= 0:
        raise MetricError(f"reference length must be positive, got {opt_len}")
    return (model_len - opt_len) / opt_len * 100.0


def normalize_coords(coords: np.ndarray) -> np.ndarray:
    """Shift to the origin and scale by the largest coordinate range.

    A single scalar divisor (the max extent over both dimensions) preserves
    aspect ratio; the larger extent spans exactly [0, 1].
    """
    coords = np.asarray(coords, dtype=np.float64)
    lo = coords.min(axis=0)
    span = float((coords.max(axis=0) - lo).max())
    if span <= 0.0:
        raise DegenerateInstanceError("all points coincide; cannot normalize")
    return (coords - lo) / span


def distance_matrix(coords: np.ndarray, subset=None) -> np.ndarray:
    """Pairwise Euclidean distances (symmetric, zero diagonal)."""
    pts = np.asarray(coords, dtype=np.float64)
    if subset is not None:
        pts = pts[np.asarray(subset, dtype=np.int64)]
    diff = pts[:, None, :] - pts[None, :, :]
    return np.sqrt((diff * diff).sum(axis=-1))


def k_nearest_available(
    inst: TspInstance,
    anchor: int,
    visited_mask: np.ndarray,
    k_m: int,
) -> np.ndarray:
    """The min(k_m, #available) unvisited nodes nearest to ``anchor``.

    Ascending by distance; equal distances break toward the lower node index
    (stable sort), which keeps rollouts deterministic.
    """
    if k_m < 1:
        raise ValueError("k_m must be >= 1")
    visited = np.asarray(visited_mask, dtype=bool)
    d = inst.coords - inst.coords[anchor]
    dist = np.hypot(d[:, 0], d[:, 1])
    dist[visited] = np.inf
    n_avail = int((~visited).sum())
    if n_avail == 0:
        raise ExhaustedError("no available nodes")
    k = min(k_m, n_avail)
    order = np.argsort(dist, kind="stable")
    return order[:k].astype(np.int64)


@dataclass(frozen=True)
class RegionAssignment:
    """Grid-cell membership of each node plus per-cell occupancy."""

    region_of: np.ndarray
    counts: np.ndarray
    m_r: int
    m_c: int

    @property
    def m(self) -> int:
        return self.m_r * self.m_c

    def averaging_matrix(self, dtype=np.float64) -> np.ndarray:
        """(m, n) matrix whose row r averages the members of region r.

        Empty regions give all-zero rows, so their proxy is the zero vector.
        """
        n = self.region_of.shape[0]
        mat = np.zeros((self.m, n), dtype=dtype)
        occupied = self.counts > 0
        weights = np.zeros(self.m, dtype=dtype)
        weights[occupied] = 1.0 / self.counts[occupied]
        mat[self.region_of, np.arange(n)] = weights[self.region_of]
        return mat


def assign_regions(norm_coords: np.ndarray, m_r: int, m_c: int) -> RegionAssignment:
    """Bucket normalized coordinates into an m_r x m_c grid.

    The boundary value 1.0 clamps into the last row/column.
    """
    if m_r < 1 or m_c < 1:
        raise ValueError("grid dimensions must be >= 1")
    pts = np.asarray(norm_coords, dtype=np.float64)
    if pts.min() < -1e-9 or pts.max() > 1.0 + 1e-9:
        raise RegionPreconditionError("coordinates must be normalized into [0, 1]^2")
    row = np.minimum((pts[:, 1] * m_r).astype(np.int64), m_r - 1)
    col = np.minimum((pts[:, 0] * m_c).astype(np.int64), m_c - 1)
    row = np.maximum(row, 0)
    col = np.maximum(col, 0)
    region_of = row * m_c + col
    counts = np.bincount(region_of, minlength=m_r * m_c)
    return RegionAssignment(region_of, counts, m_r, m_c)
