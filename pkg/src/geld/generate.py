"""Synthetic instance generation for the four distribution patterns."""

from __future__ import annotations

import numpy as np

from .tsp import TspInstance

PATTERNS = ("uniform", "clustered", "explosion", "implosion")

CLUSTER_SIGMA = 0.05
CLUSTER_COUNT_RANGE = (3, 8)
BLAST_RADIUS = 0.3


def _uniform(rng: np.random.Generator, n: int) -> np.ndarray:
    return rng.random((n, 2))


def _clustered(rng: np.random.Generator, n: int, sigma: float, n_c_range) -> np.ndarray:
    n_c = int(rng.integers(n_c_range[0], n_c_range[1] + 1))
    centers = rng.random((n_c, 2))
    which = rng.integers(0, n_c, size=n)
    pts = centers[which] + rng.normal(0.0, sigma, size=(n, 2))
    return np.clip(pts, 0.0, 1.0)


def _explosion(rng: np.random.Generator, n: int, radius: float) -> tuple[np.ndarray, np.ndarray]:
    """Uniform points, with everything inside a random blast circle pushed
    radially out to distance 2R - d (strictly beyond the radius). Returns the
    points and the circle center (the latter for property checks)."""
    pts = rng.random((n, 2))
    center = rng.random(2)
    delta = pts - center
    d = np.hypot(delta[:, 0], delta[:, 1])
    inside = d < radius
    if np.any(inside):
        safe_d = np.where(d > 0, d, 1.0)
        unit = delta / safe_d[:, None]
        zero = inside & (d == 0)
        if np.any(zero):
            theta = rng.uniform(0.0, 2 * np.pi, size=int(zero.sum()))
            unit[zero] = np.stack([np.cos(theta), np.sin(theta)], axis=1)
        new_d = 2.0 * radius - d
        pts = np.where(inside[:, None], center + unit * new_d[:, None], pts)
    return pts, center


def _implosion(rng: np.random.Generator, n: int, radius: float) -> tuple[np.ndarray, np.ndarray]:
    """Uniform points, with everything inside the circle pulled halfway to
    its center. Returns the points and the circle center."""
    pts = rng.random((n, 2))
    center = rng.random(2)
    delta = pts - center
    d = np.hypot(delta[:, 0], delta[:, 1])
    inside = d < radius
    pts = np.where(inside[:, None], center + 0.5 * delta, pts)
    return pts, center


def generate_instances(
    pattern: str,
    n: int,
    count: int,
    seed: int,
    cluster_sigma: float = CLUSTER_SIGMA,
    cluster_count_range=CLUSTER_COUNT_RANGE,
    blast_radius: float = BLAST_RADIUS,
) -> list[TspInstance]:
    """Deterministic batch of instances for (pattern, n, count, seed)."""
    if pattern not in PATTERNS:
        raise ValueError(f"unknown pattern {pattern!r}; expected one of {PATTERNS}")
    if n < 4:
        raise ValueError("instances need at least 4 nodes")
    rng = np.random.default_rng(seed)
    out = []
    for i in range(count):
        if pattern == "uniform":
            pts = _uniform(rng, n)
        elif pattern == "clustered":
            pts = _clustered(rng, n, cluster_sigma, cluster_count_range)
        elif pattern == "explosion":
            pts, _ = _explosion(rng, n, blast_radius)
        else:
            pts, _ = _implosion(rng, n, blast_radius)
        out.append(TspInstance(pts, name=f"{pattern}{n}-s{seed}-{i:04d}"))
    return out
