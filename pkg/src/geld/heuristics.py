"""Classical baselines and the exact oracle: nearest neighbor, 2-opt,
random insertion, and brute-force enumeration for small instances."""

from __future__ import annotations

import itertools
import time
from dataclasses import dataclass

import numpy as np

from .tsp import TspInstance, Tour, TSPLIB_ROUNDED, distance_matrix

BRUTE_FORCE_MAX_N = 10


@dataclass
class HeuristicResult:
    tour: Tour
    iterations_used: int
    wall_time: float


def _metric_matrix(inst: TspInstance) -> np.ndarray:
    d = distance_matrix(inst.coords)
    if inst.metric_mode == TSPLIB_ROUNDED:
        d = np.floor(d + 0.5)
    return d


def nearest_neighbor(inst: TspInstance, start: int = 0) -> Tour:
    """Greedy nearest-unvisited chain; ties break toward the lower index."""
    d = _metric_matrix(inst)
    n = inst.n
    visited = np.zeros(n, dtype=bool)
    order = np.empty(n, dtype=np.int64)
    order[0] = start
    visited[start] = True
    cur = start
    for t in range(1, n):
        row = d[cur].copy()
        row[visited] = np.inf
        cur = int(np.argmin(row))
        order[t] = cur
        visited[cur] = True
    return Tour.from_order(inst, order)


def two_opt(inst: TspInstance, tour: Tour, max_iters: int = 1000) -> Tour:
    """First-improvement 2-opt sweeps.

    One iteration is a full sweep over edge pairs in lexicographic order,
    applying the first strictly improving reversal found each time. Stops at
    a local optimum or after max_iters sweeps.
    """
    d = _metric_matrix(inst)
    n = inst.n
    order = np.array(tour.order, dtype=np.int64)
    sweeps = 0
    improved = True
    # Strict improvement threshold: integer metrics improve by >= 1, so any
    # negative delta is real; continuous metrics need a float-noise guard.
    thresh = -1e-10 if inst.metric_mode != TSPLIB_ROUNDED else -0.5
    while improved and sweeps < max_iters:
        improved = False
        sweeps += 1
        for i in range(n - 1):
            a, b = order[i], order[i + 1]
            # Reversing order[i+1:j+1] replaces edges (a,b) and (c,nxt)
            # with (a,c) and (b,nxt).
            j = np.arange(i + 2, n)
            if j.size == 0:
                continue
            c = order[j]
            nxt = order[(j + 1) % n]
            delta = d[a, c] + d[b, nxt] - d[a, b] - d[c, nxt]
            # The wrap edge pair (i=0, j=n-1) reverses the whole remainder,
            # which is the identity tour; its delta is 0 by symmetry anyway.
            hits = np.nonzero(delta < thresh)[0]
            if hits.size:
                jj = int(j[hits[0]])
                order[i + 1 : jj + 1] = order[i + 1 : jj + 1][::-1]
                improved = True
    return Tour.from_order(inst, order)


def random_insertion(inst: TspInstance, seed: int = 0) -> Tour:
    """Insert nodes in seeded random order, each at the cheapest position.

    The initial sub-tour is the first three nodes of the shuffled order.
    """
    if inst.n < 3:
        raise ValueError("random insertion needs n >= 3")
    d = _metric_matrix(inst)
    rng = np.random.default_rng(seed)
    perm = rng.permutation(inst.n)
    route = list(perm[:3])
    for node in perm[3:]:
        cur = np.array(route, dtype=np.int64)
        nxt = np.roll(cur, -1)
        delta = d[cur, node] + d[node, nxt] - d[cur, nxt]
        pos = int(np.argmin(delta))
        route.insert(pos + 1, int(node))
    return Tour.from_order(inst, np.array(route, dtype=np.int64))


_PERM_CACHE: dict[int, np.ndarray] = {}
_EDGE_CACHE: dict[int, np.ndarray] = {}


def _half_perm_table(n: int) -> np.ndarray:
    """All (n-1)!/2 direction-distinct orderings of nodes 1..n-1.

    Node 0 is fixed first; keeping only permutations whose first entry is
    smaller than the last drops each cycle's mirror image.
    """
    if n not in _PERM_CACHE:
        perms = np.array(list(itertools.permutations(range(1, n))), dtype=np.int8)
        if n > 2:
            perms = perms[perms[:, 0] < perms[:, -1]]
        _PERM_CACHE[n] = perms
    return _PERM_CACHE[n]


def _edge_incidence(n: int) -> np.ndarray:
    """(n*n, P) float32 edge-incidence matrix: column p marks the n directed
    edges of cycle p, so cycle lengths are one GEMM: d_flat @ M. Cached per n
    (72 MB at n=10); the BLAS product is far faster than gathering the same
    edges with fancy indexing."""
    if n not in _EDGE_CACHE:
        perms = _half_perm_table(n).astype(np.int64)
        closed = np.concatenate(
            (np.zeros((perms.shape[0], 1), dtype=np.int64), perms), axis=1
        )
        edges = closed * n + np.roll(closed, -1, axis=1)
        m = np.zeros((n * n, perms.shape[0]), dtype=np.float32)
        cols = np.repeat(np.arange(perms.shape[0]), n)
        np.add.at(m, (edges.reshape(-1), cols), 1.0)
        _EDGE_CACHE[n] = m
    return _EDGE_CACHE[n]


def _cycle_lengths_for_table(d: np.ndarray, perms: np.ndarray) -> np.ndarray:
    lengths = d[0, perms[:, 0]] + d[perms[:, -1], 0]
    for col in range(perms.shape[1] - 1):
        lengths = lengths + d[perms[:, col], perms[:, col + 1]]
    return lengths


def brute_force_optimal(inst: TspInstance) -> Tour:
    """Exact optimum by enumerating all (n-1)!/2 distinct cycles. n <= 10."""
    n = inst.n
    if n > BRUTE_FORCE_MAX_N:
        raise ValueError(f"brute force is limited to n <= {BRUTE_FORCE_MAX_N}")
    d = _metric_matrix(inst)
    if n == 3:
        return Tour.from_order(inst, np.array([0, 1, 2]))
    perms = _half_perm_table(n)
    lengths = _cycle_lengths_for_table(d, perms)
    best = int(np.argmin(lengths))
    order = np.concatenate(([0], perms[best].astype(np.int64)))
    return Tour.from_order(inst, order)


def brute_force_batch(coords_batch: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Optimal orders and lengths for a (B, n, 2) stack of continuous instances.

    Same enumeration as brute_force_optimal, evaluated for the whole batch at
    once; used to label training datasets quickly.
    """
    coords_batch = np.asarray(coords_batch, dtype=np.float64)
    B, n, _ = coords_batch.shape
    if n > BRUTE_FORCE_MAX_N:
        raise ValueError(f"brute force is limited to n <= {BRUTE_FORCE_MAX_N}")
    perms = _half_perm_table(n)
    incidence = _edge_incidence(n)
    diff = coords_batch[:, :, None, :] - coords_batch[:, None, :, :]
    d = np.sqrt((diff * diff).sum(axis=-1)).astype(np.float32)
    lengths = d.reshape(B, n * n) @ incidence
    best = np.argmin(lengths, axis=1)
    orders = np.concatenate(
        (np.zeros((B, 1), dtype=np.int64), perms[best].astype(np.int64)), axis=1
    )
    pts = coords_batch
    chosen = np.take_along_axis(pts, orders[:, :, None], axis=1)
    seg = chosen - np.roll(chosen, -1, axis=1)
    exact = np.sqrt((seg * seg).sum(axis=-1)).sum(axis=1)
    return orders, exact
