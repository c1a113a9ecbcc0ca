"""Exact solvers, classical heuristics and the optimality ratio."""

from __future__ import annotations

import itertools
import time
from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .errors import SizeLimitError
from .instances import Tour, TspInstance, canonical_tour, check_tour, tour_length

BRUTE_FORCE_MAX_N = 10
HELD_KARP_MAX_N = 18


@dataclass(frozen=True)
class SolveResult:
    tour: Tour
    length: float
    method: str
    elapsed: float


def _result(inst, tour, method, t0) -> SolveResult:
    tour = tuple(int(v) for v in tour)
    return SolveResult(tour, tour_length(inst, tour), method, time.perf_counter() - t0)


def brute_force_opt(inst: TspInstance) -> SolveResult:
    """Enumerate every tour with city 0 first; lexicographically smallest among ties."""
    n = inst.n
    if n > BRUTE_FORCE_MAX_N:
        raise SizeLimitError(f"brute force limited to n <= {BRUTE_FORCE_MAX_N}, got {n}")
    t0 = time.perf_counter()
    if n <= 3:
        return _result(inst, canonical_tour(range(n)), "brute_force", t0)
    perms = np.array(list(itertools.permutations(range(1, n))), dtype=np.intp)
    d = inst.dist
    lengths = d[0, perms[:, 0]] + d[perms[:, -1], 0]
    for k in range(n - 2):
        lengths += d[perms[:, k], perms[:, k + 1]]
    best = perms[int(np.argmin(lengths))]
    return _result(inst, canonical_tour((0, *best)), "brute_force", t0)


class HeldKarpTable:
    """Shortest paths from ``start`` through every subset of the other cities.

    ``cost[mask, j]`` is the length of the shortest path that leaves ``start``,
    visits exactly the cities in ``mask`` and ends at ``j`` (``j`` in ``mask``).
    Cities are indexed in the compressed space that omits ``start``.
    """

    def __init__(self, inst: TspInstance, start: int = 0):
        n = inst.n
        if n > HELD_KARP_MAX_N:
            raise SizeLimitError(f"Held-Karp limited to n <= {HELD_KARP_MAX_N}, got {n}")
        self.inst = inst
        self.start = start
        self.others = np.array([c for c in range(n) if c != start], dtype=np.intp)
        m = n - 1
        self.m = m
        d = inst.dist[np.ix_(self.others, self.others)]
        full = 1 << m
        cost = np.full((full, m), np.inf)
        parent = np.full((full, m), -1, dtype=np.int8)
        bits = 1 << np.arange(m)
        cost[bits, np.arange(m)] = inst.dist[start, self.others]
        masks = np.arange(full)
        popcount = np.zeros(full, dtype=np.int8)
        for b in range(m):
            popcount += ((masks >> b) & 1).astype(np.int8)
        for size in range(2, m + 1):
            layer = masks[popcount == size]
            for j in range(m):
                sel = layer[(layer >> j) & 1 == 1]
                prev = sel ^ (1 << j)
                cand = cost[prev] + d[:, j]
                k = np.argmin(cand, axis=1)
                cost[sel, j] = cand[np.arange(sel.size), k]
                parent[sel, j] = k
        self.cost = cost
        self.parent = parent

    def _mask(self, cities) -> int:
        pos = {int(c): i for i, c in enumerate(self.others)}
        mask = 0
        for c in cities:
            mask |= 1 << pos[int(c)]
        return mask

    def completion(self, v: int, remaining) -> float:
        """Shortest path from ``v`` through all of ``remaining`` back to ``start``."""
        if v == self.start:
            raise ValueError("completion path must begin away from the start city")
        j = int(np.flatnonzero(self.others == v)[0])
        return float(self.cost[self._mask([v, *remaining]), j])

    @cached_property
    def optimal_tour(self) -> Tour:
        full = (1 << self.m) - 1
        closing = self.cost[full] + self.inst.dist[self.others, self.start]
        j = int(np.argmin(closing))
        mask, rev = full, []
        while j >= 0:
            rev.append(int(self.others[j]))
            pj = int(self.parent[mask, j])
            mask ^= 1 << j
            j = pj
        return (self.start, *reversed(rev))


def held_karp(inst: TspInstance) -> SolveResult:
    """Exact dynamic program over subsets, O(2^n n^2) time."""
    n = inst.n
    if n > HELD_KARP_MAX_N:
        raise SizeLimitError(f"Held-Karp limited to n <= {HELD_KARP_MAX_N}, got {n}")
    t0 = time.perf_counter()
    if n <= 3:
        return _result(inst, canonical_tour(range(n)), "held_karp", t0)
    table = HeldKarpTable(inst, 0)
    return _result(inst, canonical_tour(table.optimal_tour), "held_karp", t0)


def nearest_neighbor(inst: TspInstance, start: int = 0) -> SolveResult:
    n = inst.n
    if not 0 <= start < n:
        raise ValueError(f"start city {start} out of range for n={n}")
    t0 = time.perf_counter()
    seen = np.zeros(n, dtype=bool)
    tour = [start]
    seen[start] = True
    for _ in range(n - 1):
        row = np.where(seen, np.inf, inst.dist[tour[-1]])
        nxt = int(np.argmin(row))
        tour.append(nxt)
        seen[nxt] = True
    return _result(inst, tour, "nearest_neighbor", t0)


def two_opt(inst: TspInstance, tour) -> SolveResult:
    """First-improvement 2-opt until no move shortens the tour."""
    t0 = time.perf_counter()
    t = check_tour(inst, tour).astype(np.intp).copy()
    n = inst.n
    d = inst.dist
    eps = 1e-12 * max(inst.coord_scale, 1.0)
    improved = True
    while improved and n > 3:
        improved = False
        for i in range(n - 2):
            a, b = t[i], t[i + 1]
            js = np.arange(i + 2, n if i > 0 else n - 1)
            if js.size == 0:
                continue
            c, e = t[js], t[(js + 1) % n]
            delta = d[a, c] + d[b, e] - d[a, b] - d[c, e]
            hit = np.flatnonzero(delta < -eps)
            if hit.size:
                j = int(js[hit[0]])
                t[i + 1 : j + 1] = t[i + 1 : j + 1][::-1]
                improved = True
                break
    return _result(inst, t, "two_opt", t0)


def optimality_gap(c: float, c_star: float, tol: float = 1e-9) -> float:
    """Return the ratio c / c*; the text-style gap is this value minus one.

    Lengths below the optimum by less than ``tol`` (summation-order rounding) count as optimal.
    """
    if not c_star > 0:
        raise ValueError(f"optimal length must be positive, got {c_star}")
    if c < c_star * (1.0 - tol):
        raise ValueError(f"length {c} is below the claimed optimum {c_star}")
    return max(c / c_star, 1.0)


def exact_solve(inst: TspInstance) -> SolveResult:
    if inst.n <= HELD_KARP_MAX_N:
        return held_karp(inst)
    raise SizeLimitError(f"no exact oracle for n={inst.n}")


def nn_two_opt(inst: TspInstance, start: int = 0) -> SolveResult:
    t0 = time.perf_counter()
    res = two_opt(inst, nearest_neighbor(inst, start).tour)
    return SolveResult(res.tour, res.length, "nn_two_opt", time.perf_counter() - t0)


__all__ = [
    "SolveResult",
    "brute_force_opt",
    "held_karp",
    "HeldKarpTable",
    "nearest_neighbor",
    "two_opt",
    "nn_two_opt",
    "optimality_gap",
    "exact_solve",
]
