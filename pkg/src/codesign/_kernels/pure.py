"""Pure-Python/numpy fallbacks for the hot kernels.

Same contracts as the compiled lane in ``_speedups.pyx``; results are
bit-identical (same comparisons and float operations in the same order).
"""
from __future__ import annotations

import heapq

import numpy as np

BACKEND = "pure"


def schedule_core(duration, unit, n_units, pred_ptr, pred_idx):
    """Greedy list schedule of one DAG.

    Ops are numbered in topological order; repeatedly the ready op (all
    predecessors finished) with the smallest index starts on its unit at
    max(unit available, predecessors' finish).  Returns (makespan, starts).
    """
    n = len(duration)
    start = np.zeros(n, dtype=np.float64)
    indeg = [pred_ptr[v + 1] - pred_ptr[v] for v in range(n)]
    succ: list[list[int]] = [[] for _ in range(n)]
    for v in range(n):
        for k in range(pred_ptr[v], pred_ptr[v + 1]):
            succ[pred_idx[k]].append(v)
    avail = [0.0] * n_units
    finish = [0.0] * n
    ready = [v for v in range(n) if indeg[v] == 0]
    heapq.heapify(ready)
    makespan = 0.0
    for _ in range(n):
        v = heapq.heappop(ready)
        t = avail[unit[v]]
        for k in range(pred_ptr[v], pred_ptr[v + 1]):
            f = finish[pred_idx[k]]
            if f > t:
                t = f
        start[v] = t
        f = t + duration[v]
        finish[v] = f
        avail[unit[v]] = f
        if f > makespan:
            makespan = f
        for w in succ[v]:
            indeg[w] -= 1
            if indeg[w] == 0:
                heapq.heappush(ready, w)
    return makespan, start


def schedule_batch(durations, units, n_units, pred_ptr, pred_idx):
    """Makespans for B schedules sharing one DAG topology."""
    b = durations.shape[0]
    out = np.empty(b, dtype=np.float64)
    for i in range(b):
        out[i], _ = schedule_core(durations[i], units[i], n_units, pred_ptr, pred_idx)
    return out


class ParetoArchive:
    """Streaming non-dominated archive over minimization triples.

    Points are (a, b, c) with smaller better in every coordinate.  An
    incoming point is discarded when some archive member is <= it in all
    coordinates (domination, or an exact tie: first seen wins); otherwise it
    is inserted and any members it dominates are removed.  Insertion order
    is preserved for survivors; ``n_ties`` counts discards whose first
    dominating member was an exact triple match.
    """

    def __init__(self):
        self._d = np.empty((256, 3), dtype=np.float64)
        self._ids = np.empty(256, dtype=np.int64)
        self._m = 0
        self.n_seen = 0
        self.n_ties = 0

    def __len__(self):
        return self._m

    def _grow(self, need):
        cap = self._d.shape[0]
        while cap < need:
            cap *= 2
        d = np.empty((cap, 3), dtype=np.float64)
        ids = np.empty(cap, dtype=np.int64)
        d[: self._m] = self._d[: self._m]
        ids[: self._m] = self._ids[: self._m]
        self._d, self._ids = d, ids

    def _add_one(self, p, pid):
        m = self._m
        if m:
            arch = self._d[:m]
            le = (arch <= p).all(axis=1)
            if le.any():
                hit = int(np.argmax(le))
                if (arch[hit] == p).all():
                    self.n_ties += 1
                return
            drop = (p <= arch).all(axis=1)
            if drop.any():
                keep = ~drop
                k = int(keep.sum())
                self._d[:k] = arch[keep]
                self._ids[:k] = self._ids[:m][keep]
                m = k
        if m + 1 > self._d.shape[0]:
            self._grow(m + 1)
        self._d[m] = p
        self._ids[m] = pid
        self._m = m + 1

    def add_block(self, block, ids):
        """Feed a contiguous batch of points (float64 (n,3), int64 (n,))."""
        n = block.shape[0]
        self.n_seen += n
        for i in range(n):
            self._add_one(block[i], ids[i])

    def add_point(self, a, b, c, pid):
        self.n_seen += 1
        self._add_one(np.array([a, b, c]), pid)

    def extract(self):
        """(points (m,3), ids (m,)) in insertion order."""
        return self._d[: self._m].copy(), self._ids[: self._m].copy()


def dominated_or_equal_mask(points, frontier):
    """For each row of ``points``: is some frontier row <= it componentwise?"""
    n = points.shape[0]
    out = np.zeros(n, dtype=bool)
    for lo in range(0, n, 4096):
        sub = points[lo : lo + 4096]
        out[lo : lo + 4096] = (frontier[None, :, :] <= sub[:, None, :]).all(axis=2).any(axis=1)
    return out
