"""Exact multiobjective ground truth: streaming non-dominated filtering and
exhaustive enumeration of the joint cell x hardware space.

Dominance over (area, latency, accuracy): smaller area, smaller latency,
higher accuracy, with at least one strict improvement.  Internally points
become minimization triples (area, latency, -accuracy) so the kernels only
ever compare with <=.
"""
from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from codesign import _kernels
from codesign.evaluator import Evaluator, Metrics
from codesign.reward import RewardSpec, reward
from codesign.space import HwConfig, SearchPoint, enumerate_hw


@dataclass(frozen=True)
class FrontierEntry:
    point: SearchPoint
    metrics: Metrics


def dominates(a: Metrics, b: Metrics) -> bool:
    """a is at least as good everywhere and strictly better somewhere."""
    if a.area_mm2 > b.area_mm2 or a.latency_ms > b.latency_ms or a.accuracy < b.accuracy:
        return False
    return (
        a.area_mm2 < b.area_mm2
        or a.latency_ms < b.latency_ms
        or a.accuracy > b.accuracy
    )


def _min_triple(m: Metrics) -> tuple[float, float, float]:
    return (m.area_mm2, m.latency_ms, -m.accuracy)


def _sorted_entries(payloads, d, ids) -> list[FrontierEntry]:
    order = sorted(range(len(ids)), key=lambda i: (d[i, 0], d[i, 1], d[i, 2]))
    return [payloads[ids[i]] for i in order]


def frontier(points) -> list[FrontierEntry]:
    """Non-dominated subset of a (point, metrics) stream.

    Exact metric ties keep the first-seen point.  Output is ordered by
    ascending area, then latency.  Payloads are materialized, so this path
    suits moderate streams; :func:`enumerate_joint` handles the bulk case.
    """
    archive = _kernels.ParetoArchive()
    payloads: list[FrontierEntry] = []
    chunk_d = np.empty((1024, 3), dtype=np.float64)
    chunk_ids = np.empty(1024, dtype=np.int64)
    fill = 0
    for point, metrics in points:
        payloads.append(FrontierEntry(point, metrics))
        chunk_d[fill] = _min_triple(metrics)
        chunk_ids[fill] = len(payloads) - 1
        fill += 1
        if fill == 1024:
            archive.add_block(chunk_d, chunk_ids)
            fill = 0
    if fill:
        archive.add_block(np.ascontiguousarray(chunk_d[:fill]), np.ascontiguousarray(chunk_ids[:fill]))
    d, ids = archive.extract()
    return _sorted_entries(payloads, d, ids)


def frontier_of_entries(entries) -> list[FrontierEntry]:
    return frontier((e.point, e.metrics) for e in entries)


def top_k_by_reward(entries, spec: RewardSpec, k: int):
    """Feasible frontier entries ranked by reward, best first, truncated to k.

    Returns (entry, outcome) pairs; ties order by (area, latency, stream
    position) for determinism.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    scored = []
    for i, e in enumerate(entries):
        out = reward(e.metrics, spec)
        if out.feasible:
            scored.append((-out.value, e.metrics.area_mm2, e.metrics.latency_ms, i, e, out))
    scored.sort(key=lambda row: row[:4])
    return [(e, out) for *_, e, out in scored[:k]]


@dataclass
class JointFrontierResult:
    """Frontier of an exhaustive cell x hw sweep, plus stream statistics."""

    entries: list[FrontierEntry]
    total_points: int
    n_cells: int
    n_hw: int
    metric_ties: int

    @property
    def frontier_size(self) -> int:
        return len(self.entries)

    def distinct_cells(self) -> int:
        return len({e.point.cell for e in self.entries})

    def distinct_hw(self) -> int:
        return len({e.point.hw for e in self.entries})


def _cell_block(evaluator: Evaluator, cell, area_arr, proj_idx):
    """Minimization triples for one cell against every hw, in hw order."""
    lat = evaluator.latency_by_projection(cell)
    block = np.empty((len(area_arr), 3), dtype=np.float64)
    block[:, 0] = area_arr
    block[:, 1] = lat[proj_idx]
    block[:, 2] = -evaluator.accuracy(cell)
    return block


def enumerate_joint(
    cells,
    evaluator: Evaluator,
    hw: list[HwConfig] | None = None,
    parallelism: int = 1,
    progress=None,
) -> JointFrontierResult:
    """Stream every (cell, hw) pair into a streaming frontier filter.

    Factorization does the heavy lifting: accuracy once per cell, area once
    per hw, one batched schedule per (cell, latency projection).  Pair ids
    are ``cell_index * len(hw) + hw_index``, which fixes first-seen tie
    resolution regardless of ``parallelism``.
    """
    from codesign import hwmodel

    cells = list(cells)
    hw_list = list(enumerate_hw()) if hw is None else list(hw)
    n_hw = len(hw_list)
    area_arr = np.array([evaluator.area_mm2(h) for h in hw_list])
    proj_idx = np.array(
        [evaluator.table.col_index(hwmodel.projection(h)) for h in hw_list], dtype=np.intp
    )

    def worker(cell_indices):
        archive = _kernels.ParetoArchive()
        for ci in cell_indices:
            block = _cell_block(evaluator, cells[ci], area_arr, proj_idx)
            ids = np.arange(ci * n_hw, (ci + 1) * n_hw, dtype=np.int64)
            archive.add_block(block, ids)
            if progress is not None:
                progress(ci)
        return archive

    if parallelism <= 1 or len(cells) < 2:
        archives = [worker(range(len(cells)))]
    else:
        shards = [list(range(len(cells)))[i::parallelism] for i in range(parallelism)]
        with ThreadPoolExecutor(max_workers=parallelism) as pool:
            archives = list(pool.map(worker, shards))

    merged = merge_archives(archives)
    d, ids = merged.extract()
    entries = []
    payloads = {}
    for i, pid in enumerate(ids):
        ci, hi = divmod(int(pid), n_hw)
        metrics = Metrics(area_mm2=d[i, 0], latency_ms=d[i, 1], accuracy=-d[i, 2])
        payloads[pid] = FrontierEntry(SearchPoint(cells[ci], hw_list[hi]), metrics)
    entries = _sorted_entries(payloads, d, ids)
    ties = sum(a.n_ties for a in archives)
    return JointFrontierResult(
        entries=entries,
        total_points=len(cells) * n_hw,
        n_cells=len(cells),
        n_hw=n_hw,
        metric_ties=ties,
    )


def merge_archives(archives) -> "_kernels.ParetoArchive":
    """Re-filter the union of several archives into one.

    Feeding members in ascending id order makes exact-tie resolution match a
    sequential pass (lowest id wins), so merging is associative and
    parallelism-invariant.
    """
    if len(archives) == 1:
        return archives[0]
    parts = [a.extract() for a in archives]
    d = np.concatenate([p[0] for p in parts])
    ids = np.concatenate([p[1] for p in parts])
    order = np.argsort(ids, kind="stable")
    merged = _kernels.ParetoArchive()
    merged.add_block(np.ascontiguousarray(d[order]), np.ascontiguousarray(ids[order]))
    return merged


def verify_joint_frontier(cells, evaluator: Evaluator, result: JointFrontierResult,
                          hw: list[HwConfig] | None = None) -> bool:
    """Re-stream every pair and confirm some frontier member covers it.

    Every point must be dominated by or equal to a frontier entry (frontier
    members cover themselves), which certifies no point was wrongly excluded.
    """
    from codesign import hwmodel

    cells = list(cells)
    hw_list = list(enumerate_hw()) if hw is None else list(hw)
    front = np.array([_min_triple(e.metrics) for e in result.entries])
    area_arr = np.array([evaluator.area_mm2(h) for h in hw_list])
    proj_idx = np.array(
        [evaluator.table.col_index(hwmodel.projection(h)) for h in hw_list], dtype=np.intp
    )
    for cell in cells:
        block = _cell_block(evaluator, cell, area_arr, proj_idx)
        if not _kernels.dominated_or_equal_mask(block, front).all():
            return False
    return True
