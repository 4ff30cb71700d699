"""Metric assembly with memoization.

Accuracy depends only on the cell, area only on the hardware, and latency
only on (cell, latency-relevant hw projection); each is cached under exactly
that key so isomorphic cells and projection-equivalent configs share work.
"""
from __future__ import annotations

import threading
from collections import OrderedDict
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from math import isfinite

from codesign import hwmodel
from codesign.space import CellSpec, HwConfig, SearchPoint, SkeletonSpec, cell_hash


@dataclass(frozen=True)
class Metrics:
    """One design point's metric triple (units in the field names)."""

    area_mm2: float
    latency_ms: float
    accuracy: float

    def __post_init__(self):
        for name in ("area_mm2", "latency_ms", "accuracy"):
            v = getattr(self, name)
            if not isfinite(v):
                raise ValueError(f"{name} must be finite, got {v}")
        if not 0.0 <= self.accuracy <= 1.0:
            raise ValueError(f"accuracy {self.accuracy} outside [0, 1]")


class BatchEvaluationError(RuntimeError):
    """Wraps the first failure in a batch with its input index."""

    def __init__(self, index: int, cause: Exception):
        self.index = index
        self.cause = cause
        super().__init__(f"evaluation failed at index {index}: {cause!r}")


class _LruCache:
    """Thread-safe LRU map; capacity None means unbounded."""

    def __init__(self, capacity=None):
        self._data: OrderedDict = OrderedDict()
        self._cap = capacity
        self._lock = threading.Lock()
        self.hits = 0
        self.misses = 0

    def get(self, key, compute):
        with self._lock:
            if key in self._data:
                self.hits += 1
                self._data.move_to_end(key)
                return self._data[key]
        value = compute()
        with self._lock:
            if key in self._data:
                self.hits += 1
                self._data.move_to_end(key)
                return self._data[key]
            self.misses += 1
            self._data[key] = value
            if self._cap is not None and len(self._data) > self._cap:
                self._data.popitem(last=False)
        return value


class Evaluator:
    """Composes accuracy, area, and scheduled latency into Metrics."""

    def __init__(
        self,
        oracle,
        skeleton: SkeletonSpec,
        table: hwmodel.LatencyTable,
        calibration: hwmodel.Calibration = hwmodel.Calibration(),
        cache_capacity: int | None = None,
    ):
        self.oracle = oracle
        self.skeleton = skeleton
        self.table = table
        self.calibration = calibration
        self._acc = _LruCache(cache_capacity)
        self._area = _LruCache(cache_capacity)
        self._lat = _LruCache(cache_capacity)

    @property
    def cache_hits(self) -> int:
        return self._acc.hits + self._area.hits + self._lat.hits

    def accuracy(self, cell: CellSpec, digest: str | None = None) -> float:
        digest = digest or cell_hash(cell)
        return self._acc.get(digest, lambda: self.oracle.accuracy(cell).accuracy)

    def area_mm2(self, hw: HwConfig) -> float:
        return self._area.get(hw, lambda: hwmodel.area(hw, self.calibration)[1])

    def latency_ms(self, cell: CellSpec, hw: HwConfig, digest: str | None = None) -> float:
        digest = digest or cell_hash(cell)
        proj = hwmodel.projection(hw)
        return self._lat.get(
            (digest, proj),
            lambda: hwmodel.latency(cell, self.skeleton, hw, self.table),
        )

    def latency_by_projection(self, cell: CellSpec, digest: str | None = None):
        """Latency vector over all hw projections (one batched schedule).

        Entries equal :meth:`latency_ms` for any hw under each projection;
        the enumeration path uses this to avoid 8640 separate schedules.
        """
        digest = digest or cell_hash(cell)
        return self._lat.get(
            (digest, "__all__"),
            lambda: hwmodel.projection_latencies(cell, self.skeleton, self.table),
        )

    def evaluate(self, point: SearchPoint) -> Metrics:
        digest = cell_hash(point.cell)
        return Metrics(
            area_mm2=self.area_mm2(point.hw),
            latency_ms=self.latency_ms(point.cell, point.hw, digest),
            accuracy=self.accuracy(point.cell, digest),
        )

    def evaluate_batch(self, points, parallelism: int = 1) -> list[Metrics]:
        """Evaluate many points; output order matches input order.

        The first failing point aborts the batch with its index attached.
        """
        points = list(points)
        if parallelism < 1:
            raise ValueError("parallelism must be >= 1")
        if not points:
            return []

        def one(indexed):
            i, p = indexed
            try:
                return i, self.evaluate(p), None
            except Exception as exc:  # noqa: BLE001 - reported with index
                return i, None, exc

        if parallelism == 1:
            results = map(one, enumerate(points))
        else:
            with ThreadPoolExecutor(max_workers=parallelism) as pool:
                results = list(pool.map(one, enumerate(points)))
        out: list[Metrics | None] = [None] * len(points)
        failure = None
        for i, metrics, exc in results:
            if exc is not None:
                if failure is None or i < failure[0]:
                    failure = (i, exc)
            else:
                out[i] = metrics
        if failure is not None:
            raise BatchEvaluationError(*failure)
        return out  # type: ignore[return-value]
