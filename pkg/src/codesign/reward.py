"""Constrained weighted-sum reward over normalized metrics.

Metrics are oriented so that higher is better (area and latency negate),
linearly normalized into [0, 1] with clamping, and scalarized by a weight
vector.  Points violating any threshold receive a strictly negative,
violation-proportional punishment instead.  Threshold comparisons are
strict: area < max, latency < max, accuracy > min, perf/area > min.
"""
from __future__ import annotations

from dataclasses import dataclass, replace

from codesign.evaluator import Metrics

METRIC_NAMES = ("area_mm2", "latency_ms", "accuracy")


@dataclass(frozen=True)
class RewardSpec:
    """Weights, optional thresholds, normalization bounds, punishment scale.

    ``weights`` orders (area, latency, accuracy) and must sum to 1.  The
    normalization bounds are given in raw metric units as (lo, hi); for area
    and latency the oriented value -x is mapped from (-hi, -lo) onto (0, 1),
    so lower raw values normalize higher.
    """

    weights: tuple[float, float, float] = (1 / 3, 1 / 3, 1 / 3)
    area_max: float | None = None
    latency_max: float | None = None
    accuracy_min: float | None = None
    perf_per_area_min: float | None = None
    area_bounds: tuple[float, float] = (0.0, 300.0)
    latency_bounds: tuple[float, float] = (0.0, 2000.0)
    accuracy_bounds: tuple[float, float] = (0.0, 1.0)
    punishment_scale: float = 1.0

    def __post_init__(self):
        if len(self.weights) != 3:
            raise ValueError(f"weights must have 3 entries, got {len(self.weights)}")
        if any(w < 0 for w in self.weights):
            raise ValueError("weights must be nonnegative")
        if abs(sum(self.weights) - 1.0) > 1e-6:
            raise ValueError(f"weights must sum to 1, got {sum(self.weights)}")
        for name, (lo, hi) in (
            ("area_bounds", self.area_bounds),
            ("latency_bounds", self.latency_bounds),
            ("accuracy_bounds", self.accuracy_bounds),
        ):
            if not lo < hi:
                raise ValueError(f"{name}: lower bound {lo} must be below {hi}")
        if self.punishment_scale <= 0:
            raise ValueError("punishment_scale must be positive")

    @staticmethod
    def normalized_weights(w) -> tuple[float, float, float]:
        total = sum(w)
        if total <= 0:
            raise ValueError("weights must have a positive sum")
        return tuple(x / total for x in w)  # type: ignore[return-value]

    def with_perf_floor(self, threshold: float | None) -> "RewardSpec":
        return replace(self, perf_per_area_min=threshold)


@dataclass(frozen=True)
class RewardOutcome:
    feasible: bool
    value: float
    normalized: tuple[float, float, float]


def _clamp01(x: float) -> float:
    return 0.0 if x < 0.0 else (1.0 if x > 1.0 else x)


def normalize(m: Metrics, spec: RewardSpec) -> tuple[float, float, float]:
    """Per-metric oriented linear map into [0, 1]; higher is always better."""
    a_lo, a_hi = spec.area_bounds
    l_lo, l_hi = spec.latency_bounds
    c_lo, c_hi = spec.accuracy_bounds
    return (
        _clamp01((a_hi - m.area_mm2) / (a_hi - a_lo)),
        _clamp01((l_hi - m.latency_ms) / (l_hi - l_lo)),
        _clamp01((m.accuracy - c_lo) / (c_hi - c_lo)),
    )


def perf_per_area(m: Metrics) -> float:
    """Batch-1 throughput per silicon area, img/s/cm2."""
    return (1000.0 / m.latency_ms) / (m.area_mm2 / 100.0)


def violations(m: Metrics, spec: RewardSpec) -> list[tuple[str, float, float]]:
    """(name, threshold, violation magnitude) per violated constraint."""
    out = []
    if spec.area_max is not None and not m.area_mm2 < spec.area_max:
        out.append(("area_mm2", spec.area_max, m.area_mm2 - spec.area_max))
    if spec.latency_max is not None and not m.latency_ms < spec.latency_max:
        out.append(("latency_ms", spec.latency_max, m.latency_ms - spec.latency_max))
    if spec.accuracy_min is not None and not m.accuracy > spec.accuracy_min:
        out.append(("accuracy", spec.accuracy_min, spec.accuracy_min - m.accuracy))
    if spec.perf_per_area_min is not None:
        ppa = perf_per_area(m)
        if not ppa > spec.perf_per_area_min:
            out.append(("perf_per_area", spec.perf_per_area_min, spec.perf_per_area_min - ppa))
    return out


def punishment_value(violated, scale: float) -> float:
    """Strictly negative feedback, graded by relative violation, capped at -scale."""
    ratios = []
    for _, threshold, excess in violated:
        ratios.append(1.0 if threshold == 0 else min(1.0, abs(excess) / abs(threshold)))
    mean = sum(ratios) / len(ratios)
    return -scale * max(mean, 1e-9)  # boundary hits (excess 0) still punish


def reward(m: Metrics, spec: RewardSpec) -> RewardOutcome:
    """Weighted normalized reward when feasible, punishment otherwise."""
    norm = normalize(m, spec)
    violated = violations(m, spec)
    if violated:
        return RewardOutcome(False, punishment_value(violated, spec.punishment_scale), norm)
    value = sum(w * x for w, x in zip(spec.weights, norm))
    return RewardOutcome(True, value, norm)


class ThresholdRamp:
    """Stateful constraint provider: the threshold steps up a fixed schedule.

    Each stage is (threshold, feasible budget); once the count of FEASIBLE
    points judged in a stage reaches its budget, the next stage activates.
    Only feasible points advance the count; the last stage holds forever.
    """

    def __init__(self, schedule: list[tuple[float, int]]):
        if not schedule:
            raise ValueError("ramp schedule must have at least one stage")
        thresholds = [t for t, _ in schedule]
        if thresholds != sorted(thresholds):
            raise ValueError("ramp thresholds must be nondecreasing")
        if any(budget <= 0 for _, budget in schedule):
            raise ValueError("ramp budgets must be positive")
        self.schedule = list(schedule)
        self.stage = 0
        self.count_in_stage = 0

    @property
    def threshold(self) -> float:
        return self.schedule[self.stage][0]

    @property
    def final_threshold(self) -> float:
        return self.schedule[-1][0]

    def update(self, feasible: bool) -> None:
        """Record one judged point; advance after the stage's Nth feasible one."""
        if not feasible:
            return
        self.count_in_stage += 1
        if self.stage + 1 < len(self.schedule) and self.count_in_stage >= self.schedule[self.stage][1]:
            self.stage += 1
            self.count_in_stage = 0
