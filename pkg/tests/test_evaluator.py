"""Evaluator memoization, factorization, and batch semantics."""
import random

import pytest

from codesign import hwmodel as hm
from codesign.accuracy import SyntheticAccuracy
from codesign.evaluator import BatchEvaluationError, Evaluator, Metrics
from codesign.space import (
    CONV1X1,
    CONV3X3,
    CellSpec,
    HwConfig,
    SearchPoint,
    SkeletonSpec,
    enumerate_cells,
    enumerate_hw,
)

SKEL = SkeletonSpec()


@pytest.fixture(scope="module")
def table():
    return hm.build_latency_table(SKEL, hm.SyntheticSource())


def make_eval(table, **kw):
    return Evaluator(SyntheticAccuracy(seed=0), SKEL, table, **kw)


def test_metrics_validation():
    Metrics(1.0, 2.0, 0.5)
    with pytest.raises(ValueError):
        Metrics(float("nan"), 2.0, 0.5)
    with pytest.raises(ValueError):
        Metrics(1.0, 2.0, 1.5)


def test_repeated_evaluation_hits_cache(table):
    ev = make_eval(table)
    point = SearchPoint(CellSpec.chain([CONV3X3]), next(enumerate_hw()))
    first = ev.evaluate(point)
    hits_before = ev.cache_hits
    second = ev.evaluate(point)
    assert first == second
    assert ev.cache_hits >= hits_before + 3


def test_accuracy_factorizes_over_hw(table):
    ev = make_eval(table)
    cell = CellSpec.chain([CONV3X3, CONV1X1])
    hw_list = list(enumerate_hw())
    m1 = ev.evaluate(SearchPoint(cell, hw_list[0]))
    m2 = ev.evaluate(SearchPoint(cell, hw_list[-1]))
    assert m1.accuracy == m2.accuracy
    assert m1.area_mm2 != m2.area_mm2


def test_area_factorizes_over_cells(table):
    ev = make_eval(table)
    hw = list(enumerate_hw())[100]
    cells = list(enumerate_cells(4, 9))
    m1 = ev.evaluate(SearchPoint(cells[0], hw))
    m2 = ev.evaluate(SearchPoint(cells[-1], hw))
    assert m1.area_mm2 == m2.area_mm2


def test_projection_equivalent_hw_share_latency_work(table):
    ev = make_eval(table)
    cell = CellSpec.chain([CONV3X3])
    base = HwConfig(8, 4, 1024, 1024, 1024, 256, False, 1.0)
    deeper = HwConfig(8, 4, 8192, 4096, 4096, 256, False, 1.0)
    m1 = ev.evaluate(SearchPoint(cell, base))
    misses = ev._lat.misses
    m2 = ev.evaluate(SearchPoint(cell, deeper))
    assert ev._lat.misses == misses  # same latency projection
    assert m1.latency_ms == m2.latency_ms
    assert m2.area_mm2 > m1.area_mm2


def test_isomorphic_cells_share_the_cache(table):
    ev = make_eval(table)
    a = CellSpec.from_edges(4, [(0, 1), (0, 2), (1, 3), (2, 3)], [CONV3X3, CONV1X1])
    b = CellSpec.from_edges(4, [(0, 2), (0, 1), (2, 3), (1, 3)], [CONV1X1, CONV3X3])
    hw = next(enumerate_hw())
    ev.evaluate(SearchPoint(a, hw))
    misses = ev._acc.misses + ev._lat.misses
    ev.evaluate(SearchPoint(b, hw))
    assert ev._acc.misses + ev._lat.misses == misses


def test_batch_matches_sequential_any_parallelism(table):
    ev = make_eval(table)
    rng = random.Random(0)
    cells = list(enumerate_cells(4, 9))
    hw_list = list(enumerate_hw())
    points = [SearchPoint(rng.choice(cells), rng.choice(hw_list)) for _ in range(100)]
    seq = [make_eval(table).evaluate(p) for p in points]
    assert ev.evaluate_batch(points, parallelism=1) == seq
    assert make_eval(table).evaluate_batch(points, parallelism=8) == seq


def test_batch_empty_and_error_index(table):
    ev = make_eval(table)
    assert ev.evaluate_batch([], parallelism=4) == []

    class Boom:
        def accuracy(self, cell):
            raise RuntimeError("boom")

    bad = Evaluator(Boom(), SKEL, table)
    good_cell = CellSpec.chain([CONV3X3])
    hw = next(enumerate_hw())
    shared = make_eval(table)
    points = [SearchPoint(good_cell, hw)] * 3 + [SearchPoint(good_cell, hw)]
    # index is attached for the first failing point
    mixed = Evaluator(SyntheticAccuracy(0), SKEL, table)
    mixed._acc.get("sentinel", lambda: 0.9)  # warm unrelated key

    with pytest.raises(BatchEvaluationError) as err:
        bad.evaluate_batch(points, parallelism=2)
    assert err.value.index == 0

    # failure at a later index reports that index
    calls = {"n": 0}

    class FailAt3:
        def accuracy(self, cell):
            if calls["n"] == 3:
                raise RuntimeError("boom")
            calls["n"] += 1
            return SyntheticAccuracy(0).accuracy(cell)

    cells = list(enumerate_cells(4, 9))[:4]
    pts = [SearchPoint(c, hw) for c in cells]
    ev2 = Evaluator(FailAt3(), SKEL, table)
    with pytest.raises(BatchEvaluationError) as err:
        ev2.evaluate_batch(pts, parallelism=1)
    assert err.value.index == 3


def test_bounded_cache_evicts(table):
    ev = make_eval(table, cache_capacity=2)
    cells = list(enumerate_cells(4, 9))[:5]
    hw = next(enumerate_hw())
    for c in cells:
        ev.evaluate(SearchPoint(c, hw))
    assert len(ev._acc._data) <= 2
    # results stay correct after eviction
    again = ev.evaluate(SearchPoint(cells[0], hw))
    fresh = make_eval(table).evaluate(SearchPoint(cells[0], hw))
    assert again == fresh
