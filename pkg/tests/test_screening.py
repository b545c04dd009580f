import dataclasses
import math

import numpy as np
import pytest

from fpc_surrogate.config import ScreeningCriteria
from fpc_surrogate.oracle import DerivedMetrics
from fpc_surrogate.screening import (
    METRIC_NAMES,
    Candidate,
    OracleSurrogate,
    metric_histograms,
    rank_candidates,
    score_design,
    screen_candidates,
    select_optimal,
    verify_selection,
)

LENIENT = ScreeningCriteria(min_zbw_mhz=0.0, max_ar_min_db=10.0)


def metrics(zbw=120.0, ar_min=1.0, gain=9.0, ar5bw=50.0) -> DerivedMetrics:
    return DerivedMetrics(
        f_res_ghz=2.45,
        gain_at_res_dbi=gain,
        zbw_mhz=zbw,
        ar5bw_mhz=ar5bw,
        ar_min_db=ar_min,
    )


def candidate(index, score, ar_min=1.0) -> Candidate:
    return Candidate(
        index=index,
        design=np.zeros(72),
        metrics=metrics(ar_min=ar_min),
        score=score,
        feasible=math.isfinite(score),
    )


@pytest.fixture(scope="module")
def oracle_report(geometry):
    return screen_candidates(
        OracleSurrogate(geometry),
        geometry,
        40,
        11,
        LENIENT,
        bins=8,
    )


def test_score_uses_weights():
    score, feasible = score_design(metrics(), ScreeningCriteria())

    assert feasible
    assert score == pytest.approx(120.0 + 50.0 - 50.0 + 90.0)


def test_infeasible_designs_score_minus_infinity():
    narrow, feasible = score_design(metrics(zbw=50.0), ScreeningCriteria())
    elliptical, _ = score_design(metrics(ar_min=4.0), ScreeningCriteria())

    assert not feasible
    assert narrow == -math.inf
    assert elliptical == -math.inf


def test_ranking_breaks_ties_by_axial_ratio_then_index():
    pool = (
        candidate(0, 10.0, ar_min=2.0),
        candidate(1, 10.0, ar_min=1.0),
        candidate(2, -math.inf),
        candidate(3, 12.0),
        candidate(4, 10.0, ar_min=1.0),
    )

    assert rank_candidates(pool) == (3, 1, 4, 0)


def test_histograms_count_every_member():
    population = [metrics(zbw=float(z)) for z in range(10)]

    histograms = metric_histograms(population, bins=4)

    assert set(histograms) == set(METRIC_NAMES)
    assert int(histograms["zbw_mhz"].counts.sum()) == 10
    assert len(histograms["zbw_mhz"].rows()) == 4


def test_screening_report(oracle_report):
    assert oracle_report.pool_size == 40
    assert len(oracle_report.candidates) == 40
    assert oracle_report.timing_ms >= 0.0
    assert oracle_report.reference_cost_hours == pytest.approx(50.0)
    for histogram in oracle_report.histograms.values():
        assert int(histogram.counts.sum()) == 40


def test_ranking_is_sorted_by_score(oracle_report):
    scores = [oracle_report.candidates[i].score for i in oracle_report.ranking]

    assert scores == sorted(scores, reverse=True)
    assert all(math.isfinite(s) for s in scores)


def test_screening_is_seeded(geometry, oracle_report):
    again = screen_candidates(
        OracleSurrogate(geometry),
        geometry,
        40,
        11,
        LENIENT,
        bins=8,
    )

    assert again.ranking == oracle_report.ranking


def test_selection_reports_shortfall(geometry):
    strict = ScreeningCriteria(min_zbw_mhz=10000.0)
    report = screen_candidates(
        OracleSurrogate(geometry),
        geometry,
        5,
        2,
        strict,
    )

    selection = select_optimal(report, 3)

    assert selection.candidates == ()
    assert selection.shortfall == 3


def test_oracle_verification_has_no_error(geometry, oracle_report):
    selection = select_optimal(oracle_report, 3)

    rows = verify_selection(selection, geometry)

    assert [row.index for row in rows] == list(oracle_report.ranking[:3])
    for row in rows:
        assert set(row.deltas) == set(METRIC_NAMES)
        assert max(row.deltas.values()) == pytest.approx(0.0, abs=1e-9)


@pytest.mark.parametrize(
    "transform",
    [lambda s: 0.5 * s - 40.0, lambda s: math.exp(s / 200.0)],
)
def test_ranking_survives_increasing_transforms(oracle_report, transform):
    rescored = tuple(
        dataclasses.replace(c, score=transform(c.score)) if c.feasible else c
        for c in oracle_report.candidates
    )

    assert rank_candidates(rescored) == oracle_report.ranking


def test_feasibility_is_monotone_in_thresholds(oracle_report):
    population = [c.metrics for c in oracle_report.candidates]
    previous = None

    for min_zbw, max_ar in [(0, 10), (60, 8), (100, 5), (120, 3), (140, 1)]:
        criteria = ScreeningCriteria(min_zbw_mhz=min_zbw, max_ar_min_db=max_ar)
        feasible = {
            i for i, m in enumerate(population) if score_design(m, criteria)[1]
        }
        if previous is not None:
            assert feasible <= previous
        previous = feasible
