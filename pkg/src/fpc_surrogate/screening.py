"""Candidate pool screening through a surrogate.

Predicted metrics rank the pool; the oracle is consulted only to verify
the selected designs.
"""

import logging
import math
import time
from dataclasses import dataclass, fields
from typing import Protocol

import numpy as np
from numpy.typing import NDArray

from fpc_surrogate.config import ScreeningCriteria
from fpc_surrogate.design_space import (
    CellGeometry,
    encode_design,
    sample_design,
)
from fpc_surrogate.nn.base import Array
from fpc_surrogate.oracle import (
    AR_THRESHOLD_DB,
    ZBW_THRESHOLD_DB,
    AntennaResponse,
    DerivedMetrics,
    FrequencyGrid,
    evaluate_vectors,
    extract_metrics,
)
from fpc_surrogate.seeding import child_seed

logger = logging.getLogger(__name__)

FULL_WAVE_MINUTES_PER_DESIGN = 75.0
METRIC_NAMES = tuple(f.name for f in fields(DerivedMetrics))


class Surrogate(Protocol):
    """Anything that maps design vectors to response vectors."""

    def predict(self, designs: Array) -> Array:
        """Returns physical response vectors, one row per design."""
        ...


@dataclass(frozen=True, slots=True)
class OracleSurrogate:
    """The oracle itself behind the surrogate interface.

    Attributes:
        geometry: Unit-cell geometry.
        grid: Frequency grid.
    """

    geometry: CellGeometry
    grid: FrequencyGrid = FrequencyGrid()

    def predict(self, designs: Array) -> Array:
        """Evaluates the oracle for each design vector."""
        return evaluate_vectors(designs, self.geometry, self.grid)


@dataclass(frozen=True, slots=True)
class Candidate:
    """One scored pool member.

    Attributes:
        index: Position in the pool.
        design: Design vector in millimetres.
        metrics: Predicted metrics.
        score: Weighted score, ``-inf`` when infeasible.
        feasible: Whether the feasibility gates pass.
    """

    index: int
    design: Array
    metrics: DerivedMetrics
    score: float
    feasible: bool


@dataclass(frozen=True, slots=True)
class Histogram:
    """Distribution of one metric over the pool.

    Attributes:
        metric: Metric name.
        edges: Bin edges, one more than counts.
        counts: Members per bin.
    """

    metric: str
    edges: Array
    counts: NDArray[np.int64]

    def rows(self) -> list[tuple[float, float, int]]:
        """(bin_low, bin_high, count) triples."""
        return [
            (float(low), float(high), int(count))
            for low, high, count in zip(
                self.edges[:-1],
                self.edges[1:],
                self.counts,
                strict=True,
            )
        ]


def metric_histograms(
    metrics: list[DerivedMetrics],
    bins: int = 20,
) -> dict[str, Histogram]:
    """Histograms every metric over a population.

    Args:
        metrics: Metrics of the population.
        bins: Bins per histogram.

    Returns:
        Histograms keyed by metric name.
    """
    histograms = {}
    for name in METRIC_NAMES:
        values = np.array([getattr(m, name) for m in metrics])
        counts, edges = np.histogram(values, bins=bins)
        histograms[name] = Histogram(name, edges, counts.astype(np.int64))
    return histograms


@dataclass(frozen=True, slots=True)
class ScreeningReport:
    """Scored pool with its ranking.

    Attributes:
        pool_seed: Seed of the pool.
        pool_size: Number of candidates.
        candidates: Candidates in pool order.
        ranking: Pool indices of feasible candidates, best first.
        timing_ms: Wall-clock time of prediction, extraction and scoring.
        histograms: Per-metric histograms over the whole pool.
    """

    pool_seed: int
    pool_size: int
    candidates: tuple[Candidate, ...]
    ranking: tuple[int, ...]
    timing_ms: float
    histograms: dict[str, Histogram]

    @property
    def reference_cost_hours(self) -> float:
        """Full-wave simulation time the pool would have cost."""
        return self.pool_size * FULL_WAVE_MINUTES_PER_DESIGN / 60.0


def score_design(
    metrics: DerivedMetrics,
    criteria: ScreeningCriteria,
) -> tuple[float, bool]:
    """Scores a design and applies the feasibility gates.

    Args:
        metrics: Predicted metrics.
        criteria: Ranking rule.

    Returns:
        The score (``-inf`` when infeasible) and the feasibility flag.
    """
    feasible = (
        metrics.zbw_mhz >= criteria.min_zbw_mhz
        and metrics.ar_min_db <= criteria.max_ar_min_db
    )
    if not feasible:
        return -math.inf, False
    score = (
        criteria.w_zbw * metrics.zbw_mhz
        + criteria.w_ar5bw * metrics.ar5bw_mhz
        - criteria.w_ar * metrics.ar_min_db
        + criteria.w_gain * metrics.gain_at_res_dbi
    )
    return score, True


def rank_candidates(candidates: tuple[Candidate, ...]) -> tuple[int, ...]:
    """Orders feasible candidates by score, then lower AR, then index."""
    feasible = [c for c in candidates if c.feasible]
    feasible.sort(key=lambda c: (-c.score, c.metrics.ar_min_db, c.index))
    return tuple(c.index for c in feasible)


def screen_candidates(  # noqa: PLR0913
    surrogate: Surrogate,
    geometry: CellGeometry,
    n: int,
    seed: int,
    criteria: ScreeningCriteria,
    *,
    grid: FrequencyGrid | None = None,
    bins: int = 20,
    zbw_threshold_db: float = ZBW_THRESHOLD_DB,
    ar_threshold_db: float = AR_THRESHOLD_DB,
) -> ScreeningReport:
    """Samples a pool, predicts its spectra and ranks it.

    Member ``i`` is drawn from the child seed ``(seed, i)``.

    Args:
        surrogate: Response predictor.
        geometry: Unit-cell geometry.
        n: Pool size.
        seed: Pool seed.
        criteria: Ranking rule.
        grid: Frequency grid of the predicted spectra.
        bins: Bins per histogram.
        zbw_threshold_db: Return-loss level of the impedance bandwidth.
        ar_threshold_db: Axial-ratio level of the AR bandwidth.

    Returns:
        The scored and ranked pool.
    """
    grid = grid or FrequencyGrid()
    designs = np.array([
        encode_design(sample_design(geometry, child_seed(seed, i)))
        for i in range(n)
    ]).reshape(n, -1)
    started = time.perf_counter()
    responses = surrogate.predict(designs)
    candidates = []
    for index, (design, response) in enumerate(
        zip(designs, responses, strict=True),
    ):
        metrics = extract_metrics(
            AntennaResponse.from_vector(response),
            grid,
            zbw_threshold_db,
            ar_threshold_db,
        )
        score, feasible = score_design(metrics, criteria)
        candidates.append(Candidate(index, design, metrics, score, feasible))
    pool = tuple(candidates)
    ranking = rank_candidates(pool)
    timing_ms = (time.perf_counter() - started) * 1000.0
    logger.info(
        "Screened %d candidates in %.1f ms, %d feasible",
        n,
        timing_ms,
        len(ranking),
    )
    return ScreeningReport(
        pool_seed=seed,
        pool_size=n,
        candidates=pool,
        ranking=ranking,
        timing_ms=timing_ms,
        histograms=metric_histograms([c.metrics for c in pool], bins),
    )


@dataclass(frozen=True, slots=True)
class Selection:
    """Top candidates of a screening run.

    Attributes:
        candidates: Selected candidates, best first.
        requested: Number of candidates asked for.
    """

    candidates: tuple[Candidate, ...]
    requested: int

    @property
    def shortfall(self) -> int:
        """How many requested candidates were not feasible."""
        return self.requested - len(self.candidates)


def select_optimal(report: ScreeningReport, k: int) -> Selection:
    """Takes the ``k`` best feasible candidates.

    Args:
        report: Screening report.
        k: Number of candidates.

    Returns:
        The selection; shorter than ``k`` when too few are feasible.
    """
    chosen = tuple(report.candidates[i] for i in report.ranking[:k])
    if len(chosen) < k:
        logger.warning(
            "Only %d of %d requested candidates are feasible",
            len(chosen),
            k,
        )
    return Selection(chosen, k)


@dataclass(frozen=True, slots=True)
class VerificationRow:
    """Surrogate-vs-oracle comparison of one design.

    Attributes:
        index: Pool index.
        predicted: Surrogate metrics.
        actual: Oracle metrics.
        deltas: Absolute difference of every metric.
    """

    index: int
    predicted: DerivedMetrics
    actual: DerivedMetrics
    deltas: dict[str, float]


def verify_selection(
    selection: Selection,
    geometry: CellGeometry,
    grid: FrequencyGrid | None = None,
    zbw_threshold_db: float = ZBW_THRESHOLD_DB,
    ar_threshold_db: float = AR_THRESHOLD_DB,
) -> list[VerificationRow]:
    """Re-evaluates selected designs with the oracle.

    Args:
        selection: Selected candidates.
        geometry: Unit-cell geometry.
        grid: Frequency grid.
        zbw_threshold_db: Return-loss level of the impedance bandwidth.
        ar_threshold_db: Axial-ratio level of the AR bandwidth.

    Returns:
        One row per selected design, in selection order.
    """
    grid = grid or FrequencyGrid()
    rows = []
    for candidate in selection.candidates:
        response = evaluate_vectors(candidate.design, geometry, grid)[0]
        actual = extract_metrics(
            AntennaResponse.from_vector(response),
            grid,
            zbw_threshold_db,
            ar_threshold_db,
        )
        deltas = {
            name: abs(
                getattr(candidate.metrics, name) - getattr(actual, name),
            )
            for name in METRIC_NAMES
        }
        rows.append(
            VerificationRow(candidate.index, candidate.metrics, actual, deltas),
        )
    return rows
