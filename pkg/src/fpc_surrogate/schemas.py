import math
from typing import Self

from pydantic import BaseModel, ConfigDict, NonNegativeFloat

from fpc_surrogate import __version__
from fpc_surrogate.metrics import Segment


class ReportModel(BaseModel):
    """Base of every JSON document written by the tool.

    Attributes:
        tool_version: Version of the package that wrote the report.
        model_config: Configuration for the Pydantic model, set to read
            attributes and reject unknown keys.
    """

    tool_version: str = __version__

    model_config = ConfigDict(from_attributes=True, extra="forbid")


class SegmentScores(BaseModel):
    """NMSE of one model by response segment.

    Attributes:
        gain: Gain spectrum.
        axial_ratio: Axial-ratio spectrum.
        return_loss: Return-loss spectrum.
        all: All 303 values.
    """

    gain: NonNegativeFloat
    axial_ratio: NonNegativeFloat
    return_loss: NonNegativeFloat
    all: NonNegativeFloat

    @classmethod
    def of(cls, scores: dict[Segment, float]) -> Self:
        """Builds the model from scores keyed by segment."""
        return cls(**{segment.value: scores[segment] for segment in Segment})


class NmseReport(ReportModel):
    """Validation NMSE of the compared models.

    Attributes:
        models: Scores keyed by ``gan``, ``cnn`` and ``mlp``.
        mean_predictor: Scores of predicting the mean training response.
        dataset_fingerprint: FNV-1a 64 of the dataset records.
        pipeline_fingerprint: Identifies the shared split and statistics.
        oracle_version: Oracle that labelled the dataset.
        seeds: Seeds of the dataset and of every model.
    """

    models: dict[str, SegmentScores]
    mean_predictor: SegmentScores
    dataset_fingerprint: str
    pipeline_fingerprint: str
    oracle_version: str
    seeds: dict[str, int]


class CrossValidationSummary(ReportModel):
    """Per-fold and mean NMSE of a cross-validated GAN.

    Attributes:
        folds: Scores of every fold.
        mean: Mean scores over folds.
        dataset_fingerprint: FNV-1a 64 of the dataset records.
        oracle_version: Oracle that labelled the dataset.
        seed: Training seed.
    """

    folds: list[SegmentScores]
    mean: SegmentScores
    dataset_fingerprint: str
    oracle_version: str
    seed: int


class HistoryRow(BaseModel):
    """One line of a training-history CSV.

    Attributes:
        iter: One-based iteration or epoch.
        gen_loss: Generator loss, or training MSE for baselines.
        critic_loss: Critic loss; empty for baselines.
        val_nmse_ar: Validation NMSE of the axial ratio at snapshots.
        val_nmse_rl: Validation NMSE of the return loss at snapshots.
        val_nmse_gain: Validation NMSE of the gain at snapshots.
    """

    iter: int
    gen_loss: float
    critic_loss: float | None = None
    val_nmse_ar: float | None = None
    val_nmse_rl: float | None = None
    val_nmse_gain: float | None = None


class TrainingSummary(ReportModel):
    """Outcome of one training command.

    Attributes:
        model: ``gan``, ``mlp`` or ``cnn``.
        steps: Iterations (GAN) or epochs (baselines) run.
        final_loss: Last generator loss or training MSE.
        validation: Validation NMSE by segment.
        checkpoint: Path of the written checkpoint.
        dataset_fingerprint: FNV-1a 64 of the dataset records.
        pipeline_fingerprint: Identifies the split and statistics.
        oracle_version: Oracle that labelled the dataset.
        seed: Training seed.
    """

    model: str
    steps: int
    final_loss: float
    validation: SegmentScores
    checkpoint: str
    dataset_fingerprint: str
    pipeline_fingerprint: str
    oracle_version: str
    seed: int


class MetricsModel(BaseModel):
    """Figures of merit of one response.

    Attributes:
        f_res_ghz: Resonance frequency.
        gain_at_res_dbi: Gain at resonance.
        zbw_mhz: Impedance bandwidth.
        ar5bw_mhz: 5 dB axial-ratio bandwidth.
        ar_min_db: Minimum axial ratio.
        model_config: Configuration for the Pydantic model, set to read
            attributes of the metrics dataclass.
    """

    f_res_ghz: float
    gain_at_res_dbi: float
    zbw_mhz: NonNegativeFloat
    ar5bw_mhz: NonNegativeFloat
    ar_min_db: float

    model_config = ConfigDict(from_attributes=True)


class CandidateModel(BaseModel):
    """One scored pool member.

    Attributes:
        index: Position in the pool.
        design: Design vector in millimetres.
        metrics: Predicted metrics.
        score: Weighted score; null when infeasible.
        feasible: Whether the feasibility gates pass.
    """

    index: int
    design: list[float]
    metrics: MetricsModel
    score: float | None
    feasible: bool

    @staticmethod
    def finite(score: float) -> float | None:
        """Maps the infeasible score to null."""
        return score if math.isfinite(score) else None


class HistogramModel(BaseModel):
    """Histogram of one metric over the pool.

    Attributes:
        edges: Bin edges.
        counts: Members per bin.
    """

    edges: list[float]
    counts: list[int]


class VerificationModel(BaseModel):
    """Surrogate-vs-oracle comparison of one selected design.

    Attributes:
        index: Pool index.
        predicted: Surrogate metrics.
        actual: Oracle metrics.
        deltas: Absolute difference by metric.
    """

    index: int
    predicted: MetricsModel
    actual: MetricsModel
    deltas: dict[str, float]


class ScreeningReportModel(ReportModel):
    """Screening run, selection and verification.

    Attributes:
        pool_seed: Seed of the pool.
        pool_size: Number of candidates.
        timing_ms: Surrogate wall-clock time.
        reference_cost_hours: Full-wave time the pool would have cost.
        criteria: Ranking rule used.
        candidates: Every candidate in pool order.
        ranking: Pool indices of feasible candidates, best first.
        histograms: Per-metric histograms over the pool.
        selected: Pool indices of the selected designs.
        shortfall: Requested designs that were not feasible.
        verification: Oracle check of the selected designs.
        comparison: Metrics of reference structures and of the winner.
        checkpoint_fingerprint: Checksum of the surrogate checkpoint.
        oracle_version: Oracle used for verification.
    """

    pool_seed: int
    pool_size: int
    timing_ms: NonNegativeFloat
    reference_cost_hours: NonNegativeFloat
    criteria: dict[str, float]
    candidates: list[CandidateModel]
    ranking: list[int]
    histograms: dict[str, HistogramModel]
    selected: list[int]
    shortfall: int
    verification: list[VerificationModel]
    comparison: dict[str, MetricsModel]
    checkpoint_fingerprint: str
    oracle_version: str


class GradCheckModel(ReportModel):
    """Result of a gradient check.

    Attributes:
        arch: Checked architecture.
        seed: Seed of the model and the data.
        max_rel_error: Largest relative error.
        passed: Whether the check passed.
        probed: Compared parameters.
        skipped: Probes discarded at kinks.
    """

    arch: str
    seed: int
    max_rel_error: NonNegativeFloat
    passed: bool
    probed: int
    skipped: int


REPORT_SCHEMAS: dict[str, type[BaseModel]] = {
    "nmse_report": NmseReport,
    "cross_validation": CrossValidationSummary,
    "training_summary": TrainingSummary,
    "history_row": HistoryRow,
    "screening_report": ScreeningReportModel,
    "gradcheck": GradCheckModel,
}
