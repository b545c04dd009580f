import logging
from abc import ABC, abstractmethod
from collections.abc import Sequence
from pathlib import Path
from typing import Any, ClassVar, override

import numpy as np

from fpc_surrogate.baselines import (
    BaselineResult,
    benchmark_models,
    build_cnn,
    build_mlp,
    train_cnn,
    train_mlp,
)
from fpc_surrogate.checkpoints import model_payload, restore_surrogate
from fpc_surrogate.config import ORACLE_VERSION, Settings
from fpc_surrogate.design_space import CellGeometry, parse_design_line
from fpc_surrogate.exceptions import UsageError
from fpc_surrogate.formats import CheckpointPayload
from fpc_surrogate.gan import (
    GanResult,
    GanSurrogate,
    Split,
    build_critic,
    build_generator,
    cross_validate,
    split_indices,
    train_gan,
)
from fpc_surrogate.metrics import Segment
from fpc_surrogate.nn.base import Array, Model
from fpc_surrogate.nn.gradcheck import (
    GradCheckReport,
    ScaledGradients,
    gradient_check,
)
from fpc_surrogate.oracle import (
    AntennaResponse,
    Dataset,
    FrequencyGrid,
    evaluate_vectors,
    extract_metrics,
    generate_dataset,
    reference_profiles,
)
from fpc_surrogate.repositories import (
    CheckpointRepository,
    CsvRepository,
    DatasetRepository,
    ReportRepository,
)
from fpc_surrogate.schemas import (
    CandidateModel,
    CrossValidationSummary,
    GradCheckModel,
    HistogramModel,
    MetricsModel,
    NmseReport,
    ScreeningReportModel,
    SegmentScores,
    TrainingSummary,
    VerificationModel,
)
from fpc_surrogate.screening import (
    Histogram,
    OracleSurrogate,
    ScreeningReport,
    Selection,
    VerificationRow,
    metric_histograms,
    screen_candidates,
    select_optimal,
    verify_selection,
)
from fpc_surrogate.seeding import make_rng
from fpc_surrogate.validators import (
    check_architecture,
    check_checkpoint_kind,
    check_file_exists,
    check_oracle_version,
    check_positive_count,
)

logger = logging.getLogger(__name__)

HISTORY_COLUMNS = (
    "iter",
    "gen_loss",
    "critic_loss",
    "val_nmse_ar",
    "val_nmse_rl",
    "val_nmse_gain",
)
HISTOGRAM_COLUMNS = ("bin_low", "bin_high", "count")
SPECTRA_COLUMNS = ("freq_ghz", "ar_db", "rl_db", "gain_dbi", "source")
GRADCHECK_ARCHS = ("gan-gen", "gan-critic", "mlp", "cnn")
GRADCHECK_BATCH = 8
PROBES_PER_TENSOR = 12


def sidecar(path: Path, suffix: str) -> Path:
    """Path of a file written next to a main output.

    Args:
        path: Main output, e.g. ``runs/gan.fpcm``.
        suffix: Dotted suffix, e.g. ``history.csv``.

    Returns:
        The sibling path, e.g. ``runs/gan.history.csv``.
    """
    return path.with_name(f"{path.stem}.{suffix}")


def histogram_rows(histogram: Histogram) -> list[dict[str, Any]]:
    """CSV rows of a histogram."""
    return [
        dict(zip(HISTOGRAM_COLUMNS, row, strict=True))
        for row in histogram.rows()
    ]


class DatasetService:
    """Service for generating, storing and loading labelled datasets."""

    def __init__(
        self,
        settings: Settings,
        repository: DatasetRepository,
    ) -> None:
        """Initializes this class with settings and a dataset repository.

        Args:
            settings: Toolkit settings.
            repository: The repository used to store dataset files.
        """
        self.settings = settings
        self.repository = repository

    def generate(
        self,
        n: int,
        seed: int,
        geometry: CellGeometry | None = None,
    ) -> Dataset:
        """Samples and labels a dataset with the pinned oracle.

        Args:
            n: Number of entries.
            seed: Master seed.
            geometry: Unit-cell geometry; defaults to the configured one.

        Returns:
            The dataset.
        """
        check_positive_count(n, "--n")
        check_oracle_version(
            ORACLE_VERSION,
            self.settings.oracle.version,
            "the built-in oracle",
        )
        geometry = geometry or CellGeometry(
            **self.settings.geometry.model_dump(),
        )
        return generate_dataset(n, geometry, seed)

    def save(self, dataset: Dataset, path: Path) -> str:
        """Writes a dataset and returns its fingerprint."""
        self.repository.write(dataset, path)
        fingerprint = dataset.fingerprint()
        logger.info(
            "Wrote %d entries to %s (%s)",
            len(dataset),
            path,
            fingerprint,
        )
        return fingerprint

    def load(self, path: Path) -> Dataset:
        """Reads a dataset labelled by the pinned oracle.

        Args:
            path: FPCD v1 file, binary or CSV.

        Returns:
            The dataset.
        """
        dataset = self.repository.read(check_file_exists(path))
        check_oracle_version(
            dataset.oracle_version,
            self.settings.oracle.version,
            str(path),
        )
        return dataset

    def split(self, dataset: Dataset) -> Split:
        """The configured train/validation split of a dataset."""
        return split_indices(
            len(dataset),
            self.settings.dataset.validation_fraction,
            dataset.seed,
        )


class BaseTrainingService[ResultType](ABC):
    """Abstract base class for training one model kind.

    Attributes:
        kind: Model name used in summaries and logs.
    """

    kind: ClassVar[str]

    def __init__(
        self,
        settings: Settings,
        datasets: DatasetService,
        checkpoints: CheckpointRepository,
    ) -> None:
        """Initializes this class with settings and repositories.

        Args:
            settings: Toolkit settings.
            datasets: The service used to split datasets.
            checkpoints: The repository used to store model files.
        """
        self.settings = settings
        self.datasets = datasets
        self.checkpoints = checkpoints
        self.summaries = ReportRepository(TrainingSummary)
        self.history = CsvRepository(HISTORY_COLUMNS)

    @abstractmethod
    def train(self, dataset: Dataset) -> ResultType:
        """Train a model on the configured split.

        This method must be implemented by subclasses.

        Args:
            dataset: Labelled pairs.

        Returns:
            The trained model with its history.
        """

    @abstractmethod
    def save(
        self,
        result: ResultType,
        dataset: Dataset,
        out: Path,
    ) -> TrainingSummary:
        """Write the checkpoint, history and summary of a trained model.

        This method must be implemented by subclasses.

        Args:
            result: Trained model.
            dataset: Dataset it was trained on.
            out: Checkpoint path; history and summary are written beside it.

        Returns:
            The summary.
        """

    def run(self, dataset: Dataset, out: Path) -> TrainingSummary:
        """Trains a model and writes its artifacts.

        Args:
            dataset: Labelled pairs.
            out: Checkpoint path.

        Returns:
            The summary.
        """
        logger.info("Training %s on %d entries", self.kind, len(dataset))
        return self.save(self.train(dataset), dataset, out)

    def _summarize(  # noqa: PLR0913
        self,
        dataset: Dataset,
        out: Path,
        steps: int,
        final_loss: float,
        validation: dict[Segment, float],
        pipeline_fingerprint: str,
        seed: int,
    ) -> TrainingSummary:
        summary = TrainingSummary(
            model=self.kind,
            steps=steps,
            final_loss=final_loss,
            validation=SegmentScores.of(validation),
            checkpoint=str(out),
            dataset_fingerprint=dataset.fingerprint(),
            pipeline_fingerprint=pipeline_fingerprint,
            oracle_version=dataset.oracle_version,
            seed=seed,
        )
        self.summaries.write(summary, sidecar(out, "summary.json"))
        return summary

    @staticmethod
    def _provenance(dataset: Dataset, seed: int) -> dict[str, Any]:
        return {
            "seed": seed,
            "dataset_seed": dataset.seed,
            "dataset_fingerprint": dataset.fingerprint(),
            "cell_side_mm": dataset.geometry.cell_side_mm,
            "loop_inset_mm": dataset.geometry.loop_inset_mm,
        }


class GanTrainingService(BaseTrainingService[GanResult]):
    """Service for adversarial training of the surrogate."""

    kind = "gan"

    @override
    def train(self, dataset: Dataset) -> GanResult:
        """Trains the generator and critic.

        Args:
            dataset: Labelled pairs.

        Returns:
            The trained networks and their history.
        """
        return train_gan(
            dataset,
            self.settings.gan,
            split=self.datasets.split(dataset),
        )

    @override
    def save(
        self,
        result: GanResult,
        dataset: Dataset,
        out: Path,
    ) -> TrainingSummary:
        """Writes the generator to ``out`` and the critic beside it.

        Args:
            result: Trained networks.
            dataset: Dataset they were trained on.
            out: Generator checkpoint path.

        Returns:
            The summary.
        """
        config = result.config
        metadata = {
            **self._provenance(dataset, config.seed),
            "prediction_noise_draws": config.prediction_noise_draws,
            "pipeline_fingerprint": result.data.fingerprint(),
            "iterations": len(result.history),
        }
        self.checkpoints.write(
            model_payload(
                result.generator,
                dataset.oracle_version,
                stats=result.data.stats,
                metadata=metadata,
            ),
            out,
        )
        self.checkpoints.write(
            model_payload(
                result.critic,
                dataset.oracle_version,
                metadata=metadata,
            ),
            sidecar(out, "critic.fpcm"),
        )
        self.history.write(result.history.rows(), sidecar(out, "history.csv"))
        return self._summarize(
            dataset,
            out,
            steps=len(result.history),
            final_loss=result.history.generator_loss[-1],
            validation=result.validation_nmse(),
            pipeline_fingerprint=result.data.fingerprint(),
            seed=config.seed,
        )


class MlpTrainingService(BaseTrainingService[BaselineResult]):
    """Service for the perceptron baseline."""

    kind = "mlp"

    @override
    def train(self, dataset: Dataset) -> BaselineResult:
        """Fits the MLP on the configured split.

        Args:
            dataset: Labelled pairs.

        Returns:
            The trained baseline.
        """
        return train_mlp(
            dataset,
            self.settings.mlp,
            split=self.datasets.split(dataset),
        )

    @override
    def save(
        self,
        result: BaselineResult,
        dataset: Dataset,
        out: Path,
    ) -> TrainingSummary:
        """Writes the baseline checkpoint, its history and summary.

        Args:
            result: Trained baseline.
            dataset: Dataset it was trained on.
            out: Checkpoint path.

        Returns:
            The summary.
        """
        validation = result.validation_nmse()
        self.checkpoints.write(
            model_payload(
                result.model,
                dataset.oracle_version,
                stats=result.data.stats,
                metadata={
                    **self._provenance(dataset, result.config.seed),
                    "pipeline_fingerprint": result.data.fingerprint(),
                    "epochs": len(result.train_loss),
                },
            ),
            out,
        )
        rows: list[dict[str, Any]] = [
            {"iter": epoch, "gen_loss": loss}
            for epoch, loss in enumerate(result.train_loss, start=1)
        ]
        rows[-1] |= {
            "val_nmse_ar": validation[Segment.AR],
            "val_nmse_rl": validation[Segment.RL],
            "val_nmse_gain": validation[Segment.GAIN],
        }
        self.history.write(rows, sidecar(out, "history.csv"))
        return self._summarize(
            dataset,
            out,
            steps=len(result.train_loss),
            final_loss=result.train_loss[-1],
            validation=validation,
            pipeline_fingerprint=result.data.fingerprint(),
            seed=result.config.seed,
        )


class CnnTrainingService(MlpTrainingService):
    """Service for the convolutional baseline."""

    kind = "cnn"

    @override
    def train(self, dataset: Dataset) -> BaselineResult:
        """Fits the CNN on the configured split.

        Args:
            dataset: Labelled pairs.

        Returns:
            The trained baseline.
        """
        return train_cnn(
            dataset,
            self.settings.cnn,
            split=self.datasets.split(dataset),
        )


class BenchmarkService:
    """Service for the NMSE comparison and its data histograms."""

    def __init__(self, settings: Settings) -> None:
        """Initializes this class with settings.

        Args:
            settings: Toolkit settings.
        """
        self.settings = settings
        self.reports = ReportRepository(NmseReport)
        self.tables = CsvRepository(HISTOGRAM_COLUMNS)
        self.folds = ReportRepository(CrossValidationSummary)

    def benchmark(self, dataset: Dataset, out: Path) -> NmseReport:
        """Trains GAN, CNN and MLP on one split and writes the comparison.

        Per-metric histograms of the oracle metrics of both partitions are
        written beside the report as ``<stem>.hist.<metric>.<split>.csv``.

        Args:
            dataset: Labelled pairs.
            out: JSON report path.

        Returns:
            The report.
        """
        report = benchmark_models(
            dataset,
            self.settings.gan,
            self.settings.mlp,
            self.settings.cnn,
            validation_fraction=self.settings.dataset.validation_fraction,
        )
        self.reports.write(report, out)
        split = split_indices(
            len(dataset),
            self.settings.dataset.validation_fraction,
            dataset.seed,
        )
        for name, rows in (
            ("train", split.train),
            ("validation", split.validation),
        ):
            for metric, histogram in self.partition_histograms(
                dataset.responses[rows],
            ).items():
                self.tables.write(
                    histogram_rows(histogram),
                    sidecar(out, f"hist.{metric}.{name}.csv"),
                )
        return report

    def partition_histograms(self, responses: Array) -> dict[str, Histogram]:
        """Histograms of the metrics of a set of responses."""
        oracle = self.settings.oracle
        metrics = [
            extract_metrics(
                AntennaResponse.from_vector(response),
                FrequencyGrid(),
                oracle.zbw_threshold_db,
                oracle.ar_threshold_db,
            )
            for response in responses
        ]
        return metric_histograms(
            metrics,
            self.settings.screening.histogram_bins,
        )

    def cross_validate(
        self,
        dataset: Dataset,
        out: Path,
    ) -> CrossValidationSummary:
        """Runs k-fold cross-validation of the GAN and writes the summary.

        Args:
            dataset: Labelled pairs.
            out: JSON summary path.

        Returns:
            The summary.
        """
        result = cross_validate(
            dataset,
            self.settings.dataset.folds,
            self.settings.gan,
        )
        summary = CrossValidationSummary(
            folds=[SegmentScores.of(fold) for fold in result.folds],
            mean=SegmentScores.of(result.mean),
            dataset_fingerprint=dataset.fingerprint(),
            oracle_version=dataset.oracle_version,
            seed=self.settings.gan.seed,
        )
        self.folds.write(summary, out)
        return summary


class ScreeningService:
    """Service for pool screening, selection and oracle verification."""

    def __init__(
        self,
        settings: Settings,
        checkpoints: CheckpointRepository,
    ) -> None:
        """Initializes this class with settings and a model repository.

        Args:
            settings: Toolkit settings.
            checkpoints: The repository used to read model files.
        """
        self.settings = settings
        self.checkpoints = checkpoints
        self.reports = ReportRepository(ScreeningReportModel)
        self.tables = CsvRepository(HISTOGRAM_COLUMNS)

    def load_generator(self, path: Path) -> CheckpointPayload:
        """Reads a generator checkpoint compatible with this build.

        Args:
            path: FPCM v1 file.

        Returns:
            The payload.
        """
        payload = self.checkpoints.read(check_file_exists(path))
        check_checkpoint_kind(payload.architecture, {"generator"})
        check_oracle_version(
            payload.oracle_version,
            self.settings.oracle.version,
            str(path),
        )
        check_architecture(
            payload.architecture,
            build_generator(self.settings.gan, 0).architecture(),
        )
        return payload

    def screen(
        self,
        surrogate: GanSurrogate | OracleSurrogate,
        n: int,
        seed: int,
    ) -> tuple[ScreeningReport, Selection, list[VerificationRow]]:
        """Screens a pool, selects the best designs and verifies them.

        Args:
            surrogate: Response predictor.
            n: Pool size.
            seed: Pool seed.

        Returns:
            The screening report, the selection and its verification.
        """
        check_positive_count(n, "--n")
        oracle, screening = self.settings.oracle, self.settings.screening
        grid = FrequencyGrid()
        report = screen_candidates(
            surrogate,
            surrogate.geometry,
            n,
            seed,
            screening.criteria,
            grid=grid,
            bins=screening.histogram_bins,
            zbw_threshold_db=oracle.zbw_threshold_db,
            ar_threshold_db=oracle.ar_threshold_db,
        )
        selection = select_optimal(report, screening.top_k)
        rows = verify_selection(
            selection,
            surrogate.geometry,
            grid,
            oracle.zbw_threshold_db,
            oracle.ar_threshold_db,
        )
        return report, selection, rows

    def run(
        self,
        checkpoint: Path,
        n: int,
        seed: int,
        out: Path,
    ) -> ScreeningReportModel:
        """Screens with a generator checkpoint and writes every artifact.

        Args:
            checkpoint: Generator checkpoint.
            n: Pool size.
            seed: Pool seed.
            out: JSON report path; histogram CSVs are written beside it.

        Returns:
            The report document.
        """
        payload = self.load_generator(checkpoint)
        report, selection, rows = self.screen(
            restore_surrogate(payload),
            n,
            seed,
        )
        document = self.document(
            report,
            selection,
            rows,
            checkpoint_fingerprint=self.checkpoints.fingerprint(checkpoint),
        )
        self.reports.write(document, out)
        for metric, histogram in report.histograms.items():
            self.tables.write(
                histogram_rows(histogram),
                sidecar(out, f"hist.{metric}.csv"),
            )
        return document

    def document(
        self,
        report: ScreeningReport,
        selection: Selection,
        rows: Sequence[VerificationRow],
        *,
        checkpoint_fingerprint: str = "",
    ) -> ScreeningReportModel:
        """Converts a screening run into its JSON document.

        Args:
            report: Scored pool.
            selection: Selected candidates.
            rows: Oracle verification of the selection.
            checkpoint_fingerprint: Checksum of the surrogate checkpoint.

        Returns:
            The document, with the reference structures and the verified
            winner in ``comparison``.
        """
        comparison = {
            name: MetricsModel.model_validate(metrics)
            for name, metrics in reference_profiles(FrequencyGrid()).items()
        }
        if rows:
            comparison["selected"] = MetricsModel.model_validate(rows[0].actual)
        return ScreeningReportModel(
            pool_seed=report.pool_seed,
            pool_size=report.pool_size,
            timing_ms=report.timing_ms,
            reference_cost_hours=report.reference_cost_hours,
            criteria=self.settings.screening.criteria.model_dump(),
            candidates=[
                CandidateModel(
                    index=c.index,
                    design=c.design.tolist(),
                    metrics=MetricsModel.model_validate(c.metrics),
                    score=CandidateModel.finite(c.score),
                    feasible=c.feasible,
                )
                for c in report.candidates
            ],
            ranking=list(report.ranking),
            histograms={
                name: HistogramModel(
                    edges=h.edges.tolist(),
                    counts=h.counts.tolist(),
                )
                for name, h in report.histograms.items()
            },
            selected=[c.index for c in selection.candidates],
            shortfall=selection.shortfall,
            verification=[
                VerificationModel(
                    index=row.index,
                    predicted=MetricsModel.model_validate(row.predicted),
                    actual=MetricsModel.model_validate(row.actual),
                    deltas=row.deltas,
                )
                for row in rows
            ],
            comparison=comparison,
            checkpoint_fingerprint=checkpoint_fingerprint,
            oracle_version=self.settings.oracle.version,
        )


class SpectraService:
    """Service for exporting spectra for plotting tools."""

    def __init__(
        self,
        settings: Settings,
        screening: ScreeningService,
    ) -> None:
        """Initializes this class with settings and a checkpoint reader.

        Args:
            settings: Toolkit settings.
            screening: The service used to load generator checkpoints.
        """
        self.settings = settings
        self.screening = screening
        self.table = CsvRepository(SPECTRA_COLUMNS)

    @staticmethod
    def read_designs(path: Path) -> Array:
        """Reads one design vector per non-empty line; ``#`` starts a comment.

        Args:
            path: Design file.

        Raises:
            UsageError: If the file holds no design.

        Returns:
            Design vectors, one per row.
        """
        text = check_file_exists(path).read_text()
        lines = [line.split("#", 1)[0].strip() for line in text.splitlines()]
        vectors = [parse_design_line(line) for line in lines if line]
        if not vectors:
            msg = f"{path} holds no design vectors"
            raise UsageError(msg)
        return np.array(vectors)

    def export(
        self,
        design_file: Path,
        out: Path,
        *,
        checkpoint: Path | None = None,
        oracle: bool = False,
    ) -> int:
        """Writes surrogate and/or oracle spectra of the listed designs.

        Sources are tagged ``surrogate:<i>`` and ``oracle:<i>`` where ``i``
        is the line index of the design.

        Args:
            design_file: File written with `format_design_line`.
            out: CSV path.
            checkpoint: Generator checkpoint for the surrogate curves.
            oracle: Whether to add the oracle curves.

        Raises:
            UsageError: If neither source is requested.

        Returns:
            Number of rows written.
        """
        if checkpoint is None and not oracle:
            msg = "pass --checkpoint, --oracle or both"
            raise UsageError(msg)
        designs = self.read_designs(design_file)
        grid = FrequencyGrid()
        sources: dict[str, Array] = {}
        geometry = CellGeometry(**self.settings.geometry.model_dump())
        if checkpoint is not None:
            surrogate = restore_surrogate(
                self.screening.load_generator(checkpoint),
            )
            geometry = surrogate.geometry
            sources["surrogate"] = surrogate.predict(designs)
        if oracle:
            sources["oracle"] = evaluate_vectors(designs, geometry, grid)
        rows = [
            {
                "freq_ghz": float(f),
                "ar_db": float(ar),
                "rl_db": float(rl),
                "gain_dbi": float(gain),
                "source": f"{name}:{index}",
            }
            for name, responses in sources.items()
            for index, vector in enumerate(responses)
            for f, ar, rl, gain in zip(
                grid.frequencies,
                *vector.reshape(3, -1),
                strict=True,
            )
        ]
        self.table.write(rows, out)
        return len(rows)


class GradCheckService:
    """Service for gradient checks of the shipped architectures."""

    def __init__(self, settings: Settings) -> None:
        """Initializes this class with settings.

        Args:
            settings: Toolkit settings.
        """
        self.settings = settings
        self.reports = ReportRepository(GradCheckModel)

    def build(self, arch: str, seed: int) -> tuple[Model, Array]:
        """Builds an architecture and a random batch for it.

        Args:
            arch: One of ``gan-gen``, ``gan-critic``, ``mlp`` and ``cnn``.
            seed: Seed of the weights and the batch.

        Raises:
            UsageError: If the architecture is unknown.

        Returns:
            The model and an input batch.
        """
        rng = make_rng(seed)
        model: Model
        match arch:
            case "gan-gen":
                model = build_generator(self.settings.gan, seed)
            case "gan-critic":
                model = build_critic(self.settings.gan, seed)
            case "mlp":
                model = build_mlp(seed, self.settings.gan.leaky_slope)
            case "cnn":
                cnn = build_cnn(seed, self.settings.gan.leaky_slope)
                side = cnn.input_side
                return cnn, rng.standard_normal((GRADCHECK_BATCH, side, side))
            case _:
                msg = f"unknown architecture {arch!r}"
                raise UsageError(msg)
        width = model.architecture().dims[0]
        return model, rng.standard_normal((GRADCHECK_BATCH, width))

    def check(
        self,
        arch: str,
        seed: int,
        *,
        corrupt: bool = False,
    ) -> GradCheckModel:
        """Probes every parameter tensor of an architecture.

        Args:
            arch: Architecture name.
            seed: Seed of the weights, the batch and the probes.
            corrupt: Doubles the backward gradients, so the check must fail.

        Returns:
            The combined result.
        """
        model, batch = self.build(arch, seed)
        if corrupt:
            model = ScaledGradients(model)
        reports: list[GradCheckReport] = [
            gradient_check(
                model,
                batch,
                probes=PROBES_PER_TENSOR,
                seed=seed,
                names=[name],
            )
            for name in model.parameters()
        ]
        result = GradCheckModel(
            arch=arch,
            seed=seed,
            max_rel_error=max(r.max_rel_error for r in reports),
            passed=all(r.passed for r in reports),
            probed=sum(r.probed for r in reports),
            skipped=sum(r.skipped for r in reports),
        )
        logger.info(
            "%s: max_rel_error=%.3e passed=%s",
            arch,
            result.max_rel_error,
            result.passed,
        )
        return result
