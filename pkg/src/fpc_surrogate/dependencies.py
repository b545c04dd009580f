from collections.abc import Mapping
from pathlib import Path
from typing import Any

from fpc_surrogate.config import Settings, configure_logging, load_settings
from fpc_surrogate.exceptions import UsageError
from fpc_surrogate.repositories import CheckpointRepository, DatasetRepository
from fpc_surrogate.services import (
    BaseTrainingService,
    BenchmarkService,
    CnnTrainingService,
    DatasetService,
    GanTrainingService,
    GradCheckService,
    MlpTrainingService,
    ScreeningService,
    SpectraService,
)

TRAINING_SERVICES: dict[str, type[BaseTrainingService[Any]]] = {
    "gan": GanTrainingService,
    "mlp": MlpTrainingService,
    "cnn": CnnTrainingService,
}


def get_run_settings(
    config_file: Path | None,
    overrides: Mapping[str, Any] | None = None,
    log_level: str | None = None,
) -> Settings:
    """Build the settings of one command and install its logging.

    Args:
        config_file: Optional TOML file given with ``--config``.
        overrides: Nested values given by command flags.
        log_level: Level given with ``--log-level``; wins over the settings.

    Returns:
        The validated settings.
    """
    merged = dict(overrides or {})
    if log_level is not None:
        merged["logging"] = {"level": log_level}
    settings = load_settings(config_file, merged)
    configure_logging(settings.logging)
    return settings


def get_dataset_service(settings: Settings) -> DatasetService:
    """Retrieve the DatasetService instance with a file repository.

    Args:
        settings: Settings of the running command.

    Returns:
        An instance of the DatasetService for generating and loading
        datasets.
    """
    return DatasetService(settings, DatasetRepository())


def get_training_service(
    model: str,
    settings: Settings,
) -> BaseTrainingService[Any]:
    """Retrieve the training service of a model kind.

    Args:
        model: ``gan``, ``mlp`` or ``cnn``.
        settings: Settings of the running command.

    Raises:
        UsageError: If the model kind is unknown.

    Returns:
        An instance of the matching training service.
    """
    try:
        service = TRAINING_SERVICES[model]
    except KeyError as error:
        msg = f"unknown model {model!r}"
        raise UsageError(msg) from error
    return service(
        settings,
        get_dataset_service(settings),
        CheckpointRepository(),
    )


def get_benchmark_service(settings: Settings) -> BenchmarkService:
    """Retrieve the BenchmarkService instance.

    Args:
        settings: Settings of the running command.

    Returns:
        An instance of the BenchmarkService for comparing models.
    """
    return BenchmarkService(settings)


def get_screening_service(settings: Settings) -> ScreeningService:
    """Retrieve the ScreeningService instance with a checkpoint repository.

    Args:
        settings: Settings of the running command.

    Returns:
        An instance of the ScreeningService for ranking candidate pools.
    """
    return ScreeningService(settings, CheckpointRepository())


def get_spectra_service(settings: Settings) -> SpectraService:
    """Retrieve the SpectraService instance.

    Args:
        settings: Settings of the running command.

    Returns:
        An instance of the SpectraService for exporting curves.
    """
    return SpectraService(settings, get_screening_service(settings))


def get_gradcheck_service(settings: Settings) -> GradCheckService:
    """Retrieve the GradCheckService instance.

    Args:
        settings: Settings of the running command.

    Returns:
        An instance of the GradCheckService for checking backpropagation.
    """
    return GradCheckService(settings)
