import json
import logging.config
import tomllib
from functools import lru_cache
from pathlib import Path
from typing import Any, Literal, override

from pydantic import (
    BaseModel,
    ConfigDict,
    Field,
    NonNegativeFloat,
    PositiveFloat,
    PositiveInt,
    ValidationError,
)
from pydantic_settings import (
    BaseSettings,
    PydanticBaseSettingsSource,
    SettingsConfigDict,
    SettingsError,
    TomlConfigSettingsSource,
)

from fpc_surrogate.exceptions import StorageError, UsageError
from fpc_surrogate.formats import fnv1a_64

ORACLE_VERSION = "fpc-oracle/1"
LOG_FORMAT = "%(levelname)-5.5s [%(name)s] %(message)s"
VALIDATION_FRACTION = 0.1


class SectionModel(BaseModel):
    """Base class for configuration sections.

    Attributes:
        model_config: Sections are immutable and reject unknown keys.
    """

    model_config = ConfigDict(extra="forbid", frozen=True)


class GeometrySettings(SectionModel):
    """Unit-cell geometry.

    Attributes:
        cell_side_mm: Side of the square unit cell.
        loop_inset_mm: Distance of the rectangular loop from the cell edge.
    """

    cell_side_mm: PositiveFloat = 30.0
    loop_inset_mm: NonNegativeFloat = 2.0


class OracleSettings(SectionModel):
    """Synthetic solver settings.

    Attributes:
        version: Oracle version pin; files from other versions are rejected.
        zbw_threshold_db: Return-loss level bounding the impedance bandwidth.
        ar_threshold_db: Axial-ratio level bounding the AR bandwidth.
    """

    version: str = ORACLE_VERSION
    zbw_threshold_db: float = -10.0
    ar_threshold_db: PositiveFloat = 5.0


class DatasetSettings(SectionModel):
    """Labelled dataset generation and partitioning.

    Attributes:
        size: Number of design-response pairs.
        seed: Master seed of the dataset.
        validation_fraction: Share of entries held out for validation.
        folds: Number of cross-validation folds.
    """

    size: PositiveInt = 300
    seed: int = 7
    validation_fraction: float = Field(
        default=VALIDATION_FRACTION,
        gt=0.0,
        lt=1.0,
    )
    folds: int = Field(default=10, ge=2)


class GanTrainingConfig(SectionModel):
    """Adversarial training hyperparameters.

    Attributes:
        iterations: Number of critic/generator update pairs.
        batch_size: Pairs per batch.
        lr: Adam learning rate of both networks.
        weight_decay: Regulariser strength (decay rate or clip bound).
        bn_momentum: Momentum of the running batch-norm statistics.
        seed: Seed of initialization, batch sampling and noise.
        critic_steps_per_gen_step: Critic updates per generator update.
        prediction_noise_draws: Noise draws averaged at prediction time.
        regularization: Reading of the weight regulariser.
        conditional_critic: Whether the critic also sees the design.
        content_weight: Weight of the squared-error term in the generator
            loss; zero leaves the bare adversarial objective.
        leaky_slope: Negative slope of the hidden activations.
        snapshot_every: Iterations between validation snapshots.
    """

    iterations: PositiveInt = 10000
    batch_size: PositiveInt = 16
    lr: PositiveFloat = 5e-4
    weight_decay: NonNegativeFloat = 0.01
    bn_momentum: float = Field(default=0.8, gt=0.0, lt=1.0)
    seed: int = 0
    critic_steps_per_gen_step: PositiveInt = 1
    prediction_noise_draws: PositiveInt = 8
    regularization: Literal["decay", "clip"] = "decay"
    conditional_critic: bool = True
    content_weight: NonNegativeFloat = 0.0
    leaky_slope: float = Field(default=0.2, gt=0.0, lt=1.0)
    snapshot_every: PositiveInt = 250


class BaselineTrainingConfig(SectionModel):
    """Regression baseline hyperparameters.

    Attributes:
        epochs: Passes over the training split.
        batch_size: Pairs per minibatch.
        lr: Adam learning rate.
        weight_decay: Decoupled weight decay.
        seed: Seed of initialization and shuffling.
    """

    epochs: PositiveInt = 2000
    batch_size: PositiveInt = 16
    lr: PositiveFloat = 5e-4
    weight_decay: NonNegativeFloat = 0.01
    seed: int = 0


class ScreeningCriteria(SectionModel):
    """Feasibility gates and score weights of candidate ranking.

    Attributes:
        min_zbw_mhz: Smallest acceptable impedance bandwidth.
        max_ar_min_db: Largest acceptable minimum axial ratio.
        w_zbw: Reward per MHz of impedance bandwidth.
        w_ar5bw: Reward per MHz of 5 dB AR bandwidth.
        w_ar: Penalty per dB of minimum axial ratio.
        w_gain: Reward per dBi of gain at resonance.
    """

    min_zbw_mhz: NonNegativeFloat = 100.0
    max_ar_min_db: NonNegativeFloat = 3.0
    w_zbw: NonNegativeFloat = 1.0
    w_ar5bw: NonNegativeFloat = 1.0
    w_ar: NonNegativeFloat = 50.0
    w_gain: NonNegativeFloat = 10.0


class ScreeningSettings(SectionModel):
    """Candidate pool screening.

    Attributes:
        pool_size: Number of sampled candidates.
        seed: Seed of the candidate pool and prediction noise.
        top_k: Number of designs selected for verification.
        histogram_bins: Bins of the per-metric pool histograms.
        criteria: Ranking rule.
    """

    pool_size: PositiveInt = 500
    seed: int = 11
    top_k: PositiveInt = 5
    histogram_bins: PositiveInt = 20
    criteria: ScreeningCriteria = ScreeningCriteria()


class LoggingSettings(SectionModel):
    """Logging settings.

    Attributes:
        level: Root level of the toolkit loggers.
        format: Record format.
    """

    level: Literal["DEBUG", "INFO", "WARNING", "ERROR"] = "INFO"
    format: str = LOG_FORMAT


class Settings(BaseSettings):
    """Toolkit settings.

    Attributes:
        geometry: Unit-cell geometry.
        oracle: Synthetic solver settings.
        dataset: Dataset generation settings.
        gan: Adversarial training settings.
        mlp: Perceptron baseline settings.
        cnn: Convolutional baseline settings.
        screening: Candidate screening settings.
        logging: Logging settings.
    """

    model_config = SettingsConfigDict(
        env_file=".env",
        env_ignore_empty=True,
        env_nested_delimiter="__",
        env_prefix="FPC_",
        extra="forbid",
    )
    geometry: GeometrySettings = GeometrySettings()
    oracle: OracleSettings = OracleSettings()
    dataset: DatasetSettings = DatasetSettings()
    gan: GanTrainingConfig = GanTrainingConfig()
    mlp: BaselineTrainingConfig = BaselineTrainingConfig()
    cnn: BaselineTrainingConfig = BaselineTrainingConfig()
    screening: ScreeningSettings = ScreeningSettings()
    logging: LoggingSettings = LoggingSettings()

    @classmethod
    @override
    def settings_customise_sources(
        cls,
        settings_cls: type[BaseSettings],
        init_settings: PydanticBaseSettingsSource,
        env_settings: PydanticBaseSettingsSource,
        dotenv_settings: PydanticBaseSettingsSource,
        file_secret_settings: PydanticBaseSettingsSource,
    ) -> tuple[PydanticBaseSettingsSource, ...]:
        """Places the ``--config`` file between the flags and the environment.

        Returns:
            Sources, highest priority first.
        """
        return (
            init_settings,
            TomlConfigSettingsSource(settings_cls),
            env_settings,
            dotenv_settings,
            file_secret_settings,
        )


def _settings_with_file(path: Path) -> type[Settings]:
    check_readable(path)

    class FileSettings(Settings):
        model_config = SettingsConfigDict(toml_file=path)

    return FileSettings


def load_settings(
    config_file: Path | None = None,
    overrides: dict[str, Any] | None = None,
) -> Settings:
    """Builds settings from a TOML file and command-line overrides.

    Flags win over the file, the file wins over the environment.

    Args:
        config_file: Optional TOML file with the same sections as `Settings`.
        overrides: Nested mapping of values given on the command line.

    Raises:
        UsageError: If a value is invalid or a key is unknown.
        StorageError: If the file is missing or not valid TOML.

    Returns:
        The validated settings.
    """
    settings_cls = (
        Settings if config_file is None else _settings_with_file(config_file)
    )
    try:
        return settings_cls(**(overrides or {}))
    except (ValidationError, SettingsError) as error:
        msg = f"invalid configuration: {error}"
        raise UsageError(msg) from error
    except tomllib.TOMLDecodeError as error:
        msg = f"{config_file} is not valid TOML: {error}"
        raise StorageError(msg) from error


def check_readable(path: Path) -> Path:
    """Checks that a TOML file exists before a source reads it.

    Args:
        path: TOML file.

    Raises:
        StorageError: If the file is missing.

    Returns:
        The path.
    """
    if not path.is_file():
        msg = f"Cannot read {path}: no such file"
        raise StorageError(msg)
    return path


def read_toml(path: Path) -> dict[str, Any]:
    """Reads a TOML document through the settings TOML source.

    Args:
        path: TOML file.

    Raises:
        StorageError: If the file is missing or not valid TOML.

    Returns:
        The parsed document.
    """
    check_readable(path)
    try:
        source = TomlConfigSettingsSource(Settings, toml_file=path)
    except OSError as error:
        msg = f"Cannot read {path}: {error.strerror}"
        raise StorageError(msg) from error
    except tomllib.TOMLDecodeError as error:
        msg = f"{path} is not valid TOML: {error}"
        raise StorageError(msg) from error
    return dict(source.toml_data)


@lru_cache
def get_settings() -> Settings:
    """Generates default settings.

    Returns:
       The object with the toolkit settings.
    """
    return Settings()


def protocol_fingerprint(settings: Settings) -> str:
    """Fingerprints the hyperparameters that define the training protocol.

    Args:
        settings: Settings to fingerprint.

    Returns:
        FNV-1a 64 of the canonical JSON of the protocol fields, in hex.
    """
    protocol = {
        "dataset": settings.dataset.model_dump(include={"size", "folds"}),
        "validation_fraction": settings.dataset.validation_fraction,
        "gan": settings.gan.model_dump(
            include={
                "iterations",
                "batch_size",
                "lr",
                "weight_decay",
                "bn_momentum",
                "critic_steps_per_gen_step",
            },
        ),
        "pool_size": settings.screening.pool_size,
    }
    payload = json.dumps(protocol, sort_keys=True).encode()
    return f"{fnv1a_64(payload):016x}"


def configure_logging(settings: LoggingSettings) -> None:
    """Installs the stderr handler of the toolkit loggers.

    Args:
        settings: Logging settings.
    """
    logging.config.dictConfig({
        "version": 1,
        "disable_existing_loggers": False,
        "formatters": {"generic": {"format": settings.format}},
        "handlers": {
            "console": {
                "class": "logging.StreamHandler",
                "formatter": "generic",
                "stream": "ext://sys.stderr",
            },
        },
        "loggers": {
            "fpc_surrogate": {
                "level": settings.level,
                "handlers": ["console"],
                "propagate": False,
            },
        },
    })
