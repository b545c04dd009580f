import logging

import pytest

from fpc_surrogate.config import (
    GanTrainingConfig,
    LoggingSettings,
    Settings,
    configure_logging,
    get_settings,
    load_settings,
    protocol_fingerprint,
    read_toml,
)
from fpc_surrogate.exceptions import StorageError, UsageError
from fpc_surrogate.gan import build_critic, build_generator


def test_defaults_follow_training_protocol():
    settings = get_settings()

    assert settings.dataset.size == 300
    assert settings.dataset.validation_fraction == pytest.approx(0.1)
    assert settings.dataset.folds == 10
    assert settings.gan.iterations == 10000
    assert settings.gan.batch_size == 16
    assert settings.gan.lr == pytest.approx(5e-4)
    assert settings.gan.weight_decay == pytest.approx(0.01)
    assert settings.gan.bn_momentum == pytest.approx(0.8)
    assert settings.screening.pool_size == 500
    assert settings.oracle.version == "fpc-oracle/1"


def test_unknown_key_is_rejected():
    with pytest.raises(UsageError):
        load_settings(overrides={"gan": {"learning_rate": 0.1}})


def test_invalid_value_is_rejected():
    with pytest.raises(UsageError):
        load_settings(overrides={"dataset": {"validation_fraction": 1.5}})


def test_file_values_and_flag_priority(tmp_path):
    config_file = tmp_path / "run.toml"
    config_file.write_text(
        "[gan]\niterations = 50\nlr = 0.001\n\n"
        "[screening.criteria]\nw_gain = 2.0\n",
    )

    settings = load_settings(config_file, {"gan": {"iterations": 5}})

    assert settings.gan.iterations == 5
    assert settings.gan.lr == pytest.approx(0.001)
    assert settings.screening.criteria.w_gain == pytest.approx(2.0)
    assert settings.screening.criteria.w_ar == pytest.approx(50.0)


def test_environment_is_read(monkeypatch):
    monkeypatch.setenv("FPC_GAN__LR", "0.002")

    assert load_settings().gan.lr == pytest.approx(0.002)


def test_file_wins_over_environment(monkeypatch, tmp_path):
    monkeypatch.setenv("FPC_DATASET__SEED", "99")
    config_file = tmp_path / "run.toml"
    config_file.write_text("[dataset]\nseed = 3\n")

    assert load_settings(config_file).dataset.seed == 3


def test_read_toml_errors(tmp_path):
    broken = tmp_path / "broken.toml"
    broken.write_text("[gan\n")

    with pytest.raises(StorageError, match="not valid TOML"):
        read_toml(broken)
    with pytest.raises(StorageError, match="Cannot read"):
        read_toml(tmp_path / "missing.toml")


def test_load_settings_file_errors(tmp_path):
    broken = tmp_path / "broken.toml"
    broken.write_text("[gan\n")

    with pytest.raises(StorageError, match="not valid TOML"):
        load_settings(broken)
    with pytest.raises(StorageError, match="Cannot read"):
        load_settings(tmp_path / "missing.toml")


def test_unknown_file_key_is_rejected(tmp_path):
    config_file = tmp_path / "run.toml"
    config_file.write_text("[gan]\nlearning_rate = 0.1\n")

    with pytest.raises(UsageError, match="invalid configuration"):
        load_settings(config_file)


def test_content_term_is_off_by_default():
    assert get_settings().gan.content_weight == 0.0


def test_protocol_fingerprint_tracks_protocol_fields():
    base = Settings()
    changed = load_settings(overrides={"gan": {"batch_size": 32}})
    cosmetic = load_settings(overrides={"logging": {"level": "DEBUG"}})

    assert len(protocol_fingerprint(base)) == 16
    assert protocol_fingerprint(changed) != protocol_fingerprint(base)
    assert protocol_fingerprint(cosmetic) == protocol_fingerprint(base)


def test_network_shapes():
    config = GanTrainingConfig()
    generator = build_generator(config, 0).architecture()
    critic = build_critic(config, 0).architecture()
    unconditional = build_critic(
        GanTrainingConfig(conditional_critic=False),
        0,
    ).architecture()

    assert generator.dims == (172, 128, 256, 512, 303)
    assert [spec.batchnorm for spec in generator.dense] == [
        True,
        True,
        True,
        False,
    ]
    assert critic.dims == (375, 512, 256, 1)
    assert unconditional.dims == (303, 512, 256, 1)


def test_configure_logging_sets_level():
    configure_logging(LoggingSettings(level="DEBUG"))

    logger = logging.getLogger("fpc_surrogate")
    assert logger.level == logging.DEBUG
    assert not logger.propagate
