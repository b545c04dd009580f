import os

import pytest

from fpc_surrogate.config import (
    BaselineTrainingConfig,
    GanTrainingConfig,
    get_settings,
)
from fpc_surrogate.design_space import CellGeometry
from fpc_surrogate.gan import GanResult, train_gan
from fpc_surrogate.oracle import Dataset, generate_dataset


@pytest.fixture(autouse=True)
def isolated_settings(monkeypatch, tmp_path):
    for name in list(os.environ):
        if name.startswith("FPC_"):
            monkeypatch.delenv(name)
    monkeypatch.chdir(tmp_path)
    get_settings.cache_clear()
    yield
    get_settings.cache_clear()


@pytest.fixture(scope="session")
def geometry() -> CellGeometry:
    return CellGeometry()


@pytest.fixture(scope="session")
def small_dataset(geometry) -> Dataset:
    return generate_dataset(60, geometry, seed=7)


@pytest.fixture(scope="session")
def quick_gan_config() -> GanTrainingConfig:
    return GanTrainingConfig(
        iterations=40,
        batch_size=8,
        snapshot_every=20,
        prediction_noise_draws=2,
    )


@pytest.fixture(scope="session")
def quick_baseline_config() -> BaselineTrainingConfig:
    return BaselineTrainingConfig(epochs=3, batch_size=8)


@pytest.fixture(scope="session")
def trained_gan(small_dataset, quick_gan_config) -> GanResult:
    return train_gan(small_dataset, quick_gan_config)
