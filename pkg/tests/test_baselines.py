import numpy as np
import pytest

from fpc_surrogate.baselines import (
    build_cnn,
    build_mlp,
    benchmark_models,
    train_cnn,
    train_mlp,
)
from fpc_surrogate.config import BaselineTrainingConfig, GanTrainingConfig
from fpc_surrogate.gan import split_indices


def test_model_shapes():
    mlp = build_mlp(0).architecture()
    cnn = build_cnn(0).architecture()

    assert mlp.dims == (72, 256, 256, 303)
    assert [spec.out_channels for spec in cnn.conv] == [8, 16]
    assert cnn.input_side == 60
    assert cnn.dims == (3600, 256, 303)


def test_mlp_learns_something(small_dataset, quick_baseline_config):
    result = train_mlp(small_dataset, quick_baseline_config)

    assert len(result.train_loss) == quick_baseline_config.epochs
    assert result.train_loss[-1] < result.train_loss[0]
    assert result.predict(result.data.val_designs).shape == (6, 303)


def test_cnn_runs_on_grids(small_dataset):
    config = BaselineTrainingConfig(epochs=1, batch_size=8)

    result = train_cnn(small_dataset, config)
    scores = result.validation_nmse()

    assert result.inputs(result.data.val_designs).shape == (6, 60, 60)
    assert all(np.isfinite(value) for value in scores.values())


def test_baselines_share_the_split(small_dataset, quick_baseline_config):
    split = split_indices(len(small_dataset), 0.2, 1)

    mlp = train_mlp(small_dataset, quick_baseline_config, split=split)
    repeat = train_mlp(small_dataset, quick_baseline_config, split=split)

    assert mlp.data.fingerprint() == repeat.data.fingerprint()
    assert mlp.train_loss == repeat.train_loss
    assert len(mlp.data.val_designs) == 12


def test_validation_fraction_is_configurable(small_dataset):
    config = BaselineTrainingConfig(epochs=1, batch_size=8)

    result = train_mlp(small_dataset, config, validation_fraction=0.2)

    assert len(result.data.split.validation) == 12
    assert len(result.data.val_designs) == 12


@pytest.mark.slow
def test_benchmark_report(small_dataset):
    gan = GanTrainingConfig(iterations=10, batch_size=8, snapshot_every=10)
    baseline = BaselineTrainingConfig(epochs=2, batch_size=8)

    report = benchmark_models(small_dataset, gan, baseline, baseline)

    assert set(report.models) == {"gan", "cnn", "mlp"}
    assert report.dataset_fingerprint == small_dataset.fingerprint()
    assert len(report.pipeline_fingerprint) == 16
    assert report.seeds["dataset"] == 7
    assert report.mean_predictor.all > 0.0
