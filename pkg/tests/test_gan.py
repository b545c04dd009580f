import numpy as np
import pytest
from numpy.testing import assert_array_equal

from fpc_surrogate.config import GanTrainingConfig
from fpc_surrogate.exceptions import NumericalError, UsageError
from fpc_surrogate.gan import (
    LOG_FLOOR,
    NOISE_DIM,
    GanState,
    PredictionPolicy,
    TrainingData,
    _critic_update,
    check_trainable,
    critic_loss,
    critic_score,
    cross_validate,
    gan_train_step,
    generator_predict,
    kfold_indices,
    split_indices,
    train_gan,
)
from fpc_surrogate.metrics import Segment, mean_predictor, segment_nmse
from fpc_surrogate.nn.base import Mode
from fpc_surrogate.oracle import generate_dataset
from fpc_surrogate.seeding import make_rng


def test_default_split_sizes():
    split = split_indices(300, 0.1, 7)

    assert len(split.train) == 270
    assert len(split.validation) == 30
    assert_array_equal(
        np.sort(np.concatenate([split.train, split.validation])),
        np.arange(300),
    )


def test_split_is_seeded():
    assert split_indices(50, 0.2, 3).fingerprint() == (
        split_indices(50, 0.2, 3).fingerprint()
    )
    assert split_indices(50, 0.2, 3).fingerprint() != (
        split_indices(50, 0.2, 4).fingerprint()
    )


def test_split_partitions_across_seeds():
    for seed in range(1000):
        split = split_indices(37, 0.2, seed)

        assert len(split.validation) == 7
        assert_array_equal(
            np.union1d(split.train, split.validation),
            np.arange(37),
        )
        assert not np.intersect1d(split.train, split.validation).size


def test_split_rejects_empty_side():
    with pytest.raises(UsageError):
        split_indices(4, 0.1, 0)


def test_kfold_validates_every_index_once():
    splits = kfold_indices(23, 5, 1)
    held_out = np.concatenate([s.validation for s in splits])

    assert sorted(len(s.validation) for s in splits) == [4, 4, 5, 5, 5]
    assert_array_equal(np.sort(held_out), np.arange(23))
    for split in splits:
        assert len(split.train) + len(split.validation) == 23
        assert not set(split.train) & set(split.validation)


def test_kfold_rejects_too_few_folds():
    with pytest.raises(UsageError):
        kfold_indices(10, 1, 0)


def test_training_data_uses_training_statistics(small_dataset):
    split = split_indices(len(small_dataset), 0.1, 7)
    data = TrainingData.prepare(small_dataset, split)

    assert data.train_targets.min() == pytest.approx(-1.0)
    assert data.train_targets.max() == pytest.approx(1.0)
    assert data.train_inputs.max() <= 1.0
    assert len(data.val_designs) == 6


def test_prediction_policies():
    zero = PredictionPolicy.fixed_zero()
    averaged = PredictionPolicy.average(3, 5)

    assert_array_equal(zero.noise(), np.zeros((1, NOISE_DIM)))
    assert averaged.noise().shape == (3, NOISE_DIM)
    assert_array_equal(averaged.noise(), PredictionPolicy.average(3, 5).noise())
    with pytest.raises(UsageError):
        PredictionPolicy.average(0, 5)


def test_critic_loss_is_clamped():
    assert critic_loss(np.array([1.0]), np.array([0.0])) == pytest.approx(0.0)
    assert np.isfinite(critic_loss(np.array([0.0]), np.array([1.0])))


def test_history_and_snapshots(trained_gan, quick_gan_config):
    history = trained_gan.history
    rows = history.rows()

    assert len(history) == quick_gan_config.iterations
    assert sorted(history.snapshots) == [20, 40]
    assert rows[0]["iter"] == 1
    assert rows[0]["val_nmse_ar"] is None
    assert rows[19]["val_nmse_ar"] is not None
    assert all(np.isfinite(history.generator_loss))


def test_trained_surrogate_predicts_physical_shapes(trained_gan):
    designs = trained_gan.data.val_designs
    predicted = trained_gan.predict(designs)

    assert predicted.shape == (len(designs), 303)
    assert np.isfinite(predicted).all()
    assert_array_equal(predicted, trained_gan.predict(designs))


def test_fixed_zero_policy_differs_from_average(trained_gan):
    designs = trained_gan.data.val_designs
    zero = trained_gan.surrogate(PredictionPolicy.fixed_zero())

    assert zero.predict(designs).shape == (len(designs), 303)
    assert zero.policy.kind == "fixed_zero"
    assert trained_gan.surrogate().policy.draws == 2


def test_validation_nmse_has_every_segment(trained_gan):
    scores = trained_gan.validation_nmse()

    assert set(scores) == set(Segment)
    assert all(np.isfinite(value) for value in scores.values())


def test_critic_scores_are_probabilities(trained_gan):
    data = trained_gan.data
    score = critic_score(
        trained_gan.critic,
        data.train_targets[0],
        data.train_inputs[0],
    )

    assert 0.0 <= score <= 1.0


def test_prediction_needs_statistics(trained_gan):
    with pytest.raises(UsageError, match="statistics"):
        generator_predict(
            trained_gan.generator,
            trained_gan.data.val_designs,
            None,
            PredictionPolicy.fixed_zero(),
            trained_gan.data.geometry,
        )


def test_training_is_reproducible(small_dataset):
    config = GanTrainingConfig(iterations=4, batch_size=8, snapshot_every=4)
    first = train_gan(small_dataset, config)
    second = train_gan(small_dataset, config)

    assert first.history.generator_loss == second.history.generator_loss
    for name, value in first.generator.parameters().items():
        assert_array_equal(value, second.generator.parameters()[name])


def test_batches_come_from_training_split(small_dataset):
    config = GanTrainingConfig(iterations=3, batch_size=8, snapshot_every=3)
    seen = []

    result = train_gan(
        small_dataset,
        config,
        on_batch=lambda i, rows: seen.append((i, rows)),
    )

    assert [i for i, _ in seen] == [1, 2, 3]
    train = set(result.data.split.train)
    for _, rows in seen:
        assert len(rows) == 8
        assert set(rows) <= train


def test_unconditional_critic_trains(small_dataset):
    config = GanTrainingConfig(
        iterations=2,
        batch_size=8,
        conditional_critic=False,
        regularization="clip",
    )

    result = train_gan(small_dataset, config)

    assert result.critic.in_dim == 303
    assert len(result.history) == 2


def test_small_dataset_is_rejected(geometry):
    tiny = generate_dataset(10, geometry, seed=1)

    with pytest.raises(UsageError, match="at least 16"):
        check_trainable(tiny, 8)


def test_non_finite_loss_aborts(small_dataset):
    config = GanTrainingConfig(batch_size=4)
    state = GanState.initial(config)
    inputs = np.zeros((4, 72))
    targets = np.full((4, 303), np.nan)

    with pytest.raises(NumericalError) as error:
        gan_train_step(
            state,
            inputs,
            targets,
            make_rng(0),
            config,
            iteration=7,
            batch_seed=123,
        )

    assert error.value.iteration == 7
    assert error.value.batch_seed == 123
    assert error.value.exit_code == 3


@pytest.mark.slow
def test_cross_validation_reports_every_fold(small_dataset):
    config = GanTrainingConfig(iterations=5, batch_size=8, snapshot_every=5)

    report = cross_validate(small_dataset, 3, config)

    assert len(report.folds) == 3
    assert report.mean[Segment.ALL] == pytest.approx(
        np.mean([fold[Segment.ALL] for fold in report.folds]),
    )


def first_batch(dataset, size=8):
    data = TrainingData.prepare(dataset, split_indices(len(dataset), 0.1, 7))
    return data.train_inputs[:size], data.train_targets[:size]


def test_critic_loss_at_chance():
    half = np.full(4, 0.5)

    assert critic_loss(half, half) == pytest.approx(2 * np.log(2))
    assert critic_loss(half, half) == pytest.approx(1.3863, abs=1e-4)


def test_default_generator_loss_is_non_saturating(small_dataset):
    config = GanTrainingConfig(batch_size=8)
    inputs, targets = first_batch(small_dataset)
    replica = GanState.initial(config)
    rng = make_rng(3)
    _critic_update(replica, inputs, targets, rng)
    noise = rng.standard_normal((8, NOISE_DIM))
    fake, _ = replica.generator.forward(np.hstack([noise, inputs]), Mode.TRAIN)
    s_fake, _ = replica.critic.forward(np.hstack([fake, inputs]), Mode.TRAIN)
    expected = np.mean(-np.log(np.maximum(s_fake, LOG_FLOOR)))

    losses = gan_train_step(
        GanState.initial(config),
        inputs,
        targets,
        make_rng(3),
        config,
    )

    assert config.content_weight == 0.0
    assert losses.generator == pytest.approx(expected, rel=1e-12)


def test_content_weight_adds_squared_error(small_dataset):
    plain = GanTrainingConfig(batch_size=8)
    weighted = GanTrainingConfig(batch_size=8, content_weight=0.5)
    inputs, targets = first_batch(small_dataset)
    replica = GanState.initial(plain)
    rng = make_rng(3)
    _critic_update(replica, inputs, targets, rng)
    noise = rng.standard_normal((8, NOISE_DIM))
    fake, _ = replica.generator.forward(np.hstack([noise, inputs]), Mode.TRAIN)

    bare = gan_train_step(
        GanState.initial(plain),
        inputs,
        targets,
        make_rng(3),
        plain,
    )
    extra = gan_train_step(
        GanState.initial(weighted),
        inputs,
        targets,
        make_rng(3),
        weighted,
    )

    assert extra.critic == bare.critic
    assert extra.generator - bare.generator == pytest.approx(
        0.5 * np.mean((fake - targets) ** 2),
        rel=1e-9,
    )


def test_critic_update_holds_generator_fixed(small_dataset):
    config = GanTrainingConfig(batch_size=8)
    state = GanState.initial(config)
    inputs, targets = first_batch(small_dataset)
    generator = {k: v.copy() for k, v in state.generator.parameters().items()}
    buffers = {k: v.copy() for k, v in state.generator.buffers().items()}
    critic = {k: v.copy() for k, v in state.critic.parameters().items()}

    _critic_update(state, inputs, targets, make_rng(0))

    for name, value in state.critic.parameters().items():
        assert not np.array_equal(value, critic[name]), name
    for name, value in state.generator.parameters().items():
        assert_array_equal(value, generator[name])
    for name, value in state.generator.buffers().items():
        assert_array_equal(value, buffers[name])
    assert state.critic_opt.step_count == 1
    assert state.generator_opt.step_count == 0


def test_critic_separates_distant_clusters():
    state = GanState.initial(GanTrainingConfig(batch_size=16))
    rng = make_rng(4)
    designs = np.zeros((16, 72))
    real = rng.normal(2.0, 0.1, size=(16, 303))

    for _ in range(200):
        _critic_update(state, designs, real, rng)

    fake, _ = state.generator.forward(
        np.hstack([rng.standard_normal((16, NOISE_DIM)), designs]),
        Mode.TRAIN,
        track_running_stats=False,
    )
    held_out = rng.normal(2.0, 0.1, size=(16, 303))
    s_real, _ = state.critic.forward(np.hstack([held_out, designs]), Mode.INFER)
    s_fake, _ = state.critic.forward(np.hstack([fake, designs]), Mode.INFER)
    correct = np.sum(s_real > 0.5) + np.sum(s_fake < 0.5)

    assert correct / 32 > 0.95


def test_noise_averaging_shrinks_spread(trained_gan):
    design = trained_gan.data.val_designs[0]
    spreads = []

    for draws in (1, 4, 16):
        policies = [PredictionPolicy.average(draws, seed) for seed in range(24)]
        predictions = np.vstack([
            trained_gan.surrogate(policy).predict(design) for policy in policies
        ])
        spreads.append(predictions.var(axis=0).mean())

    assert spreads[0] > spreads[1] > spreads[2] > 0.0


def test_network_parameter_counts():
    state = GanState.initial(GanTrainingConfig())

    def count(network):
        return sum(value.size for value in network.parameters().values())

    # 342,191 dense weights and biases plus 1,792 batch-norm scales and shifts
    assert count(state.generator) == 343_983
    assert count(state.critic) == 324_097


def test_validation_fraction_is_configurable(small_dataset):
    config = GanTrainingConfig(iterations=2, batch_size=8, snapshot_every=2)

    result = train_gan(small_dataset, config, validation_fraction=0.2)

    assert len(result.data.split.validation) == 12
    assert len(result.data.split.train) == 48


@pytest.mark.slow
def test_trained_generator_beats_mean_predictor(geometry):
    dataset = generate_dataset(300, geometry, seed=7)

    result = train_gan(dataset, GanTrainingConfig())

    data = result.data
    baseline = segment_nmse(
        data.val_responses,
        mean_predictor(
            dataset.responses[data.split.train],
            len(data.val_responses),
        ),
    )
    scores = result.validation_nmse()
    for segment in (Segment.AR, Segment.RL, Segment.GAIN):
        assert scores[segment] < baseline[segment], segment
