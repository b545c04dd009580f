import numpy as np
import pytest
from numpy.testing import assert_allclose, assert_array_equal

from fpc_surrogate.exceptions import UsageError
from fpc_surrogate.nn.base import ActivationKind, Mode
from fpc_surrogate.nn.conv import (
    ConvNet,
    convnet_from_architecture,
    init_convnet,
    max_pool,
    max_pool_backward,
)
from fpc_surrogate.nn.gradcheck import (
    ScaledGradients,
    gradient_check,
    relative_error,
)
from fpc_surrogate.nn.layers import BatchNormLayer
from fpc_surrogate.nn.network import (
    Network,
    init_network,
    network_from_architecture,
)
from fpc_surrogate.nn.optim import AdamState, adam_step
from fpc_surrogate.seeding import make_rng


def small_network(seed: int = 1):
    return init_network(
        [5, 8, 4],
        [ActivationKind.LEAKY_RELU, ActivationKind.IDENTITY],
        [True, False],
        seed,
    )


class ReversedParameters:
    """Network exposing its parameters in reverse declaration order."""

    def __init__(self, network) -> None:
        self.network = network

    def parameters(self):
        return dict(reversed(self.network.parameters().items()))


class ShiftingPattern(ScaledGradients):
    """Network whose activation pattern changes on every forward pass."""

    def __init__(self, network) -> None:
        super().__init__(network, factor=1.0)
        self.calls = 0

    def activation_pattern(self, cache):
        self.calls += 1
        return np.array([self.calls], dtype=np.int64)


def test_batchnorm_train_mode_normalizes_and_tracks():
    layer = BatchNormLayer(3, momentum=0.8)
    x = make_rng(0).normal(2.0, 3.0, size=(64, 3))

    out, _ = layer.forward(x, Mode.TRAIN)

    assert_allclose(out.mean(axis=0), 0.0, atol=1e-12)
    assert_allclose(out.std(axis=0), 1.0, atol=1e-5)
    assert_allclose(layer.running_mean, 0.2 * x.mean(axis=0))
    assert_allclose(layer.running_var, 0.8 + 0.2 * x.var(axis=0))


def test_batchnorm_frozen_statistics():
    layer = BatchNormLayer(3)
    x = make_rng(1).standard_normal((16, 3))

    layer.forward(x, Mode.TRAIN, track_running_stats=False)
    assert_array_equal(layer.running_mean, np.zeros(3))

    out, _ = layer.forward(x, Mode.INFER)
    assert_allclose(out, x / np.sqrt(1.0 + layer.epsilon))


def test_train_mode_needs_two_rows():
    network = small_network()
    single = np.zeros((1, 5))

    with pytest.raises(UsageError, match="at least 2 rows"):
        network.forward(single, Mode.TRAIN)
    out, _ = network.forward(single, Mode.INFER)
    assert out.shape == (1, 4)


def test_forward_rejects_wrong_width():
    with pytest.raises(UsageError, match="width"):
        small_network().forward(np.zeros((4, 6)), Mode.INFER)


def test_infer_cache_cannot_backpropagate():
    network = small_network()
    out, cache = network.forward(np.ones((4, 5)), Mode.INFER)

    with pytest.raises(UsageError, match="Infer"):
        network.backward(cache, np.ones_like(out))


def test_network_rejects_unchained_blocks():
    first = small_network().blocks[0]
    with pytest.raises(UsageError, match="chain"):
        Network([first, first])


def test_parameter_order_is_declaration_order():
    assert list(small_network().parameters()) == [
        "0.dense.weights",
        "0.dense.bias",
        "0.bn.gamma",
        "0.bn.beta",
        "1.dense.weights",
        "1.dense.bias",
    ]
    assert list(small_network().buffers()) == [
        "0.bn.running_mean",
        "0.bn.running_var",
    ]


def test_init_is_seeded():
    first = small_network(3).parameters()
    second = small_network(3).parameters()

    for name, value in first.items():
        assert_array_equal(value, second[name])
    assert not np.array_equal(
        first["0.dense.weights"],
        small_network(4).parameters()["0.dense.weights"],
    )


def test_architecture_rebuilds_same_shapes():
    network = small_network()
    rebuilt = network_from_architecture(network.architecture())

    assert rebuilt.architecture() == network.architecture()
    assert rebuilt.num_parameters() == network.num_parameters()


def test_adam_first_step_moves_by_learning_rate():
    network = init_network([3, 2], [ActivationKind.IDENTITY], [False], 0)
    before = {k: v.copy() for k, v in network.parameters().items()}
    grads = {
        "0.dense.weights": np.full((3, 2), 0.5),
        "0.dense.bias": np.full(2, -2.0),
    }
    state = AdamState.for_model(network, lr=1e-3, weight_decay=0.0)

    adam_step(network, grads, state)

    params = network.parameters()
    assert state.step_count == 1
    assert_allclose(
        params["0.dense.weights"],
        before["0.dense.weights"] - 1e-3,
        rtol=1e-6,
        atol=1e-10,
    )
    assert_allclose(params["0.dense.bias"], before["0.dense.bias"] + 1e-3)


def test_adam_decay_shrinks_weights_only():
    network = init_network([3, 2], [ActivationKind.IDENTITY], [False], 0)
    network.blocks[0].dense.bias[:] = 1.0
    before = network.parameters()["0.dense.weights"].copy()
    zeros = {k: np.zeros_like(v) for k, v in network.parameters().items()}
    state = AdamState.for_model(network, lr=0.1, weight_decay=0.5)

    adam_step(network, zeros, state)

    assert_allclose(network.parameters()["0.dense.weights"], before * 0.95)
    assert_allclose(network.parameters()["0.dense.bias"], 1.0)


def test_adam_clip_bounds_weights():
    network = init_network([3, 2], [ActivationKind.IDENTITY], [False], 0)
    network.blocks[0].dense.weights[:] = 5.0
    network.blocks[0].dense.bias[:] = 5.0
    zeros = {k: np.zeros_like(v) for k, v in network.parameters().items()}
    state = AdamState.for_model(
        network,
        lr=1e-3,
        weight_decay=0.01,
        regularization="clip",
    )

    adam_step(network, zeros, state)

    assert_allclose(network.parameters()["0.dense.weights"], 0.01)
    assert_allclose(network.parameters()["0.dense.bias"], 5.0)


def test_adam_rejects_mismatched_gradients():
    network = small_network()
    state = AdamState.for_model(network)

    with pytest.raises(UsageError):
        adam_step(network, {"0.dense.weights": np.zeros((5, 8))}, state)


def test_max_pool_ties_go_to_first_maximum():
    x = np.ones((1, 1, 2, 2))

    pooled, argmax = max_pool(x, 2)
    routed = max_pool_backward(np.full((1, 1, 1, 1), 3.0), argmax, 2)

    assert pooled[0, 0, 0, 0] == 1.0
    assert argmax[0, 0, 0, 0] == 0
    assert_array_equal(routed[0, 0], [[3.0, 0.0], [0.0, 0.0]])


def test_convnet_shapes_and_descriptor():
    model = init_convnet(8, [2], [6, 3], seed=2)
    out, _ = model.forward(np.zeros((4, 8, 8)), Mode.INFER)
    rebuilt = convnet_from_architecture(model.architecture())

    assert out.shape == (4, 3)
    assert model.architecture().conv[0].out_channels == 2
    assert rebuilt.architecture() == model.architecture()


def test_convnet_rejects_wrong_grid():
    model = init_convnet(8, [2], [3], seed=2)

    with pytest.raises(UsageError, match="8x8"):
        model.forward(np.zeros((4, 6, 6)), Mode.INFER)


def test_convnet_rejects_mismatched_head():
    model = init_convnet(8, [2], [3], seed=2)

    with pytest.raises(UsageError, match="features"):
        ConvNet(model.convs, small_network(), 8)


def test_relative_error_floor():
    assert relative_error(0.0, 0.0) == 0.0
    assert relative_error(1e-9, 0.0) == pytest.approx(1e-5)
    assert relative_error(1.0, 1.0) == 0.0


def test_dense_gradients_match_finite_differences():
    batch = make_rng(5).standard_normal((6, 5))

    report = gradient_check(small_network(), batch, probes=60, seed=1)

    assert report.passed
    assert report.probed == 60


def test_sigmoid_gradients_match_finite_differences():
    network = init_network(
        [4, 6, 1],
        [ActivationKind.LEAKY_RELU, ActivationKind.SIGMOID],
        [False, False],
        seed=3,
    )
    batch = make_rng(6).standard_normal((5, 4))

    assert gradient_check(network, batch, probes=40).passed


def test_conv_gradients_match_finite_differences():
    model = init_convnet(8, [2], [3], seed=4)
    batch = make_rng(7).standard_normal((4, 8, 8))

    report = gradient_check(
        model,
        batch,
        probes=18,
        names=["conv.0.kernels", "conv.0.bias"],
    )

    assert report.passed
    assert report.probed > 0


def test_gradient_check_leaves_parameters_untouched():
    network = small_network()
    before = {k: v.copy() for k, v in network.parameters().items()}
    running = network.buffers()["0.bn.running_mean"].copy()

    gradient_check(network, make_rng(0).standard_normal((6, 5)), probes=20)

    for name, value in network.parameters().items():
        assert_array_equal(value, before[name])
    assert_array_equal(network.buffers()["0.bn.running_mean"], running)


def test_gradient_check_catches_wrong_backward():
    wrapped = ScaledGradients(small_network())
    batch = make_rng(5).standard_normal((6, 5))

    report = gradient_check(wrapped, batch, probes=30, seed=1)

    assert not report.passed
    assert report.max_rel_error == pytest.approx(1 / 3, rel=1e-2)


def test_gradient_check_with_nothing_compared_fails():
    batch = make_rng(5).standard_normal((6, 5))

    report = gradient_check(small_network(), batch, names=[])

    assert not report.passed
    assert report.probed == 0
    assert report.skipped == 0


def test_gradient_check_fails_when_every_candidate_is_kinked():
    batch = make_rng(5).standard_normal((6, 5))

    report = gradient_check(ShiftingPattern(small_network()), batch, probes=10)

    assert not report.passed
    assert report.probed == 0
    assert report.skipped == 100


def test_infer_output_ignores_batch_composition():
    network = small_network()
    rng = make_rng(8)
    network.forward(rng.normal(1.0, 2.0, size=(16, 5)), Mode.TRAIN)
    rows = rng.standard_normal((6, 5))

    together, _ = network.forward(rows, Mode.INFER)
    shuffled, _ = network.forward(rows[::-1], Mode.INFER)

    for i, row in enumerate(rows):
        alone, _ = network.forward(row[None, :], Mode.INFER)
        assert_allclose(alone[0], together[i], rtol=1e-12, atol=1e-12)
    assert_allclose(shuffled[::-1], together, rtol=1e-12, atol=1e-12)


def test_adam_update_ignores_parameter_order():
    forward = small_network()
    backward = small_network()
    reversed_view = ReversedParameters(backward)
    forward_state = AdamState.for_model(forward, lr=1e-2, weight_decay=0.1)
    backward_state = AdamState.for_model(
        reversed_view,
        lr=1e-2,
        weight_decay=0.1,
    )
    rng = make_rng(9)

    for _ in range(3):
        grads = {
            k: rng.standard_normal(v.shape)
            for k, v in forward.parameters().items()
        }
        adam_step(forward, grads, forward_state)
        adam_step(
            reversed_view,
            dict(reversed(grads.items())),
            backward_state,
        )

    for name, value in forward.parameters().items():
        assert_array_equal(backward.parameters()[name], value)
