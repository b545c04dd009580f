from dataclasses import dataclass

import numpy as np

from fpc_surrogate.nn.base import ActivationKind, Array, Mode, Parameters


def glorot_uniform(
    rng: np.random.Generator,
    fan_in: int,
    fan_out: int,
    shape: tuple[int, ...],
) -> Array:
    """Draws Glorot-uniform weights.

    Args:
        rng: Random generator.
        fan_in: Inputs feeding one unit.
        fan_out: Units fed by one input.
        shape: Shape of the weight array.

    Returns:
        Weights uniform in +-sqrt(6 / (fan_in + fan_out)).
    """
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=shape)


class DenseLayer:
    """Affine map ``x @ weights + bias``."""

    def __init__(self, weights: Array, bias: Array) -> None:
        """Initializes the layer with its parameters.

        Args:
            weights: Matrix of shape (in_dim, out_dim).
            bias: Vector of length out_dim.
        """
        self.weights = weights
        self.bias = bias

    @property
    def in_dim(self) -> int:
        """Input width."""
        return int(self.weights.shape[0])

    @property
    def out_dim(self) -> int:
        """Output width."""
        return int(self.weights.shape[1])

    def parameters(self) -> Parameters:
        """Trainable arrays keyed by local name."""
        return {"weights": self.weights, "bias": self.bias}

    def forward(self, x: Array) -> Array:
        """Applies the affine map."""
        return x @ self.weights + self.bias

    def backward(self, x: Array, grad: Array) -> tuple[Parameters, Array]:
        """Back-propagates through the affine map.

        Args:
            x: Input of the forward pass.
            grad: Gradient of the output.

        Returns:
            Parameter gradients and the gradient of the input.
        """
        grads = {"weights": x.T @ grad, "bias": grad.sum(axis=0)}
        return grads, grad @ self.weights.T


@dataclass(slots=True)
class BatchNormCache:
    """Intermediates of a batch-norm forward pass.

    Attributes:
        mode: Mode of the pass.
        x_hat: Normalized input.
        inv_std: Reciprocal standard deviation used for normalization.
    """

    mode: Mode
    x_hat: Array
    inv_std: Array


class BatchNormLayer:
    """Per-feature batch normalization with running statistics."""

    def __init__(
        self,
        dim: int,
        momentum: float = 0.8,
        epsilon: float = 1e-5,
    ) -> None:
        """Initializes an identity normalization.

        Args:
            dim: Number of features.
            momentum: Weight of the old running statistic in each update.
            epsilon: Variance floor.
        """
        self.gamma = np.ones(dim)
        self.beta = np.zeros(dim)
        self.running_mean = np.zeros(dim)
        self.running_var = np.ones(dim)
        self.momentum = momentum
        self.epsilon = epsilon

    def parameters(self) -> Parameters:
        """Trainable arrays keyed by local name."""
        return {"gamma": self.gamma, "beta": self.beta}

    def buffers(self) -> Parameters:
        """Running statistics keyed by local name."""
        return {
            "running_mean": self.running_mean,
            "running_var": self.running_var,
        }

    def forward(
        self,
        x: Array,
        mode: Mode,
        *,
        track_running_stats: bool = True,
    ) -> tuple[Array, BatchNormCache]:
        """Normalizes a batch.

        Train mode normalizes by the batch statistics and, unless disabled,
        folds them into the running statistics; Infer mode uses the running
        statistics only.

        Args:
            x: Batch of shape (B, dim).
            mode: Forward-pass mode.
            track_running_stats: Whether Train mode updates the buffers.

        Returns:
            Normalized batch and cache.
        """
        if mode is Mode.TRAIN:
            mean = x.mean(axis=0)
            var = x.var(axis=0)
            if track_running_stats:
                keep = self.momentum
                self.running_mean *= keep
                self.running_mean += (1 - keep) * mean
                self.running_var *= keep
                self.running_var += (1 - keep) * var
        else:
            mean, var = self.running_mean, self.running_var
        inv_std = 1.0 / np.sqrt(var + self.epsilon)
        x_hat = (x - mean) * inv_std
        return self.gamma * x_hat + self.beta, BatchNormCache(
            mode,
            x_hat,
            inv_std,
        )

    def backward(
        self,
        cache: BatchNormCache,
        grad: Array,
    ) -> tuple[Parameters, Array]:
        """Back-propagates through Train-mode normalization.

        Includes the dependence of the batch mean and variance on every row.

        Args:
            cache: Cache of a Train-mode forward pass.
            grad: Gradient of the output.

        Returns:
            Parameter gradients and the gradient of the input.
        """
        x_hat, batch = cache.x_hat, grad.shape[0]
        grads = {
            "gamma": (grad * x_hat).sum(axis=0),
            "beta": grad.sum(axis=0),
        }
        d_hat = grad * self.gamma
        grad_input = (cache.inv_std / batch) * (
            batch * d_hat
            - d_hat.sum(axis=0)
            - x_hat * (d_hat * x_hat).sum(axis=0)
        )
        return grads, grad_input


def activate(kind: ActivationKind, z: Array, slope: float) -> Array:
    """Applies an activation elementwise.

    Args:
        kind: Activation kind.
        z: Pre-activation.
        slope: Negative slope of LeakyReLU.

    Returns:
        Activated values.
    """
    match kind:
        case ActivationKind.LEAKY_RELU:
            return np.where(z > 0, z, slope * z)
        case ActivationKind.SIGMOID:
            return 0.5 * (1.0 + np.tanh(0.5 * z))
        case ActivationKind.IDENTITY:
            return z


def activation_grad(
    kind: ActivationKind,
    z: Array,
    out: Array,
    slope: float,
) -> Array:
    """Local derivative of an activation.

    Args:
        kind: Activation kind.
        z: Pre-activation.
        out: Activated values.
        slope: Negative slope of LeakyReLU.

    Returns:
        Elementwise derivative.
    """
    match kind:
        case ActivationKind.LEAKY_RELU:
            return np.where(z > 0, 1.0, slope)
        case ActivationKind.SIGMOID:
            return out * (1.0 - out)
        case ActivationKind.IDENTITY:
            return np.ones_like(z)
