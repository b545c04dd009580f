from dataclasses import dataclass
from enum import IntEnum, StrEnum
from typing import Any, Protocol

import numpy as np
from numpy.typing import NDArray

type Array = NDArray[np.float64]
type Parameters = dict[str, Array]
type Pattern = NDArray[np.int64]


class Mode(StrEnum):
    """Forward-pass mode."""

    TRAIN = "train"
    INFER = "infer"


class ActivationKind(IntEnum):
    """Activation codes, as stored in checkpoint descriptors."""

    IDENTITY = 0
    LEAKY_RELU = 1
    SIGMOID = 2


@dataclass(frozen=True, slots=True)
class DenseSpec:
    """Shape of one dense block.

    Attributes:
        in_dim: Input width.
        out_dim: Output width.
        activation: Activation after the (optionally normalized) transform.
        batchnorm: Whether batch normalization precedes the activation.
    """

    in_dim: int
    out_dim: int
    activation: ActivationKind
    batchnorm: bool


@dataclass(frozen=True, slots=True)
class ConvSpec:
    """Shape of one convolution block (same-padded, max-pooled).

    Attributes:
        in_channels: Input feature maps.
        out_channels: Output feature maps.
        kernel: Square kernel side.
        pool: Square max-pool side and stride.
    """

    in_channels: int
    out_channels: int
    kernel: int
    pool: int


@dataclass(frozen=True, slots=True)
class ArchitectureDescriptor:
    """Everything needed to rebuild a model before loading its parameters.

    Attributes:
        kind: Model role, e.g. ``generator`` or ``cnn``.
        dense: Dense blocks in order.
        conv: Convolution blocks in order, empty for dense-only models.
        input_side: Side of the square input grid of convolutional models.
        leaky_slope: Negative slope shared by LeakyReLU activations.
        bn_momentum: Running-statistics momentum.
        bn_epsilon: Batch-norm variance floor.
    """

    kind: str
    dense: tuple[DenseSpec, ...]
    conv: tuple[ConvSpec, ...] = ()
    input_side: int = 0
    leaky_slope: float = 0.2
    bn_momentum: float = 0.8
    bn_epsilon: float = 1e-5

    @property
    def dims(self) -> tuple[int, ...]:
        """Widths of the dense chain, input first."""
        return (self.dense[0].in_dim, *(spec.out_dim for spec in self.dense))


class Model(Protocol):
    """Trainable model with explicit forward and backward passes."""

    def parameters(self) -> Parameters:
        """Returns trainable arrays keyed by name, in declaration order."""
        ...

    def buffers(self) -> Parameters:
        """Returns non-trainable running statistics keyed by name."""
        ...

    def forward(
        self,
        batch: Array,
        mode: Mode,
        *,
        track_running_stats: bool = True,
    ) -> tuple[Array, Any]:
        """Maps a batch to outputs and the cache needed by `backward`."""
        ...

    def backward(
        self,
        cache: Any,
        grad_output: Array,
    ) -> tuple[Parameters, Array]:
        """Returns parameter gradients and the gradient of the input."""
        ...

    def activation_pattern(self, cache: Any) -> Pattern:
        """Returns the piecewise-linear decisions taken by a forward pass."""
        ...

    def architecture(self) -> ArchitectureDescriptor:
        """Returns the descriptor stored in checkpoints."""
        ...


def decayed(name: str) -> bool:
    """Tells whether a parameter takes weight decay.

    Args:
        name: Dotted parameter name.

    Returns:
        True for weights, kernels and batch-norm scales.
    """
    return name.rsplit(".", 1)[-1] in {"weights", "kernels", "gamma"}
