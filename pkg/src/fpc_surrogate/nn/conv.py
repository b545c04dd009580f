"""Convolution stage for grid-input models.

Tensors are NCHW. Convolutions are stride 1 with same padding; pooling is
non-overlapping max pooling with ties routed to the first maximum in
row-major order.
"""

from collections.abc import Sequence
from dataclasses import dataclass

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from fpc_surrogate.exceptions import UsageError
from fpc_surrogate.nn.base import (
    ActivationKind,
    ArchitectureDescriptor,
    Array,
    ConvSpec,
    Mode,
    Parameters,
    Pattern,
)
from fpc_surrogate.nn.layers import activate, activation_grad, glorot_uniform
from fpc_surrogate.nn.network import (
    Network,
    NetworkCache,
    init_network,
    network_from_architecture,
)
from fpc_surrogate.seeding import make_rng


class Conv2D:
    """Same-padded stride-1 convolution."""

    def __init__(self, kernels: Array, bias: Array) -> None:
        """Initializes the layer.

        Args:
            kernels: Array of shape (out_channels, in_channels, k, k), k odd.
            bias: Vector of length out_channels.
        """
        self.kernels = kernels
        self.bias = bias

    @property
    def spec(self) -> tuple[int, int, int]:
        """(in_channels, out_channels, kernel side)."""
        out_ch, in_ch, side, _ = self.kernels.shape
        return int(in_ch), int(out_ch), int(side)

    def parameters(self) -> Parameters:
        """Trainable arrays keyed by local name."""
        return {"kernels": self.kernels, "bias": self.bias}

    def _pad(self, x: Array) -> Array:
        pad = self.kernels.shape[-1] // 2
        return np.pad(x, ((0, 0), (0, 0), (pad, pad), (pad, pad)))

    def forward(self, x: Array) -> Array:
        """Convolves a batch of shape (B, C, H, W)."""
        side = self.kernels.shape[-1]
        windows = sliding_window_view(self._pad(x), (side, side), axis=(2, 3))
        out = np.einsum("bchwij,ocij->bohw", windows, self.kernels)
        return out + self.bias[None, :, None, None]

    def backward(self, x: Array, grad: Array) -> tuple[Parameters, Array]:
        """Back-propagates through the convolution.

        Args:
            x: Input of the forward pass.
            grad: Gradient of the output, shape (B, O, H, W).

        Returns:
            Parameter gradients and the gradient of the input.
        """
        side = self.kernels.shape[-1]
        pad = side // 2
        height, width = x.shape[2], x.shape[3]
        windows = sliding_window_view(self._pad(x), (side, side), axis=(2, 3))
        grads = {
            "kernels": np.einsum("bchwij,bohw->ocij", windows, grad),
            "bias": grad.sum(axis=(0, 2, 3)),
        }
        grad_padded = np.zeros(
            (x.shape[0], x.shape[1], height + 2 * pad, width + 2 * pad),
        )
        for i in range(side):
            for j in range(side):
                grad_padded[:, :, i : i + height, j : j + width] += np.einsum(
                    "bohw,oc->bchw",
                    grad,
                    self.kernels[:, :, i, j],
                )
        return grads, grad_padded[:, :, pad : pad + height, pad : pad + width]


def max_pool(x: Array, size: int) -> tuple[Array, Array]:
    """Non-overlapping max pooling.

    Args:
        x: Batch of shape (B, C, H, W), H and W divisible by ``size``.
        size: Pool side and stride.

    Returns:
        Pooled batch and the flat argmax inside each window.
    """
    batch, channels, height, width = x.shape
    windows = (
        x.reshape(batch, channels, height // size, size, width // size, size)
        .transpose(0, 1, 2, 4, 3, 5)
        .reshape(batch, channels, height // size, width // size, size * size)
    )
    argmax = windows.argmax(axis=-1)
    return np.take_along_axis(windows, argmax[..., None], -1)[..., 0], argmax


def max_pool_backward(grad: Array, argmax: Array, size: int) -> Array:
    """Routes pooled gradients back to the winning input positions.

    Args:
        grad: Gradient of the pooled output.
        argmax: Flat argmax returned by `max_pool`.
        size: Pool side and stride.

    Returns:
        Gradient of the pooling input.
    """
    batch, channels, rows, cols = grad.shape
    routed = np.zeros((batch, channels, rows, cols, size * size))
    np.put_along_axis(routed, argmax[..., None], grad[..., None], -1)
    return (
        routed.reshape(batch, channels, rows, cols, size, size)
        .transpose(0, 1, 2, 4, 3, 5)
        .reshape(batch, channels, rows * size, cols * size)
    )


@dataclass(slots=True)
class ConvBlockCache:
    """Intermediates of one convolution block.

    Attributes:
        x: Block input.
        z: Convolution output before the activation.
        argmax: Pool winners.
    """

    x: Array
    z: Array
    argmax: Array


@dataclass(slots=True)
class ConvNetCache:
    """Intermediates of a convolutional forward pass.

    Attributes:
        mode: Mode of the pass.
        blocks: Per-block convolution intermediates.
        flat_shape: Shape of the last pooled map before flattening.
        head: Cache of the dense head.
    """

    mode: Mode
    blocks: list[ConvBlockCache]
    flat_shape: tuple[int, ...]
    head: NetworkCache


class ConvNet:
    """Convolution blocks (conv, LeakyReLU, max-pool) then a dense head.

    Parameters are named ``"conv.<i>.kernels"``, ``"conv.<i>.bias"`` and
    ``"head.<dense name>"``.
    """

    def __init__(
        self,
        convs: Sequence[Conv2D],
        head: Network,
        input_side: int,
        pool: int = 2,
        kind: str = "cnn",
    ) -> None:
        """Initializes the model.

        Args:
            convs: Convolution layers in order.
            head: Dense head fed by the flattened maps.
            input_side: Side of the square single-channel input grid.
            pool: Pool side after every convolution.
            kind: Model role stored in checkpoints.

        Raises:
            UsageError: If the flattened width does not match the head.
        """
        side = input_side // pool ** len(convs)
        flat = convs[-1].spec[1] * side * side
        if flat != head.in_dim or input_side % pool ** len(convs):
            msg = f"conv stage yields {flat} features, head takes {head.in_dim}"
            raise UsageError(msg)
        self.convs = list(convs)
        self.head = head
        self.input_side = input_side
        self.pool = pool
        self.kind = kind

    def parameters(self) -> Parameters:
        """Trainable arrays keyed by name, in declaration order."""
        params = {
            f"conv.{index}.{name}": value
            for index, conv in enumerate(self.convs)
            for name, value in conv.parameters().items()
        }
        for name, value in self.head.parameters().items():
            params[f"head.{name}"] = value
        return params

    def buffers(self) -> Parameters:
        """Running statistics of the head, if any."""
        return {
            f"head.{name}": value for name, value in self.head.buffers().items()
        }

    def num_parameters(self) -> int:
        """Number of trainable scalars."""
        return sum(value.size for value in self.parameters().values())

    def architecture(self) -> ArchitectureDescriptor:
        """Descriptor stored in checkpoints."""
        head = self.head.architecture()
        return ArchitectureDescriptor(
            kind=self.kind,
            dense=head.dense,
            conv=tuple(
                ConvSpec(*conv.spec, self.pool)
                for conv in self.convs
            ),
            input_side=self.input_side,
            leaky_slope=self.head.leaky_slope,
            bn_momentum=head.bn_momentum,
            bn_epsilon=head.bn_epsilon,
        )

    def forward(
        self,
        batch: Array,
        mode: Mode,
        *,
        track_running_stats: bool = True,
    ) -> tuple[Array, ConvNetCache]:
        """Maps grids of shape (B, side, side) to outputs.

        Args:
            batch: Grids, or already channelled (B, 1, side, side) maps.
            mode: Forward-pass mode.
            track_running_stats: Forwarded to the dense head.

        Raises:
            UsageError: If the grid side is wrong.

        Returns:
            Outputs and the cache for `backward`.
        """
        x = batch[:, None] if batch.ndim == 3 else batch  # noqa: PLR2004
        if x.shape[1:] != (1, self.input_side, self.input_side):
            msg = (
                f"expected {self.input_side}x{self.input_side} grids, "
                f"got {batch.shape}"
            )
            raise UsageError(msg)
        caches = []
        for conv in self.convs:
            z = conv.forward(x)
            activated = activate(
                ActivationKind.LEAKY_RELU,
                z,
                self.head.leaky_slope,
            )
            pooled, argmax = max_pool(activated, self.pool)
            caches.append(ConvBlockCache(x, z, argmax))
            x = pooled
        out, head_cache = self.head.forward(
            x.reshape(x.shape[0], -1),
            mode,
            track_running_stats=track_running_stats,
        )
        return out, ConvNetCache(mode, caches, x.shape, head_cache)

    def activation_pattern(self, cache: ConvNetCache) -> Pattern:
        """Flattened LeakyReLU and pool decisions of a forward pass."""
        parts = [
            part
            for step in cache.blocks
            for part in ((step.z > 0).ravel(), step.argmax.ravel())
        ]
        parts.append(self.head.activation_pattern(cache.head))
        return np.concatenate([part.astype(np.int64) for part in parts])

    def backward(
        self,
        cache: ConvNetCache,
        grad_output: Array,
    ) -> tuple[Parameters, Array]:
        """Back-propagates an output gradient.

        Args:
            cache: Cache of a Train-mode forward pass.
            grad_output: Gradient of the loss by the outputs.

        Returns:
            Gradients keyed like `parameters` and the gradient of the
            (B, 1, side, side) input.
        """
        head_grads, grad = self.head.backward(cache.head, grad_output)
        grads = {f"head.{name}": value for name, value in head_grads.items()}
        grad = grad.reshape(cache.flat_shape)
        for index in reversed(range(len(self.convs))):
            step = cache.blocks[index]
            grad = max_pool_backward(grad, step.argmax, self.pool)
            grad = grad * activation_grad(
                ActivationKind.LEAKY_RELU,
                step.z,
                step.z,
                self.head.leaky_slope,
            )
            conv_grads, grad = self.convs[index].backward(step.x, grad)
            for name, value in conv_grads.items():
                grads[f"conv.{index}.{name}"] = value
        return {name: grads[name] for name in self.parameters()}, grad


def init_convnet(  # noqa: PLR0913
    input_side: int,
    channels: Sequence[int],
    head_dims: Sequence[int],
    seed: int,
    *,
    kernel: int = 3,
    pool: int = 2,
    leaky_slope: float = 0.2,
) -> ConvNet:
    """Builds a Glorot-initialized convolutional model.

    Args:
        input_side: Side of the square single-channel input grid.
        channels: Feature maps of each convolution block.
        head_dims: Widths of the dense head after the flattened maps.
        seed: Initialization seed.
        kernel: Square kernel side.
        pool: Pool side after every convolution.
        leaky_slope: Negative slope of LeakyReLU activations.

    Returns:
        The model; dense hidden layers use LeakyReLU, the output Identity.
    """
    rng = make_rng(seed)
    convs = []
    in_ch = 1
    for out_ch in channels:
        shape = (out_ch, in_ch, kernel, kernel)
        kernels = glorot_uniform(
            rng,
            in_ch * kernel * kernel,
            out_ch * kernel * kernel,
            shape,
        )
        convs.append(Conv2D(kernels, np.zeros(out_ch)))
        in_ch = out_ch
    side = input_side // pool ** len(channels)
    dims = [in_ch * side * side, *head_dims]
    count = len(head_dims)
    head = init_network(
        dims,
        [ActivationKind.LEAKY_RELU] * (count - 1) + [ActivationKind.IDENTITY],
        [False] * count,
        int(rng.integers(0, 2**63 - 1)),
        kind="head",
        leaky_slope=leaky_slope,
    )
    return ConvNet(convs, head, input_side, pool=pool)


def convnet_from_architecture(arch: ArchitectureDescriptor) -> ConvNet:
    """Builds a zero-initialized model matching a descriptor.

    Args:
        arch: Descriptor with at least one convolution block.

    Returns:
        A model ready to receive checkpoint parameters.
    """
    head = network_from_architecture(
        ArchitectureDescriptor(
            kind="head",
            dense=arch.dense,
            leaky_slope=arch.leaky_slope,
            bn_momentum=arch.bn_momentum,
            bn_epsilon=arch.bn_epsilon,
        ),
    )
    convs = [
        Conv2D(
            np.zeros(
                (spec.out_channels, spec.in_channels, spec.kernel, spec.kernel),
            ),
            np.zeros(spec.out_channels),
        )
        for spec in arch.conv
    ]
    return ConvNet(
        convs,
        head,
        arch.input_side,
        pool=arch.conv[0].pool,
        kind=arch.kind,
    )
