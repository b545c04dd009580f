"""Dense networks built from (dense, optional batch norm, activation) blocks.

Parameters are named ``"<block>.dense.weights"``, ``"<block>.dense.bias"``,
``"<block>.bn.gamma"`` and ``"<block>.bn.beta"``; running statistics are
``"<block>.bn.running_mean"`` and ``"<block>.bn.running_var"``. Dictionary
order is declaration order, which is also the checkpoint order.
"""

from collections.abc import Sequence
from dataclasses import dataclass

import numpy as np

from fpc_surrogate.exceptions import UsageError
from fpc_surrogate.nn.base import (
    ActivationKind,
    ArchitectureDescriptor,
    Array,
    DenseSpec,
    Mode,
    Parameters,
    Pattern,
)
from fpc_surrogate.nn.layers import (
    BatchNormCache,
    BatchNormLayer,
    DenseLayer,
    activate,
    activation_grad,
    glorot_uniform,
)
from fpc_surrogate.seeding import make_rng


@dataclass(slots=True)
class Block:
    """One dense block.

    Attributes:
        dense: Affine transform.
        batchnorm: Normalization between transform and activation.
        activation: Output activation.
    """

    dense: DenseLayer
    batchnorm: BatchNormLayer | None
    activation: ActivationKind


@dataclass(slots=True)
class BlockCache:
    """Intermediates of one block.

    Attributes:
        x: Block input.
        bn: Batch-norm cache, if the block normalizes.
        z: Pre-activation.
        out: Block output.
    """

    x: Array
    bn: BatchNormCache | None
    z: Array
    out: Array


@dataclass(slots=True)
class NetworkCache:
    """Intermediates of a network forward pass.

    Attributes:
        mode: Mode of the pass.
        blocks: Per-block intermediates.
    """

    mode: Mode
    blocks: list[BlockCache]


class Network:
    """Chain of dense blocks with explicit forward and backward passes."""

    def __init__(
        self,
        blocks: Sequence[Block],
        kind: str = "network",
        leaky_slope: float = 0.2,
    ) -> None:
        """Initializes the network from its blocks.

        Args:
            blocks: Dense blocks in order.
            kind: Model role stored in checkpoints.
            leaky_slope: Negative slope of LeakyReLU activations.

        Raises:
            UsageError: If adjacent block widths do not chain.
        """
        for prev, nxt in zip(blocks, blocks[1:], strict=False):
            if prev.dense.out_dim != nxt.dense.in_dim:
                msg = (
                    f"block widths do not chain: {prev.dense.out_dim} "
                    f"-> {nxt.dense.in_dim}"
                )
                raise UsageError(msg)
        self.blocks = list(blocks)
        self.kind = kind
        self.leaky_slope = leaky_slope

    @property
    def in_dim(self) -> int:
        """Input width."""
        return self.blocks[0].dense.in_dim

    @property
    def out_dim(self) -> int:
        """Output width."""
        return self.blocks[-1].dense.out_dim

    def parameters(self) -> Parameters:
        """Trainable arrays keyed by name, in declaration order."""
        params = {}
        for index, block in enumerate(self.blocks):
            for name, value in block.dense.parameters().items():
                params[f"{index}.dense.{name}"] = value
            if block.batchnorm is not None:
                for name, value in block.batchnorm.parameters().items():
                    params[f"{index}.bn.{name}"] = value
        return params

    def buffers(self) -> Parameters:
        """Running batch-norm statistics keyed by name."""
        return {
            f"{index}.bn.{name}": value
            for index, block in enumerate(self.blocks)
            if block.batchnorm is not None
            for name, value in block.batchnorm.buffers().items()
        }

    def num_parameters(self) -> int:
        """Number of trainable scalars."""
        return sum(value.size for value in self.parameters().values())

    def architecture(self) -> ArchitectureDescriptor:
        """Descriptor stored in checkpoints."""
        first_bn = next(
            (b.batchnorm for b in self.blocks if b.batchnorm is not None),
            None,
        )
        return ArchitectureDescriptor(
            kind=self.kind,
            dense=tuple(
                DenseSpec(
                    block.dense.in_dim,
                    block.dense.out_dim,
                    block.activation,
                    block.batchnorm is not None,
                )
                for block in self.blocks
            ),
            leaky_slope=self.leaky_slope,
            bn_momentum=first_bn.momentum if first_bn else 0.8,
            bn_epsilon=first_bn.epsilon if first_bn else 1e-5,
        )

    def _check_batch(self, batch: Array, mode: Mode) -> None:
        if batch.ndim != 2 or batch.shape[1] != self.in_dim:  # noqa: PLR2004
            msg = f"expected batch of width {self.in_dim}, got {batch.shape}"
            raise UsageError(msg)
        has_bn = any(block.batchnorm for block in self.blocks)
        too_small = batch.shape[0] < 2  # noqa: PLR2004
        if mode is Mode.TRAIN and has_bn and too_small:
            msg = "batch normalization needs at least 2 rows in Train mode"
            raise UsageError(msg)

    def forward(
        self,
        batch: Array,
        mode: Mode,
        *,
        track_running_stats: bool = True,
    ) -> tuple[Array, NetworkCache]:
        """Maps a batch through every block.

        Args:
            batch: Inputs of shape (B, in_dim).
            mode: Forward-pass mode.
            track_running_stats: Whether Train mode updates running
                statistics.

        Raises:
            UsageError: If the batch width is wrong, or a Train-mode batch
                with batch normalization has fewer than two rows.

        Returns:
            Outputs of shape (B, out_dim) and the cache for `backward`.
        """
        self._check_batch(batch, mode)
        caches = []
        x = batch
        for block in self.blocks:
            z = block.dense.forward(x)
            bn_cache = None
            if block.batchnorm is not None:
                z, bn_cache = block.batchnorm.forward(
                    z,
                    mode,
                    track_running_stats=track_running_stats,
                )
            out = activate(block.activation, z, self.leaky_slope)
            caches.append(BlockCache(x, bn_cache, z, out))
            x = out
        return x, NetworkCache(mode, caches)

    def activation_pattern(self, cache: NetworkCache) -> Pattern:
        """Flattened LeakyReLU decisions of a forward pass."""
        parts = [
            (step.z > 0).ravel().astype(np.int64)
            for block, step in zip(self.blocks, cache.blocks, strict=True)
            if block.activation is ActivationKind.LEAKY_RELU
        ]
        return np.concatenate(parts) if parts else np.zeros(0, np.int64)

    def backward(
        self,
        cache: NetworkCache,
        grad_output: Array,
    ) -> tuple[Parameters, Array]:
        """Back-propagates an output gradient.

        Args:
            cache: Cache of a Train-mode forward pass.
            grad_output: Gradient of the loss by the outputs.

        Raises:
            UsageError: If the cache comes from an Infer-mode pass.

        Returns:
            Gradients keyed like `parameters` and the input gradient.
        """
        if cache.mode is not Mode.TRAIN:
            msg = "Infer-mode caches cannot back-propagate"
            raise UsageError(msg)
        grads: Parameters = {}
        grad = grad_output
        for index in reversed(range(len(self.blocks))):
            block, step = self.blocks[index], cache.blocks[index]
            grad = grad * activation_grad(
                block.activation,
                step.z,
                step.out,
                self.leaky_slope,
            )
            if block.batchnorm is not None and step.bn is not None:
                bn_grads, grad = block.batchnorm.backward(step.bn, grad)
                for name, value in bn_grads.items():
                    grads[f"{index}.bn.{name}"] = value
            dense_grads, grad = block.dense.backward(step.x, grad)
            for name, value in dense_grads.items():
                grads[f"{index}.dense.{name}"] = value
        return {name: grads[name] for name in self.parameters()}, grad


def init_network(  # noqa: PLR0913
    layer_dims: Sequence[int],
    activations: Sequence[ActivationKind],
    batchnorm_flags: Sequence[bool],
    seed: int,
    *,
    kind: str = "network",
    leaky_slope: float = 0.2,
    bn_momentum: float = 0.8,
) -> Network:
    """Builds a Glorot-initialized network.

    Args:
        layer_dims: Widths, input first; one block per consecutive pair.
        activations: Activation of each block.
        batchnorm_flags: Whether each block normalizes.
        seed: Initialization seed.
        kind: Model role stored in checkpoints.
        leaky_slope: Negative slope of LeakyReLU activations.
        bn_momentum: Running-statistics momentum.

    Raises:
        UsageError: If the per-block sequences do not match the widths.

    Returns:
        The network, with zero biases, unit scales and zero shifts.
    """
    count = len(layer_dims) - 1
    if count < 1 or not len(activations) == len(batchnorm_flags) == count:
        msg = "need one activation and one batch-norm flag per block"
        raise UsageError(msg)
    rng = make_rng(seed)
    blocks = []
    for index in range(count):
        fan_in, fan_out = layer_dims[index], layer_dims[index + 1]
        dense = DenseLayer(
            glorot_uniform(rng, fan_in, fan_out, (fan_in, fan_out)),
            np.zeros(fan_out),
        )
        batchnorm = (
            BatchNormLayer(fan_out, momentum=bn_momentum)
            if batchnorm_flags[index]
            else None
        )
        blocks.append(Block(dense, batchnorm, activations[index]))
    return Network(blocks, kind=kind, leaky_slope=leaky_slope)


def network_from_architecture(arch: ArchitectureDescriptor) -> Network:
    """Builds a zero-initialized network matching a descriptor.

    Args:
        arch: Architecture descriptor with no convolution blocks.

    Returns:
        A network ready to receive checkpoint parameters.
    """
    blocks = [
        Block(
            DenseLayer(
                np.zeros((spec.in_dim, spec.out_dim)),
                np.zeros(spec.out_dim),
            ),
            BatchNormLayer(
                spec.out_dim,
                momentum=arch.bn_momentum,
                epsilon=arch.bn_epsilon,
            )
            if spec.batchnorm
            else None,
            spec.activation,
        )
        for spec in arch.dense
    ]
    return Network(blocks, kind=arch.kind, leaky_slope=arch.leaky_slope)
