"""Conversion between trained models and FPCM v1 payloads."""

from typing import Any

import numpy as np

from fpc_surrogate import __version__
from fpc_surrogate.design_space import CellGeometry
from fpc_surrogate.exceptions import StorageError, UsageError
from fpc_surrogate.formats import CheckpointPayload
from fpc_surrogate.gan import GanSurrogate, PredictionPolicy
from fpc_surrogate.nn.base import Array, Model, Parameters
from fpc_surrogate.nn.conv import ConvNet, convnet_from_architecture
from fpc_surrogate.nn.network import Network, network_from_architecture
from fpc_surrogate.oracle import NormalizationStats

NORM_LOW = "normalization.low"
NORM_HIGH = "normalization.high"


def _flatten(arrays: Parameters) -> Array:
    if not arrays:
        return np.zeros(0)
    return np.concatenate([value.ravel() for value in arrays.values()])


def _assign(target: Parameters, flat: Array, what: str) -> None:
    expected = sum(value.size for value in target.values())
    if flat.size != expected:
        msg = f"checkpoint holds {flat.size} {what}, model needs {expected}"
        raise StorageError(msg)
    offset = 0
    for value in target.values():
        value[...] = flat[offset : offset + value.size].reshape(value.shape)
        offset += value.size


def model_payload(
    model: Model,
    oracle_version: str,
    *,
    stats: NormalizationStats | None = None,
    metadata: dict[str, Any] | None = None,
) -> CheckpointPayload:
    """Packs a model into a checkpoint payload.

    Args:
        model: Trained model.
        oracle_version: Oracle that labelled the training data.
        stats: Response statistics stored beside the parameters.
        metadata: Provenance; the tool version is added.

    Returns:
        The payload.
    """
    extras: dict[str, Array] = {}
    if stats is not None:
        extras = {NORM_LOW: stats.low, NORM_HIGH: stats.high}
    return CheckpointPayload(
        architecture=model.architecture(),
        oracle_version=oracle_version,
        parameters=_flatten(model.parameters()),
        buffers=_flatten(model.buffers()),
        extras=extras,
        metadata={"tool_version": __version__, **(metadata or {})},
    )


def restore_model(payload: CheckpointPayload) -> Network | ConvNet:
    """Rebuilds the model stored in a payload.

    Args:
        payload: Decoded checkpoint.

    Raises:
        StorageError: If the parameter counts do not match the descriptor.

    Returns:
        The model with its parameters and running statistics.
    """
    arch = payload.architecture
    model: Network | ConvNet = (
        convnet_from_architecture(arch)
        if arch.conv
        else network_from_architecture(arch)
    )
    _assign(model.parameters(), payload.parameters, "parameters")
    _assign(model.buffers(), payload.buffers, "running statistics")
    return model


def restore_stats(payload: CheckpointPayload) -> NormalizationStats:
    """Reads the response statistics stored with a model.

    Args:
        payload: Decoded checkpoint.

    Raises:
        UsageError: If the checkpoint carries no statistics.

    Returns:
        The statistics.
    """
    try:
        return NormalizationStats(
            payload.extras[NORM_LOW],
            payload.extras[NORM_HIGH],
        )
    except KeyError as error:
        msg = "checkpoint carries no normalization statistics"
        raise UsageError(msg) from error


def restore_surrogate(
    payload: CheckpointPayload,
    policy: PredictionPolicy | None = None,
) -> GanSurrogate:
    """Rebuilds a generator checkpoint as a surrogate.

    Args:
        payload: Decoded generator checkpoint.
        policy: Noise policy; defaults to the one recorded at training.

    Raises:
        UsageError: If the checkpoint is not a generator.

    Returns:
        The surrogate.
    """
    if payload.architecture.kind != "generator":
        kind = payload.architecture.kind
        msg = f"expected a generator checkpoint, got {kind}"
        raise UsageError(msg)
    model = restore_model(payload)
    if not isinstance(model, Network):
        msg = "generator checkpoint describes a convolutional model"
        raise UsageError(msg)
    meta = payload.metadata
    geometry = CellGeometry(
        float(meta.get("cell_side_mm", 30.0)),
        float(meta.get("loop_inset_mm", 2.0)),
    )
    default = PredictionPolicy.average(
        int(meta.get("prediction_noise_draws", 8)),
        int(meta.get("seed", 0)),
    )
    return GanSurrogate(
        model,
        restore_stats(payload),
        geometry,
        policy or default,
    )
