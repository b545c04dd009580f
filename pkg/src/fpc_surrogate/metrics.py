from enum import StrEnum

import numpy as np

from fpc_surrogate.exceptions import UsageError
from fpc_surrogate.formats import SEGMENT
from fpc_surrogate.nn.base import Array


class Segment(StrEnum):
    """Part of a response vector scored by `nmse`."""

    AR = "axial_ratio"
    RL = "return_loss"
    GAIN = "gain"
    ALL = "all"

    @property
    def columns(self) -> slice:
        """Columns of the segment inside a response vector."""
        match self:
            case Segment.AR:
                return slice(0, SEGMENT)
            case Segment.RL:
                return slice(SEGMENT, 2 * SEGMENT)
            case Segment.GAIN:
                return slice(2 * SEGMENT, 3 * SEGMENT)
            case Segment.ALL:
                return slice(0, 3 * SEGMENT)


def nmse(
    real: Array,
    predicted: Array,
    segment: Segment = Segment.ALL,
) -> float:
    """Normalized mean squared error ``sum|y - y_hat|^2 / sum|y|^2``.

    Args:
        real: True response vectors in physical units, one per row.
        predicted: Predicted response vectors, same shape.
        segment: Columns to score.

    Raises:
        UsageError: If the shapes differ.

    Returns:
        The error; zero for exact predictions.
    """
    real, predicted = np.atleast_2d(real), np.atleast_2d(predicted)
    if real.shape != predicted.shape:
        msg = f"shape mismatch: {real.shape} vs {predicted.shape}"
        raise UsageError(msg)
    y = real[:, segment.columns]
    error = float(np.sum((y - predicted[:, segment.columns]) ** 2))
    energy = float(np.sum(y * y))
    if energy == 0.0:
        return 0.0 if error == 0.0 else float("inf")
    return error / energy


def segment_nmse(real: Array, predicted: Array) -> dict[Segment, float]:
    """`nmse` of every segment, in `Segment` order."""
    return {segment: nmse(real, predicted, segment) for segment in Segment}


def mean_predictor(train_responses: Array, count: int) -> Array:
    """Predicts the mean training response for ``count`` entries."""
    return np.tile(train_responses.mean(axis=0), (count, 1))
