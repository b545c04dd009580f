"""Finite-difference verification of analytic gradients."""

import logging
from collections.abc import Callable, Sequence
from dataclasses import dataclass
from typing import Any

import numpy as np

from fpc_surrogate.nn.base import (
    ArchitectureDescriptor,
    Array,
    Mode,
    Model,
    Parameters,
    Pattern,
)
from fpc_surrogate.seeding import make_rng

logger = logging.getLogger(__name__)

type LossFn = Callable[[Array], tuple[float, Array]]

STEP = 1e-4
DENOMINATOR_FLOOR = 1e-4


@dataclass(frozen=True, slots=True)
class GradCheckReport:
    """Outcome of a gradient check.

    Attributes:
        max_rel_error: Largest relative error over the compared probes.
        passed: Whether at least one probe was compared and
            ``max_rel_error`` is below ``tolerance``.
        tolerance: Pass threshold.
        probed: Parameters compared.
        skipped: Probes discarded because a perturbation crossed a kink.
        worst: Name of the parameter with the largest error.
    """

    max_rel_error: float
    passed: bool
    tolerance: float
    probed: int
    skipped: int
    worst: str


class ScaledGradients:
    """Model whose backward pass scales the parameter gradients.

    Used to confirm that a gradient check fails on a broken backward pass.
    """

    def __init__(self, model: Model, factor: float = 2.0) -> None:
        """Wraps a model.

        Args:
            model: Model to wrap.
            factor: Multiplier of every parameter gradient.
        """
        self.model = model
        self.factor = factor

    def parameters(self) -> Parameters:
        """Parameters of the wrapped model."""
        return self.model.parameters()

    def buffers(self) -> Parameters:
        """Buffers of the wrapped model."""
        return self.model.buffers()

    def forward(
        self,
        batch: Array,
        mode: Mode,
        *,
        track_running_stats: bool = True,
    ) -> tuple[Array, Any]:
        """Unchanged forward pass."""
        return self.model.forward(
            batch,
            mode,
            track_running_stats=track_running_stats,
        )

    def backward(
        self,
        cache: Any,
        grad_output: Array,
    ) -> tuple[Parameters, Array]:
        """Backward pass with scaled parameter gradients."""
        grads, grad_input = self.model.backward(cache, grad_output)
        scaled = {name: self.factor * grad for name, grad in grads.items()}
        return scaled, grad_input

    def activation_pattern(self, cache: Any) -> Pattern:
        """Decisions of the wrapped model."""
        return self.model.activation_pattern(cache)

    def architecture(self) -> ArchitectureDescriptor:
        """Descriptor of the wrapped model."""
        return self.model.architecture()


def quadratic_loss(target: Array) -> LossFn:
    """Builds ``0.5 * sum((output - target) ** 2)``.

    Args:
        target: Array shaped like the model output.

    Returns:
        Loss function returning the loss and its output gradient.
    """

    def loss(output: Array) -> tuple[float, Array]:
        diff = output - target
        return 0.5 * float(np.sum(diff * diff)), diff

    return loss


def relative_error(analytic: float, numeric: float) -> float:
    """Symmetric relative error with a floor on the denominator."""
    scale = max(abs(analytic) + abs(numeric), DENOMINATOR_FLOOR)
    return abs(analytic - numeric) / scale


def gradient_check(  # noqa: PLR0913
    model: Model,
    batch: Array,
    loss_fn: LossFn | None = None,
    tolerance: float = 1e-4,
    *,
    probes: int = 100,
    seed: int = 0,
    names: Sequence[str] | None = None,
) -> GradCheckReport:
    """Compares backward gradients with central finite differences.

    Every evaluation runs in Train mode with running-statistics updates
    disabled, so batch statistics take part in the probe while the buffers
    stay frozen. A probe whose +-h evaluations change any LeakyReLU or
    max-pool decision is skipped.

    Args:
        model: Model under test; its parameters are restored afterwards.
        batch: Input batch.
        loss_fn: Scalar loss of the output; defaults to a quadratic loss
            against standard-normal targets.
        tolerance: Pass threshold on the maximum relative error.
        probes: Number of scalar parameters to compare; kinked probes are
            replaced while candidates remain.
        seed: Seed for the probe choice and the default targets.
        names: Restricts probing to these parameters.

    Returns:
        The comparison report.
    """
    rng = make_rng(seed)
    output, cache = model.forward(batch, Mode.TRAIN, track_running_stats=False)
    loss = loss_fn or quadratic_loss(rng.standard_normal(output.shape))
    _, grad_output = loss(output)
    grads, _ = model.backward(cache, grad_output)
    pattern = model.activation_pattern(cache)

    def evaluate() -> tuple[float, bool]:
        out, probe_cache = model.forward(
            batch,
            Mode.TRAIN,
            track_running_stats=False,
        )
        same = np.array_equal(model.activation_pattern(probe_cache), pattern)
        return loss(out)[0], same

    params = model.parameters()
    chosen = list(names) if names is not None else list(params)
    sizes = np.array([params[name].size for name in chosen], dtype=np.int64)
    total = int(sizes.sum())
    target = min(probes, total)
    offsets = np.cumsum(sizes)
    worst, max_error, probed, skipped = "", 0.0, 0, 0
    # kinked probes are replaced by the next candidate of the permutation
    for pick in rng.permutation(total):
        if probed == target:
            break
        slot = int(np.searchsorted(offsets, pick, side="right"))
        name = chosen[slot]
        index = int(pick - (offsets[slot] - sizes[slot]))
        flat = params[name].reshape(-1)
        original = flat[index]
        flat[index] = original + STEP
        loss_plus, same_plus = evaluate()
        flat[index] = original - STEP
        loss_minus, same_minus = evaluate()
        flat[index] = original
        if not (same_plus and same_minus):
            skipped += 1
            continue
        numeric = (loss_plus - loss_minus) / (2 * STEP)
        error = relative_error(float(grads[name].reshape(-1)[index]), numeric)
        probed += 1
        if error > max_error:
            worst, max_error = name, error
    if probed == 0:
        logger.warning("gradient check compared no parameters")
    report = GradCheckReport(
        max_rel_error=max_error,
        passed=probed > 0 and max_error < tolerance,
        tolerance=tolerance,
        probed=probed,
        skipped=skipped,
        worst=worst,
    )
    logger.info(
        "gradient check: max_rel_error=%.3e probed=%d skipped=%d",
        max_error,
        probed,
        skipped,
    )
    return report
