from dataclasses import dataclass, field
from typing import Literal, Self

import numpy as np

from fpc_surrogate.exceptions import UsageError
from fpc_surrogate.nn.base import Model, Parameters, decayed

type Regularization = Literal["decay", "clip"]

ADAM_EPSILON = 1e-8


@dataclass(slots=True)
class AdamState:
    """Adam moments and hyperparameters for one model.

    Attributes:
        lr: Learning rate.
        weight_decay: Regularizer strength; a decay coefficient or a clip
            bound depending on ``regularization``.
        beta1: First-moment decay.
        beta2: Second-moment decay.
        epsilon: Denominator floor.
        regularization: ``decay`` shrinks weights before each update,
            ``clip`` clamps weights into [-weight_decay, weight_decay]
            after it.
        step_count: Updates applied so far.
        first_moment: Per-parameter running gradient mean.
        second_moment: Per-parameter running squared-gradient mean.
    """

    lr: float = 5e-4
    weight_decay: float = 0.01
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = ADAM_EPSILON
    regularization: Regularization = "decay"
    step_count: int = 0
    first_moment: Parameters = field(default_factory=dict)
    second_moment: Parameters = field(default_factory=dict)

    @classmethod
    def for_model(
        cls,
        model: Model,
        lr: float = 5e-4,
        weight_decay: float = 0.01,
        regularization: Regularization = "decay",
    ) -> Self:
        """Creates zeroed moments shaped like the model's parameters.

        Args:
            model: Model to optimize.
            lr: Learning rate.
            weight_decay: Regularizer strength.
            regularization: Regularizer reading.

        Returns:
            A fresh optimizer state.
        """
        params = model.parameters()
        return cls(
            lr=lr,
            weight_decay=weight_decay,
            regularization=regularization,
            first_moment={k: np.zeros_like(v) for k, v in params.items()},
            second_moment={k: np.zeros_like(v) for k, v in params.items()},
        )


def adam_step(model: Model, grads: Parameters, state: AdamState) -> AdamState:
    """Applies one bias-corrected Adam update in place.

    With ``decay`` regularization, weights, kernels and batch-norm scales are
    first shrunk by ``lr * weight_decay`` (decoupled from the moments). Each
    parameter is updated from its own moments only, so the update does not
    depend on parameter order.

    Args:
        model: Model whose parameters are updated.
        grads: Gradients keyed like ``model.parameters()``.
        state: Optimizer state, updated in place.

    Raises:
        UsageError: If gradients and parameters do not match.

    Returns:
        The same state, with ``step_count`` incremented by one.
    """
    params = model.parameters()
    if grads.keys() != params.keys():
        missing = sorted(params.keys() ^ grads.keys())
        msg = f"gradients do not match parameters: {missing[:3]}"
        raise UsageError(msg)
    state.step_count += 1
    step = state.step_count
    correction1 = 1.0 - state.beta1**step
    correction2 = 1.0 - state.beta2**step
    for name, param in params.items():
        grad = grads[name]
        if state.regularization == "decay" and decayed(name):
            param *= 1.0 - state.lr * state.weight_decay
        m = state.first_moment.setdefault(name, np.zeros_like(param))
        v = state.second_moment.setdefault(name, np.zeros_like(param))
        m *= state.beta1
        m += (1.0 - state.beta1) * grad
        v *= state.beta2
        v += (1.0 - state.beta2) * grad * grad
        m_hat = m / correction1
        v_hat = v / correction2
        param -= state.lr * m_hat / (np.sqrt(v_hat) + state.epsilon)
        if state.regularization == "clip" and name.endswith(
            (".weights", ".kernels"),
        ):
            np.clip(param, -state.weight_decay, state.weight_decay, out=param)
    return state
