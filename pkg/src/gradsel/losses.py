"""Margin losses with their derivatives and quadratic-majorization constants."""

from dataclasses import dataclass

import numpy as np
from scipy.special import expit

from ._validation import GradselError

LOSS_ALIASES = {
    "logistic": "logistic",
    "logit": "logistic",
    "squared_hinge": "squared_hinge",
    "sqhinge": "squared_hinge",
    "hinge2": "squared_hinge",
}

# Curvature bounds: sup L'' is 1/4 for the logistic loss and 2 for
# max(0, 1 - m)^2, which is what a valid quadratic majorizer needs.
_QM_CONSTANTS = {"logistic": 0.25, "squared_hinge": 2.0}


@dataclass(frozen=True)
class Loss:
    """A margin loss ``L(m)``; ``m = y f(x)``."""

    kind: str

    def __post_init__(self):
        if self.kind not in _QM_CONSTANTS:
            raise GradselError(
                f"unknown loss {self.kind!r}; expected one of "
                f"{sorted(LOSS_ALIASES)}", module="loss_functions"
            )

    @property
    def qm_constant(self):
        return _QM_CONSTANTS[self.kind]

    def value(self, m):
        m = np.asarray(m, dtype=float)
        if self.kind == "logistic":
            # log(1 + exp(-m)), switching form below m = -30 to avoid overflow
            safe = np.maximum(m, -30.0)
            low = np.minimum(m, -30.0)
            out = np.where(m < -30.0, -low + np.log1p(np.exp(low)),
                           np.log1p(np.exp(-safe)))
        else:
            out = np.maximum(0.0, 1.0 - m) ** 2
        return out if out.ndim else float(out)

    def derivative(self, m):
        m = np.asarray(m, dtype=float)
        if self.kind == "logistic":
            out = -expit(-m)
        else:
            out = -2.0 * np.maximum(0.0, 1.0 - m)
        return out if out.ndim else float(out)

    def __str__(self):
        return self.kind


def get_loss(loss):
    """Resolve a loss name (or pass through a :class:`Loss`)."""
    if isinstance(loss, Loss):
        return loss
    try:
        return Loss(LOSS_ALIASES[str(loss).lower()])
    except KeyError:
        raise GradselError(
            f"unknown loss {loss!r}; expected one of {sorted(LOSS_ALIASES)}",
            module="loss_functions",
        ) from None


def qm_constant(loss):
    return get_loss(loss).qm_constant


def gradient_bound_constant(loss, grid=None):
    """Smallest ``c`` with ``L'(m)^2 <= c L(m)`` found on a margin grid.

    This constant only enters the convergence theory; the solver never
    uses it.
    """
    loss = get_loss(loss)
    if grid is None:
        grid = np.linspace(-50.0, 50.0, 200001)
    val = loss.value(grid)
    der = loss.derivative(grid)
    keep = val > 0
    return float(np.max(der[keep] ** 2 / val[keep]))
