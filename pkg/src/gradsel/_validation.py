"""Input validation helpers shared by the estimators and the functional API."""

import numbers

import numpy as np
from sklearn.utils.validation import check_array, check_consistent_length


class GradselError(ValueError):
    """Base error; ``module`` names the component that raised it."""

    module = "gradsel"

    def __init__(self, message, module=None):
        super().__init__(message)
        if module is not None:
            self.module = module


class DegenerateSampleError(GradselError):
    pass


class InsufficientDataError(GradselError):
    pass


class DegenerateMajorizerError(GradselError):
    pass


class ConvergenceError(GradselError):
    pass


class DegenerateFoldError(GradselError):
    pass


class NoSignalError(GradselError):
    pass


def check_labels(y):
    """Return ``y`` as a float array of -1/+1, raising on anything else."""
    y = np.asarray(y)
    if y.ndim != 1:
        raise GradselError(f"labels must be one-dimensional, got shape {y.shape}")
    values = np.unique(y)
    if not np.all(np.isin(values, (-1, 1))):
        raise GradselError(
            f"labels must be -1 or +1, got distinct values {values.tolist()}"
        )
    return y.astype(float)


def encode_labels(y):
    """Map an arbitrary two-class label vector onto -1/+1.

    Returns the encoded vector and the pair ``classes`` such that
    ``classes[0]`` maps to -1 and ``classes[1]`` to +1.
    """
    y = np.asarray(y)
    classes = np.unique(y)
    if classes.size != 2:
        raise GradselError(
            f"binary labels required, got distinct values {classes.tolist()}"
        )
    return np.where(y == classes[1], 1.0, -1.0), classes


def check_X(X, *, min_samples=2):
    X = check_array(X, dtype=np.float64, ensure_all_finite=True,
                    ensure_min_samples=1)
    if X.shape[0] < min_samples:
        raise InsufficientDataError(
            f"need at least {min_samples} samples, got {X.shape[0]}"
        )
    return X


def check_X_y(X, y):
    X = check_X(X)
    y = check_labels(y)
    check_consistent_length(X, y)
    return X, y


def check_positive(value, name, *, strict=True):
    if not isinstance(value, numbers.Real) or not np.isfinite(value):
        raise GradselError(f"{name} must be a finite real number, got {value!r}")
    if value < 0 or (strict and value == 0):
        bound = "> 0" if strict else ">= 0"
        raise GradselError(f"{name} must be {bound}, got {value!r}")
    return float(value)
