"""Seeded, label-stratified fold assignment."""

import numpy as np

from ._validation import GradselError


def stratified_folds(y, n_folds, rng):
    """Fold index (0 .. n_folds-1) for every sample.

    Samples of each class are shuffled with ``rng`` and dealt round-robin,
    the second class continuing where the first stopped, so each fold's
    class counts differ from the global proportions by at most one.
    """
    y = np.asarray(y)
    n = y.shape[0]
    n_folds = int(n_folds)
    if n_folds < 2:
        raise GradselError(f"folds must be >= 2, got {n_folds}", module="model_selection")
    if n < n_folds:
        raise GradselError(f"need at least {n_folds} samples for {n_folds} folds, got {n}",
                           module="model_selection")
    order = np.concatenate([rng.permutation(np.flatnonzero(y == c))
                            for c in np.unique(y)])
    fold = np.empty(n, dtype=np.intp)
    fold[order] = np.arange(n) % n_folds
    return fold
