"""Cross-validated choice of the penalty level, selection metrics and refitting."""

from dataclasses import dataclass, field

import numpy as np
from joblib import Parallel, delayed
from threadpoolctl import threadpool_limits

from ._validation import DegenerateFoldError, GradselError, check_positive
from .gmd import Problem, SolverSettings
from .kernels import build_context, gaussian_kernel, heuristic_bandwidth
from .path import adaptive_weights, fit_path
from .ridge import fit_margin_ridge, tune_ridge_lambda
from .simulate import rng_stream
from .splits import stratified_folds


@dataclass
class SelectionReport:
    """Outcome of cross-validating a path.

    ``selected`` holds 1-based variable indices; ``cv_mean`` and ``cv_se``
    have one entry per grid value.
    """

    selected: list
    lambda_chosen: float
    index: int
    lambdas: np.ndarray
    cv_mean: np.ndarray
    cv_se: np.ndarray
    fold_errors: np.ndarray
    folds: np.ndarray
    path: object = field(repr=False)
    weights: object = field(repr=False)
    refit_model: object = field(default=None, repr=False)
    metrics: dict = None


def _sign(f):
    return np.where(f >= 0, 1.0, -1.0)


def _choose(mean, se, one_se):
    best = int(np.flatnonzero(mean == mean.min())[0])
    if not one_se:
        return best
    # grid is decreasing, so the first index under the bound is the largest lambda
    return int(np.flatnonzero(mean <= mean[best] + se[best])[0])


CV_SCORES = ("refit", "zero_order")


def _fold_errors(data, fold, k, loss, lambdas, weights, settings, knn, convention,
                 cv_score, seed, rep):
    train, val = np.flatnonzero(fold != k), np.flatnonzero(fold == k)
    tr = data.subset(rows=train)
    if np.unique(tr.y).size < 2:
        raise DegenerateFoldError(
            f"degenerate fold {k}: training labels contain a single class",
            module="model_selection")
    if knn is not None:
        knn = min(int(knn), tr.n - 1)
    ctx = build_context(tr, knn=knn, convention=convention)
    path = fit_path(Problem(ctx, tr, loss, settings), weights, grid=lambdas)
    Xv, yv = data.X[val], data.y[val]
    if cv_score == "zero_order":
        Kv = gaussian_kernel(Xv, ctx.X, ctx.sigma2)
        return np.array([np.mean(_sign(Kv @ a[0]) != yv) for a in path.solutions])
    cache = {}
    errs = np.empty(len(lambdas))
    for i, active in enumerate(path.active_sets):
        key = tuple(active)
        if key not in cache:
            model = fit_refit(tr, key, loss, seed=seed, rep=rep, convention=convention)
            cache[key] = float(np.mean(model.predict(Xv) != yv))
        errs[i] = cache[key]
    return errs


def cross_validate(data, loss="logistic", *, folds=10, n_lambda=50, min_ratio=None,
                   gamma=1.0, knn=None, settings=None, weights=None, seed=0, rep=0,
                   one_se=False, cv_score="refit", bandwidth="distance", n_jobs=1):
    """K-fold CV over the penalty path of the full sample.

    Every fold reuses the full-sample grid and penalty weights; bandwidths
    are recomputed on each fold's training part. With ``cv_score="refit"``
    a validation fold is scored by the ridge kernel classifier refitted on
    the fold's active set at each grid value; ``"zero_order"`` scores the
    sign of the fitted classifier block instead.
    """
    if cv_score not in CV_SCORES:
        raise GradselError(f"cv_score must be one of {CV_SCORES}, got {cv_score!r}",
                           module="model_selection")
    settings = settings or SolverSettings()
    with threadpool_limits(limits=1):
        ctx = build_context(data, knn=knn, convention=bandwidth)
        if weights is None:
            weights = adaptive_weights(ctx, data, loss, gamma, seed=seed, rep=rep,
                                       convention=bandwidth)
        path = fit_path(Problem(ctx, data, loss, settings), weights,
                        n_lambda=n_lambda, min_ratio=min_ratio)
        fold = stratified_folds(data.y, folds, rng_stream(seed, rep, "folds"))
        n_folds = int(fold.max()) + 1
        errs = Parallel(n_jobs=n_jobs, prefer="threads")(
            delayed(_fold_errors)(data, fold, k, loss, path.lambdas, weights, settings, knn,
                                  bandwidth, cv_score, seed, rep)
            for k in range(n_folds))
    errs = np.array(errs)
    mean = errs.mean(axis=0)
    se = errs.std(axis=0, ddof=1) / np.sqrt(n_folds)
    idx = _choose(mean, se, one_se)
    return SelectionReport(selected=list(path.active_sets[idx]),
                           lambda_chosen=float(path.lambdas[idx]), index=idx,
                           lambdas=path.lambdas, cv_mean=mean, cv_se=se, fold_errors=errs,
                           folds=fold, path=path, weights=weights)


def selection_metrics(selected, truth):
    """``(TP, FP, correct)`` of a selected index set against the true one."""
    selected, truth = set(selected), set(truth)
    tp = len(selected & truth)
    return tp, len(selected - truth), selected == truth


@dataclass
class RefitModel:
    """Ridge kernel classifier on a column subset (0-based ``columns``)."""

    columns: list
    X: np.ndarray = None
    beta: np.ndarray = None
    sigma2: float = None
    ridge_lambda: float = None
    majority: float = None

    @property
    def fallback(self):
        return self.majority is not None

    def decision_function(self, X):
        X = np.asarray(X, dtype=float)
        if self.fallback:
            return np.full(X.shape[0], self.majority)
        return gaussian_kernel(X[:, self.columns], self.X, self.sigma2) @ self.beta

    def predict(self, X):
        return _sign(self.decision_function(X))


def fit_refit(train, selected, loss="logistic", refit_ridge=None, seed=0, rep=0,
              convention="distance"):
    """Fit the post-selection classifier on the selected (1-based) columns."""
    p = train.p
    selected = sorted({int(s) for s in selected})
    if any(not 1 <= s <= p for s in selected):
        raise GradselError(f"selected indices must lie in [1, {p}], got {selected}",
                           module="model_selection")
    columns = [s - 1 for s in selected]
    if not columns:
        pos = np.sum(train.y > 0)
        return RefitModel(columns=[], majority=1.0 if pos >= train.n - pos else -1.0)
    X = train.X[:, columns]
    if refit_ridge is None:
        refit_ridge, _ = tune_ridge_lambda(X, train.y, loss,
                                           rng_stream(seed, rep, "ridge_folds"),
                                           convention=convention)
    check_positive(refit_ridge, "refit_ridge")
    sigma2 = heuristic_bandwidth(X, convention)
    fit = fit_margin_ridge(gaussian_kernel(X, X, sigma2), train.y, loss, refit_ridge)
    return RefitModel(columns=columns, X=X, beta=fit.beta, sigma2=sigma2,
                      ridge_lambda=float(refit_ridge))


def refit_predict(train, selected, loss, test, refit_ridge=None, seed=0, rep=0,
                  convention="distance"):
    """Refit on the selected columns and score the test set.

    Returns ``(labels, error_rate, model)``. An empty selection predicts the
    training majority class (``model.fallback`` is then true).
    """
    with threadpool_limits(limits=1):
        model = fit_refit(train, selected, loss, refit_ridge, seed, rep, convention)
        labels = model.predict(test.X)
    return labels, float(np.mean(labels != test.y)), model

