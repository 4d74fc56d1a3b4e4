"""Scikit-learn style estimators wrapping the functional API."""

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin
from sklearn.feature_selection import SelectorMixin
from sklearn.utils.validation import check_is_fitted

from ._validation import check_X, encode_labels
from .gmd import SolverSettings
from .kernels import Dataset, gaussian_kernel, heuristic_bandwidth
from .model_selection import cross_validate, fit_refit
from .ridge import fit_margin_ridge, tune_ridge_lambda
from .simulate import rng_stream


class KernelMarginClassifier(ClassifierMixin, BaseEstimator):
    """Gaussian-kernel classifier with a ridge RKHS penalty.

    The bandwidth follows the median heuristic on the training rows. When
    ``ridge_lambda`` is None it is chosen by stratified K-fold CV.
    """

    def __init__(self, loss="logistic", ridge_lambda=None, folds=5, tol=1e-10,
                 max_iter=20000, bandwidth="distance", random_state=0):
        self.loss = loss
        self.bandwidth = bandwidth
        self.ridge_lambda = ridge_lambda
        self.folds = folds
        self.tol = tol
        self.max_iter = max_iter
        self.random_state = random_state

    def fit(self, X, y):
        X = check_X(X)
        y_enc, self.classes_ = encode_labels(y)
        lam = self.ridge_lambda
        if lam is None:
            lam, self.cv_errors_ = tune_ridge_lambda(
                X, y_enc, self.loss, rng_stream(self.random_state, 0, "ridge_folds"),
                folds=self.folds, tol=self.tol, max_iter=self.max_iter,
                convention=self.bandwidth)
        self.sigma2_ = heuristic_bandwidth(X, self.bandwidth)
        fit = fit_margin_ridge(gaussian_kernel(X, X, self.sigma2_), y_enc, self.loss, lam,
                               tol=self.tol, max_iter=self.max_iter)
        self.X_fit_ = X
        self.dual_coef_ = fit.beta
        self.ridge_lambda_ = float(lam)
        self.converged_ = fit.converged
        self.n_features_in_ = X.shape[1]
        return self

    def decision_function(self, X):
        check_is_fitted(self, "dual_coef_")
        X = check_X(X, min_samples=1)
        return gaussian_kernel(X, self.X_fit_, self.sigma2_) @ self.dual_coef_

    def predict(self, X):
        f = self.decision_function(X)
        return self.classes_[(f >= 0).astype(int)]


class GradientSelector(SelectorMixin, ClassifierMixin, BaseEstimator):
    """Variable selection by sparse gradient learning.

    ``fit`` derives adaptive penalty weights, runs the screened penalty path,
    chooses the penalty level by K-fold CV and refits a ridge kernel
    classifier on the selected variables, which ``predict`` then uses.

    Attributes
    ----------
    selected_ : list of int
        1-based indices of the selected variables.
    support_ : ndarray of bool
    lambda_ : float
        CV-chosen penalty level.
    report_ : SelectionReport
    """

    def __init__(self, loss="logistic", gamma=1.0, n_lambda=50, lambda_min_ratio=None,
                 folds=10, knn=None, tol=1e-7, max_cycles=2000, one_se=False,
                 cv_score="refit", bandwidth="distance", refit_ridge=None, random_state=0,
                 n_jobs=1):
        self.loss = loss
        self.gamma = gamma
        self.n_lambda = n_lambda
        self.lambda_min_ratio = lambda_min_ratio
        self.folds = folds
        self.knn = knn
        self.tol = tol
        self.max_cycles = max_cycles
        self.one_se = one_se
        self.cv_score = cv_score
        self.bandwidth = bandwidth
        self.refit_ridge = refit_ridge
        self.random_state = random_state
        self.n_jobs = n_jobs

    def fit(self, X, y):
        X = check_X(X)
        y_enc, self.classes_ = encode_labels(y)
        data = Dataset(X, y_enc)
        settings = SolverSettings(tol=self.tol, max_cycles=self.max_cycles)
        report = cross_validate(
            data, self.loss, folds=self.folds, n_lambda=self.n_lambda,
            min_ratio=self.lambda_min_ratio, gamma=self.gamma, knn=self.knn,
            settings=settings, seed=self.random_state, one_se=self.one_se,
            cv_score=self.cv_score, bandwidth=self.bandwidth, n_jobs=self.n_jobs)
        report.refit_model = fit_refit(data, report.selected, self.loss, self.refit_ridge,
                                       seed=self.random_state, convention=self.bandwidth)
        self.report_ = report
        self.selected_ = list(report.selected)
        self.lambda_ = report.lambda_chosen
        self.lambdas_ = report.lambdas
        self.weights_ = report.weights.theta
        self.support_ = np.zeros(X.shape[1], dtype=bool)
        self.support_[[s - 1 for s in self.selected_]] = True
        self.n_features_in_ = X.shape[1]
        return self

    def _get_support_mask(self):
        check_is_fitted(self, "support_")
        return self.support_

    def decision_function(self, X):
        check_is_fitted(self, "report_")
        X = check_X(X, min_samples=1)
        return self.report_.refit_model.decision_function(X)

    def predict(self, X):
        f = self.decision_function(X)
        return self.classes_[(f >= 0).astype(int)]
