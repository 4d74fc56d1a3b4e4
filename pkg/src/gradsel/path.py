"""Regularization path with sequential strong-rule screening.

The path starts at ``lambda_max``, the smallest penalty at which every
gradient block is zero given a ridge-fitted intercept block, and walks a
geometric grid downwards. At each grid point the strong rule discards
blocks whose previous gradient norm is small; after the restricted fit the
discarded blocks are checked against their KKT condition and any violators
are added back before the fit is repeated.
"""

from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import brentq

from ._validation import ConvergenceError, GradselError, NoSignalError, check_positive
from .gmd import (PenaltyWeights, Problem, SolverSettings, default_lambda0,
                  pilot_intercept_fit)
from .kernels import cross_derivative_norm, gaussian_kernel
from .ridge import fit_margin_ridge, tune_ridge_lambda
from .simulate import rng_stream

THETA_MAX = 1e6
# relative headroom so solver tolerance cannot leave a block just active at lambda_max
LAMBDA_MAX_MARGIN = 1e-5


def adaptive_weights(context, data, loss, gamma=1.0, ridge_lambda=None, seed=0, rep=0,
                     theta_max=THETA_MAX, convention="distance"):
    """Penalty weights ``theta_l = min(theta_max, |d f~/d x_l|_H^-gamma)``.

    ``f~`` is the ridge-penalized kernel classifier; its ridge level is
    chosen by 5-fold CV (bandwidths by ``convention``) unless
    ``ridge_lambda`` is given. ``gamma = 0`` returns uniform weights without
    fitting anything.
    """
    gamma = check_positive(gamma, "gamma", strict=False)
    p = context.p
    if gamma == 0:
        return PenaltyWeights(np.ones(p), theta0=1.0, gamma=0.0)
    if ridge_lambda is None:
        ridge_lambda, _ = tune_ridge_lambda(context.X, data.y, loss,
                                            rng_stream(seed, rep, "ridge_folds"),
                                            convention=convention)
    fit = fit_margin_ridge(context.K, data.y, loss, ridge_lambda)
    norms = np.array([cross_derivative_norm(context, fit.beta, ell)
                      for ell in range(1, p + 1)])
    with np.errstate(divide="ignore"):
        theta = np.where(norms > 0, norms ** -gamma, np.inf)
    theta = np.minimum(theta, theta_max)
    return PenaltyWeights(theta, theta0=1.0, gamma=gamma)


def _entry_level(problem, weights, pilot):
    norms = np.linalg.norm(pilot.gradient[1:], axis=1)
    return float(np.max(norms / weights.theta))


def lambda_max(problem, weights, lambda0=None):
    """``max_l |grad_l L((alpha0_pilot, 0))| / theta_l``.

    With ``lambda0`` given, the intercept pilot is fitted at that ridge level
    and the formula is evaluated once. By default the pilot level is made
    self-consistent: the returned value ``lam`` satisfies the formula with
    the pilot fitted at ``lam`` itself, so every gradient block is exactly
    zero at ``lam`` and some block enters just below it.

    Returns ``(lambda_max, pilot_fit)``.
    """
    if lambda0 is not None:
        pilot, _ = pilot_intercept_fit(problem, weights, lambda0)
        value = _entry_level(problem, weights, pilot)
        if not value > 0:
            raise NoSignalError("no signal: every gradient block is zero at the pilot fit",
                                module="reg_path")
        return value, pilot

    state = {"alpha": None}

    def excess(log_lam):
        fit = problem.fit(float(np.exp(log_lam)), weights, warm_start=state["alpha"],
                          blocks=())
        state["alpha"] = fit.alpha
        level = _entry_level(problem, weights, fit)
        return np.log(level) - log_lam if level > 0 else -np.inf

    # h(lam) stays bounded while lam grows, so doubling finds an upper bracket
    hi = np.log(max(default_lambda0(problem, weights) * 100.0, np.finfo(float).tiny))
    for _ in range(200):
        if excess(hi) <= 0:
            break
        hi += np.log(2.0)
    lo = hi - np.log(2.0)
    for _ in range(200):
        if excess(lo) > 0:
            break
        hi, lo = lo, lo - np.log(2.0)
    else:
        raise NoSignalError("no signal: every gradient block is zero at the pilot fit",
                            module="reg_path")
    root = brentq(excess, lo, hi, xtol=1e-10)
    value = float(np.exp(root)) * (1.0 + LAMBDA_MAX_MARGIN)
    pilot = problem.fit(value, weights, warm_start=state["alpha"], blocks=())
    return value, pilot


def default_min_ratio(n, p):
    return 0.05 if p > n else 0.01


def lambda_grid(lam_max, n_lambda=50, min_ratio=0.01):
    """Log-uniform grid from ``lam_max`` down to ``min_ratio * lam_max``."""
    lam_max = check_positive(lam_max, "lambda_max")
    n_lambda = int(n_lambda)
    if n_lambda < 1:
        raise GradselError(f"n_lambda must be >= 1, got {n_lambda}", module="reg_path")
    if not 0 < min_ratio < 1:
        raise GradselError(f"min_ratio must lie in (0, 1), got {min_ratio}",
                           module="reg_path")
    if n_lambda == 1:
        return np.array([lam_max])
    grid = lam_max * np.logspace(0.0, np.log10(min_ratio), n_lambda)
    grid[0] = lam_max
    return grid


def strong_rule_screen(grad_prev, weights, lambda_k, lambda_prev):
    """Blocks (1-based) kept by the sequential strong rule.

    ``grad_prev`` holds one row per block, row 0 being the intercept block,
    which is never screened and is not part of the returned set.
    """
    if lambda_k > lambda_prev:
        raise GradselError("strong rule needs lambda_k <= lambda_prev", module="reg_path")
    norms = np.linalg.norm(np.asarray(grad_prev)[1:], axis=1)
    keep = ~(norms < weights.theta * (2.0 * lambda_k - lambda_prev))
    return {int(ell) + 1 for ell in np.flatnonzero(keep)}


@dataclass
class PathResult:
    lambdas: np.ndarray
    fits: list
    active_sets: list
    screened_sets: list
    violation_counts: list
    weights: PenaltyWeights
    lambda_max: float
    lambda0: float
    discarded: list = field(default_factory=list)

    @property
    def solutions(self):
        return [f.alpha for f in self.fits]

    @property
    def block_norms(self):
        return np.array([f.block_norms for f in self.fits])

    @property
    def discard_fraction(self):
        """Share of (block, lambda) pairs dropped by the strong rule before repair."""
        p = len(self.weights.theta)
        return float(sum(self.discarded)) / (p * len(self.lambdas))

    @property
    def converged(self):
        return all(f.converged for f in self.fits)


def fit_path(problem, weights, grid=None, *, n_lambda=50, min_ratio=None, lambda0=None,
             screen=True):
    """Run the screened path over ``grid`` (built from ``lambda_max`` if omitted).

    With ``screen=False`` every block is updated at every grid point, which
    is the reference the screened path must reproduce.
    """
    lam_max, pilot = lambda_max(problem, weights, lambda0)
    if grid is None:
        if min_ratio is None:
            min_ratio = default_min_ratio(problem.n, problem.p)
        grid = lambda_grid(lam_max, n_lambda, min_ratio)
    grid = np.asarray(grid, dtype=float)
    if grid.ndim != 1 or grid.size == 0 or np.any(grid <= 0) or np.any(np.diff(grid) >= 0):
        raise GradselError("lambda grid must be positive and strictly decreasing",
                           module="reg_path")

    p = problem.p
    everything = set(range(1, p + 1))
    prev_alpha = pilot.alpha
    prev_grad = pilot.gradient
    lam_prev = max(float(grid[0]), lam_max)
    fits, actives, screened, violations, discarded = [], [], [], [], []
    for lam in grid:
        if screen:
            S = strong_rule_screen(prev_grad, weights, lam, lam_prev)
            S |= {int(b) + 1 for b in np.flatnonzero(np.any(prev_alpha[1:] != 0, axis=1))}
        else:
            S = set(everything)
        discarded.append(p - len(S))
        rounds = 0
        while True:
            fit = problem.fit(lam, weights, warm_start=prev_alpha, blocks=S)
            norms = np.linalg.norm(fit.gradient[1:], axis=1)
            V = {ell for ell in everything - S
                 if norms[ell - 1] > lam * weights.theta[ell - 1]}
            if not V:
                break
            rounds += 1
            if rounds > p:
                raise ConvergenceError(
                    f"KKT repair did not terminate at lambda={lam:.6g}", module="reg_path")
            S |= V
        fits.append(fit)
        actives.append(fit.active_set)
        screened.append(sorted(S))
        violations.append(rounds)
        prev_alpha, prev_grad, lam_prev = fit.alpha, fit.gradient, float(lam)

    return PathResult(lambdas=grid, fits=fits, active_sets=actives, screened_sets=screened,
                      violation_counts=violations, weights=weights, lambda_max=lam_max,
                      lambda0=pilot.lam, discarded=discarded)


def decision_function(context, alpha0, X_new):
    """Zero-order classifier ``f(x) = sum_i alpha0_i K(x, x_i)``."""
    return gaussian_kernel(np.asarray(X_new, dtype=float), context.X, context.sigma2) @ alpha0


def path_problem(context, data, loss, settings=None):
    return Problem(context, data, loss, settings or SolverSettings())
