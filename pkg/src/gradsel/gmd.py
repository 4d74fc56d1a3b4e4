"""Groupwise majorization-descent for the gradient-learning objective.

The coefficients are stored as a ``(p + 1, n)`` array ``alpha`` whose row 0
is the representer expansion of the classifier ``f`` and whose row ``ell``
expands the ``ell``-th partial derivative ``g_ell``. For a pair ``(i, j)``
the first-order margin is

    m_ij = (K alpha_0)_j + sum_ell (x_i,ell - x_j,ell) (K alpha_ell)_j

and the objective is

    (1/n^2) sum_ij W_ij L(y_i m_ij)
        + lam (theta0/2 |alpha_0|^2 + sum_ell theta_ell |alpha_ell|_2).

The solver works with the ``n x n`` matrix ``P = y_i m_ij`` and refreshes
the gradient after every block update so that each update minimizes a
valid blockwise majorizer.
"""

import dataclasses
from dataclasses import dataclass, field

import numpy as np

from ._validation import (
    ConvergenceError,
    DegenerateMajorizerError,
    GradselError,
    check_positive,
)
from . import _inner
from .losses import get_loss


@dataclass(frozen=True)
class PenaltyWeights:
    """Ridge weight on the intercept block and group weights on the gradient blocks."""

    theta: np.ndarray
    theta0: float = 1.0
    gamma: float = 0.0

    def __post_init__(self):
        theta = np.asarray(self.theta, dtype=float).ravel()
        if theta.size == 0 or not np.all(np.isfinite(theta)) or np.any(theta <= 0):
            raise GradselError("penalty weights must be positive and finite")
        check_positive(self.theta0, "theta0")
        object.__setattr__(self, "theta", theta)

    @classmethod
    def uniform(cls, p, theta0=1.0):
        return cls(np.ones(p), theta0=theta0, gamma=0.0)

    def scaled(self, c):
        return PenaltyWeights(self.theta * c, self.theta0, self.gamma)


@dataclass(frozen=True)
class SolverSettings:
    """Controls for one GMD fit.

    ``majorizer="eta"`` bounds each block's curvature by its largest
    eigenvalue (closed-form updates, slow on ill-conditioned kernels);
    ``"block"`` uses the full block curvature matrix, whose updates need an
    eigendecomposition per block and a scalar root solve. Both are valid
    majorizers of the same convex objective.

    A fit is converged when the relative objective decrease over a full
    cycle drops below ``tol`` and the relative KKT residuals of the updated
    blocks are below ``kkt_tol`` (default ``10 * tol``; ``inf`` disables the
    KKT check).
    """

    tol: float = 1e-7
    max_cycles: int = 2000
    eta_power_iters: int = 10000
    eta_tol: float = 1e-12
    eta_inflation: float = 1.0 + 1e-6
    majorizer: str = "block"
    kkt_tol: float = None

    def __post_init__(self):
        check_positive(self.tol, "tol")
        check_positive(self.eta_tol, "eta_tol")
        if int(self.max_cycles) < 1:
            raise GradselError(f"max_cycles must be >= 1, got {self.max_cycles}")
        if int(self.eta_power_iters) < 1:
            raise GradselError("eta_power_iters must be >= 1")
        if not self.eta_inflation >= 1.0:
            raise GradselError(
                f"eta_inflation must be >= 1, got {self.eta_inflation}"
            )
        if self.majorizer not in ("eta", "block"):
            raise GradselError(
                f"majorizer must be 'eta' or 'block', got {self.majorizer!r}"
            )
        if self.kkt_tol is not None:
            check_positive(self.kkt_tol, "kkt_tol")

    @property
    def kkt_threshold(self):
        return 10.0 * float(self.tol) if self.kkt_tol is None else float(self.kkt_tol)

    def replace(self, **changes):
        return dataclasses.replace(self, **changes)


@dataclass
class FitResult:
    """Solution of one penalized fit plus solver diagnostics."""

    alpha: np.ndarray
    lam: float
    objective: float
    converged: bool
    n_cycles: int
    objective_trace: list
    gradient: np.ndarray = field(repr=False)
    kkt: dict = field(default_factory=dict)

    @property
    def block_norms(self):
        return np.linalg.norm(self.alpha[1:], axis=1)

    @property
    def active_set(self):
        """1-based indices of the nonzero gradient blocks."""
        return [int(ell) + 1 for ell in np.flatnonzero(np.any(self.alpha[1:] != 0, axis=1))]


class Problem:
    """A kernel context bound to labels and a loss.

    Caches the label-weighted smoothing matrix and the majorizer
    eigenvalues so repeated fits (a path, a warm start) reuse them.
    """

    def __init__(self, context, data, loss, settings=None):
        y = np.asarray(data.y if hasattr(data, "y") else data, dtype=float)
        if y.shape[0] != context.n:
            raise GradselError(
                f"context has {context.n} samples but {y.shape[0]} labels given",
                module="gmd_solver",
            )
        self.context = context
        self.y = y
        self.loss = get_loss(loss)
        self.settings = settings or SolverSettings()
        n = context.n
        self.n = n
        self.p = context.p
        self.X = context.X
        self.K = context.K
        self.Wn = context.W / float(n * n)
        self.Wy = self.Wn * y[:, None]
        self._etas = {}
        self._eigs = {}

    # -- margins and loss ---------------------------------------------------

    def margins(self, alpha):
        """The matrix ``P[i, j] = y_i m_ij``."""
        alpha = self._check_alpha(alpha)
        Z = alpha @ self.K
        M = self.X @ Z[1:]
        M += Z[0] - np.einsum("jl,lj->j", self.X, Z[1:])
        M *= self.y[:, None]
        return M

    def loss_term(self, P):
        return float(np.sum(self.Wn * self.loss.value(P)))

    def penalty(self, alpha, weights):
        alpha = self._check_alpha(alpha)
        norms = np.linalg.norm(alpha[1:], axis=1)
        return 0.5 * weights.theta0 * float(alpha[0] @ alpha[0]) + float(weights.theta @ norms)

    def objective(self, alpha, lam, weights):
        return self.loss_term(self.margins(alpha)) + lam * self.penalty(alpha, weights)

    # -- gradients ----------------------------------------------------------

    def _residual(self, P):
        return self.Wy * self.loss.derivative(P)

    def _block_grad(self, G, ell, colsum=None):
        if colsum is None:
            colsum = G.sum(axis=0)
        if ell == 0:
            r = colsum
        else:
            x = self.X[:, ell - 1]
            r = x @ G - x * colsum
        return self.K @ r

    def gradient(self, P, blocks=None):
        """Loss-term gradient, one row per block (all blocks by default)."""
        G = self._residual(P)
        colsum = G.sum(axis=0)
        R = np.empty((self.p + 1, self.n))
        R[0] = colsum
        R[1:] = (G.T @ self.X).T - self.X.T * colsum
        if blocks is None:
            return R @ self.K
        blocks = list(blocks)
        return R[blocks] @ self.K

    # -- majorizer ------------------------------------------------------------

    def block_curvature(self, ell):
        """``d_ell[j] = sum_i W_ij delta_ij,ell^2``."""
        W = self.context.W
        if ell == 0:
            return W.sum(axis=0)
        d = self.context.delta(ell)
        return np.einsum("ij,ij->j", W, d * d)

    def eta(self, ell):
        if ell not in self._etas:
            self._etas[ell] = self._power_iteration(ell)
        return self._etas[ell]

    def _power_iteration(self, ell):
        s = self.settings
        scale = self.loss.qm_constant / float(self.n * self.n)
        d = self.block_curvature(ell) * scale
        if not np.any(d > 0):
            raise DegenerateMajorizerError(
                f"degenerate majorizer for block {ell}: smoothing weights vanish",
                module="gmd_solver",
            )
        K = self.K
        v = np.full(self.n, 1.0 / np.sqrt(self.n))
        rho_old = 0.0
        for _ in range(int(s.eta_power_iters)):
            w = K @ (d * (K @ v))
            rho = float(v @ w)
            nw = np.linalg.norm(w)
            if nw == 0.0:
                raise DegenerateMajorizerError(
                    f"degenerate majorizer for block {ell}", module="gmd_solver"
                )
            if abs(rho - rho_old) <= s.eta_tol * rho:
                return rho * s.eta_inflation
            v = w / nw
            rho_old = rho
        resid = np.linalg.norm(w - rho * v)
        raise ConvergenceError(
            f"power iteration for block {ell} did not converge in "
            f"{s.eta_power_iters} iterations (residual {resid:.3e})",
            module="gmd_solver",
        )

    def _check_alpha(self, alpha):
        alpha = np.asarray(alpha, dtype=float)
        if alpha.shape != (self.p + 1, self.n):
            raise GradselError(
                f"coefficients must have shape {(self.p + 1, self.n)}, "
                f"got {alpha.shape}", module="gmd_solver",
            )
        return alpha

    def block_eigen(self, ell):
        """Eigendecomposition of the block curvature matrix ``H_ell``."""
        if ell not in self._eigs:
            scale = self.loss.qm_constant / float(self.n * self.n)
            d = self.block_curvature(ell) * scale
            if not np.any(d > 0):
                raise DegenerateMajorizerError(
                    f"degenerate majorizer for block {ell}: smoothing weights vanish",
                    module="gmd_solver",
                )
            A = self.K * np.sqrt(d)[None, :]
            lam, Q = np.linalg.eigh(A @ A.T)
            lam = np.maximum(lam, 1e-14 * lam[-1])
            self._eigs[ell] = (lam, np.ascontiguousarray(Q))
        return self._eigs[ell]

    # -- solver -------------------------------------------------------------------

    def _update(self, ell, old, g, lam, weights):
        if self.settings.majorizer == "eta":
            if ell == 0:
                return update_block_ridge(old, g, self.eta(0), lam, weights.theta0)
            return update_block_grouplasso(old, g, self.eta(ell), lam,
                                           weights.theta[ell - 1])
        ev, Q = self.block_eigen(ell)
        c = ev * (old @ Q) - g @ Q
        if ell == 0:
            return Q @ (c / (ev + lam * weights.theta0))
        thr = lam * weights.theta[ell - 1]
        if np.linalg.norm(c) <= thr:
            return np.zeros_like(old)
        t = _inner.secular_norm(c, ev, thr)
        return Q @ (c * t / (ev * t + thr))

    def _kkt_ok(self, P, alpha, lam, weights, order):
        grad = self.gradient(P, blocks=order)
        full = np.zeros_like(alpha)
        full[order] = grad
        sub = FitResult(alpha=alpha, lam=lam, objective=np.nan, converged=False,
                        n_cycles=0, objective_trace=[], gradient=full)
        res = kkt_residuals(sub, weights, blocks=order)
        return max(res.values()) <= self.settings.kkt_threshold

    def fit(self, lam, weights, warm_start=None, blocks=None):
        """Cyclic GMD at penalty ``lam``.

        ``blocks`` lists the gradient blocks (1-based) that are updated;
        every other block is held at its warm-start value. Block 0 is
        always updated.
        """
        lam = check_positive(lam, "lambda", strict=False)
        s = self.settings
        p, n = self.p, self.n
        if blocks is None:
            blocks = range(1, p + 1)
        order = [0] + sorted({int(b) for b in blocks})
        if any(not 1 <= b <= p for b in order[1:]):
            raise GradselError(f"block indices must lie in [1, {p}]", module="gmd_solver")
        if len(weights.theta) != p:
            raise GradselError(f"need {p} penalty weights, got {len(weights.theta)}",
                               module="gmd_solver")
        for ell in order:
            if s.majorizer == "eta":
                self.eta(ell)
            else:
                self.block_eigen(ell)

        if warm_start is None:
            alpha = np.zeros((p + 1, n))
        else:
            alpha = np.array(self._check_alpha(warm_start), dtype=float)

        kind = _inner.LOSS_CODES[self.loss.kind]
        X, K, y, Wy, Wn = self.X, self.K, self.y, self.Wy, self.Wn
        cols = [np.ones(n)] + [np.ascontiguousarray(X[:, j]) for j in range(p)]
        yas = [y * c for c in cols]
        zero = np.zeros(n)
        colsum = np.empty(n)
        xg = np.empty(n)

        P = self.margins(alpha)
        loss = _inner.sweep(kind, P, Wy, Wn, y, y, zero, zero, zero, colsum, xg, True)
        F = loss + lam * self.penalty(alpha, weights)
        if not np.isfinite(F):
            raise GradselError("objective is not finite", module="gmd_solver")
        trace = [F]
        converged = False
        next_kkt_check = 0
        cycles = 0
        last = len(order) - 1
        for cycles in range(1, int(s.max_cycles) + 1):
            for idx, ell in enumerate(order):
                r = colsum.copy() if ell == 0 else xg - cols[ell] * colsum
                g = K @ r
                old = alpha[ell]
                new = self._update(ell, old, g, lam, weights)
                diff = new - old
                xb = zero if idx == last else cols[order[idx + 1]]
                if np.any(diff):
                    alpha[ell] = new
                    z = K @ diff
                    w = zero if ell == 0 else cols[ell] * z
                    loss = _inner.sweep(kind, P, Wy, Wn, y, yas[ell], z, w, xb,
                                        colsum, xg, idx == last)
                else:
                    loss = _inner.sweep(kind, P, Wy, Wn, y, y, zero, zero, xb,
                                        colsum, xg, idx == last)
            F_new = loss + lam * self.penalty(alpha, weights)
            if not np.isfinite(F_new):
                raise GradselError(
                    f"objective became non-finite at cycle {cycles}",
                    module="gmd_solver",
                )
            trace.append(F_new)
            decrease = F - F_new
            F = F_new
            if decrease <= s.tol * abs(F_new):
                if s.kkt_threshold == np.inf:
                    converged = True
                    break
                if cycles >= next_kkt_check:
                    if self._kkt_ok(P, alpha, lam, weights, order):
                        converged = True
                        break
                    next_kkt_check = cycles + 10

        grad = self.gradient(P)
        result = FitResult(alpha=alpha, lam=lam, objective=F, converged=converged,
                           n_cycles=cycles, objective_trace=trace, gradient=grad)
        result.kkt = kkt_residuals(result, weights)
        return result


def kkt_residuals(result, weights, blocks=None):
    """Relative stationarity residuals of a fit.

    ``intercept``: ``|grad_0 + lam theta0 alpha_0|`` over
    ``|grad_0| + lam theta0 |alpha_0|``. ``active``: worst
    ``|grad_l + lam theta_l alpha_l/|alpha_l|| / (lam theta_l)`` over nonzero
    blocks. ``zero``: worst ``|grad_l| / (lam theta_l) - 1`` over zero blocks
    (positive values are violations).
    """
    alpha, grad, lam = result.alpha, result.gradient, result.lam
    r0 = np.linalg.norm(grad[0] + lam * weights.theta0 * alpha[0])
    scale0 = np.linalg.norm(grad[0]) + lam * weights.theta0 * np.linalg.norm(alpha[0])
    if blocks is None:
        blocks = range(1, alpha.shape[0])
    active_res, zero_excess = 0.0, -1.0
    for ell in blocks:
        if ell == 0:
            continue
        norm_a = np.linalg.norm(alpha[ell])
        t = lam * weights.theta[ell - 1]
        if norm_a > 0:
            res = np.linalg.norm(grad[ell] + t * alpha[ell] / norm_a) / t
            active_res = max(active_res, res)
        elif t > 0:
            zero_excess = max(zero_excess, np.linalg.norm(grad[ell]) / t - 1.0)
    return {
        "intercept": float(r0 / scale0) if scale0 > 0 else 0.0,
        "active": float(active_res),
        "zero": float(zero_excess),
    }


# -- closed-form block updates ---------------------------------------------------


def update_block_ridge(alpha0_old, grad0, eta0, lam, theta0):
    """Minimizer of the quadratic surrogate for the ridge-penalized block."""
    return (eta0 * np.asarray(alpha0_old) - np.asarray(grad0)) / (eta0 + lam * theta0)


def update_block_grouplasso(alpha_old, grad, eta, lam, theta_ell):
    """Group soft-thresholding step; returns exact zeros in the kill zone."""
    v = eta * np.asarray(alpha_old, dtype=float) - np.asarray(grad, dtype=float)
    nv = np.linalg.norm(v)
    thresh = lam * theta_ell
    if nv <= thresh:
        return np.zeros_like(v)
    return (v / eta) * (1.0 - thresh / nv)


# -- functional API ----------------------------------------------------------------


def objective(context, data, loss, alpha, lam, weights):
    return Problem(context, data, loss).objective(alpha, lam, weights)


def gradient_block(context, data, loss, alpha, ell):
    prob = Problem(context, data, loss)
    return prob.gradient(prob.margins(alpha), blocks=[ell])[0]


def majorizer_eigenvalue(context, data, loss, ell, settings=None):
    return Problem(context, data, loss, settings).eta(ell)


def fit_single(context, data, loss, lam, weights, settings=None, warm_start=None,
               blocks=None):
    return Problem(context, data, loss, settings).fit(
        lam, weights, warm_start=warm_start, blocks=blocks
    )


def default_lambda0(problem, weights):
    """One hundredth of ``|grad_0(0)| / theta0``."""
    g0 = problem.gradient(np.zeros((problem.n, problem.n)), blocks=[0])[0]
    return 0.01 * float(np.linalg.norm(g0)) / weights.theta0


def pilot_intercept_fit(problem, weights, lambda0=None):
    """Fit only the classifier block under a ridge penalty ``lambda0``.

    Returns the fit (all gradient blocks zero) and the ``lambda0`` used.
    """
    if lambda0 is None:
        lambda0 = default_lambda0(problem, weights)
    check_positive(lambda0, "lambda0")
    return problem.fit(lambda0, weights, blocks=()), lambda0
