import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from gradsel.gmd import (
    PenaltyWeights,
    Problem,
    SolverSettings,
    fit_single,
    gradient_block,
    kkt_residuals,
    majorizer_eigenvalue,
    objective,
    pilot_intercept_fit,
    update_block_grouplasso,
    update_block_ridge,
)
from gradsel.kernels import Dataset, KernelContext, build_context
from gradsel.path import lambda_max
from gradsel._validation import DegenerateMajorizerError, GradselError

from conftest import make_problem, naive_margins, random_dataset
from oracles import (
    Reference,
    minimize_group_block,
    minimize_pilot,
    minimize_ridge_block,
    naive_loss_term,
    proximal_gradient,
)

LOSSES = ("logistic", "squared_hinge")


def test_objective_at_zero():
    prob, data, ctx = make_problem(0, 9, 2)
    w = PenaltyWeights.uniform(2)
    expected = np.log(2.0) * ctx.W.sum() / 81
    assert prob.objective(np.zeros((3, 9)), 5.0, w) == pytest.approx(expected, rel=1e-14)


@pytest.mark.parametrize("kind", LOSSES)
def test_objective_matches_double_loop(kind):
    data = random_dataset(1, 4, 2)
    ctx = build_context(data)
    alpha = np.random.default_rng(1).normal(size=(3, 4))
    got = objective(ctx, data, kind, alpha, 0.0, PenaltyWeights.uniform(2))
    assert got == pytest.approx(naive_loss_term(ctx, data.y, kind, alpha), rel=1e-12, abs=1e-12)


def test_margins_match_definition():
    prob, data, ctx = make_problem(2, 7, 3)
    alpha = np.random.default_rng(2).normal(size=(4, 7))
    assert np.allclose(prob.margins(alpha), data.y[:, None] * naive_margins(ctx, alpha),
                       rtol=1e-12, atol=1e-12)


def test_penalty_hand_value():
    prob, _, _ = make_problem(3, 5, 3)
    alpha = np.zeros((4, 5))
    alpha[3, :2] = [1.2, 1.6]
    w = PenaltyWeights(np.array([1.0, 1.0, 0.5]))
    F0 = prob.objective(alpha, 0.0, w)
    assert prob.objective(alpha, 3.0, w) - F0 == pytest.approx(3.0, abs=1e-14)


def test_shape_mismatch():
    prob, _, _ = make_problem(3, 5, 2)
    with pytest.raises(GradselError):
        prob.objective(np.zeros((2, 5)), 1.0, PenaltyWeights.uniform(2))


@pytest.mark.parametrize("kind", LOSSES)
def test_gradient_central_differences(kind):
    prob, data, ctx = make_problem(4, 6, 2, loss=kind)
    rng = np.random.default_rng(4)
    alpha = rng.normal(size=(3, 6)) * 0.3
    G = prob.gradient(prob.margins(alpha))
    h = 1e-6
    fd = np.empty_like(alpha)
    for idx in np.ndindex(alpha.shape):
        up, dn = alpha.copy(), alpha.copy()
        up[idx] += h
        dn[idx] -= h
        fd[idx] = (prob.loss_term(prob.margins(up)) - prob.loss_term(prob.margins(dn))) / (2 * h)
    assert np.max(np.abs(G - fd)) < 1e-6
    ref = Reference(ctx, data.y, kind)
    assert np.allclose(G.ravel(), ref.grad(alpha), rtol=1e-10, atol=1e-13)


def test_gradient_block_function_matches_full_gradient():
    prob, data, ctx = make_problem(5, 8, 3)
    alpha = np.random.default_rng(5).normal(size=(4, 8))
    G = prob.gradient(prob.margins(alpha))
    for ell in range(4):
        assert np.allclose(gradient_block(ctx, data, "logistic", alpha, ell), G[ell])


def test_squared_hinge_flat_region_gradient():
    rng = np.random.default_rng(6)
    X = rng.uniform(-1, 1, size=(6, 2))
    data = Dataset(X, np.ones(6))
    ctx = build_context(data)
    alpha = np.zeros((3, 6))
    alpha[0] = np.linalg.solve(ctx.K, np.full(6, 2.0))
    prob = Problem(ctx, data, "squared_hinge")
    P = prob.margins(alpha)
    assert P.min() >= 1.0
    assert np.all(prob.gradient(P) == 0.0)


def test_antipodal_flip_negates_gradient():
    data = random_dataset(7, 7, 2)
    ctx = build_context(data)
    flipped = Dataset(data.X, -data.y)
    alpha = np.random.default_rng(7).normal(size=(3, 7))
    a = Problem(ctx, data, "logistic")
    b = Problem(ctx, flipped, "logistic")
    Ga = a.gradient(a.margins(alpha))
    Gb = b.gradient(b.margins(-alpha))
    assert np.allclose(Ga, -Gb, rtol=1e-13, atol=1e-16)


@pytest.mark.parametrize("kind", LOSSES)
def test_eta_matches_dense_eigenvalue(kind):
    data = random_dataset(8, 3, 2)
    ctx = build_context(data)
    ref = Reference(ctx, data.y, kind)
    s = SolverSettings(eta_inflation=1.0)
    for ell in range(3):
        dense = np.linalg.eigvalsh(ref.block_bound(ell))[-1]
        eta = majorizer_eigenvalue(ctx, data, kind, ell, s)
        assert eta == pytest.approx(dense, rel=1e-8)


def test_eta_inflation_applied():
    prob, _, _ = make_problem(9, 5, 2)
    base = Problem(prob.context, prob.y, "logistic", SolverSettings(eta_inflation=1.0)).eta(1)
    assert prob.eta(1) == pytest.approx(base * (1 + 1e-6), rel=1e-12)


def test_block_zero_curvature_is_column_sum():
    prob, _, ctx = make_problem(10, 6, 2)
    assert np.allclose(prob.block_curvature(0), ctx.W.sum(axis=0), rtol=1e-15)


def test_degenerate_majorizer():
    data = random_dataset(11, 4, 2)
    ctx = build_context(data)
    dead = KernelContext(X=ctx.X, K=ctx.K, sigma2=ctx.sigma2, s=ctx.s, W=np.zeros((4, 4)))
    prob = Problem(dead, data, "logistic")
    with pytest.raises(DegenerateMajorizerError, match="degenerate majorizer"):
        prob.eta(1)
    with pytest.raises(DegenerateMajorizerError):
        prob.block_eigen(0)


def test_power_iteration_budget():
    data = random_dataset(11, 10, 2)
    ctx = build_context(data)
    prob = Problem(ctx, data, "logistic", SolverSettings(eta_power_iters=1))
    with pytest.raises(GradselError, match="residual"):
        prob.eta(1)


def test_ridge_update_limits():
    rng = np.random.default_rng(12)
    old = rng.normal(size=5)
    assert np.allclose(update_block_ridge(old, np.zeros(5), 2.0, 0.5, 3.0), old * 2.0 / 3.5)
    g = rng.normal(size=5)
    assert np.allclose(update_block_ridge(old, g, 2.0, 0.0, 3.0), old - g / 2.0)


def test_ridge_update_is_subproblem_argmin():
    rng = np.random.default_rng(13)
    for _ in range(20):
        old, g = rng.normal(size=(2, 6))
        eta, lam, th = rng.uniform(0.1, 3.0, size=3)
        cf = update_block_ridge(old, g, eta, lam, th)
        assert np.allclose(cf, minimize_ridge_block(old, g, eta, lam, th), atol=1e-10)


def test_group_update_hand_value():
    out = update_block_grouplasso(np.array([3.0, 4.0]), np.zeros(2), 1.0, 2.5, 1.0)
    assert np.allclose(out, [1.5, 2.0])


def test_group_update_kill_zone_exact_zero():
    out = update_block_grouplasso(np.array([3.0, 4.0]), np.zeros(2), 1.0, 5.0, 1.0)
    assert np.all(out == 0.0)
    out = update_block_grouplasso(np.zeros(3), np.zeros(3), 1.0, 0.0, 1.0)
    assert np.all(out == 0.0)


def test_group_update_perturbation_certificate():
    rng = np.random.default_rng(14)
    old, g = rng.normal(size=(2, 4))
    eta, lam, th = 1.7, 0.4, 1.3

    def q(a):
        return (a - old) @ g + 0.5 * eta * np.sum((a - old) ** 2, axis=-1) \
            + lam * th * np.linalg.norm(a, axis=-1)

    best = update_block_grouplasso(old, g, eta, lam, th)
    trials = best + rng.normal(size=(10_000, 4)) * rng.uniform(1e-6, 1.0, size=(10_000, 1))
    assert np.all(q(trials) >= q(best) - 1e-14)


@settings(max_examples=60, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), scale=st.floats(0.01, 10.0))
def test_group_update_matches_numeric_minimizer(seed, scale):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(1, 6))
    old, g = rng.normal(size=(2, n)) * scale
    eta, lam, th = rng.uniform(0.1, 3.0), rng.uniform(0.0, 3.0), rng.uniform(0.1, 2.0)
    cf = update_block_grouplasso(old, g, eta, lam, th)
    assert np.allclose(cf, minimize_group_block(old, g, eta, lam, th), atol=1e-7 * max(1, scale))


@pytest.mark.parametrize("kind", LOSSES)
@pytest.mark.parametrize("majorizer", ["block", "eta"])
def test_fit_matches_proximal_gradient(kind, majorizer):
    prob, data, ctx = make_problem(15, 10, 3, loss=kind,
                                   settings=SolverSettings(majorizer=majorizer, tol=1e-10))
    w = PenaltyWeights(np.array([0.8, 1.0, 1.2]))
    lam_max, _ = lambda_max(prob, w)
    lam = 0.3 * lam_max
    fit = prob.fit(lam, w)
    _, F = proximal_gradient(Reference(ctx, data.y, kind), lam, w)
    assert fit.converged
    assert fit.objective == pytest.approx(F, rel=1e-6)


@pytest.mark.parametrize("kind", LOSSES)
def test_objective_trace_monotone(kind):
    prob, _, _ = make_problem(16, 25, 4, loss=kind)
    w = PenaltyWeights.uniform(4)
    lam_max, _ = lambda_max(prob, w)
    for frac in (0.5, 0.1, 0.02):
        trace = np.array(prob.fit(frac * lam_max, w).objective_trace)
        assert np.all(np.diff(trace) <= 1e-10)


def test_above_lambda_max_stays_zero():
    prob, data, ctx = make_problem(17, 30, 4)
    w = PenaltyWeights.uniform(4)
    lam_max, _ = lambda_max(prob, w)
    fit = fit_single(ctx, data, "logistic", 1.001 * lam_max, w)
    assert fit.active_set == []
    assert fit_single(ctx, data, "logistic", 0.9 * lam_max, w).active_set != []


@pytest.mark.parametrize("kind", LOSSES)
def test_kkt_at_convergence(kind):
    s = SolverSettings()
    prob, _, _ = make_problem(18, 30, 4, loss=kind, settings=s)
    w = PenaltyWeights.uniform(4)
    lam_max, _ = lambda_max(prob, w)
    fit = prob.fit(0.2 * lam_max, w)
    assert fit.converged and fit.active_set
    res = kkt_residuals(fit, w)
    assert res["intercept"] <= 10 * s.tol
    assert res["active"] <= 10 * s.tol
    assert res["zero"] <= 10 * s.tol


def test_warm_start_equivalence():
    prob, _, _ = make_problem(19, 25, 3, settings=SolverSettings(tol=1e-10))
    w = PenaltyWeights.uniform(3)
    lam_max, _ = lambda_max(prob, w)
    cold = prob.fit(0.2 * lam_max, w)
    warm_init = np.random.default_rng(19).normal(size=cold.alpha.shape)
    warm = prob.fit(0.2 * lam_max, w, warm_start=warm_init)
    assert warm.objective == pytest.approx(cold.objective, rel=1e-6)
    assert warm.active_set == cold.active_set


def test_majorizers_agree():
    prob, data, ctx = make_problem(20, 20, 3, settings=SolverSettings(tol=1e-10))
    w = PenaltyWeights.uniform(3)
    lam_max, _ = lambda_max(prob, w)
    a = prob.fit(0.3 * lam_max, w)
    b = Problem(ctx, data, "logistic", SolverSettings(tol=1e-10, majorizer="eta")).fit(
        0.3 * lam_max, w)
    assert a.objective == pytest.approx(b.objective, rel=1e-6)


def test_non_converged_flag():
    prob, _, _ = make_problem(21, 20, 3, settings=SolverSettings(max_cycles=1))
    w = PenaltyWeights.uniform(3)
    lam_max, _ = lambda_max(prob, w)
    fit = prob.fit(0.05 * lam_max, w)
    assert not fit.converged and fit.n_cycles == 1


@pytest.mark.filterwarnings("ignore:invalid value")
def test_non_finite_start_is_hard_error():
    prob, _, _ = make_problem(21, 6, 2)
    alpha = np.zeros((3, 6))
    alpha[0, 0] = np.inf
    with pytest.raises(GradselError, match="finite"):
        prob.fit(0.1, PenaltyWeights.uniform(2), warm_start=alpha)


def test_settings_validation():
    for bad in (dict(tol=0), dict(max_cycles=0), dict(eta_inflation=0.5),
                dict(majorizer="newton"), dict(kkt_tol=-1.0)):
        with pytest.raises(GradselError):
            SolverSettings(**bad)
    assert SolverSettings(tol=1e-6).kkt_threshold == pytest.approx(1e-5)


def test_pilot_penalty_dominated():
    prob, _, _ = make_problem(22, 12, 2)
    fit, lam0 = pilot_intercept_fit(prob, PenaltyWeights.uniform(2), lambda0=1e8)
    assert np.linalg.norm(fit.alpha[0]) < 1e-4
    assert np.all(fit.alpha[1:] == 0)


@pytest.mark.parametrize("kind", LOSSES)
def test_pilot_stationarity_and_oracle(kind):
    prob, data, ctx = make_problem(23, 8, 2, loss=kind, settings=SolverSettings(tol=1e-12))
    w = PenaltyWeights.uniform(2)
    fit, lam0 = pilot_intercept_fit(prob, w)
    g0 = fit.gradient[0] + lam0 * w.theta0 * fit.alpha[0]
    assert np.linalg.norm(g0) < 1e-7
    _, F = minimize_pilot(Reference(ctx, data.y, kind), lam0, w.theta0)
    assert fit.objective == pytest.approx(F, rel=1e-6)


def _certificate_slack(ref, rng, trials=50):
    H = ref.hessian_bound()
    worst = np.inf
    dim = H.shape[0]
    for _ in range(trials):
        a, b = rng.normal(size=(2, dim)) * rng.uniform(0.01, 3.0)
        d = a - b
        bound = ref.loss_term(b) + d @ ref.grad(b) + 0.5 * d @ H @ d
        worst = min(worst, bound - ref.loss_term(a))
    return worst


@pytest.mark.parametrize("kind", LOSSES)
def test_quadratic_majorization_certificate(kind):
    data = random_dataset(24, 12, 3)
    ref = Reference(build_context(data), data.y, kind)
    assert _certificate_slack(ref, np.random.default_rng(24)) >= -1e-9


@pytest.mark.parametrize("kind", LOSSES)
def test_blockwise_eta_certificate(kind):
    data = random_dataset(25, 12, 3)
    ctx = build_context(data)
    ref = Reference(ctx, data.y, kind)
    prob = Problem(ctx, data, kind)
    rng = np.random.default_rng(25)
    n = ctx.n
    for _ in range(40):
        b = rng.normal(size=4 * n)
        ell = int(rng.integers(0, 4))
        d = np.zeros_like(b)
        d[ell * n:(ell + 1) * n] = rng.normal(size=n) * rng.uniform(0.01, 3.0)
        bound = ref.loss_term(b) + d @ ref.grad(b) + 0.5 * prob.eta(ell) * d @ d
        assert bound - ref.loss_term(b + d) >= -1e-9
