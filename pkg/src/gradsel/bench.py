"""Monte Carlo benchmark over the simulation models.

Each repetition draws its own training and test sets, runs the full
selection pipeline and scores the result against the known informative
set. Repetitions are independent and may run in parallel threads; the
aggregate is assembled in repetition order, so it does not depend on the
thread count.
"""

import time
from dataclasses import dataclass, field

import numpy as np
from joblib import Parallel, delayed
from threadpoolctl import threadpool_limits

from ._validation import GradselError
from .gmd import SolverSettings
from .model_selection import cross_validate, refit_predict, selection_metrics
from .simulate import SimModel, generate

METRICS = ("tp", "fp", "correct", "test_error")


@dataclass(frozen=True)
class MethodConfig:
    loss: str = "logistic"
    gamma: float = 1.0
    n_lambda: int = 50
    min_ratio: float = None
    folds: int = 10
    knn: int = None
    tol: float = 1e-7
    max_cycles: int = 2000
    one_se: bool = False
    cv_score: str = "refit"
    bandwidth: str = "distance"

    def settings(self):
        return SolverSettings(tol=self.tol, max_cycles=self.max_cycles)


@dataclass
class BenchResult:
    """Per-repetition rows plus their means and standard deviations.

    With a single repetition the standard deviations are reported as 0 and
    ``sd_defined`` is False. ``seconds`` holds wall-clock time per
    repetition and is ignored by equality.
    """

    model: SimModel
    config: MethodConfig
    seed: int
    rows: list
    seconds: list = field(default_factory=list, compare=False)

    @property
    def reps(self):
        return len(self.rows)

    @property
    def sd_defined(self):
        return self.reps > 1

    def column(self, name):
        return np.array([float(r[name]) for r in self.rows])

    @property
    def means(self):
        return {m: float(np.mean(self.column(m))) for m in METRICS}

    @property
    def sds(self):
        if not self.sd_defined:
            return {m: 0.0 for m in METRICS}
        return {m: float(np.std(self.column(m), ddof=1)) for m in METRICS}


def run_repetition(model, config, seed, rep):
    start = time.perf_counter()
    train, test = generate(model, seed, rep)
    report = cross_validate(train, config.loss, folds=config.folds, n_lambda=config.n_lambda,
                            min_ratio=config.min_ratio, gamma=config.gamma, knn=config.knn,
                            settings=config.settings(), seed=seed, rep=rep,
                            one_se=config.one_se, cv_score=config.cv_score,
                            bandwidth=config.bandwidth)
    tp, fp, correct = selection_metrics(report.selected, model.truth)
    _, err, refit = refit_predict(train, report.selected, config.loss, test, seed=seed, rep=rep,
                                  convention=config.bandwidth)
    row = {
        "rep": rep,
        "tp": tp,
        "fp": fp,
        "correct": bool(correct),
        "test_error": err,
        "selected": list(report.selected),
        "lambda": report.lambda_chosen,
        "fallback": refit.fallback,
        "converged": report.path.converged,
    }
    return row, time.perf_counter() - start


def _guarded(model, config, seed, rep):
    try:
        return run_repetition(model, config, seed, rep)
    except GradselError as exc:
        raise type(exc)(f"repetition {rep}: {exc}", module=exc.module) from exc
    except Exception as exc:
        raise GradselError(f"repetition {rep}: {exc}", module="sim_bench") from exc


def run_bench(model, reps=20, config=None, seed=0, n_jobs=1):
    """Run ``reps`` repetitions of the selection pipeline on ``model``.

    A failing repetition aborts the whole bench with its index attached.
    """
    config = config or MethodConfig()
    if int(reps) < 1:
        raise GradselError(f"reps must be >= 1, got {reps}", module="sim_bench")
    with threadpool_limits(limits=1):
        out = Parallel(n_jobs=n_jobs, prefer="threads")(
            delayed(_guarded)(model, config, seed, rep) for rep in range(int(reps)))
    return BenchResult(model=model, config=config, seed=int(seed),
                       rows=[r for r, _ in out], seconds=[s for _, s in out])
