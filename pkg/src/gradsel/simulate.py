"""Seeded generators for the four benchmark classification models.

Random streams are drawn from a counter-based Philox generator keyed by
``(seed, repetition, stream)`` so every repetition, split and fold can be
reproduced on its own.
"""

from dataclasses import dataclass

import numpy as np

from ._validation import GradselError
from .kernels import Dataset

STREAMS = {"train_x": 0, "train_noise": 1, "test_x": 2, "test_noise": 3, "folds": 4,
           "ridge_folds": 5}

MODELS = ("M1", "M2", "M3", "M4")
TRUTH = (1, 2)
NOISE_SCALE = 0.2
TEST_SIZE = 1000


def rng_stream(seed, rep=0, stream="train_x"):
    """Independent Philox generator for one ``(seed, rep, stream)`` triple."""
    key = STREAMS[stream] if isinstance(stream, str) else int(stream)
    ss = np.random.SeedSequence([int(seed), int(rep), key])
    return np.random.Generator(np.random.Philox(ss))


def _m1(x1, x2):
    return x1 - x2


def _m2(x1, x2):
    r = np.hypot(x1, x2)
    with np.errstate(divide="ignore", invalid="ignore"):
        return np.where(r > 0, r * np.log(np.where(r > 0, r, 1.0)), 0.0)


def _m3(x1, x2):
    return x1**2 - x2**2 - 0.25


def _m4(x1, x2):
    return x1 * x2


_FUNCS = {"M1": _m1, "M2": _m2, "M3": _m3, "M4": _m4}


@dataclass(frozen=True)
class SimModel:
    kind: str = "M1"
    n: int = 300
    p: int = 10
    n_test: int = TEST_SIZE
    noise_scale: float = NOISE_SCALE

    def __post_init__(self):
        kind = str(self.kind).upper()
        if kind not in _FUNCS:
            raise GradselError(f"unknown model {self.kind!r}; expected one of {MODELS}",
                               module="sim_bench")
        if self.p < 2:
            raise GradselError(f"p must be >= 2, got {self.p}", module="sim_bench")
        if self.n < 10:
            raise GradselError(f"n must be >= 10, got {self.n}", module="sim_bench")
        object.__setattr__(self, "kind", kind)

    @property
    def truth(self):
        return set(TRUTH)

    def f(self, X):
        X = np.asarray(X, dtype=float)
        return _FUNCS[self.kind](X[:, 0], X[:, 1])

    def labels(self, X, eps):
        score = self.f(X) + self.noise_scale * np.asarray(eps)
        return np.where(score >= 0, 1.0, -1.0)


def draw_predictors(rng, n, p):
    """``x_ij = (W_ij + U_i) / 2`` with W, U uniform on (-2, 2)."""
    W = rng.uniform(-2.0, 2.0, size=(n, p))
    U = rng.uniform(-2.0, 2.0, size=(n, 1))
    return 0.5 * (W + U)


def generate(model, seed, rep=0):
    """Draw a training set and an independent test set from ``model``."""
    out = []
    for prefix, size in (("train", model.n), ("test", model.n_test)):
        X = draw_predictors(rng_stream(seed, rep, f"{prefix}_x"), size, model.p)
        eps = rng_stream(seed, rep, f"{prefix}_noise").standard_normal(size)
        out.append(Dataset(X, model.labels(X, eps)))
    return tuple(out)
