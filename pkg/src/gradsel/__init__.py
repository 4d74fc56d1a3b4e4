"""Nonparametric variable selection for binary classification.

A classifier and its gradient are learned jointly in a Gaussian RKHS with a
group-lasso penalty on the per-variable gradient blocks. Variables whose
gradient block is nonzero are selected.
"""

from ._validation import (ConvergenceError, DegenerateFoldError, DegenerateMajorizerError,
                          DegenerateSampleError, GradselError, InsufficientDataError,
                          NoSignalError)
from .bench import BenchResult, MethodConfig, run_bench
from .estimators import GradientSelector, KernelMarginClassifier
from .gmd import PenaltyWeights, Problem, SolverSettings, fit_single, pilot_intercept_fit
from .kernels import Dataset, KernelContext, build_context, median_bandwidth
from .losses import get_loss
from .model_selection import cross_validate, fit_refit, refit_predict, selection_metrics
from .path import adaptive_weights, fit_path, lambda_grid, lambda_max, strong_rule_screen
from .simulate import SimModel, generate

__version__ = "0.1.0"

__all__ = [
    "BenchResult", "ConvergenceError", "Dataset", "DegenerateFoldError",
    "DegenerateMajorizerError", "DegenerateSampleError", "GradientSelector", "GradselError",
    "InsufficientDataError", "KernelContext", "KernelMarginClassifier", "MethodConfig",
    "NoSignalError", "PenaltyWeights", "Problem", "SimModel", "SolverSettings",
    "adaptive_weights", "build_context", "cross_validate", "fit_path", "fit_refit",
    "fit_single", "generate", "get_loss", "lambda_grid", "lambda_max", "median_bandwidth",
    "pilot_intercept_fit", "refit_predict", "run_bench", "selection_metrics",
    "strong_rule_screen",
]
