"""Command-line front end.

Subcommands ``fit``, ``path`` and ``cv`` read a CSV file; ``simulate`` and
``bench`` draw from the simulation models. All outputs are staged in
memory and written atomically at the end of a run, so a failing run leaves
no partial files behind. Errors are reported as one line on stderr:

    gradsel: error module=<module> kind=<ErrorClass> message=<text>
"""

import argparse
import csv
import io
import json
import math
import os
import sys
import tempfile
from dataclasses import dataclass, field

import numpy as np
from threadpoolctl import threadpool_limits

from ._validation import GradselError
from .bench import MethodConfig, run_bench
from .gmd import Problem, SolverSettings
from .kernels import Dataset, build_context
from .model_selection import cross_validate, fit_refit
from .path import adaptive_weights, fit_path
from .simulate import MODELS, SimModel, generate

SUBCOMMANDS = ("fit", "path", "cv", "simulate", "bench")
FULL_SCALE = {"n": 500, "p": 50, "reps": 100}
THREADS_ENV = "GRADSEL_THREADS"


class CLIError(GradselError):
    module = "cli"


# -- CSV input -------------------------------------------------------------------


def load_csv(path, label_column, positive=None):
    """Read a labelled CSV file into a standardized :class:`Dataset`.

    Labels may be -1/1, 0/1 (1 is positive) or two strings, in which case
    ``positive`` names the positive class.
    """
    try:
        with open(path, newline="", encoding="utf-8") as fh:
            rows = list(csv.reader(fh))
    except OSError as exc:
        raise CLIError(f"cannot read {path}: {exc.strerror}") from None
    if not rows:
        raise CLIError(f"{path} is empty")
    header = [h.strip() for h in rows[0]]
    if label_column not in header:
        raise CLIError(f"label column {label_column!r} not in header {header}")
    li = header.index(label_column)
    features = [h for k, h in enumerate(header) if k != li]
    if not features:
        raise CLIError("no predictor columns")
    body = rows[1:]
    if len(body) < 2:
        raise CLIError(f"need at least 2 data rows, got {len(body)}")
    X = np.empty((len(body), len(features)))
    labels = []
    for r, row in enumerate(body, start=1):
        if len(row) != len(header):
            raise CLIError(f"row {r} has {len(row)} fields, expected {len(header)}")
        cells = [c.strip() for c in row]
        for k, c in enumerate(cells):
            if c == "":
                raise CLIError(f"missing value at row {r}, column {header[k]}")
        labels.append(cells[li])
        vals = [c for k, c in enumerate(cells) if k != li]
        for k, c in enumerate(vals):
            try:
                X[r - 1, k] = float(c)
            except ValueError:
                raise CLIError(f"non-numeric value {c!r} at row {r}, "
                               f"column {features[k]}") from None
            if not math.isfinite(X[r - 1, k]):
                raise CLIError(f"non-finite value at row {r}, column {features[k]}")
    y = encode_label_column(labels, positive)
    mean = X.mean(axis=0)
    sd = X.std(axis=0, ddof=1)
    const = [features[k] for k in np.flatnonzero(sd == 0)]
    if const:
        raise CLIError(f"constant column(s) cannot be standardized: {const}")
    return Dataset((X - mean) / sd, y, tuple(features))


def encode_label_column(labels, positive=None):
    distinct = sorted(set(labels))
    if len(distinct) != 2:
        raise CLIError(f"labels must take exactly two values, got {distinct}")
    if positive is not None:
        if positive not in distinct:
            raise CLIError(f"positive class {positive!r} not among labels {distinct}")
        return np.array([1.0 if v == positive else -1.0 for v in labels])
    try:
        nums = sorted({float(v) for v in distinct})
    except ValueError:
        raise CLIError(f"string labels {distinct} need --positive to name the "
                       "positive class") from None
    if nums == [-1.0, 1.0] or nums == [0.0, 1.0]:
        return np.array([1.0 if float(v) == 1.0 else -1.0 for v in labels])
    raise CLIError(f"numeric labels must be -1/1 or 0/1, got {distinct}")


def dataset_to_csv(data, label="y"):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(list(data.feature_names) + [label])
    for x, y in zip(data.X, data.y):
        w.writerow([fmt_float(v) for v in x] + [int(y)])
    return buf.getvalue()


# -- deterministic serialization -------------------------------------------------


def fmt_float(x):
    x = float(x)
    if not math.isfinite(x):
        return "null"
    return format(x, ".17g")


def dumps(obj, indent=0):
    """JSON with floats at 17 significant digits and keys in insertion order."""
    pad = "  " * (indent + 1)
    end = "  " * indent
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        items = [f"{pad}{json.dumps(str(k))}: {dumps(v, indent + 1)}" for k, v in obj.items()]
        return "{\n" + ",\n".join(items) + "\n" + end + "}"
    if isinstance(obj, (list, tuple, np.ndarray)):
        seq = list(obj)
        if not seq:
            return "[]"
        if all(not isinstance(v, (dict, list, tuple, np.ndarray)) for v in seq):
            return "[" + ", ".join(dumps(v) for v in seq) + "]"
        return "[\n" + ",\n".join(pad + dumps(v, indent + 1) for v in seq) + "\n" + end + "]"
    if obj is None or isinstance(obj, (bool, np.bool_)):
        return json.dumps(None if obj is None else bool(obj))
    if isinstance(obj, (int, np.integer)):
        return str(int(obj))
    if isinstance(obj, (float, np.floating)):
        return fmt_float(obj)
    return json.dumps(str(obj))


def csv_text(header, rows):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([fmt_float(v) if isinstance(v, (float, np.floating)) else v for v in row])
    return buf.getvalue()


class Outputs:
    """Files staged during a run and committed together."""

    def __init__(self, directory, emit):
        self.directory = directory
        self.emit = set(emit)
        self.files = {}

    def add(self, name, text):
        kind = name.rsplit(".", 1)[-1]
        if kind in self.emit:
            self.files[name] = text

    def commit(self):
        os.makedirs(self.directory, exist_ok=True)
        written = []
        try:
            for name, text in self.files.items():
                target = os.path.join(self.directory, name)
                fd, tmp = tempfile.mkstemp(dir=self.directory, prefix=f".{name}.")
                try:
                    with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
                        fh.write(text)
                    os.chmod(tmp, 0o644)
                    os.replace(tmp, target)
                except BaseException:
                    if os.path.exists(tmp):
                        os.remove(tmp)
                    raise
                written.append(target)
        except BaseException:
            for target in written:
                os.remove(target)
            raise
        return written


# -- configuration -----------------------------------------------------------------


@dataclass
class RunConfig:
    subcommand: str
    input_path: str = None
    label_column: str = None
    positive: str = None
    loss: str = "logistic"
    gamma: float = 1.0
    n_lambda: int = 50
    lambda_min_ratio: float = None
    folds: int = 10
    knn: int = None
    tol: float = 1e-7
    max_cycles: int = 2000
    seed: int = 0
    output_dir: str = "."
    emit: tuple = ("json", "csv")
    threads: int = None
    one_se: bool = False
    cv_score: str = "refit"
    bandwidth: str = "distance"
    majorizer: str = "block"
    model: str = "M1"
    n: int = 300
    p: int = 10
    n_test: int = 1000
    rep: int = 0
    reps: int = 20
    extra: dict = field(default_factory=dict)

    def settings(self):
        return SolverSettings(tol=self.tol, max_cycles=self.max_cycles,
                              majorizer=self.majorizer)

    def method(self):
        return MethodConfig(loss=self.loss, gamma=self.gamma, n_lambda=self.n_lambda,
                            min_ratio=self.lambda_min_ratio, folds=self.folds, knn=self.knn,
                            tol=self.tol, max_cycles=self.max_cycles, one_se=self.one_se,
                            cv_score=self.cv_score, bandwidth=self.bandwidth)

    def public(self):
        """Settings echoed into outputs; excludes paths and the thread count."""
        keys = ("subcommand", "loss", "gamma", "n_lambda", "lambda_min_ratio", "folds",
                "knn", "tol", "max_cycles", "seed", "one_se", "cv_score", "bandwidth",
                "majorizer")
        return {k: getattr(self, k) for k in keys}


def resolve_threads(flag):
    if flag is not None:
        return int(flag)
    env = os.environ.get(THREADS_ENV)
    if env:
        try:
            return int(env)
        except ValueError:
            raise CLIError(f"{THREADS_ENV} must be an integer, got {env!r}") from None
    return os.cpu_count() or 1


# -- pipelines ---------------------------------------------------------------------


def _weights_dict(weights):
    return {"theta0": weights.theta0, "gamma": weights.gamma, "theta": list(weights.theta)}


def path_document(path, names, config):
    points = []
    for k, fit in enumerate(path.fits):
        points.append({
            "lambda": float(path.lambdas[k]),
            "active_set": list(path.active_sets[k]),
            "block_norms": list(fit.block_norms),
            "screened_set": list(path.screened_sets[k]),
            "repair_rounds": int(path.violation_counts[k]),
            "n_cycles": int(fit.n_cycles),
            "converged": bool(fit.converged),
            "objective": float(fit.objective),
        })
    return {
        "feature_names": list(names),
        "lambda_max": path.lambda_max,
        "lambda0": path.lambda0,
        "weights": _weights_dict(path.weights),
        "lambdas": list(path.lambdas),
        "discard_fraction": path.discard_fraction,
        "points": points,
        "config": config.public(),
    }


def _run_path(config, out):
    data = load_csv(config.input_path, config.label_column, config.positive)
    with threadpool_limits(limits=1):
        ctx = build_context(data, knn=config.knn, convention=config.bandwidth)
        weights = adaptive_weights(ctx, data, config.loss, config.gamma, seed=config.seed,
                                   convention=config.bandwidth)
        path = fit_path(Problem(ctx, data, config.loss, config.settings()), weights,
                        n_lambda=config.n_lambda, min_ratio=config.lambda_min_ratio)
    out.add("path.json", dumps(path_document(path, data.feature_names, config)) + "\n")


def _run_cv(config, out, refit=False):
    data = load_csv(config.input_path, config.label_column, config.positive)
    report = cross_validate(
        data, config.loss, folds=config.folds, n_lambda=config.n_lambda,
        min_ratio=config.lambda_min_ratio, gamma=config.gamma, knn=config.knn,
        settings=config.settings(), seed=config.seed, one_se=config.one_se,
        cv_score=config.cv_score, bandwidth=config.bandwidth, n_jobs=config.threads)
    names = data.feature_names
    out.add("path.json", dumps(path_document(report.path, names, config)) + "\n")
    out.add("cv_curve.csv", csv_text(
        ["lambda", "mean_error", "std_error"],
        [(float(l), float(m), float(s))
         for l, m, s in zip(report.lambdas, report.cv_mean, report.cv_se)]))
    path = report.path
    selection = {
        "selected": list(report.selected),
        "selected_names": [names[s - 1] for s in report.selected],
        "lambda_chosen": report.lambda_chosen,
        "lambda_index": report.index,
        "cv_error": float(report.cv_mean[report.index]),
        "cv_std_error": float(report.cv_se[report.index]),
        "weights": _weights_dict(report.weights),
        "diagnostics": {
            "path_converged": path.converged,
            "repair_rounds": int(sum(path.violation_counts)),
            "discard_fraction": path.discard_fraction,
            "kkt": path.fits[report.index].kkt,
        },
        "config": config.public(),
    }
    out.add("selection.json", dumps(selection) + "\n")
    if refit:
        with threadpool_limits(limits=1):
            model = fit_refit(data, report.selected, config.loss, seed=config.seed,
                              convention=config.bandwidth)
            train_err = float(np.mean(model.predict(data.X) != data.y))
        out.add("fit.json", dumps({
            "selected": list(report.selected),
            "fallback": model.fallback,
            "majority": model.majority,
            "sigma2": model.sigma2,
            "ridge_lambda": model.ridge_lambda,
            "train_error": train_err,
            "dual_coef": [] if model.fallback else list(model.beta),
            "config": config.public(),
        }) + "\n")


def _run_simulate(config, out):
    model = SimModel(config.model, n=config.n, p=config.p, n_test=config.n_test)
    train, test = generate(model, config.seed, config.rep)
    out.add("train.csv", dataset_to_csv(train))
    out.add("test.csv", dataset_to_csv(test))
    out.add("simulate.json", dumps({
        "model": model.kind, "n": model.n, "p": model.p, "n_test": model.n_test,
        "noise_scale": model.noise_scale, "truth": sorted(model.truth),
        "seed": config.seed, "rep": config.rep,
        "train_positive": int(np.sum(train.y > 0)),
        "test_positive": int(np.sum(test.y > 0)),
    }) + "\n")


def _run_bench(config, out):
    model = SimModel(config.model, n=config.n, p=config.p, n_test=config.n_test)
    res = run_bench(model, config.reps, config.method(), seed=config.seed,
                    n_jobs=config.threads)
    tag = f"bench_{model.kind}_{config.loss}"
    rows = [(r["rep"], r["tp"], r["fp"], int(r["correct"]), r["test_error"],
             " ".join(str(s) for s in r["selected"]), r["lambda"], int(r["fallback"]), sec)
            for r, sec in zip(res.rows, res.seconds)]
    out.add(f"{tag}.csv", csv_text(
        ["rep", "tp", "fp", "correct", "test_error", "selected", "lambda", "fallback",
         "seconds"], rows))
    out.add(f"{tag}.json", dumps({
        "model": model.kind, "n": model.n, "p": model.p, "n_test": model.n_test,
        "reps": res.reps, "seed": res.seed,
        "means": res.means, "sds": res.sds, "sd_defined": res.sd_defined,
        "rows": [{k: r[k] for k in ("rep", "tp", "fp", "correct", "test_error",
                                    "selected", "lambda", "fallback", "converged")}
                 for r in res.rows],
        "config": config.public(),
    }) + "\n")


def run(config):
    """Execute one subcommand; returns the list of files written."""
    if config.subcommand not in SUBCOMMANDS:
        raise CLIError(f"unknown subcommand {config.subcommand!r}")
    if config.subcommand in ("fit", "path", "cv"):
        if not config.input_path or not config.label_column:
            raise CLIError(f"{config.subcommand} needs --input and --label")
    config.threads = resolve_threads(config.threads)
    if config.threads < 1:
        raise CLIError(f"thread count must be >= 1, got {config.threads}")
    out = Outputs(config.output_dir, config.emit)
    if config.subcommand == "path":
        _run_path(config, out)
    elif config.subcommand == "cv":
        _run_cv(config, out)
    elif config.subcommand == "fit":
        _run_cv(config, out, refit=True)
    elif config.subcommand == "simulate":
        _run_simulate(config, out)
    else:
        _run_bench(config, out)
    return out.commit()


# -- argument parsing --------------------------------------------------------------


def _emit(value):
    kinds = tuple(v.strip() for v in value.split(",") if v.strip())
    bad = [k for k in kinds if k not in ("json", "csv")]
    if bad or not kinds:
        raise argparse.ArgumentTypeError(f"--emit takes json and/or csv, got {value!r}")
    return kinds


def build_parser():
    parser = argparse.ArgumentParser(prog="gradsel", description=(
        "Variable selection for binary classification by sparse gradient learning."))
    sub = parser.add_subparsers(dest="subcommand", required=True)

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--loss", default="logistic",
                        choices=["logistic", "logit", "sqhinge", "squared_hinge", "hinge2"])
    common.add_argument("--gamma", type=float, default=1.0)
    common.add_argument("--n-lambda", type=int, default=50)
    common.add_argument("--lambda-min-ratio", type=float, default=None)
    common.add_argument("--folds", type=int, default=10)
    common.add_argument("--knn", type=int, default=None)
    common.add_argument("--tol", type=float, default=1e-7)
    common.add_argument("--max-cycles", type=int, default=2000)
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--out", default=".")
    common.add_argument("--emit", type=_emit, default=("json", "csv"))
    common.add_argument("--threads", type=int, default=None,
                        help=f"worker threads (default: ${THREADS_ENV} or all cores)")
    common.add_argument("--one-se", action="store_true")
    common.add_argument("--cv-score", default="refit", choices=["refit", "zero_order"])
    common.add_argument("--bandwidth", default="distance", choices=["distance", "squared"])
    common.add_argument("--majorizer", default="block", choices=["block", "eta"])

    data = argparse.ArgumentParser(add_help=False)
    data.add_argument("--input", required=True)
    data.add_argument("--label", required=True)
    data.add_argument("--positive", default=None)

    sim = argparse.ArgumentParser(add_help=False)
    sim.add_argument("--model", default="M1", choices=list(MODELS))
    sim.add_argument("--n", type=int, default=300)
    sim.add_argument("--p", type=int, default=10)
    sim.add_argument("--n-test", type=int, default=1000)

    sub.add_parser("fit", parents=[common, data], help="select variables and refit")
    sub.add_parser("path", parents=[common, data], help="penalty path only")
    sub.add_parser("cv", parents=[common, data], help="cross-validated selection")
    p = sub.add_parser("simulate", parents=[common, sim], help="write simulated data")
    p.add_argument("--rep", type=int, default=0)
    p = sub.add_parser("bench", parents=[common, sim], help="Monte Carlo benchmark")
    p.add_argument("--reps", type=int, default=20)
    p.add_argument("--full-scale", action="store_true",
                   help=f"n={FULL_SCALE['n']}, p={FULL_SCALE['p']}, reps={FULL_SCALE['reps']} "
                        "(hours to days of compute)")
    return parser


def config_from_args(args):
    cfg = RunConfig(
        subcommand=args.subcommand, loss=args.loss, gamma=args.gamma,
        n_lambda=args.n_lambda, lambda_min_ratio=args.lambda_min_ratio, folds=args.folds,
        knn=args.knn, tol=args.tol, max_cycles=args.max_cycles, seed=args.seed,
        output_dir=args.out, emit=args.emit, threads=args.threads, one_se=args.one_se,
        cv_score=args.cv_score, bandwidth=args.bandwidth, majorizer=args.majorizer)
    for name in ("input", "label", "positive", "model", "n", "p", "n_test", "rep", "reps"):
        if hasattr(args, name):
            target = {"input": "input_path", "label": "label_column"}.get(name, name)
            setattr(cfg, target, getattr(args, name))
    if getattr(args, "full_scale", False):
        for name, value in FULL_SCALE.items():
            setattr(cfg, name, value)
        print("gradsel: warning: full-scale bench; each repetition takes minutes per core "
              "and the whole run may take a day or more", file=sys.stderr)
    return cfg


def format_error(exc):
    module = getattr(exc, "module", "cli")
    message = " ".join(str(exc).split())
    return f"gradsel: error module={module} kind={type(exc).__name__} message={message}"


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        run(config_from_args(args))
    except GradselError as exc:
        print(format_error(exc), file=sys.stderr)
        return 1
    except (OSError, MemoryError) as exc:
        print(format_error(exc), file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
