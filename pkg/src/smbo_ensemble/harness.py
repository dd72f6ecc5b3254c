"""Benchmark runner: RS, SMBO, ERS and ESMBO over suites of tuning problems.

Directory layout under the output directory::

    config.json                         copy of the benchmark config
    logs/<method>/<problem>/<seed>.jsonl  one record per training
    reports/*.csv, reports/report.json  aggregated comparison tables

Aggregation only reads the logs, so re-running it reproduces the reports
byte for byte.
"""

from __future__ import annotations

import json
import logging
import math
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import stats
from .agnostic import Ensemble
from .esmbo import DEFAULT_ENSEMBLE_SIZE, _winners, finalize_ensemble, round_robin_index, run_ers, run_esmbo
from .learners import (ALGORITHMS, GENERATORS, OBJECTIVES, SQUARED, ZERO_ONE, SyntheticProblem, TuningProblem,
                       make_dataset)
from .smbo import FINALIZE, run_random_search, run_smbo, stream

logger = logging.getLogger(__name__)

METHODS = ("RS", "SMBO", "ERS", "ESMBO")
ENSEMBLE_METHODS = ("ERS", "ESMBO")

SUITES = {
    "desk": (
        "kernel_ridge.friedman",
        "kernel_ridge.sine",
        "kernel_ridge.linear",
        "kernel_ridge_classifier.xor",
        "knn_regressor.friedman",
        "knn_regressor.sine",
        "knn_classifier.two_gaussians",
        "knn_classifier.xor",
    ),
    "synthetic": ("synthetic.branin", "synthetic.quadratic_1d", "synthetic.styblinski_2d",
                  "synthetic.six_hump_camel"),
}

SIG_DIGITS = 12


class ConfigError(ValueError):
    """The benchmark config cannot be resolved."""


def quantize(x: float) -> float:
    """Round to 12 significant digits so ties and reports are stable across platforms."""
    return float(f"{x:.{SIG_DIGITS}g}") if math.isfinite(x) else x


# -- problems ----------------------------------------------------------------

def check_problem_id(pid: str) -> None:
    kind, _, name = pid.partition(".")
    if kind == "synthetic":
        if name not in OBJECTIVES:
            raise ConfigError(f"unknown synthetic objective {name!r} in {pid!r}")
        return
    if kind not in ALGORITHMS:
        raise ConfigError(f"unknown algorithm {kind!r} in problem {pid!r}; known: {sorted(ALGORITHMS)}")
    if name not in GENERATORS:
        raise ConfigError(f"unknown dataset {name!r} in problem {pid!r}; known: {sorted(GENERATORS)}")
    is_clf = kind.endswith("classifier")
    if is_clf != (GENERATORS[name][1] == "classification"):
        raise ConfigError(f"problem {pid!r} pairs a {GENERATORS[name][1]} dataset with {kind}")


def make_problem(pid: str, seed: int):
    """Instantiate problem ``pid`` (``<algorithm>.<dataset>`` or ``synthetic.<objective>``).

    The dataset draw depends on ``seed``, so every replication sees fresh data
    while all methods within a replication share it.
    """
    check_problem_id(pid)
    kind, _, name = pid.partition(".")
    if kind == "synthetic":
        return SyntheticProblem(name, name=pid)
    make_est, space = ALGORITHMS[kind]
    ds = make_dataset(name, seed=seed)
    loss = ZERO_ONE if ds.task == "classification" else SQUARED
    return TuningProblem(make_est(), space, ds, loss, name=pid)


# -- config ------------------------------------------------------------------

@dataclass
class BenchmarkConfig:
    """One experiment grid.

    Attributes
    ----------
    suite : list of str
        Problem ids; a suite name (``"desk"``, ``"synthetic"``) expands in place.
    methods : list of str
        Subset of RS, SMBO, ERS, ESMBO.
    budget : int
        Trainings per run (M).
    ensemble_size : int
        Bootstrap histories per ensemble run (N).
    seeds : list of int
    output_directory : str
    window : int
        Smoothing width (iterations) for reported metrics.
    """

    suite: list
    methods: list
    budget: int
    ensemble_size: int = DEFAULT_ENSEMBLE_SIZE
    seeds: list = field(default_factory=lambda: [0])
    output_directory: str = "results"
    window: int = stats.WINDOW

    def __post_init__(self):
        suite = [self.suite] if isinstance(self.suite, str) else list(self.suite)
        expanded = []
        for item in suite:
            expanded.extend(SUITES.get(item, (item,)))
        if not expanded:
            raise ConfigError("suite must name at least one problem")
        for pid in expanded:
            check_problem_id(pid)
        if len(set(expanded)) != len(expanded):
            raise ConfigError("suite lists a problem twice")
        self.suite = expanded
        self.methods = list(self.methods)
        if not self.methods or any(m not in METHODS for m in self.methods):
            raise ConfigError(f"methods must be a non-empty subset of {list(METHODS)}, got {self.methods}")
        if len(set(self.methods)) != len(self.methods):
            raise ConfigError("methods lists a method twice")
        self.seeds = list(self.seeds)
        if not self.seeds or len(set(self.seeds)) != len(self.seeds):
            raise ConfigError("seeds must be a non-empty list of distinct integers")
        for name, value, lo in (("budget", self.budget, 1), ("ensemble_size", self.ensemble_size, 1),
                                ("window", self.window, 1)):
            if isinstance(value, bool) or not isinstance(value, int) or value < lo:
                raise ConfigError(f"{name} must be an integer >= {lo}, got {value!r}")
        if any(isinstance(s, bool) or not isinstance(s, int) for s in self.seeds):
            raise ConfigError("seeds must be integers")

    @classmethod
    def from_dict(cls, data: dict) -> "BenchmarkConfig":
        if not isinstance(data, dict):
            raise ConfigError("config must be a JSON object")
        known = set(cls.__dataclass_fields__)
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"unknown config fields: {sorted(unknown)}")
        missing = {"suite", "methods", "budget"} - set(data)
        if missing:
            raise ConfigError(f"missing config fields: {sorted(missing)}")
        return cls(**data)

    @classmethod
    def from_json(cls, path) -> "BenchmarkConfig":
        try:
            with open(path, encoding="utf-8") as fh:
                data = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        return cls.from_dict(data)

    def to_dict(self) -> dict:
        return asdict(self)


# -- one run -----------------------------------------------------------------

def log_path(out_dir, method: str, problem: str, seed: int) -> Path:
    return Path(out_dir) / "logs" / method / problem / f"{seed}.jsonl"


def _read_log(path: Path) -> list:
    with open(path, encoding="utf-8") as fh:
        return [json.loads(line) for line in fh if line.strip()]


def log_is_complete(path: Path, budget: int) -> bool:
    if not path.exists():
        return False
    try:
        records = _read_log(path)
    except (OSError, json.JSONDecodeError):
        return False
    return [r.get("iteration") for r in records] == list(range(1, budget + 1))


class _Tracker:
    """Turns per-training callbacks into run records with the incumbent's test risk."""

    def __init__(self, problem, method, pid, seed):
        self.problem = problem
        self.base = {"method": method, "problem": pid, "seed": seed}
        self.test_preds = {}  # id(predictor) -> test predictions
        self.test_risks = []  # per training, None if failed
        self.records = []
        self.t0 = time.perf_counter()

    def _note(self, ev):
        if ev is None:
            self.test_risks.append(None)
            return
        preds = self.problem.test_predictions(ev.predictor)
        self.test_preds[id(ev.predictor)] = preds
        self.test_risks.append(self.problem.test_risk(preds))

    def _emit(self, k, config, ev, test_risk, extra=None):
        now = time.perf_counter()
        record = dict(self.base, iteration=k, config=[float(v) for v in config.values],
                      risk=ev.risk if ev is not None else None, failed=ev is None,
                      test_risk=test_risk, wall_time=now - self.t0)
        record.update(extra or {})
        self.records.append(record)
        self.t0 = now

    def single(self, k, config, ev, history):
        self._note(ev)
        best = history.best_index()
        self._emit(k, config, ev, None if best is None else self.test_risks[best])

    def ensemble(self, k, config, ev, state):
        self._note(ev)
        ens = finalize_ensemble(state)
        test_risk = None
        if len(ens):
            preds = np.stack([self.test_preds[id(m.predictor)] for m in ens.members])
            test_risk = self.problem.test_risk(Ensemble(ens.members, ens.task_kind).combine(preds))
        winners = _winners(state, np.random.default_rng(stream(state.seed, FINALIZE, state.train_count)))
        risks = [h.records[-1][1] for h in state.histories]
        self._emit(k, config, ev, test_risk, {
            "active_history": round_robin_index(k, state.ensemble_size),
            "history_risks": [r if math.isfinite(r) else None for r in risks],
            "winners": winners,
        })


def run_cell(method: str, pid: str, seed: int, budget: int, ensemble_size: int) -> list:
    """Run one (method, problem, seed) triple and return its records."""
    problem = make_problem(pid, seed)
    tracker = _Tracker(problem, method, pid, seed)
    if method == "RS":
        run_random_search(problem, budget, seed, callback=tracker.single)
    elif method == "SMBO":
        run_smbo(problem, budget, seed, callback=tracker.single)
    elif method == "ERS":
        run_ers(problem, budget, ensemble_size, seed, callback=tracker.ensemble)
    elif method == "ESMBO":
        run_esmbo(problem, budget, ensemble_size, seed, callback=tracker.ensemble)
    else:
        raise ConfigError(f"unknown method {method!r}")
    return tracker.records


def _run_and_write(args) -> str:
    method, pid, seed, budget, ensemble_size, path = args
    records = run_cell(method, pid, seed, budget, ensemble_size)
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_suffix(".jsonl.tmp")
    with open(tmp, "w", encoding="utf-8") as fh:
        for r in records:
            fh.write(json.dumps(r, sort_keys=True) + "\n")
    os.replace(tmp, path)  # a log is either absent or complete
    return str(path)


def run_benchmark(config: BenchmarkConfig, out_dir=None, jobs: int = 1) -> Path:
    """Run every missing (method, problem, seed) triple, then aggregate.

    Triples whose log is already complete are skipped, so an interrupted
    benchmark resumes where it stopped.
    """
    out = Path(out_dir or config.output_directory)
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "config.json", "w", encoding="utf-8") as fh:
        json.dump(config.to_dict(), fh, indent=2, sort_keys=True)
        fh.write("\n")
    todo = []
    for method in config.methods:
        for pid in config.suite:
            for seed in config.seeds:
                path = log_path(out, method, pid, seed)
                if log_is_complete(path, config.budget):
                    continue
                todo.append((method, pid, seed, config.budget, config.ensemble_size, str(path)))
    logger.info("%d runs to do", len(todo))
    if jobs > 1 and len(todo) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            for path in pool.map(_run_and_write, todo):
                logger.info("wrote %s", path)
    else:
        for args in todo:
            logger.info("wrote %s", _run_and_write(args))
    aggregate(out)
    return out


# -- aggregation ---------------------------------------------------------------

def load_test_risks(out_dir, config: BenchmarkConfig) -> np.ndarray:
    """Test-risk curves, shape (methods, problems, seeds, budget), quantized.

    Iterations before any successful training carry forward the first
    available value (or +inf if a run never succeeded).
    """
    arr = np.full((len(config.methods), len(config.suite), len(config.seeds), config.budget), np.inf)
    for a, method in enumerate(config.methods):
        for b, pid in enumerate(config.suite):
            for c, seed in enumerate(config.seeds):
                path = log_path(out_dir, method, pid, seed)
                if not log_is_complete(path, config.budget):
                    raise FileNotFoundError(f"missing or incomplete log {path}")
                curve = [r["test_risk"] for r in _read_log(path)]
                finite = [v for v in curve if v is not None]
                fill = finite[0] if finite else math.inf
                prev = fill
                for k, v in enumerate(curve):
                    prev = prev if v is None else v
                    arr[a, b, c, k] = quantize(float(prev))
    return arr


def _tables(curves: np.ndarray, methods, columns) -> list:
    """One RiskTable per iteration; ``curves`` has shape (methods, columns, budget)."""
    return [stats.RiskTable(np.where(np.isfinite(curves[:, :, k]), curves[:, :, k], np.finfo(float).max),
                            methods, columns) for k in range(curves.shape[2])]


def _window_report(tables, window) -> dict:
    """Every table metric averaged over the last ``window`` iterations."""
    reports = [stats.compare(t) for t in tables[-window:]]
    mean = lambda attr: np.mean([getattr(r, attr) for r in reports], axis=0)  # noqa: E731
    pb, sp = mean("pb_prob"), mean("sign_p")
    K = pb.shape[0]
    levels = [[stats.significance(pb[i, l], sp[i, l]) if i != l else (0, 0) for l in range(K)] for i in range(K)]
    return {
        "expected_rank": mean("expected_ranks"),
        "win_freq": mean("win_freq"),
        "pb_prob": pb,
        "sign_p": sp,
        "pb_level": np.array([[a for a, _ in row] for row in levels]),
        "sign_level": np.array([[b for _, b in row] for row in levels]),
    }


def build_report(out_dir, config: BenchmarkConfig | None = None) -> dict:
    """Pure function of the logs: overall table, per-seed replications and series."""
    out = Path(out_dir)
    config = config or BenchmarkConfig.from_json(out / "config.json")
    curves = load_test_risks(out, config)
    M, P, S, T = curves.shape
    methods = list(config.methods)
    columns = [f"{pid}@{seed}" for pid in config.suite for seed in config.seeds]
    tables = _tables(curves.reshape(M, P * S, T), methods, columns)
    overall = _window_report(tables, config.window)
    series = stats.smoothed_series(np.stack([stats.expected_rank(t) for t in tables]), config.window)
    replications = {}
    for c, seed in enumerate(config.seeds):
        rep = _window_report(_tables(curves[:, :, c, :], methods, list(config.suite)), config.window)
        replications[seed] = rep["expected_rank"]
    return {
        "methods": methods,
        "n_datasets": P * S,
        "window": config.window,
        "budget": config.budget,
        **overall,
        "series_expected_rank": series,
        "replications": replications,
    }


def _fmt(x) -> str:
    return repr(quantize(float(x)))


def _write_matrix(path: Path, methods, order, matrix, fmt=_fmt):
    names = [methods[i] for i in order]
    lines = [",".join(["method"] + names)]
    for i in order:
        lines.append(",".join([methods[i]] + [fmt(matrix[i][l]) for l in order]))
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")


def emit_tables(report: dict, directory) -> list:
    """Write the comparison as CSV matrices plus one JSON document.

    Rows and columns are sorted by expected rank (best first, ties in config
    order). Returns the written paths.
    """
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    methods = report["methods"]
    er = np.asarray(report["expected_rank"], dtype=float)
    order = list(np.argsort(np.array([quantize(v) for v in er]), kind="stable"))
    written = []

    table = [",".join(["method", "expected_rank"] + [methods[l] for l in order])]
    for i in order:
        cells = []
        for l in order:
            cell = _fmt(report["win_freq"][i][l])
            if i != l:
                cell += "*" * int(report["pb_level"][i][l]) + "+" * int(report["sign_level"][i][l])
            cells.append(cell)
        table.append(",".join([methods[i], _fmt(er[i])] + cells))
    (d / "table.csv").write_text("\n".join(table) + "\n", encoding="utf-8")
    written.append(d / "table.csv")

    for name in ("win_freq", "pb_prob", "sign_p"):
        _write_matrix(d / f"{name}.csv", methods, order, report[name])
        written.append(d / f"{name}.csv")
    for name in ("pb_level", "sign_level"):
        _write_matrix(d / f"{name}.csv", methods, order, report[name], fmt=lambda x: str(int(x)))
        written.append(d / f"{name}.csv")

    if "series_expected_rank" in report:
        series = np.asarray(report["series_expected_rank"])
        lines = [",".join(["iteration"] + [methods[i] for i in order])]
        lines += [",".join([str(k + 1)] + [_fmt(series[k, i]) for i in order]) for k in range(series.shape[0])]
        (d / "series_expected_rank.csv").write_text("\n".join(lines) + "\n", encoding="utf-8")
        written.append(d / "series_expected_rank.csv")
    if "replications" in report:
        lines = [",".join(["seed"] + [methods[i] for i in order])]
        for seed, ranks in report["replications"].items():
            lines.append(",".join([str(seed)] + [_fmt(ranks[i]) for i in order]))
        (d / "replications.csv").write_text("\n".join(lines) + "\n", encoding="utf-8")
        written.append(d / "replications.csv")

    doc = {
        "methods": [methods[i] for i in order],
        "expected_rank": [quantize(float(er[i])) for i in order],
        "n_datasets": report.get("n_datasets"),
        "window": report.get("window"),
        "budget": report.get("budget"),
    }
    for name in ("win_freq", "pb_prob", "sign_p"):
        doc[name] = [[quantize(float(report[name][i][l])) for l in order] for i in order]
    for name in ("pb_level", "sign_level"):
        doc[name] = [[int(report[name][i][l]) for l in order] for i in order]
    if "series_expected_rank" in report:
        series = np.asarray(report["series_expected_rank"])
        doc["series_expected_rank"] = {methods[i]: [quantize(float(v)) for v in series[:, i]] for i in order}
    if "replications" in report:
        doc["replications"] = {str(s): {methods[i]: quantize(float(r[i])) for i in order}
                               for s, r in report["replications"].items()}
    (d / "report.json").write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    written.append(d / "report.json")
    return written


def aggregate(out_dir) -> list:
    """Rebuild ``reports/`` from the logs under ``out_dir``."""
    out = Path(out_dir)
    return emit_tables(build_report(out), out / "reports")


def report_from_table(table: stats.RiskTable) -> dict:
    """Comparison report for a single risk table (no time axis)."""
    r = stats.compare(table)
    return {"methods": list(r.methods), "n_datasets": r.n_datasets, "expected_rank": r.expected_ranks,
            "win_freq": r.win_freq, "pb_prob": r.pb_prob, "sign_p": r.sign_p,
            "pb_level": r.pb_level, "sign_level": r.sign_level}
