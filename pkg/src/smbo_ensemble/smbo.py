"""Sequential model-based optimization with a GP surrogate and expected improvement."""

from __future__ import annotations

import json
import logging
import math
import time
from typing import Callable, NamedTuple

import numpy as np

from .acquisition import maximize_ei
from .gp import GPNumericalError, fit_gp
from .learners import TrainingError
from .sobol import sobol_points
from .space import History, HyperParamConfig, HyperParamSpace

logger = logging.getLogger(__name__)

N_INIT = 3
DUPLICATE_TOL = 1e-9
PERTURB_WIDTH = 1e-3

# spawn-key tags for independent random streams derived from one run seed
DESIGN, SUGGEST, RANDOM_SEARCH, BOOTSTRAP, FINALIZE = range(5)


def stream(seed: int, *keys: int) -> np.random.SeedSequence:
    """Independent, reproducible child stream of ``seed`` identified by ``keys``."""
    return np.random.SeedSequence(int(seed), spawn_key=tuple(int(k) for k in keys))


def _is_duplicate(u, evaluated) -> bool:
    return evaluated.size > 0 and bool(np.any(np.max(np.abs(evaluated - u), axis=1) <= DUPLICATE_TOL))


def _dedupe(config, space: HyperParamSpace, history: History, rng) -> HyperParamConfig:
    """Nudge ``config`` away from already-evaluated points.

    Uniform noise of width 1e-3 (unit-cube units) is added and the point
    re-projected; the width grows tenfold while collisions persist (integer
    axes need that). If the whole grid is exhausted the duplicate is returned.
    """
    if not len(history):
        return config
    evaluated = np.array([space.to_unit(c) for c in history.configs])
    u = space.to_unit(config)
    if not _is_duplicate(u, evaluated):
        return config
    width = PERTURB_WIDTH
    while width <= 1.0:
        for _ in range(8):
            cand = space.project(np.clip(u + width * (rng.random(u.size) - 0.5), 0.0, 1.0))
            if not _is_duplicate(cand, evaluated):
                return space.from_unit(cand)
        width *= 10.0
    for _ in range(64):
        cand = space.project(rng.random(u.size))
        if not _is_duplicate(cand, evaluated):
            return space.from_unit(cand)
    logger.warning("search space exhausted; re-evaluating %s", config)
    return config


def initial_design(space: HyperParamSpace, n: int, seed: int = 0) -> list[HyperParamConfig]:
    """First ``n`` points of the run's scrambled Sobol design."""
    pts = sobol_points(space.n_dims, n, seed=stream(seed, DESIGN))
    return [space.from_unit(p) for p in pts]


def suggest(history: History, space: HyperParamSpace, seed: int = 0, *, n_init: int = N_INIT,
            history_index: int = 0, warm_start=None, return_model: bool = False):
    """Next config to evaluate given ``history``.

    While fewer than ``n_init`` finite observations exist the next initial
    design point is returned; afterwards a GP is fitted and EI maximized.
    The result never duplicates an evaluated config unless the space is
    exhausted.

    Parameters
    ----------
    seed : int
        Run seed. Together with ``len(history)`` and ``history_index`` it
        determines every random choice, so a fixed (history, seed) pair always
        gives the same suggestion.
    history_index : int
        Distinguishes histories sharing a run seed (ensemble construction).
    warm_start : GPModel, optional
        Previous fit, used as one of the marginal-likelihood starting points.
    return_model : bool
        Also return the fitted GP (None during the initial design).
    """
    n = len(history)
    ss = stream(seed, SUGGEST, n, history_index)
    fit_ss, acq_ss, guard_ss = ss.spawn(3)
    guard_rng = np.random.default_rng(guard_ss)
    gp = None
    finite = np.isfinite(history.risks) if n else np.zeros(0, bool)
    if n < n_init or not finite.any():
        config = initial_design(space, n + 1, seed)[n]
    else:
        try:
            gp = fit_gp(history, space, seed=np.random.default_rng(fit_ss), warm_start=warm_start)
            r_best = float(history.risks[finite].min())
            config = maximize_ei(gp, space, r_best, seed=acq_ss).config
        except GPNumericalError as exc:
            logger.warning("GP fit failed (%s); falling back to a random config", exc)
            config = space.sample(guard_rng)
    config = _dedupe(config, space, history, guard_rng)
    return (config, gp) if return_model else config


class SearchResult(NamedTuple):
    best_config: HyperParamConfig | None
    best_predictor: object
    history: History


class RunLog:
    """JSON-lines run log: one record per iteration.

    Non-finite risks are written as ``null`` with ``"failed": true``.
    """

    def __init__(self, fh):
        self.fh = fh

    @staticmethod
    def _clean(value):
        if isinstance(value, float) and not math.isfinite(value):
            return None
        if isinstance(value, (np.floating, np.integer)):
            return value.item()
        if isinstance(value, (list, tuple)):
            return [RunLog._clean(v) for v in value]
        if isinstance(value, dict):
            return {k: RunLog._clean(v) for k, v in value.items()}
        return value

    def write(self, record: dict) -> None:
        self.fh.write(json.dumps(self._clean(record), sort_keys=True) + "\n")
        self.fh.flush()


def _evaluate(problem, config):
    """Train once; ``None`` on training failure (the caller records +inf)."""
    try:
        return problem.evaluate(config)
    except TrainingError as exc:
        logger.warning("training failed for %s: %s", config, exc)
        return None


def _loop(problem, budget, propose: Callable, log, callback, extra: Callable | None = None) -> SearchResult:
    if budget < 1:
        raise ValueError(f"budget must be >= 1, got {budget}")
    history = History()
    predictors = []
    log = RunLog(log) if log is not None and not isinstance(log, RunLog) else log
    for k in range(1, budget + 1):
        t0 = time.perf_counter()
        config = propose(history)
        ev = _evaluate(problem, config)
        risk = ev.risk if ev is not None else math.inf
        history.add(config, risk)
        predictors.append(ev.predictor if ev is not None else None)
        if callback is not None:
            callback(k, config, ev, history)
        if log is not None:
            record = {"iteration": k, "config": list(config.values), "risk": risk,
                      "failed": ev is None, "wall_time": time.perf_counter() - t0}
            if extra is not None:
                record.update(extra())
            log.write(record)
    best = history.best_index()
    if best is None:
        return SearchResult(None, None, history)
    return SearchResult(history.records[best][0], predictors[best], history)


def run_smbo(problem, budget: int, seed: int = 0, *, n_init: int = N_INIT, log=None,
             callback: Callable | None = None) -> SearchResult:
    """Exactly ``budget`` trainings guided by GP/EI; returns the lowest-risk config.

    Ties in the final argmin go to the earliest record. Failed trainings are
    kept in the history as ``+inf`` and ignored by the GP.

    ``callback(k, config, evaluation, history)`` runs after every iteration
    (``evaluation`` is None for a failed training). ``log`` is a text stream
    receiving JSON-lines records.
    """
    state = {"gp": None}

    def propose(history):
        config, gp = suggest(history, problem.space, seed, n_init=n_init,
                             warm_start=state["gp"], return_model=True)
        if gp is not None:
            state["gp"] = gp
        return config

    return _loop(problem, budget, propose, log, callback)


def run_random_search(problem, budget: int, seed: int = 0, *, log=None,
                      callback: Callable | None = None) -> SearchResult:
    """Exactly ``budget`` trainings at configs drawn uniformly per axis scale."""
    rng = np.random.default_rng(stream(seed, RANDOM_SEARCH))
    return _loop(problem, budget, lambda history: problem.space.sample(rng), log, callback)
