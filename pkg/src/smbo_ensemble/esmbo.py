"""Ensemble construction with bootstrap validation histories optimized round-robin.

Each of the N histories scores configs on its own bootstrap resample of the
validation set. Histories take turns proposing the next config; the
resulting predictor is trained once and its per-example validation losses
update every history. At the end each history votes for its lowest-risk
predictor and the votes become ensemble weights.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .agnostic import BootstrapWeights, Ensemble, EnsembleMember, _argmin_random_ties, draw_bootstrap, weighted_risk
from .smbo import BOOTSTRAP, FINALIZE, N_INIT, RANDOM_SEARCH, RunLog, _evaluate, stream, suggest
from .space import History

DEFAULT_ENSEMBLE_SIZE = 10


def round_robin_index(k: int, n: int) -> int:
    """History (1-based) that proposes at iteration ``k`` (1-based): 1, 2, ..., n, 1, ..."""
    if k < 1 or n < 1:
        raise ValueError(f"need k >= 1 and n >= 1, got k={k}, n={n}")
    return (k - 1) % n + 1


@dataclass
class EnsembleRunState:
    """Everything an ensemble run accumulates.

    Attributes
    ----------
    histories : list of History
        One per bootstrap resample; each holds every trained config.
    bootstrap_weights : list of BootstrapWeights
    loss_cache : dict
        Config -> per-example validation losses (absent for failed trainings).
    trained : list of (config, predictor)
        In training order; ``predictor`` is None for a failed training.
    train_count : int
    seed : int
    task_kind : str
    """

    histories: list
    bootstrap_weights: list
    loss_cache: dict = field(default_factory=dict)
    trained: list = field(default_factory=list)
    train_count: int = 0
    seed: int = 0
    task_kind: str = "regression"

    @property
    def ensemble_size(self) -> int:
        return len(self.histories)

    def record(self, config, evaluation) -> list:
        """Add one training outcome to every history; returns the per-history risks."""
        self.train_count += 1
        if evaluation is None:
            self.trained.append((config, None))
            risks = [math.inf] * len(self.histories)
        else:
            self.trained.append((config, evaluation.predictor))
            row = np.asarray(evaluation.losses, dtype=float)
            self.loss_cache[config] = row
            risks = [weighted_risk(row, w) for w in self.bootstrap_weights]
        for history, risk in zip(self.histories, risks):
            history.add(config, risk)
        return risks


def _make_state(problem, n, seed, bootstrap_weights) -> EnsembleRunState:
    if n < 1:
        raise ValueError(f"ensemble size must be >= 1, got {n}")
    if bootstrap_weights is None:
        rng = np.random.default_rng(stream(seed, BOOTSTRAP))
        bootstrap_weights = [draw_bootstrap(problem.n_valid, rng) for _ in range(n)]
    bootstrap_weights = list(bootstrap_weights)
    if len(bootstrap_weights) != n:
        raise ValueError(f"need {n} bootstrap weight vectors, got {len(bootstrap_weights)}")
    for w in bootstrap_weights:
        if not isinstance(w, BootstrapWeights) or w.counts.size != problem.n_valid:
            raise ValueError(f"bootstrap weights must be BootstrapWeights over {problem.n_valid} examples")
    return EnsembleRunState([History() for _ in range(n)], bootstrap_weights, seed=seed,
                            task_kind=problem.task)


def _winners(state: EnsembleRunState, rng) -> list:
    """Index into ``state.trained`` of each history's argmin (None if it has no finite risk)."""
    out = []
    for history in state.histories:
        risks = history.risks
        if not np.isfinite(risks).any():
            out.append(None)
            continue
        out.append(int(_argmin_random_ties(risks, rng)[0]))
    return out


def finalize_ensemble(state: EnsembleRunState) -> Ensemble:
    """Each history votes for its lowest-risk predictor; a vote weighs 1/N.

    Exact ties within a history are broken uniformly at random from a
    stream derived from the run seed and the training count, so finalizing
    the same state twice gives the same ensemble. A predictor winning several
    histories appears once with the summed weight.
    """
    rng = np.random.default_rng(stream(state.seed, FINALIZE, state.train_count))
    n = state.ensemble_size
    weights: dict[int, float] = {}
    for idx in _winners(state, rng):
        if idx is not None:
            weights[idx] = weights.get(idx, 0) + 1
    members = []
    for idx in sorted(weights):
        config, predictor = state.trained[idx]
        members.append(EnsembleMember(predictor, weights[idx] / n, config))
    return Ensemble(members, state.task_kind)


def _ensemble_loop(problem, budget, state: EnsembleRunState, propose: Callable, log, callback):
    if budget < 1:
        raise ValueError(f"budget must be >= 1, got {budget}")
    log = RunLog(log) if log is not None and not isinstance(log, RunLog) else log
    for k in range(1, budget + 1):
        t0 = time.perf_counter()
        v, config = propose(k)
        ev = _evaluate(problem, config)
        risks = state.record(config, ev)
        if callback is not None:
            callback(k, config, ev, state)
        if log is not None:
            winners = _winners(state, np.random.default_rng(stream(state.seed, FINALIZE, state.train_count)))
            log.write({
                "iteration": k, "config": list(config.values), "risk": ev.risk if ev is not None else math.inf,
                "failed": ev is None, "wall_time": time.perf_counter() - t0, "active_history": v,
                "history_risks": risks, "winners": winners,
            })
    return finalize_ensemble(state), state


def run_esmbo(problem, budget: int, ensemble_size: int = DEFAULT_ENSEMBLE_SIZE, seed: int = 0, *,
              bootstrap_weights=None, n_init: int = N_INIT, log=None, callback: Callable | None = None):
    """Build an agnostic-Bayes ensemble with exactly ``budget`` trainings.

    Parameters
    ----------
    problem : TuningProblem or SyntheticProblem
    budget : int
        Number of trainings M, independent of ``ensemble_size``.
    ensemble_size : int
        Number of bootstrap histories N.
    seed : int
        Run seed. History ``j`` suggests with ``history_index=j`` so N = 1
        follows the same random streams as :func:`run_smbo`.
    bootstrap_weights : sequence of BootstrapWeights, optional
        Override the resamples (e.g. all-ones to recover plain SMBO).
    log : text stream, optional
        JSON-lines sink; records add ``active_history``, ``history_risks``
        and ``winners`` to the SMBO fields.
    callback : callable, optional
        ``callback(k, config, evaluation, state)`` after every training.

    Returns
    -------
    ensemble : Ensemble
    state : EnsembleRunState
    """
    state = _make_state(problem, ensemble_size, seed, bootstrap_weights)
    gps = [None] * ensemble_size

    def propose(k):
        v = round_robin_index(k, ensemble_size)
        j = v - 1
        config, gp = suggest(state.histories[j], problem.space, seed, n_init=n_init, history_index=j,
                             warm_start=gps[j], return_model=True)
        if gp is not None:
            gps[j] = gp
        return v, config

    return _ensemble_loop(problem, budget, state, propose, log, callback)


def run_ers(problem, budget: int, ensemble_size: int = DEFAULT_ENSEMBLE_SIZE, seed: int = 0, *,
            bootstrap_weights=None, log=None, callback: Callable | None = None):
    """Agnostic-Bayes ensemble over randomly sampled configs.

    The configs are exactly those :func:`run_random_search` draws under the
    same seed, and the bootstrap resamples are those :func:`run_esmbo` uses.
    """
    state = _make_state(problem, ensemble_size, seed, bootstrap_weights)
    rng = np.random.default_rng(stream(seed, RANDOM_SEARCH))
    return _ensemble_loop(problem, budget, state,
                          lambda k: (round_robin_index(k, ensemble_size), problem.space.sample(rng)),
                          log, callback)
