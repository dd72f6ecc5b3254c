import io
import json
import math

import numpy as np
import pytest

from smbo_ensemble.agnostic import BootstrapWeights, weighted_risk
from smbo_ensemble.esmbo import (EnsembleRunState, finalize_ensemble, round_robin_index, run_ers, run_esmbo)
from smbo_ensemble.learners import ALGORITHMS, SQUARED, ZERO_ONE, TrainingError, TuningProblem, make_dataset
from smbo_ensemble.smbo import run_random_search, run_smbo
from smbo_ensemble.space import Dimension, History, HyperParamSpace


def problem(alg="knn_classifier", data="xor", seed=0):
    make, space = ALGORITHMS[alg]
    ds = make_dataset(data, n_train=60, n_valid=40, n_test=100, seed=seed)
    return TuningProblem(make(), space, ds, ZERO_ONE if ds.task == "classification" else SQUARED, alg)


class Tag:
    def __init__(self, name):
        self.name = name

    def predict(self, X):
        return np.zeros(len(X))


def state_from(risk_rows, seed=0):
    """EnsembleRunState with histories[j] holding risk_rows[j] over shared configs."""
    space = HyperParamSpace([Dimension("x", 0, 10)])
    configs = [space.config([float(i)]) for i in range(len(risk_rows[0]))]
    histories = [History([(c, r) for c, r in zip(configs, row)]) for row in risk_rows]
    trained = [(c, Tag(i)) for i, c in enumerate(configs)]
    n = len(risk_rows)
    return EnsembleRunState(histories, [BootstrapWeights.ones(1)] * n, trained=trained,
                            train_count=len(configs), seed=seed)


@pytest.mark.parametrize("k,n,v", [(1, 3, 1), (3, 3, 3), (4, 3, 1), (7, 1, 1), (10, 4, 2)])
def test_round_robin_index(k, n, v):
    assert round_robin_index(k, n) == v


def test_round_robin_full_sweep():
    counts = np.bincount([round_robin_index(k, 3) for k in range(1, 7)])
    assert list(counts[1:]) == [2, 2, 2]
    with pytest.raises(ValueError):
        round_robin_index(0, 3)


def test_finalize_single_winner():
    ens = finalize_ensemble(state_from([[0.3, 0.1, 0.2], [0.5, 0.2, 0.4]]))
    assert len(ens) == 1 and ens.members[0].weight == 1.0 and ens.members[0].predictor.name == 1


def test_finalize_disjoint_winners():
    ens = finalize_ensemble(state_from([[0.1, 0.2], [0.2, 0.1]]))
    assert [m.predictor.name for m in ens.members] == [0, 1]
    assert [m.weight for m in ens.members] == [0.5, 0.5]


def test_finalize_merges_duplicate_winners():
    ens = finalize_ensemble(state_from([[0.1, 0.2, 0.3], [0.2, 0.1, 0.3], [0.1, 0.5, 0.5], [0.2, 0.4, 0.1]]))
    weights = {m.predictor.name: m.weight for m in ens.members}
    assert weights == {0: 0.5, 1: 0.25, 2: 0.25}


def test_finalize_breaks_ties_randomly_but_reproducibly():
    picks = {finalize_ensemble(state_from([[0.1, 0.1]], seed=s)).members[0].predictor.name for s in range(40)}
    assert picks == {0, 1}
    a = finalize_ensemble(state_from([[0.1, 0.1]] * 5, seed=3))
    b = finalize_ensemble(state_from([[0.1, 0.1]] * 5, seed=3))
    assert [(m.predictor.name, m.weight) for m in a.members] == [(m.predictor.name, m.weight) for m in b.members]


def test_finalize_skips_histories_without_finite_risk():
    ens = finalize_ensemble(state_from([[math.inf, math.inf], [0.2, 0.1]]))
    assert [(m.predictor.name, m.weight) for m in ens.members] == [(1, 0.5)]


@pytest.mark.parametrize("n", [1, 5, 20])
def test_training_count_equals_budget(n):
    p = problem()
    _, state = run_esmbo(p, 20, n, seed=0)
    assert p.n_trainings == 20 and state.train_count == 20
    assert all(len(h) == 20 for h in state.histories)


def test_history_risks_reproducible_from_cache():
    p = problem("kernel_ridge", "sine")
    _, state = run_esmbo(p, 12, 4, seed=1)
    for h, w in zip(state.histories, state.bootstrap_weights):
        for config, risk in h:
            assert abs(weighted_risk(state.loss_cache[config], w) - risk) <= 1e-12


def test_m_equals_n_gives_one_suggestion_per_history():
    buf = io.StringIO()
    run_esmbo(problem(), 6, 6, seed=0, log=buf)
    records = [json.loads(line) for line in buf.getvalue().splitlines()]
    assert sorted(r["active_history"] for r in records) == [1, 2, 3, 4, 5, 6]
    assert all(len(r["history_risks"]) == 6 and len(r["winners"]) == 6 for r in records)


def test_single_history_with_identity_weights_reproduces_smbo():
    s = run_smbo(problem("kernel_ridge", "friedman"), 12, seed=5)
    ens, state = run_esmbo(problem("kernel_ridge", "friedman"), 12, 1, seed=5,
                           bootstrap_weights=[BootstrapWeights.ones(40)])
    assert state.histories[0].records == s.history.records
    assert [m.config for m in ens.members] == [s.best_config]


def test_identity_weights_collapse_to_one_member():
    ens, state = run_esmbo(problem("kernel_ridge", "sine"), 10, 3, seed=2,
                           bootstrap_weights=[BootstrapWeights.ones(40)] * 3)
    assert state.histories[0].records == state.histories[1].records == state.histories[2].records
    assert len(ens) == 1 and ens.members[0].weight == 1.0


def test_shared_initial_design_with_smbo():
    s = run_smbo(problem(), 5, seed=9)
    _, state = run_esmbo(problem(), 5, 3, seed=9)
    assert state.histories[0].configs[:3] == s.history.configs[:3]


def test_ers_trains_random_search_configs():
    r = run_random_search(problem(), 8, seed=4)
    ens, state = run_ers(problem(), 8, 5, seed=4)
    assert state.histories[0].configs == r.history.configs
    assert 0 < len(ens) <= 5 and sum(m.weight for m in ens.members) == pytest.approx(1.0)


def test_failures_are_consistent_across_histories():
    class Flaky(TuningProblem):
        def evaluate(self, config):
            if config.values[0] > 30:
                self.n_trainings += 1
                raise TrainingError("refused")
            return super().evaluate(config)

    make, space = ALGORITHMS["knn_classifier"]
    p = Flaky(make(), space, make_dataset("xor", n_train=60, n_valid=40, n_test=50), ZERO_ONE)
    ens, state = run_esmbo(p, 15, 3, seed=0)
    assert p.n_trainings == 15
    for k in range(15):
        failed = [math.isinf(h.records[k][1]) for h in state.histories]
        assert len(set(failed)) == 1
    assert all(m.config.values[0] <= 30 for m in ens.members)


def test_argument_validation():
    with pytest.raises(ValueError):
        run_esmbo(problem(), 0, 2)
    with pytest.raises(ValueError):
        run_esmbo(problem(), 5, 0)
    with pytest.raises(ValueError):
        run_esmbo(problem(), 5, 2, bootstrap_weights=[BootstrapWeights.ones(40)])
    with pytest.raises(ValueError):
        run_esmbo(problem(), 5, 1, bootstrap_weights=[BootstrapWeights.ones(7)])


def test_ensemble_predicts_on_test_split():
    p = problem("kernel_ridge_classifier", "xor")
    ens, _ = run_esmbo(p, 15, 5, seed=0)
    pred = ens.predict(p.dataset.X_test)
    assert set(np.unique(pred)) <= {0, 1}
    assert p.test_risk(pred) < 0.5
