import io
import json
import math

import numpy as np
import pytest

from smbo_ensemble.learners import Evaluation, ObjectiveValue, SyntheticProblem, TrainingError, branin
from smbo_ensemble.smbo import N_INIT, initial_design, run_random_search, run_smbo, suggest
from smbo_ensemble.space import INTEGER, Dimension, History, HyperParamSpace

BRANIN_MIN = 5 / (4 * math.pi)  # 0.397887...


class FlakyProblem:
    """Quadratic on [0, 1] whose training fails for x > 0.8."""

    task = "regression"
    n_valid = 1

    def __init__(self, space=None):
        self.space = space or HyperParamSpace([Dimension("x", 0.0, 1.0)])
        self.n_trainings = 0

    def evaluate(self, config):
        self.n_trainings += 1
        x = config.values[0]
        if x > 0.8:
            raise TrainingError("diverged")
        v = (x - 0.3) ** 2
        return Evaluation(config, ObjectiveValue(v), np.array([v]))

    def test_predictions(self, predictor):
        return np.array([predictor.value])

    def test_risk(self, predictions):
        return float(predictions[0])


def test_branin_grid_oracle():
    g1, g2 = np.meshgrid(np.linspace(-5, 10, 1501), np.linspace(0, 15, 1501))
    vals = np.vectorize(lambda a, b: branin((a, b)))(g1, g2)
    assert vals.min() == pytest.approx(BRANIN_MIN, abs=1e-4)
    for x in [(-math.pi, 12.275), (math.pi, 2.275), (9.42478, 2.475)]:
        assert branin(x) == pytest.approx(BRANIN_MIN, abs=1e-5)


def test_initial_design_is_shared_prefix():
    space = SyntheticProblem("branin").space
    a = initial_design(space, 3, seed=4)
    assert a == initial_design(space, 5, seed=4)[:3]
    h = History()
    for k in range(N_INIT):
        c = suggest(h, space, seed=4)
        assert c == a[k]
        h.add(c, float(k))


def test_suggest_is_pure_function_of_history_and_seed():
    p = SyntheticProblem("branin")
    res = run_smbo(p, 6, seed=2)
    h = History(list(res.history.records[:5]))
    assert suggest(h, p.space, seed=2) == suggest(h.copy(), p.space, seed=2)
    # the first model-based step has no warm start, so it matches the run exactly
    h = History(list(res.history.records[:N_INIT]))
    assert suggest(h, p.space, seed=2) == res.history.configs[N_INIT]


def test_suggest_all_failed_history_uses_design():
    space = HyperParamSpace([Dimension("x", 0.0, 1.0)])
    h = History()
    for c in initial_design(space, 4, seed=0):
        h.add(c, math.inf)
    assert suggest(h, space, seed=0) == initial_design(space, 5, seed=0)[4]


def test_run_smbo_budget_and_best():
    p = SyntheticProblem("quadratic_1d")
    res = run_smbo(p, 15, seed=0)
    assert p.n_trainings == 15 and len(res.history) == 15
    assert res.best_config == res.history.configs[int(np.argmin(res.history.risks))]
    assert res.best_predictor.value == pytest.approx(res.history.risks.min())
    assert res.history.risks.min() < 0.5 + 1e-3


def test_run_smbo_never_duplicates_in_continuous_space():
    res = run_smbo(SyntheticProblem("six_hump_camel"), 25, seed=1)
    assert len(set(res.history.configs)) == 25


def test_budget_validation():
    with pytest.raises(ValueError):
        run_smbo(SyntheticProblem("branin"), 0)
    with pytest.raises(ValueError):
        run_random_search(SyntheticProblem("branin"), 0)


def test_failed_trainings_are_logged_and_ignored():
    p = FlakyProblem()
    buf = io.StringIO()
    res = run_smbo(p, 12, seed=0, log=buf)
    records = [json.loads(line) for line in buf.getvalue().splitlines()]
    assert [r["iteration"] for r in records] == list(range(1, 13))
    for r, risk in zip(records, res.history.risks):
        assert r["failed"] == (not math.isfinite(risk))
        assert (r["risk"] is None) == r["failed"]
    assert res.best_config.values[0] <= 0.8
    assert p.n_trainings == 12


def test_every_training_fails():
    p = FlakyProblem(HyperParamSpace([Dimension("x", 0.9, 1.0)]))
    res = run_smbo(p, 4, seed=0)
    assert res.best_config is None and np.all(np.isinf(res.history.risks))


def test_exhausted_integer_space_re_evaluates():
    class Tiny(FlakyProblem):
        def evaluate(self, config):
            self.n_trainings += 1
            v = float((config.values[0] - 2) ** 2)
            return Evaluation(config, ObjectiveValue(v), np.array([v]))

    p = Tiny(HyperParamSpace([Dimension("k", 1, 3, INTEGER)]))
    res = run_smbo(p, 6, seed=0)
    assert p.n_trainings == 6
    assert set(c.values[0] for c in res.history.configs) == {1, 2, 3}


def test_callback_sees_every_iteration():
    seen = []
    run_smbo(SyntheticProblem("quadratic_1d"), 5, seed=0, callback=lambda k, c, ev, h: seen.append((k, len(h))))
    assert seen == [(k, k) for k in range(1, 6)]


def test_random_search_reproducible():
    a = run_random_search(SyntheticProblem("branin"), 10, seed=3)
    b = run_random_search(SyntheticProblem("branin"), 10, seed=3)
    assert a.history.records == b.history.records


def test_smbo_beats_random_search_on_branin():
    s = run_smbo(SyntheticProblem("branin"), 30, seed=0)
    r = run_random_search(SyntheticProblem("branin"), 30, seed=0)
    assert s.history.risks.min() < r.history.risks.min()
    assert s.history.risks.min() < 0.45
