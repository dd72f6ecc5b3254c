import numpy as np
import pytest
from sklearn.base import BaseEstimator, RegressorMixin, clone
from sklearn.kernel_ridge import KernelRidge
from sklearn.linear_model import Ridge
from sklearn.neighbors import KNeighborsRegressor

from smbo_ensemble.agnostic import BootstrapWeights
from smbo_ensemble.learners import (ALGORITHMS, GENERATORS, OBJECTIVES, SQUARED, ZERO_ONE, Dataset, KNNClassifier,
                                    KNNRegressor, LossFn, RBFKernelRidge, RBFKernelRidgeClassifier, RidgeRegression,
                                    SyntheticProblem, TrainingError, TuningProblem, empirical_risk, load_csv,
                                    make_dataset, synthetic_objective, train)
from smbo_ensemble.space import Dimension, HyperParamSpace


@pytest.fixture
def reg_data():
    rng = np.random.default_rng(0)
    X = rng.normal(size=(60, 4))
    return X, X @ np.array([1.0, -2.0, 0.0, 0.5]) + 3.0 + 0.1 * rng.normal(size=60)


def _standardized(X, ref):
    mu, sd = ref.mean(0), ref.std(0)
    return (X - mu) / sd


@pytest.mark.parametrize("alpha", [1e-3, 1.0, 100.0])
def test_ridge_matches_sklearn(reg_data, alpha):
    X, y = reg_data
    ours = RidgeRegression(alpha).fit(X, y)
    ref = Ridge(alpha=alpha).fit(X, y)
    np.testing.assert_allclose(ours.coef_, ref.coef_, rtol=1e-8, atol=1e-10)
    np.testing.assert_allclose(ours.predict(X[:5]), ref.predict(X[:5]), rtol=1e-8)


def test_kernel_ridge_matches_sklearn(reg_data):
    X, y = reg_data
    ours = RBFKernelRidge(alpha=0.3, gamma=0.2).fit(X, y)
    ref = KernelRidge(alpha=0.3, kernel="rbf", gamma=0.2).fit(_standardized(X, X), y - y.mean())
    Z = np.random.default_rng(1).normal(size=(7, 4))
    np.testing.assert_allclose(ours.predict(Z), ref.predict(_standardized(Z, X)) + y.mean(), rtol=1e-7)


def test_knn_regressor_matches_sklearn(reg_data):
    X, y = reg_data
    ours = KNNRegressor(n_neighbors=5).fit(X, y)
    ref = KNeighborsRegressor(n_neighbors=5).fit(_standardized(X, X), y)
    Z = np.random.default_rng(2).normal(size=(10, 4))
    np.testing.assert_allclose(ours.predict(Z), ref.predict(_standardized(Z, X)))


def test_knn_classifier_tie_goes_to_smallest_label():
    X = np.array([[-1.0], [1.0]])
    clf = KNNClassifier(n_neighbors=2).fit(X, np.array([7, 3]))
    assert clf.predict([[0.0]])[0] == 3
    assert KNNClassifier(n_neighbors=1).fit(X, np.array([7, 3])).predict([[-0.9]])[0] == 7


def test_knn_caps_neighbors_at_training_size():
    clf = KNNRegressor(n_neighbors=50).fit(np.arange(4.0)[:, None], np.arange(4.0))
    np.testing.assert_allclose(clf.predict([[0.0]]), [1.5])


def test_kernel_ridge_classifier_learns_xor():
    ds = make_dataset("xor", n_train=200, n_valid=10, n_test=300, seed=0, noise=0.1)
    clf = RBFKernelRidgeClassifier(alpha=0.1, gamma=1.0).fit(ds.X_train, ds.y_train)
    assert np.mean(clf.predict(ds.X_test) == ds.y_test) > 0.85
    assert clf.decision_function(ds.X_test[:3]).shape == (3, 2)


def test_estimators_follow_sklearn_conventions():
    for make, _ in ALGORITHMS.values():
        est = make()
        assert clone(est).get_params() == est.get_params()


def test_losses():
    np.testing.assert_array_equal(ZERO_ONE([1, 0, 2], [1, 1, 2]), [0, 1, 0])
    np.testing.assert_array_equal(SQUARED([1.0, 3.0], [0.0, 1.0]), [1.0, 4.0])
    with pytest.raises(ValueError):
        LossFn("hinge")
    with pytest.raises(ValueError):
        SQUARED([1.0], [1.0, 2.0])


def test_dataset_splits(tmp_path):
    X = np.arange(20.0).reshape(10, 2)
    ds = Dataset.from_arrays(X, np.arange(10), fractions=(0.4, 0.3, 0.3), seed=0)
    assert (len(ds.y_train), len(ds.y_valid), len(ds.y_test)) == (4, 3, 3)
    assert sorted(np.r_[ds.y_train, ds.y_valid, ds.y_test]) == list(range(10))
    with pytest.raises(ValueError):
        Dataset(X[:0], X[:0, 0], X, X[:, 0], X, X[:, 0])
    path = tmp_path / "d.csv"
    path.write_text("a,b,y\n" + "\n".join(f"{i},{i * 2},{i % 2}" for i in range(10)) + "\n")
    ds = load_csv(path, task="classification")
    assert ds.X_train.shape[1] == 2 and ds.y_train.dtype.kind == "i"


@pytest.mark.parametrize("name", sorted(GENERATORS))
def test_generators_are_deterministic(name):
    a = make_dataset(name, n_train=10, n_valid=5, n_test=5, seed=3)
    b = make_dataset(name, n_train=10, n_valid=5, n_test=5, seed=3)
    np.testing.assert_array_equal(a.X_train, b.X_train)
    assert a.task == GENERATORS[name][1]


def test_tuning_problem_counts_and_validates():
    make, space = ALGORITHMS["ridge"]
    p = TuningProblem(make(), space, make_dataset("linear", n_train=30, n_valid=20, n_test=10), SQUARED)
    ev = p.evaluate(space.config([1.0]))
    assert ev.losses.shape == (20,) and ev.risk == pytest.approx(ev.losses.mean())
    train(p, space.config([10.0]))
    assert p.n_trainings == 2
    with pytest.raises(ValueError):
        TuningProblem(make(), HyperParamSpace([Dimension("gamma", 0, 1)]), p.dataset, SQUARED)
    w = BootstrapWeights(np.r_[np.full(10, 2), np.zeros(10, int)])
    assert empirical_risk(ev.predictor, p.dataset.X_valid, p.dataset.y_valid, SQUARED, w) == \
        pytest.approx(ev.losses[:10].mean())


def test_training_failures_become_training_error():
    class Broken(RegressorMixin, BaseEstimator):
        def __init__(self, c=1.0):
            self.c = c

        def fit(self, X, y):
            raise ValueError("bad input")

    p = TuningProblem(Broken(), HyperParamSpace([Dimension("c", 0, 1)]),
                      make_dataset("linear", n_train=5, n_valid=5, n_test=5), SQUARED)
    with pytest.raises(TrainingError):
        p.evaluate(p.space.config([0.5]))
    assert p.n_trainings == 1


@pytest.mark.parametrize("name,x,value", [
    ("quadratic_1d", (0.37,), 0.5),
    ("branin", (np.pi, 2.275), 5 / (4 * np.pi)),
    ("six_hump_camel", (0.0898, -0.7126), -1.0316),
    ("styblinski_2d", (-2.903534, -2.903534), -78.33233),
])
def test_synthetic_minima(name, x, value):
    assert synthetic_objective(name, x) == pytest.approx(value, abs=1e-4)
    assert OBJECTIVES[name][1].n_dims == len(x)


def test_synthetic_problem():
    p = SyntheticProblem("quadratic_1d")
    ev = p.evaluate(p.space.config([1.37]))
    assert ev.risk == pytest.approx(4.5) and p.n_trainings == 1
    assert p.test_risk(p.test_predictions(ev.predictor)) == pytest.approx(4.5)
    with pytest.raises(ValueError):
        SyntheticProblem("rastrigin")
