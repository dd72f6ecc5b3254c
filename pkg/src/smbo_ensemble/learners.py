"""Desk-scale tuning problems: datasets, simple learners, losses, synthetic objectives."""

from __future__ import annotations

import csv
import math
import threading
from dataclasses import dataclass
from typing import Any, Callable

import numpy as np
from scipy.linalg import LinAlgError, cho_factor, cho_solve
from sklearn.base import BaseEstimator, ClassifierMixin, RegressorMixin, clone
from sklearn.utils.validation import check_array, check_is_fitted, check_X_y

from .agnostic import CLASSIFICATION, REGRESSION, BootstrapWeights, weighted_risk
from .space import CONTINUOUS, INTEGER, LOG, Dimension, HyperParamConfig, HyperParamSpace


class TrainingError(RuntimeError):
    """A learner could not be trained for the requested config."""


def _standardize_fit(X):
    mu = X.mean(axis=0)
    sd = X.std(axis=0)
    sd[sd == 0] = 1.0
    return mu, sd


class RidgeRegression(RegressorMixin, BaseEstimator):
    """Least squares with an L2 penalty on the weights; the intercept is not penalized.

    Parameters
    ----------
    alpha : float, default=1.0
        Penalty strength. As ``alpha`` grows the model tends to the target mean.
    """

    def __init__(self, alpha=1.0):
        self.alpha = alpha

    def fit(self, X, y):
        X, y = check_X_y(X, y, y_numeric=True)
        self.x_mean_ = X.mean(axis=0)
        self.y_mean_ = float(y.mean())
        Xc = X - self.x_mean_
        A = Xc.T @ Xc + self.alpha * np.eye(X.shape[1])
        try:
            self.coef_ = cho_solve(cho_factor(A), Xc.T @ (y - self.y_mean_))
        except LinAlgError as exc:
            raise TrainingError(f"ridge system is singular at alpha={self.alpha}") from exc
        self.intercept_ = self.y_mean_ - self.x_mean_ @ self.coef_
        self.n_features_in_ = X.shape[1]
        return self

    def predict(self, X):
        check_is_fitted(self, "coef_")
        X = check_array(X)
        return X @ self.coef_ + self.intercept_


class RBFKernelRidge(RegressorMixin, BaseEstimator):
    """Kernel ridge regression with ``k(x, x') = exp(-gamma * ||x - x'||^2)``.

    Features are standardized with training statistics so ``gamma`` means the
    same thing across datasets. Targets are centered.
    """

    def __init__(self, alpha=1.0, gamma=1.0):
        self.alpha = alpha
        self.gamma = gamma

    def _kernel(self, A, B):
        sq = (A * A).sum(1)[:, None] + (B * B).sum(1)[None, :] - 2.0 * A @ B.T
        return np.exp(-self.gamma * np.maximum(sq, 0.0))

    def fit(self, X, y):
        X, y = check_X_y(X, y, y_numeric=True)
        self.x_mean_, self.x_scale_ = _standardize_fit(X)
        Z = (X - self.x_mean_) / self.x_scale_
        self.y_mean_ = float(y.mean())
        K = self._kernel(Z, Z)
        K[np.diag_indices_from(K)] += self.alpha
        try:
            self.dual_coef_ = cho_solve(cho_factor(K), y - self.y_mean_)
        except LinAlgError as exc:
            raise TrainingError(f"kernel system is singular at alpha={self.alpha}, gamma={self.gamma}") from exc
        self.X_fit_ = Z
        self.n_features_in_ = X.shape[1]
        return self

    def predict(self, X):
        check_is_fitted(self, "dual_coef_")
        Z = (check_array(X) - self.x_mean_) / self.x_scale_
        return self._kernel(Z, self.X_fit_) @ self.dual_coef_ + self.y_mean_


class RBFKernelRidgeClassifier(ClassifierMixin, BaseEstimator):
    """One-vs-rest kernel ridge on +/-1 indicator targets; predicts the highest score.

    Ties go to the smallest label.
    """

    def __init__(self, alpha=1.0, gamma=1.0):
        self.alpha = alpha
        self.gamma = gamma

    def fit(self, X, y):
        X, y = check_X_y(X, y)
        self.classes_, codes = np.unique(y, return_inverse=True)
        Y = np.where(codes[:, None] == np.arange(len(self.classes_)), 1.0, -1.0)
        self.regressor_ = RBFKernelRidge(self.alpha, self.gamma).fit(X, Y[:, 0])
        # one factorization serves every class column
        K = self.regressor_._kernel(self.regressor_.X_fit_, self.regressor_.X_fit_)
        K[np.diag_indices_from(K)] += self.alpha
        self.y_mean_ = Y.mean(axis=0)
        try:
            self.dual_coef_ = cho_solve(cho_factor(K), Y - self.y_mean_)
        except LinAlgError as exc:
            raise TrainingError(f"kernel system is singular at alpha={self.alpha}, gamma={self.gamma}") from exc
        self.n_features_in_ = X.shape[1]
        return self

    def decision_function(self, X):
        check_is_fitted(self, "dual_coef_")
        r = self.regressor_
        Z = (check_array(X) - r.x_mean_) / r.x_scale_
        return r._kernel(Z, r.X_fit_) @ self.dual_coef_ + self.y_mean_

    def predict(self, X):
        return self.classes_[np.argmax(self.decision_function(X), axis=1)]


class _KNNBase(BaseEstimator):
    def __init__(self, n_neighbors=5):
        self.n_neighbors = n_neighbors

    def _fit(self, X, y):
        self.x_mean_, self.x_scale_ = _standardize_fit(X)
        self.X_fit_ = (X - self.x_mean_) / self.x_scale_
        self.y_fit_ = y
        self.n_features_in_ = X.shape[1]
        return self

    def _neighbors(self, X):
        check_is_fitted(self, "X_fit_")
        Z = (check_array(X) - self.x_mean_) / self.x_scale_
        k = int(min(max(int(self.n_neighbors), 1), self.X_fit_.shape[0]))
        sq = (Z * Z).sum(1)[:, None] + (self.X_fit_ ** 2).sum(1)[None, :] - 2.0 * Z @ self.X_fit_.T
        # stable sort: equidistant neighbours are taken in training order
        return np.argsort(sq, axis=1, kind="stable")[:, :k]


class KNNRegressor(RegressorMixin, _KNNBase):
    """Mean target of the ``n_neighbors`` closest training points (standardized features)."""

    def fit(self, X, y):
        X, y = check_X_y(X, y, y_numeric=True)
        return self._fit(X, y.astype(float))

    def predict(self, X):
        return self.y_fit_[self._neighbors(X)].mean(axis=1)


class KNNClassifier(ClassifierMixin, _KNNBase):
    """Majority label among the ``n_neighbors`` closest training points; ties go to the smallest label."""

    def fit(self, X, y):
        X, y = check_X_y(X, y)
        self.classes_, codes = np.unique(y, return_inverse=True)
        self._fit(X, codes)
        return self

    def predict(self, X):
        nb = self.y_fit_[self._neighbors(X)]
        votes = np.stack([(nb == c).sum(axis=1) for c in range(len(self.classes_))], axis=1)
        return self.classes_[np.argmax(votes, axis=1)]


@dataclass(frozen=True)
class LossFn:
    kind: str

    def __post_init__(self):
        if self.kind not in ("zero_one", "squared"):
            raise ValueError(f"unknown loss {self.kind!r}")

    def __call__(self, predictions, targets) -> np.ndarray:
        p = np.asarray(predictions)
        t = np.asarray(targets)
        if p.shape != t.shape:
            raise ValueError(f"prediction shape {p.shape} != target shape {t.shape}")
        if self.kind == "zero_one":
            return (p != t).astype(float)
        return (p.astype(float) - t.astype(float)) ** 2


ZERO_ONE = LossFn("zero_one")
SQUARED = LossFn("squared")


@dataclass
class Dataset:
    """Disjoint train / validation / test splits."""

    X_train: np.ndarray
    y_train: np.ndarray
    X_valid: np.ndarray
    y_valid: np.ndarray
    X_test: np.ndarray
    y_test: np.ndarray
    task: str = REGRESSION

    def __post_init__(self):
        for name in ("train", "valid", "test"):
            X, y = getattr(self, f"X_{name}"), getattr(self, f"y_{name}")
            if len(X) == 0:
                raise ValueError(f"empty {name} split")
            if len(X) != len(y):
                raise ValueError(f"{name} split: {len(X)} inputs vs {len(y)} targets")

    @classmethod
    def from_arrays(cls, X, y, task=REGRESSION, fractions=(0.4, 0.3, 0.3), seed=0) -> "Dataset":
        """Shuffle once and cut into train / validation / test by ``fractions``."""
        X = np.asarray(X, dtype=float)
        y = np.asarray(y)
        n = len(X)
        perm = np.random.default_rng(seed).permutation(n)
        n_tr = int(round(fractions[0] * n))
        n_va = int(round(fractions[1] * n))
        tr, va, te = perm[:n_tr], perm[n_tr:n_tr + n_va], perm[n_tr + n_va:]
        return cls(X[tr], y[tr], X[va], y[va], X[te], y[te], task)


def load_csv(path, task=REGRESSION, fractions=(0.4, 0.3, 0.3), seed=0) -> Dataset:
    """Comma-separated file with a header row; the last column is the target.

    Classification targets must be integers.
    """
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    if len(rows) < 2:
        raise ValueError(f"{path}: need a header and at least one data row")
    data = np.array([[float(v) for v in r] for r in rows[1:] if r])
    X, y = data[:, :-1], data[:, -1]
    if task == CLASSIFICATION:
        if np.any(y != np.round(y)):
            raise ValueError(f"{path}: classification targets must be integers")
        y = y.astype(int)
    return Dataset.from_arrays(X, y, task=task, fractions=fractions, seed=seed)


# -- synthetic data --------------------------------------------------------

def make_linear(n, n_features=10, noise=1.0, seed=0):
    rng = np.random.default_rng(seed)
    X = rng.normal(size=(n, n_features))
    w = rng.normal(size=n_features) * (rng.random(n_features) < 0.5)
    return X, X @ w + noise * rng.normal(size=n)


def make_friedman(n, n_features=5, noise=1.0, seed=0):
    rng = np.random.default_rng(seed)
    X = rng.random((n, max(n_features, 5)))
    y = (10 * np.sin(np.pi * X[:, 0] * X[:, 1]) + 20 * (X[:, 2] - 0.5) ** 2
         + 10 * X[:, 3] + 5 * X[:, 4])
    return X, y + noise * rng.normal(size=n)


def make_sine(n, n_features=3, noise=0.3, seed=0):
    """Noisy sine of the first feature; remaining features are distractors."""
    rng = np.random.default_rng(seed)
    X = rng.uniform(-3, 3, size=(n, n_features))
    return X, np.sin(2.0 * X[:, 0]) + noise * rng.normal(size=n)


def make_two_gaussians(n, n_features=2, separation=1.5, seed=0):
    rng = np.random.default_rng(seed)
    y = rng.integers(0, 2, size=n)
    X = rng.normal(size=(n, n_features))
    X[:, 0] += separation * (y - 0.5) * 2
    return X, y


def make_xor(n, n_features=2, noise=0.4, seed=0):
    rng = np.random.default_rng(seed)
    X = rng.uniform(-1, 1, size=(n, n_features))
    y = ((X[:, 0] > 0) ^ (X[:, 1] > 0)).astype(int)
    return X + noise * rng.normal(size=X.shape), y


GENERATORS = {
    "linear": (make_linear, REGRESSION),
    "friedman": (make_friedman, REGRESSION),
    "sine": (make_sine, REGRESSION),
    "two_gaussians": (make_two_gaussians, CLASSIFICATION),
    "xor": (make_xor, CLASSIFICATION),
}


def make_dataset(generator, n_train=100, n_valid=100, n_test=500, seed=0, **kwargs) -> Dataset:
    fn, task = GENERATORS[generator]
    n = n_train + n_valid + n_test
    X, y = fn(n, seed=seed, **kwargs)
    return Dataset(X[:n_train], y[:n_train],
                   X[n_train:n_train + n_valid], y[n_train:n_train + n_valid],
                   X[n_train + n_valid:], y[n_train + n_valid:], task)


# -- learners and their spaces --------------------------------------------

def _log_dim(name, lo, hi):
    return Dimension(name, lo, hi, CONTINUOUS, LOG)


ALGORITHMS = {
    "ridge": (lambda: RidgeRegression(), HyperParamSpace([_log_dim("alpha", 1e-5, 1e3)])),
    "kernel_ridge": (
        lambda: RBFKernelRidge(),
        HyperParamSpace([_log_dim("alpha", 1e-5, 1e3), _log_dim("gamma", 1e-5, 1e3)]),
    ),
    "kernel_ridge_classifier": (
        lambda: RBFKernelRidgeClassifier(),
        HyperParamSpace([_log_dim("alpha", 1e-5, 1e3), _log_dim("gamma", 1e-5, 1e3)]),
    ),
    "knn_regressor": (lambda: KNNRegressor(), HyperParamSpace([Dimension("n_neighbors", 1, 50, INTEGER)])),
    "knn_classifier": (lambda: KNNClassifier(), HyperParamSpace([Dimension("n_neighbors", 1, 50, INTEGER)])),
}


@dataclass
class Evaluation:
    """Outcome of one training: the predictor and its per-example validation losses."""

    config: HyperParamConfig
    predictor: Any
    losses: np.ndarray

    @property
    def risk(self) -> float:
        return weighted_risk(self.losses)


class TuningProblem:
    """A learning algorithm, its hyperparameter space, a dataset split and a loss.

    Every call to :meth:`train` counts against :attr:`n_trainings`, failures
    included.
    """

    def __init__(self, estimator, space: HyperParamSpace, dataset: Dataset, loss: LossFn, name="problem"):
        missing = set(space.names) - set(estimator.get_params())
        if missing:
            raise ValueError(f"space dimensions {sorted(missing)} are not parameters of {type(estimator).__name__}")
        self.estimator = estimator
        self.space = space
        self.dataset = dataset
        self.loss = loss
        self.name = name
        self.n_trainings = 0
        self._lock = threading.Lock()

    @property
    def task(self) -> str:
        return self.dataset.task

    @property
    def n_valid(self) -> int:
        return len(self.dataset.y_valid)

    def train(self, config: HyperParamConfig):
        with self._lock:
            self.n_trainings += 1
        if not self.space.contains(config):
            raise ValueError(f"{config} is outside the search space")
        est = clone(self.estimator).set_params(**self.space.as_dict(config))
        try:
            return est.fit(self.dataset.X_train, self.dataset.y_train)
        except TrainingError:
            raise
        except (LinAlgError, FloatingPointError, ValueError) as exc:
            raise TrainingError(str(exc)) from exc

    def validation_losses(self, predictor) -> np.ndarray:
        pred = predictor.predict(self.dataset.X_valid)
        losses = self.loss(pred, self.dataset.y_valid)
        if not np.all(np.isfinite(losses)):
            raise TrainingError("non-finite validation loss")
        return losses

    def evaluate(self, config: HyperParamConfig) -> Evaluation:
        predictor = self.train(config)
        return Evaluation(config, predictor, self.validation_losses(predictor))

    def test_predictions(self, predictor) -> np.ndarray:
        return np.asarray(predictor.predict(self.dataset.X_test))

    def test_risk(self, predictions) -> float:
        return float(np.mean(self.loss(np.asarray(predictions), self.dataset.y_test)))


def train(problem: TuningProblem, config: HyperParamConfig):
    """Train the problem's learner at ``config`` on the training split."""
    return problem.train(config)


def empirical_risk(predictor, X, y, loss: LossFn, weights: BootstrapWeights | None = None) -> float:
    """Average loss of ``predictor`` on ``(X, y)``, optionally under bootstrap counts."""
    losses = loss(np.asarray(predictor.predict(X)), np.asarray(y))
    if weights is not None and weights.counts.size != losses.size:
        raise ValueError(f"split has {losses.size} examples but weights have {weights.counts.size}")
    return weighted_risk(losses, weights)


# -- synthetic objectives --------------------------------------------------

def branin(x):
    x1, x2 = x
    b = 5.1 / (4 * math.pi**2)
    c = 5 / math.pi
    t = 1 / (8 * math.pi)
    return (x2 - b * x1**2 + c * x1 - 6) ** 2 + 10 * (1 - t) * math.cos(x1) + 10


QUADRATIC_VERTEX = 0.37


def quadratic_1d(x):
    return 4.0 * (x[0] - QUADRATIC_VERTEX) ** 2 + 0.5


def styblinski_2d(x):
    return 0.5 * sum(v**4 - 16 * v**2 + 5 * v for v in x)


def six_hump_camel(x):
    x1, x2 = x
    return (4 - 2.1 * x1**2 + x1**4 / 3) * x1**2 + x1 * x2 + (-4 + 4 * x2**2) * x2**2


OBJECTIVES: dict[str, tuple[Callable, HyperParamSpace]] = {
    "branin": (branin, HyperParamSpace([Dimension("x1", -5.0, 10.0), Dimension("x2", 0.0, 15.0)])),
    "quadratic_1d": (quadratic_1d, HyperParamSpace([Dimension("x", -2.0, 3.0)])),
    "styblinski_2d": (styblinski_2d, HyperParamSpace([Dimension("x1", -5.0, 5.0), Dimension("x2", -5.0, 5.0)])),
    "six_hump_camel": (six_hump_camel, HyperParamSpace([Dimension("x1", -3.0, 3.0), Dimension("x2", -2.0, 2.0)])),
}


def synthetic_objective(name: str, config) -> float:
    fn, _ = OBJECTIVES[name]
    return float(fn(tuple(float(v) for v in config)))


@dataclass(frozen=True)
class ObjectiveValue:
    """Stand-in predictor for synthetic objectives: it only remembers the value."""

    value: float


class SyntheticProblem:
    """A pure black-box objective posing as a tuning problem.

    There is no learner and no validation set: each evaluation carries a
    single "loss" equal to the objective value, and the objective value also
    plays the role of test risk (ensembles report the weighted mean value).
    """

    task = REGRESSION
    n_valid = 1

    def __init__(self, objective: str, name=None):
        if objective not in OBJECTIVES:
            raise ValueError(f"unknown objective {objective!r}; choose from {sorted(OBJECTIVES)}")
        self.objective = objective
        self.space = OBJECTIVES[objective][1]
        self.name = name or objective
        self.n_trainings = 0
        self._lock = threading.Lock()

    def evaluate(self, config: HyperParamConfig) -> Evaluation:
        with self._lock:
            self.n_trainings += 1
        value = synthetic_objective(self.objective, config)
        return Evaluation(config, ObjectiveValue(value), np.array([value]))

    def test_predictions(self, predictor) -> np.ndarray:
        return np.array([predictor.value])

    def test_risk(self, predictions) -> float:
        return float(np.ravel(predictions)[0])
