"""scikit-learn meta-estimators wrapping the tuners.

``SMBOSearch`` returns the single best model; ``ESMBOEnsemble`` returns the
bootstrap ensemble. Both hold out part of the training data as the
validation set that scores configs.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, MetaEstimatorMixin, clone, is_classifier
from sklearn.utils.validation import check_is_fitted, check_X_y

from .agnostic import CLASSIFICATION, REGRESSION
from .esmbo import DEFAULT_ENSEMBLE_SIZE, run_esmbo
from .learners import SQUARED, ZERO_ONE, Dataset, TuningProblem
from .smbo import run_smbo
from .space import Dimension, HyperParamSpace


def as_space(space) -> HyperParamSpace:
    """Accept a :class:`HyperParamSpace` or ``{name: (low, high[, kind[, scale]])}``."""
    if isinstance(space, HyperParamSpace):
        return space
    if isinstance(space, dict):
        return HyperParamSpace([Dimension(name, *spec) for name, spec in space.items()])
    raise TypeError(f"cannot build a search space from {type(space).__name__}")


class _TunerBase(MetaEstimatorMixin, BaseEstimator):
    def _problem(self, X, y):
        X, y = check_X_y(X, y, y_numeric=not is_classifier(self.estimator))
        if not 0.0 < self.validation_fraction < 1.0:
            raise ValueError(f"validation_fraction must be in (0, 1), got {self.validation_fraction}")
        if self.budget < 1:
            raise ValueError(f"budget must be >= 1, got {self.budget}")
        n = len(X)
        n_valid = int(round(self.validation_fraction * n))
        if n_valid < 1 or n - n_valid < 1:
            raise ValueError(f"{n} samples cannot be split with validation_fraction={self.validation_fraction}")
        perm = np.random.default_rng(self.random_state).permutation(n)
        tr, va = perm[n_valid:], perm[:n_valid]
        task = CLASSIFICATION if is_classifier(self.estimator) else REGRESSION
        # the test split is unused here; the validation split stands in
        data = Dataset(X[tr], y[tr], X[va], y[va], X[va], y[va], task)
        loss = ZERO_ONE if task == CLASSIFICATION else SQUARED
        self.space_ = as_space(self.space)
        self.n_features_in_ = X.shape[1]
        if task == CLASSIFICATION:
            self.classes_ = np.unique(y)
        return TuningProblem(clone(self.estimator), self.space_, data, loss, name=type(self.estimator).__name__)

    def _refit(self, config, X, y):
        return clone(self.estimator).set_params(**self.space_.as_dict(config)).fit(X, y)


class SMBOSearch(_TunerBase):
    """Tune ``estimator`` by GP-based sequential optimization of the holdout risk.

    Parameters
    ----------
    estimator : estimator
        Regressor (squared loss) or classifier (zero-one loss).
    space : HyperParamSpace or dict
        Search domain; dict values are ``(low, high[, kind[, scale]])``.
    budget : int, default=30
        Number of trainings.
    validation_fraction : float, default=0.3
    refit : bool, default=True
        Retrain the best config on all of ``X`` after the search.
    random_state : int, default=0

    Attributes
    ----------
    best_params_ : dict
    best_score_ : float
        Validation risk of the best config (lower is better).
    best_estimator_ : estimator
    history_ : History
    """

    def __init__(self, estimator, space, budget=30, validation_fraction=0.3, refit=True, random_state=0):
        self.estimator = estimator
        self.space = space
        self.budget = budget
        self.validation_fraction = validation_fraction
        self.refit = refit
        self.random_state = random_state

    def fit(self, X, y):
        problem = self._problem(X, y)
        result = run_smbo(problem, self.budget, seed=self.random_state)
        if result.best_config is None:
            raise RuntimeError("every training failed")
        self.history_ = result.history
        self.best_params_ = self.space_.as_dict(result.best_config)
        self.best_score_ = float(result.history.risks.min())
        self.best_estimator_ = self._refit(result.best_config, X, y) if self.refit else result.best_predictor
        return self

    def predict(self, X):
        check_is_fitted(self, "best_estimator_")
        return self.best_estimator_.predict(X)


class ESMBOEnsemble(_TunerBase):
    """Agnostic-Bayes ensemble built by round-robin SMBO over bootstrap validation histories.

    Parameters
    ----------
    estimator : estimator
    space : HyperParamSpace or dict
    budget : int, default=30
        Number of trainings, regardless of ``ensemble_size``.
    ensemble_size : int, default=10
        Number of bootstrap histories.
    validation_fraction : float, default=0.3
    random_state : int, default=0

    Attributes
    ----------
    ensemble_ : Ensemble
        Members are trained on the non-validation part of ``X``.
    state_ : EnsembleRunState
    """

    def __init__(self, estimator, space, budget=30, ensemble_size=DEFAULT_ENSEMBLE_SIZE,
                 validation_fraction=0.3, random_state=0):
        self.estimator = estimator
        self.space = space
        self.budget = budget
        self.ensemble_size = ensemble_size
        self.validation_fraction = validation_fraction
        self.random_state = random_state

    def fit(self, X, y):
        problem = self._problem(X, y)
        ensemble, state = run_esmbo(problem, self.budget, self.ensemble_size, seed=self.random_state)
        if not len(ensemble):
            raise RuntimeError("every training failed")
        self.ensemble_ = ensemble
        self.state_ = state
        return self

    @property
    def weights_(self):
        check_is_fitted(self, "ensemble_")
        return self.ensemble_.weights

    def predict(self, X):
        check_is_fitted(self, "ensemble_")
        return self.ensemble_.predict(X)
