"""Sequential model-based hyperparameter optimization and agnostic-Bayes ensembles.

Quick start::

    from smbo_ensemble import ESMBOEnsemble, SMBOSearch
    from smbo_ensemble.learners import RBFKernelRidge

    space = {"alpha": (1e-5, 1e3, "continuous", "log"), "gamma": (1e-5, 1e3, "continuous", "log")}
    model = ESMBOEnsemble(RBFKernelRidge(), space, budget=30).fit(X, y)
"""

from .acquisition import AcquisitionResult, expected_improvement, log_expected_improvement, maximize_ei
from .agnostic import (BestPosterior, BootstrapWeights, Ensemble, EnsembleMember, LossMatrix, draw_bootstrap,
                       ensemble_predict_classification, ensemble_predict_regression, estimate_best_posterior,
                       sample_best, weighted_risk)
from .esmbo import EnsembleRunState, finalize_ensemble, round_robin_index, run_ers, run_esmbo
from .estimators import ESMBOEnsemble, SMBOSearch
from .gp import (GaussianProcessSurrogate, GPModel, GPNumericalError, KernelParams, fit_gp,
                 log_marginal_likelihood, matern52, predict)
from .learners import SyntheticProblem, TrainingError, TuningProblem
from .smbo import SearchResult, run_random_search, run_smbo, suggest
from .sobol import sobol_points
from .space import Dimension, History, HyperParamConfig, HyperParamSpace
from .stats import (ComparisonReport, RiskTable, expected_rank, pb_test, rank_on_dataset, sign_test,
                    smoothed_series, win_frequency)

__version__ = "0.1.0"

__all__ = [
    "AcquisitionResult", "BestPosterior", "BootstrapWeights", "ComparisonReport", "Dimension", "ESMBOEnsemble",
    "Ensemble", "EnsembleMember", "EnsembleRunState", "GPModel", "GPNumericalError", "GaussianProcessSurrogate",
    "History", "HyperParamConfig", "HyperParamSpace", "KernelParams", "LossMatrix", "RiskTable", "SMBOSearch",
    "SearchResult", "SyntheticProblem", "TrainingError", "TuningProblem", "draw_bootstrap",
    "ensemble_predict_classification", "ensemble_predict_regression", "estimate_best_posterior",
    "expected_improvement", "expected_rank", "finalize_ensemble", "fit_gp", "log_expected_improvement",
    "log_marginal_likelihood", "matern52", "maximize_ei", "pb_test", "predict", "rank_on_dataset",
    "round_robin_index", "run_ers", "run_esmbo", "run_random_search", "run_smbo", "sample_best", "sign_test",
    "smoothed_series", "sobol_points", "suggest", "weighted_risk", "win_frequency",
]
