"""Gaussian-process regression of holdout risk over the unit-cube search space.

Constant mean, Matérn 5/2 covariance with one length scale per dimension,
no observation-noise term (holdout risk is deterministic given the config),
only a small diagonal jitter for numerical stability.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.linalg import cho_solve, cholesky, lapack, solve_triangular
from scipy.optimize import minimize
from sklearn.base import BaseEstimator, RegressorMixin
from sklearn.utils.validation import check_array, check_is_fitted, check_X_y

from .sobol import sobol_points
from .space import History, HyperParamConfig, HyperParamSpace

SQRT5 = math.sqrt(5.0)
LOG_2PI = math.log(2.0 * math.pi)

LOG_AMPLITUDE_BOUNDS = (math.log(1e-4), math.log(1e3))
LOG_LENGTH_SCALE_BOUNDS = (math.log(1e-3), math.log(1e2))
MEAN_BOUNDS = (-10.0, 10.0)  # in standardized target units
SCREEN_ITERS = 10
RELATIVE_JITTERS = tuple(10.0**p for p in range(-8, -1))  # 1e-8 ... 1e-2


class GPNumericalError(ArithmeticError):
    """Kernel matrix could not be factorized even after jitter escalation."""

    def __init__(self, jitters):
        self.jitters = tuple(jitters)
        super().__init__(f"Cholesky failed at every jitter level tried: {self.jitters}")


@dataclass(frozen=True)
class KernelParams:
    """Matérn 5/2 ARD parameters. ``amplitude`` is the signal variance k(u, u)."""

    amplitude: float
    length_scales: tuple
    jitter: float = 1e-8

    def __post_init__(self):
        object.__setattr__(self, "length_scales", tuple(float(v) for v in np.ravel(self.length_scales)))
        if not self.amplitude > 0:
            raise ValueError(f"amplitude must be > 0, got {self.amplitude}")
        if not self.length_scales or min(self.length_scales) <= 0:
            raise ValueError(f"length scales must be > 0, got {self.length_scales}")
        if not self.jitter > 0:
            raise ValueError(f"jitter must be > 0, got {self.jitter}")

    @property
    def n_dims(self) -> int:
        return len(self.length_scales)


def _scaled_sq_diffs(A, B, length_scales):
    """Per-dimension squared differences divided by squared length scales, shape (n, m, D)."""
    ls = np.asarray(length_scales, dtype=float)
    diff = (A[:, None, :] - B[None, :, :]) / ls
    return diff * diff


def _matern_from_r2(r2):
    r = np.sqrt(r2)
    e = np.exp(-SQRT5 * r)
    return (1.0 + SQRT5 * r + (5.0 / 3.0) * r2) * e, r, e


def kernel_matrix(A, B, params: KernelParams) -> np.ndarray:
    """Cross-covariance between rows of ``A`` and rows of ``B`` (no jitter)."""
    A = np.atleast_2d(np.asarray(A, dtype=float))
    B = np.atleast_2d(np.asarray(B, dtype=float))
    if A.shape[1] != params.n_dims or B.shape[1] != params.n_dims:
        raise ValueError(
            f"dimension mismatch: inputs have {A.shape[1]} and {B.shape[1]} columns, "
            f"kernel has {params.n_dims} length scales"
        )
    C, _, _ = _matern_from_r2(_scaled_sq_diffs(A, B, params.length_scales).sum(-1))
    return params.amplitude * C


def matern52(u, v, params: KernelParams) -> float:
    """Matérn 5/2 covariance between two unit-cube points."""
    u = np.asarray(u, dtype=float).ravel()
    v = np.asarray(v, dtype=float).ravel()
    if u.shape != v.shape or u.shape[0] != params.n_dims:
        raise ValueError(
            f"dimension mismatch: {u.shape[0]}, {v.shape[0]} vs {params.n_dims} length scales"
        )
    return float(kernel_matrix(u[None], v[None], params)[0, 0])


def _factorize(K, base_jitter, max_jitter):
    """Cholesky of K + jitter*I, escalating jitter tenfold on failure."""
    tried = []
    jitter = base_jitter
    n = K.shape[0]
    while True:
        tried.append(jitter)
        try:
            L = cholesky(K + jitter * np.eye(n), lower=True, check_finite=False)
            if np.all(np.isfinite(L)):
                return L, jitter
        except np.linalg.LinAlgError:
            pass
        jitter *= 10.0
        if jitter > max_jitter * (1 + 1e-9):
            raise GPNumericalError(tried)


def _raw_sq_diffs(X):
    """Squared coordinate differences, shape (n * n, D); fixed for a given input set."""
    diff = (X[:, None, :] - X[None, :, :]).reshape(-1, X.shape[1])
    return np.ascontiguousarray(diff * diff)


def _lml_and_grad(sq_raw, y, amplitude, length_scales, mean_const, jitter, jitter_tracks_amplitude):
    """Log evidence and its gradient w.r.t. (log amplitude, log length scales, mean).

    ``sq_raw`` comes from :func:`_raw_sq_diffs`. With ``jitter_tracks_amplitude``
    the jitter is treated as ``c * amplitude`` so the amplitude derivative
    accounts for it.
    """
    n = math.isqrt(sq_raw.shape[0])
    inv_ls2 = 1.0 / np.square(length_scales)
    r2 = (sq_raw @ inv_ls2).reshape(n, n)
    C, r, e = _matern_from_r2(r2)
    K = amplitude * C
    K.flat[:: n + 1] += jitter
    L, info = lapack.dpotrf(K, lower=1, clean=1)
    if info != 0:
        raise np.linalg.LinAlgError("kernel matrix is not positive definite")
    Kinv, info = lapack.dpotri(L, lower=1)
    if info != 0:
        raise np.linalg.LinAlgError("kernel matrix inversion failed")
    # dpotri fills the lower triangle only (upper is zero after clean=1)
    Kinv = Kinv + Kinv.T
    Kinv.flat[:: n + 1] *= 0.5
    resid = y - mean_const
    alpha = Kinv @ resid
    value = -0.5 * resid @ alpha - np.log(np.diag(L)).sum() - 0.5 * n * LOG_2PI

    W = np.outer(alpha, alpha) - Kinv
    dK_damp = K if jitter_tracks_amplitude else amplitude * C
    g_amp = 0.5 * np.vdot(W, dK_damp)
    G = (5.0 / 3.0) * amplitude * (1.0 + SQRT5 * r) * e * W
    g_ls = 0.5 * inv_ls2 * (G.ravel() @ sq_raw)
    return float(value), np.concatenate([[g_amp], g_ls, [alpha.sum()]])


def log_marginal_likelihood(params: KernelParams, mean_const: float, inputs, targets):
    """Log evidence of ``targets`` under the GP, with its analytic gradient.

    Parameters
    ----------
    params : KernelParams
        ``params.jitter`` is a fixed absolute diagonal term; it is escalated
        tenfold (up to ``1e-2 * amplitude``) only if the factorization fails.
    mean_const : float
    inputs : array of shape (n, D)
    targets : array of shape (n,)

    Returns
    -------
    value : float
    grad : ndarray of shape (D + 2,)
        Derivatives w.r.t. ``log(amplitude)``, each ``log(length_scale)`` and
        ``mean_const`` (the mean is not log-transformed).
    """
    X = np.atleast_2d(np.asarray(inputs, dtype=float))
    y = np.asarray(targets, dtype=float).ravel()
    if X.shape[0] < 1 or X.shape[0] != y.shape[0]:
        raise ValueError(f"need >= 1 observation with matching targets, got {X.shape[0]} and {y.shape[0]}")
    if X.shape[1] != params.n_dims:
        raise ValueError(f"inputs have {X.shape[1]} columns, kernel has {params.n_dims} length scales")
    sq_raw = _raw_sq_diffs(X)
    jitter = params.jitter
    tried = []
    while True:
        tried.append(jitter)
        try:
            return _lml_and_grad(sq_raw, y, params.amplitude, params.length_scales, mean_const, jitter, False)
        except np.linalg.LinAlgError:
            jitter *= 10.0
            if jitter > 1e-2 * params.amplitude * (1 + 1e-9):
                raise GPNumericalError(tried) from None


@dataclass(frozen=True, eq=False)
class GPModel:
    """A GP conditioned on observations. Immutable; safe to share across threads."""

    mean_const: float
    kernel: KernelParams
    train_inputs: np.ndarray
    train_targets: np.ndarray
    chol_factor: np.ndarray
    alpha: np.ndarray
    space: HyperParamSpace | None = None

    def __post_init__(self):
        # prediction-time caches: inverse Cholesky factor and scaled inputs
        Linv, info = lapack.dtrtri(self.chol_factor, lower=1)
        if info != 0:
            raise GPNumericalError((self.kernel.jitter,))
        inv_ls = 1.0 / np.asarray(self.kernel.length_scales, dtype=float)
        B = self.train_inputs * inv_ls
        object.__setattr__(self, "_chol_inv_t", np.ascontiguousarray(Linv.T))
        object.__setattr__(self, "_inv_ls", inv_ls)
        object.__setattr__(self, "_scaled_inputs_t", np.ascontiguousarray(B.T))
        object.__setattr__(self, "_scaled_norms", (B * B).sum(axis=1))

    @property
    def n_obs(self) -> int:
        return self.train_inputs.shape[0]

    def predict(self, X):
        """Posterior mean and variance at unit-cube rows of ``X``."""
        X = np.atleast_2d(np.asarray(X, dtype=float))
        A = X * self._inv_ls
        r2 = np.maximum((A * A).sum(1)[:, None] + self._scaled_norms - 2.0 * (A @ self._scaled_inputs_t), 0.0)
        k = self.kernel.amplitude * _matern_from_r2(r2)[0]
        mean = self.mean_const + k @ self.alpha
        v = k @ self._chol_inv_t
        var = np.maximum(self.kernel.amplitude - np.einsum("ij,ij->i", v, v), 0.0)
        return mean, var


def condition(params: KernelParams, mean_const: float, inputs, targets, space=None) -> GPModel:
    """Factorize the kernel matrix and precompute the posterior weights."""
    X = np.atleast_2d(np.asarray(inputs, dtype=float)).copy()
    y = np.asarray(targets, dtype=float).ravel().copy()
    if X.shape[0] < 1 or X.shape[0] != y.shape[0]:
        raise ValueError("need at least one observation with a matching target")
    K = kernel_matrix(X, X, params)
    L, jitter = _factorize(K, params.jitter, 1e-2 * params.amplitude)
    if jitter != params.jitter:
        params = KernelParams(params.amplitude, params.length_scales, jitter)
    alpha = cho_solve((L, True), y - mean_const, check_finite=False)
    for arr in (X, y, L, alpha):
        arr.setflags(write=False)
    return GPModel(float(mean_const), params, X, y, L, alpha, space)


def _neg_objective(theta, sq_raw, y):
    d = sq_raw.shape[1]
    amp = math.exp(theta[0])
    ls = np.exp(theta[1 : 1 + d])
    mean = theta[-1]
    for rel in RELATIVE_JITTERS:
        try:
            val, grad = _lml_and_grad(sq_raw, y, amp, ls, mean, rel * amp, True)
        except np.linalg.LinAlgError:
            continue
        if np.isfinite(val) and np.all(np.isfinite(grad)):
            return -val, -grad
    return 1e25, np.zeros_like(theta)


def fit_gp_arrays(X, y, seed=0, warm_start: GPModel | KernelParams | None = None,
                  n_starts=8, maxiter=100, ftol=1e-7, space=None) -> GPModel:
    """Fit mean and kernel parameters by multi-start marginal-likelihood ascent.

    Targets are standardized for the optimization (parameter bounds apply in
    standardized units) and the result is mapped back, so the returned model
    predicts in raw units.
    """
    X = np.atleast_2d(np.asarray(X, dtype=float))
    y = np.asarray(y, dtype=float).ravel()
    n, d = X.shape
    if n == 0:
        raise ValueError("cannot fit a GP on an empty history; use the initial design instead")
    y_mu = float(y.mean())
    y_sd = float(y.std())
    if n == 1 or not y_sd > 1e-12:
        y_sd = 1.0
    ys = (y - y_mu) / y_sd

    lo = np.array([LOG_AMPLITUDE_BOUNDS[0]] + [LOG_LENGTH_SCALE_BOUNDS[0]] * d)
    hi = np.array([LOG_AMPLITUDE_BOUNDS[1]] + [LOG_LENGTH_SCALE_BOUNDS[1]] * d)
    bounds = list(zip(lo, hi)) + [MEAN_BOUNDS]

    starts = []
    if warm_start is not None:
        if isinstance(warm_start, GPModel):
            kp, m0 = warm_start.kernel, (warm_start.mean_const - y_mu) / y_sd
        else:
            kp, m0 = warm_start, 0.0
        if kp.n_dims == d:
            t = np.concatenate([[math.log(kp.amplitude / y_sd**2)], np.log(kp.length_scales)])
            starts.append(np.concatenate([np.clip(t, lo, hi), [np.clip(m0, *MEAN_BOUNDS)]]))
    if not starts:
        starts.append(np.concatenate([[0.0], np.full(d, math.log(0.3)), [0.0]]))
    n_sobol = max(n_starts - len(starts), 0)
    if n_sobol:
        pts = sobol_points(d + 1, n_sobol, seed=seed)
        for p in pts:
            starts.append(np.concatenate([lo + p * (hi - lo), [0.0]]))

    sq_raw = _raw_sq_diffs(X)
    best_theta, best_val, best_done = None, np.inf, False
    # every start gets a short ascent; the winner is then run to convergence
    for theta0 in starts:
        res = minimize(_neg_objective, theta0, args=(sq_raw, ys), jac=True, method="L-BFGS-B",
                       bounds=bounds, options={"maxiter": min(SCREEN_ITERS, maxiter), "ftol": ftol})
        if np.isfinite(res.fun) and res.fun < best_val:
            best_val, best_theta, best_done = res.fun, res.x, res.nit < SCREEN_ITERS
    if best_theta is None:
        raise GPNumericalError(RELATIVE_JITTERS)
    if not best_done and maxiter > SCREEN_ITERS:
        res = minimize(_neg_objective, best_theta, args=(sq_raw, ys), jac=True, method="L-BFGS-B",
                       bounds=bounds, options={"maxiter": maxiter - SCREEN_ITERS, "ftol": ftol})
        if np.isfinite(res.fun) and res.fun <= best_val:
            best_theta = res.x

    amp_std = math.exp(best_theta[0])
    params = KernelParams(
        amplitude=amp_std * y_sd**2,
        length_scales=np.exp(best_theta[1 : 1 + d]),
        jitter=RELATIVE_JITTERS[0] * amp_std * y_sd**2,
    )
    return condition(params, y_mu + y_sd * best_theta[-1], X, y, space=space)


def fit_gp(history: History, space: HyperParamSpace, seed=0, warm_start=None, n_starts=8) -> GPModel:
    """Fit a GP to the finite records of ``history`` over the normalized space."""
    X, y = history.observations(space)
    if len(y) == 0:
        raise ValueError("cannot fit a GP on an empty history; use the initial design instead")
    return fit_gp_arrays(X, y, seed=seed, warm_start=warm_start, n_starts=n_starts, space=space)


def predict(gp: GPModel, query):
    """Posterior ``(mean, variance)`` at one config (or unit-cube point)."""
    if isinstance(query, HyperParamConfig):
        if gp.space is None:
            raise ValueError("model has no attached space; pass a unit-cube point instead")
        query = gp.space.to_unit(query)
    u = np.asarray(query, dtype=float).ravel()
    if u.shape[0] != gp.kernel.n_dims:
        raise ValueError(f"query has {u.shape[0]} coordinates, model has {gp.kernel.n_dims}")
    mean, var = gp.predict(u[None])
    return float(mean[0]), float(var[0])


class GaussianProcessSurrogate(RegressorMixin, BaseEstimator):
    """Scikit-learn facade over :func:`fit_gp_arrays`.

    Inputs are expected in the unit cube (any box works, but the length-scale
    bounds were chosen for unit-scaled features).

    Parameters
    ----------
    n_starts : int, default=8
        Multi-start budget for the marginal-likelihood ascent.
    random_state : int or None
        Seed for the Sobol-placed starting points.
    """

    def __init__(self, n_starts=8, random_state=None):
        self.n_starts = n_starts
        self.random_state = random_state

    def fit(self, X, y):
        X, y = check_X_y(X, y, y_numeric=True)
        seed = 0 if self.random_state is None else self.random_state
        self.model_ = fit_gp_arrays(X, y, seed=seed, n_starts=self.n_starts)
        self.n_features_in_ = X.shape[1]
        return self

    def predict(self, X, return_std=False):
        check_is_fitted(self, "model_")
        X = check_array(X)
        mean, var = self.model_.predict(X)
        if return_std:
            return mean, np.sqrt(var)
        return mean

    def log_marginal_likelihood(self):
        check_is_fitted(self, "model_")
        m = self.model_
        return log_marginal_likelihood(m.kernel, m.mean_const, m.train_inputs, m.train_targets)[0]
