"""Expected improvement and its maximization over the unit cube."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import erfcx, ndtr

from .gp import GPModel
from .sobol import sobol_points
from .space import HyperParamConfig, HyperParamSpace

INV_SQRT_2PI = 1.0 / math.sqrt(2.0 * math.pi)
LOG_INV_SQRT_2PI = math.log(INV_SQRT_2PI)
SQRT_HALF_PI = math.sqrt(0.5 * math.pi)
LOG_FLAT = math.log(1e-300)
LOG_FLOOR = -1e6  # stand-in for log(0) so finite differences stay finite

N_CANDIDATES = 512
N_REFINE = 10
MAX_STEPS = 100
STEP_TOL = 1e-6
FD_STEP = 1e-6


def _tau(d):
    """d * Phi(d) + phi(d), computed without cancellation for negative d."""
    d = np.asarray(d, dtype=float)
    out = np.empty_like(d)
    pos = d >= -1.0
    dp = d[pos]
    out[pos] = dp * ndtr(dp) + INV_SQRT_2PI * np.exp(-0.5 * dp * dp)
    dn = d[~pos]
    out[~pos] = INV_SQRT_2PI * np.exp(-0.5 * dn * dn) * (1.0 + dn * SQRT_HALF_PI * erfcx(-dn / math.sqrt(2.0)))
    return np.maximum(out, 0.0)


def _log_tau(d):
    """log of :func:`_tau`, finite far into the left tail."""
    d = np.asarray(d, dtype=float)
    with np.errstate(all="ignore"):
        right = np.log(d * ndtr(d) + INV_SQRT_2PI * np.exp(-0.5 * d * d))
        base = -0.5 * d * d + LOG_INV_SQRT_2PI
        left = base + np.log1p(d * SQRT_HALF_PI * erfcx(-d / math.sqrt(2.0)))
        # asymptotic series once the log1p argument loses precision
        inv2 = 1.0 / (d * d)
        tail = base - 2.0 * np.log(np.abs(d)) + np.log1p(inv2 * (-3.0 + 15.0 * inv2))
        out = np.where(d >= -1.0, right, np.where((d < -1e3) | ~np.isfinite(left), tail, left))
    return out


def expected_improvement(mean, stdev, r_best):
    """Closed-form EI for minimization, ``stdev * (d * Phi(d) + phi(d))``.

    ``d = (r_best - mean) / stdev``. At ``stdev == 0`` the exact limit
    ``max(r_best - mean, 0)`` is returned. Scalars in, float out; arrays
    broadcast.
    """
    mean, stdev = np.broadcast_arrays(np.asarray(mean, dtype=float), np.asarray(stdev, dtype=float))
    if np.any(stdev < 0):
        raise ValueError("stdev must be nonnegative")
    shape = mean.shape
    mean, stdev = np.atleast_1d(mean).ravel(), np.atleast_1d(stdev).ravel()
    gap = r_best - mean
    out = np.maximum(gap, 0.0)
    pos = stdev > 0
    if np.any(pos):
        out[pos] = stdev[pos] * _tau(gap[pos] / stdev[pos])
    return float(out[0]) if not shape else out.reshape(shape)


def log_expected_improvement(mean, stdev, r_best):
    """log of :func:`expected_improvement`, finite far into the tail; -inf where EI is exactly 0."""
    mean, stdev = np.broadcast_arrays(np.asarray(mean, dtype=float), np.asarray(stdev, dtype=float))
    shape = mean.shape
    mean, stdev = np.atleast_1d(mean).ravel(), np.atleast_1d(stdev).ravel()
    gap = r_best - mean
    with np.errstate(divide="ignore"):
        out = np.log(np.maximum(gap, 0.0))
    pos = stdev > 0
    if np.any(pos):
        s = stdev[pos]
        out[pos] = np.log(s) + _log_tau(gap[pos] / s)
    return float(out[0]) if not shape else out.reshape(shape)


@dataclass(frozen=True)
class AcquisitionResult:
    config: HyperParamConfig
    unit_point: np.ndarray
    ei_value: float
    n_restarts_used: int
    converged: tuple


def _log_ei_at(gp: GPModel, U, r_best):
    mean, var = gp.predict(U)
    s = np.sqrt(var)
    gap = r_best - mean
    with np.errstate(all="ignore"):
        out = np.where(s > 0, np.log(s) + _log_tau(gap / s), np.log(np.maximum(gap, 0.0)))
    return np.where(np.isfinite(out), out, LOG_FLOOR)


def _best_index(values, points):
    """Argmax with lexicographic tie-break on the point coordinates."""
    top = np.flatnonzero(values == values.max())
    if top.size == 1:
        return int(top[0])
    order = np.lexsort(points[top].T[::-1])
    return int(top[order[0]])


def _value_and_grad(gp, U, r_best):
    """log EI at rows of ``U`` and its finite-difference gradient, in one GP call.

    Central differences, one-sided against the box faces.
    """
    R, D = U.shape
    eye = np.eye(D)
    hi = np.minimum(U[:, None, :] + FD_STEP * eye, 1.0)
    lo = np.maximum(U[:, None, :] - FD_STEP * eye, 0.0)
    pts = np.concatenate([U[:, None, :], hi, lo], axis=1).reshape(-1, D)
    vals = _log_ei_at(gp, pts, r_best).reshape(R, 2 * D + 1)
    width = np.einsum("rdk,dk->rd", hi - lo, eye)
    grad = (vals[:, 1 : D + 1] - vals[:, D + 1 :]) / np.where(width > 0, width, 1.0)
    return vals[:, 0], np.where(width > 0, grad, 0.0)


def _ascend(gp, U0, r_best, max_steps=MAX_STEPS, step_tol=STEP_TOL):
    """Batched projected gradient ascent on log EI with adaptive step length.

    An accepted step doubles the step length (capped at 0.5), a rejected one
    halves it. A restart stops once its step length falls below ``step_tol``
    or its gradient vanishes.
    """
    U = U0.copy()
    R = U.shape[0]
    f, grad = _value_and_grad(gp, U, r_best)
    step = np.full(R, 0.05)
    active = np.ones(R, dtype=bool)
    for _ in range(max_steps):
        norm = np.sqrt(np.einsum("rd,rd->r", grad, grad))
        flat = ~(norm > 0) | ~np.isfinite(norm)
        active &= ~flat
        idx = np.flatnonzero(active)
        if idx.size == 0:
            break
        Ua = U[idx]
        cand = np.clip(Ua + (step[idx] / norm[idx])[:, None] * grad[idx], 0.0, 1.0)
        f_new, g_new = _value_and_grad(gp, cand, r_best)
        better = f_new > f[idx]
        moved = np.sqrt(((cand - Ua) ** 2).sum(axis=1))
        acc = idx[better]
        U[acc], f[acc], grad[acc] = cand[better], f_new[better], g_new[better]
        step[acc] = np.minimum(step[acc] * 2.0, 0.5)
        step[idx[~better]] *= 0.5
        done = (step[idx] < step_tol) | (better & (moved < step_tol))
        active[idx[done]] = False
    return U, f, ~active


def maximize_ei(gp: GPModel, space: HyperParamSpace, r_best: float, seed=0,
                n_candidates=N_CANDIDATES, n_refine=N_REFINE) -> AcquisitionResult:
    """Global EI search: score Sobol candidates, refine the best by gradient ascent.

    Integer axes are optimized continuously and rounded at the end; the
    returned ``ei_value`` is evaluated at the rounded point. When every
    candidate has EI <= 1e-300 a uniform random config is returned with
    ``converged`` all False.
    """
    rng = np.random.default_rng(seed)
    D = space.n_dims
    cand = sobol_points(D, n_candidates, seed=rng)
    scores = _log_ei_at(gp, cand, r_best)
    if scores.max() <= LOG_FLAT:
        u = rng.random(D)
        config = space.from_unit(u)
        u = space.to_unit(config)
        return AcquisitionResult(config, u, 0.0, 0, (False,))

    order = np.lexsort(tuple(cand.T[::-1]) + (-scores,))
    starts = cand[order[:n_refine]]
    U, _, converged = _ascend(gp, starts, r_best)

    projected = np.array([space.project(u) for u in U])
    final = _log_ei_at(gp, projected, r_best)
    best = _best_index(final, projected)
    u = projected[best]
    mean, var = gp.predict(u[None])
    ei = expected_improvement(mean[0], math.sqrt(var[0]), r_best)
    return AcquisitionResult(space.from_unit(u), u, float(ei), len(starts), tuple(bool(c) for c in converged))
