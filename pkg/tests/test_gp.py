import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from smbo_ensemble.gp import (GaussianProcessSurrogate, GPNumericalError, KernelParams, _factorize, condition,
                              fit_gp, fit_gp_arrays, kernel_matrix, log_marginal_likelihood, matern52, predict)
from smbo_ensemble.space import Dimension, History, HyperParamSpace

# (1 + sqrt5 + 5/3) exp(-sqrt5), 30-digit mpmath evaluation
MATERN_AT_ONE = 0.52399410883182031059
# amplitude 1.7, length scales (0.5, 2), offset (0.3, -1)
MATERN_2D = 1.1156577947026799784
LOG_NORMAL_AT_MEAN = -0.91893853320467274178


def _problem(seed, n=10, d=3):
    rng = np.random.default_rng(seed)
    X = rng.random((n, d))
    y = np.sin(3 * X[:, 0]) + X[:, 1:].sum(1) + 0.1 * rng.normal(size=n)
    params = KernelParams(rng.uniform(0.5, 2.0), tuple(rng.uniform(0.2, 1.0, d)), jitter=1e-6)
    return X, y, params, rng.normal()


def test_kernel_params_validation():
    with pytest.raises(ValueError):
        KernelParams(0.0, (1.0,))
    with pytest.raises(ValueError):
        KernelParams(1.0, (1.0, -1.0))
    with pytest.raises(ValueError):
        KernelParams(1.0, (1.0,), jitter=0.0)


def test_matern_zero_distance_is_amplitude():
    assert matern52([0.3, 0.4], [0.3, 0.4], KernelParams(2.0, (0.5, 0.5))) == 2.0


def test_matern_unit_distance_oracle():
    assert matern52([0.0], [1.0], KernelParams(1.0, (1.0,))) == pytest.approx(MATERN_AT_ONE, rel=1e-14)


def test_matern_ard_oracle():
    val = matern52([0.3, 0.0], [0.0, 1.0], KernelParams(1.7, (0.5, 2.0)))
    assert val == pytest.approx(MATERN_2D, rel=1e-13)


def test_matern_dimension_mismatch():
    with pytest.raises(ValueError):
        matern52([0.0, 0.0], [1.0], KernelParams(1.0, (1.0, 1.0)))
    with pytest.raises(ValueError):
        matern52([0.0], [1.0], KernelParams(1.0, (1.0, 1.0)))


@given(st.lists(st.floats(-5, 5), min_size=2, max_size=2), st.lists(st.floats(-5, 5), min_size=2, max_size=2),
       st.floats(0.1, 10))
def test_matern_symmetric_and_bounded(u, v, amp):
    p = KernelParams(amp, (0.7, 1.3))
    a, b = matern52(u, v, p), matern52(v, u, p)
    assert a == b
    assert 0 <= a <= amp * (1 + 1e-12)


def test_matern_decays_monotonically():
    p = KernelParams(1.0, (1.0,))
    vals = [matern52([0.0], [r], p) for r in np.linspace(0, 20, 200)]
    assert np.all(np.diff(vals) < 0)
    assert vals[-1] < 1e-15


def test_single_point_lml_is_gaussian_density():
    val, _ = log_marginal_likelihood(KernelParams(1.0, (1.0,), jitter=1e-14), 0.7, [[0.2]], [0.7])
    assert val == pytest.approx(LOG_NORMAL_AT_MEAN, abs=1e-12)


@pytest.mark.parametrize("seed", range(5))
def test_lml_gradient_matches_finite_differences(seed):
    X, y, params, mean = _problem(seed)
    _, grad = log_marginal_likelihood(params, mean, X, y)
    theta = np.concatenate([[math.log(params.amplitude)], np.log(params.length_scales), [mean]])

    def f(t):
        p = KernelParams(math.exp(t[0]), tuple(np.exp(t[1:-1])), jitter=params.jitter)
        return log_marginal_likelihood(p, t[-1], X, y)[0]

    h = 1e-5
    for i in range(theta.size):
        e = np.zeros_like(theta)
        e[i] = h
        fd = (f(theta + e) - f(theta - e)) / (2 * h)
        assert abs(fd - grad[i]) <= 1e-5 * max(abs(fd), 1.0)


def test_duplicate_observation_is_finite():
    X = np.array([[0.1, 0.2], [0.1, 0.2], [0.7, 0.9]])
    val, grad = log_marginal_likelihood(KernelParams(1.0, (0.3, 0.3), jitter=1e-8), 0.0, X, [1.0, 1.0, -1.0])
    assert np.isfinite(val) and np.all(np.isfinite(grad))


def test_lml_input_validation():
    with pytest.raises(ValueError):
        log_marginal_likelihood(KernelParams(1.0, (1.0,)), 0.0, np.zeros((0, 1)), [])
    with pytest.raises(ValueError):
        log_marginal_likelihood(KernelParams(1.0, (1.0,)), 0.0, [[0.0, 1.0]], [1.0])


def test_factorize_escalates_and_reports_jitters():
    K = np.array([[1.0, 2.0], [2.0, 1.0]])  # eigenvalue -1
    with pytest.raises(GPNumericalError) as info:
        _factorize(K, 1e-8, 1e-2)
    assert info.value.jitters == pytest.approx([1e-8, 1e-7, 1e-6, 1e-5, 1e-4, 1e-3, 1e-2])
    L, jitter = _factorize(np.ones((2, 2)), 1e-8, 1e-2)  # singular but PSD
    assert jitter >= 1e-8 and np.all(np.isfinite(L))


def test_cholesky_reproduces_kernel_matrix():
    X, y, params, mean = _problem(3, n=15)
    gp = condition(params, mean, X, y)
    K = kernel_matrix(X, X, params) + gp.kernel.jitter * np.eye(len(X))
    L = gp.chol_factor
    assert np.max(np.abs(L @ L.T - K)) <= 1e-8 * np.max(np.abs(K))


def test_interpolates_with_tiny_jitter():
    X, y, params, mean = _problem(4, n=12)
    gp = condition(KernelParams(params.amplitude, params.length_scales, jitter=1e-10), mean, X, y)
    mu, var = gp.predict(X)
    np.testing.assert_allclose(mu, y, atol=1e-6)
    assert np.all(var <= 1e-6)


def test_model_arrays_are_read_only():
    X, y, params, mean = _problem(0)
    gp = condition(params, mean, X, y)
    with pytest.raises(ValueError):
        gp.alpha[0] = 1.0


def test_fit_predicts_held_out_points():
    rng = np.random.default_rng(0)
    X = rng.random((40, 2))
    f = lambda Z: np.sin(5 * Z[:, 0]) + Z[:, 1] ** 2  # noqa: E731
    gp = fit_gp_arrays(X, f(X), seed=1)
    Z = rng.random((200, 2))
    mu, var = gp.predict(Z)
    assert np.sqrt(np.mean((mu - f(Z)) ** 2)) < 0.05
    assert np.all(var >= 0)


def test_fit_is_deterministic_and_warm_start_never_hurts():
    rng = np.random.default_rng(5)
    X = rng.random((20, 2))
    y = np.cos(4 * X[:, 0]) * X[:, 1]
    a = fit_gp_arrays(X, y, seed=3)
    b = fit_gp_arrays(X, y, seed=3)
    assert a.kernel == b.kernel and a.mean_const == b.mean_const
    c = fit_gp_arrays(X, y, seed=4, warm_start=a)
    lml = lambda m: log_marginal_likelihood(m.kernel, m.mean_const, X, y)[0]  # noqa: E731
    assert lml(c) >= lml(a) - 1e-3


def test_fit_on_constant_targets():
    X = np.random.default_rng(0).random((6, 1))
    gp = fit_gp_arrays(X, np.full(6, 2.5))
    mu, _ = gp.predict([[0.5]])
    assert mu[0] == pytest.approx(2.5, abs=1e-6)


def test_fit_gp_from_history_and_predict_config():
    space = HyperParamSpace([Dimension("a", 1e-3, 1e3, scale="log"), Dimension("b", 0, 1)])
    h = History()
    rng = np.random.default_rng(2)
    for _ in range(8):
        c = space.sample(rng)
        h.add(c, float(np.log10(c.values[0]) ** 2 + c.values[1]))
    h.add(space.sample(rng), math.inf)  # failed training is ignored
    gp = fit_gp(h, space, seed=0)
    assert gp.n_obs == 8
    mu, var = predict(gp, h.configs[0])
    assert mu == pytest.approx(h.risks[0], abs=1e-2) and var >= 0
    with pytest.raises(ValueError):
        fit_gp(History(), space)


def test_sklearn_surrogate():
    rng = np.random.default_rng(1)
    X = rng.random((25, 2))
    y = X[:, 0] - X[:, 1]
    est = GaussianProcessSurrogate(random_state=0).fit(X, y)
    mu, sd = est.predict(X[:3], return_std=True)
    np.testing.assert_allclose(mu, y[:3], atol=1e-3)
    assert np.all(sd >= 0)
    assert np.isfinite(est.log_marginal_likelihood())
    assert est.get_params() == {"n_starts": 8, "random_state": 0}
