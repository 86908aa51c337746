import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from numpy.testing import assert_allclose, assert_array_equal

from regcf.errors import NoSignalError
from regcf.first_stage import (INFINITE_F, first_stage_F, fit_first_stage, hat_traces,
                               unregularized_first_stage)
from regcf.hilbert import (RIDGE, SPECTRAL_CUTOFF, TIKHONOV, FilterScheme, InstrumentSample,
                           InstrumentSpace, center, covariance_eigensystem, filter_value)

from .conftest import eig_of, with_const


def _ols(y, X):
    Xc = with_const(X)
    b = np.linalg.solve(Xc.T @ Xc, Xc.T @ y)
    return b, y - Xc @ b


def test_exact_linear_relation(rng):
    z = rng.standard_normal(30)
    Zc, e = eig_of(z)
    fs = fit_first_stage(2 * z, Zc, e, FilterScheme(TIKHONOV, 1e-12))
    assert_allclose(fs.gamma_hat.ravel(), 2 * z, atol=1e-8)
    assert_allclose(fs.v_hat, 0, atol=1e-8)


@pytest.mark.parametrize("alpha", [1e-12, 1e-10])
def test_matches_ols(rng, alpha):
    n = 400
    Z = rng.standard_normal((n, 3))
    y2 = 1.0 + Z @ [0.5, -1.0, 2.0] + rng.standard_normal(n)
    Zc, e = eig_of(Z)
    fs = fit_first_stage(y2, Zc, e, FilterScheme(TIKHONOV, alpha))
    b, resid = _ols(y2, Z)
    assert_allclose(fs.projection().ravel(), b[:3], atol=1e-6)
    assert_allclose(fs.intercept + fs.projection() @ (-Zc.mean), b[3], atol=1e-6)
    assert np.abs(fs.v_hat.ravel() - resid).max() <= 1e-6


def test_unregularized_is_ols(rng):
    Z = rng.standard_normal((60, 4))
    y2 = Z @ [1, 2, 0, -1] + rng.standard_normal(60)
    Zc, e = eig_of(Z)
    fs = unregularized_first_stage(y2, Zc, e)
    assert_allclose(fs.v_hat.ravel(), _ols(y2, Z)[1], atol=1e-11)


@pytest.mark.parametrize("kind", [TIKHONOV, SPECTRAL_CUTOFF, RIDGE])
@pytest.mark.parametrize("alpha", [1e-6, 0.3, 50.0])
def test_additivity_exact(rng, kind, alpha):
    Z = rng.standard_normal((50, 8))
    Y2 = np.column_stack([Z[:, :2] @ [1.0, 1.0] + rng.standard_normal(50), Z[:, 0],
                          rng.standard_normal(50)])
    mask = np.array([True, False, True])
    Zc, e = eig_of(Z)
    fs = fit_first_stage(Y2, Zc, e, FilterScheme(kind, alpha), mask)
    assert_array_equal(fs.gamma_hat[:, ~mask] + fs.v_hat[:, ~mask], Y2[:, ~mask])
    assert_array_equal(fs.v_hat[:, ~mask], 0.0)
    # endogenous columns: v is computed as Y2 - gamma, so the sum is exact up to one rounding
    assert_allclose(fs.gamma_hat + fs.v_hat, Y2, rtol=0, atol=4 * np.finfo(float).eps * np.abs(Y2).max())
    assert_allclose(fs.v_endog.mean(axis=0), 0, atol=1e-12)


def test_tikhonov_weights_monotone(rng):
    Zc, e = eig_of(rng.standard_normal((40, 10)))
    alphas = np.logspace(-6, 3, 30)
    Q = np.array([filter_value(e.eigenvalues, FilterScheme(TIKHONOV, a)) for a in alphas])
    assert np.all(np.diff(Q, axis=0) <= 0)


def test_no_endogenous_column(rng):
    Zc, e = eig_of(rng.standard_normal((20, 2)))
    with pytest.raises(ValueError):
        fit_first_stage(rng.standard_normal((20, 2)), Zc, e, FilterScheme(TIKHONOV, 1.0),
                        np.array([False, False]))


def test_constant_instruments_have_no_signal():
    Zc = center(InstrumentSample.euclidean(np.ones((10, 2))))
    e = covariance_eigensystem(Zc)
    assert e.rank == 0
    with pytest.raises(NoSignalError):
        fit_first_stage(np.arange(10.0), Zc, e, FilterScheme(TIKHONOV, 1.0))


def test_functional_prediction_agrees(rng):
    sp = InstrumentSpace.normal_density_grid(-3, 3, 40)
    t = sp.grid
    z2 = rng.uniform(size=80)
    Zc = center(InstrumentSample(np.exp(np.outer(z2, t) / 3), sp))
    e = covariance_eigensystem(Zc)
    y2 = z2 + 0.1 * rng.standard_normal(80)
    fs = fit_first_stage(y2, Zc, e, FilterScheme(TIKHONOV, 1e-4))
    assert_allclose(fs.predict(Zc.values).ravel(), fs.gamma_hat.ravel(), atol=1e-10)


def _dense_hat(Zc, scheme):
    # P_ij = n^{-1} <Z_i, K_alpha^{-1} Z_j>, built from the ambient operator
    X = Zc.values
    n = X.shape[0]
    K = X.T @ X / n
    lam, U = np.linalg.eigh(K)
    q = np.array([filter_value(l, scheme) if l > 1e-12 * lam.max() else 0.0 for l in lam])
    inv = (U * np.where(q > 0, q / np.where(lam > 0, lam, 1), 0)) @ U.T
    return X @ inv @ X.T / n


@pytest.mark.parametrize("kind,alpha", [(TIKHONOV, 0.05), (TIKHONOV, 2.0), (SPECTRAL_CUTOFF, 0.5),
                                        (RIDGE, 0.3)])
def test_hat_traces_dense(rng, kind, alpha):
    Zc, e = eig_of(rng.standard_normal((45, 12)) * np.linspace(2, 0.2, 12))
    P = _dense_hat(Zc, FilterScheme(kind, alpha))
    t1, t2 = hat_traces(e, FilterScheme(kind, alpha))
    assert abs(t1 - np.trace(P)) <= 1e-10
    assert abs(t2 - np.trace(P @ P)) <= 1e-10


def test_hat_traces_cutoff_counts(rng):
    Zc, e = eig_of(rng.standard_normal((30, 6)))
    m = 4
    a = 0.5 * (e.eigenvalues[m - 1] ** 2 + e.eigenvalues[m] ** 2)
    assert hat_traces(e, FilterScheme(SPECTRAL_CUTOFF, a)) == (m, m)


def test_hat_traces_vanish(rng):
    Zc, e = eig_of(rng.standard_normal((30, 6)))
    t1, t2 = hat_traces(e, FilterScheme(TIKHONOV, 1e6 * e.eigenvalues[0] ** 2))
    assert t1 < 1e-3 and t2 < 1e-3


def test_F_exact_fit(rng):
    Z = rng.standard_normal((50, 3))
    Zc, _ = eig_of(Z)
    assert first_stage_F(Z @ [1.0, 2.0, 3.0], Zc) == INFINITE_F


def test_F_matches_textbook(rng):
    n, k = 120, 4
    Z = rng.standard_normal((n, k))
    y = Z @ [0.3, 0, 0, 0.1] + rng.standard_normal(n)
    Zc, _ = eig_of(Z)
    _, resid = _ols(y, Z)
    rss = resid @ resid
    tss = np.sum((y - y.mean()) ** 2)
    F = ((tss - rss) / k) / (rss / (n - k - 1))
    assert first_stage_F(y, Zc) == pytest.approx(F, rel=1e-10)


def test_F_under_null(rng):
    hits = 0
    for _ in range(50):
        Zc, _ = eig_of(rng.standard_normal((1000, 5)))
        hits += 0.3 <= first_stage_F(rng.standard_normal(1000), Zc) <= 3.0
    assert hits >= 48


def test_F_zero_slope_same_as_noise(rng):
    Z = rng.standard_normal((200, 5))
    noise = rng.standard_normal(200)
    Zc, _ = eig_of(Z)
    assert first_stage_F(noise + Z @ np.zeros(5), Zc) == first_stage_F(noise, Zc)


def test_F_functional_uses_components(rng):
    sp = InstrumentSpace.normal_density_grid(-5, 5, 100)
    z2 = rng.uniform(size=300)
    Zc = center(InstrumentSample(np.exp(np.outer(z2, sp.grid)), sp))
    y2 = np.exp(2 * z2) + rng.standard_normal(300)
    assert first_stage_F(y2, Zc) > 10


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**31), st.floats(1e-8, 1e4))
def test_ols_limit_property(seed, alpha):
    rng = np.random.default_rng(seed)
    Z = rng.standard_normal((30, 3))
    y2 = Z @ [1.0, -1.0, 0.5] + rng.standard_normal(30)
    Zc, e = eig_of(Z)
    v = fit_first_stage(y2, Zc, e, FilterScheme(TIKHONOV, alpha)).v_hat.ravel()
    v_ols = _ols(y2, Z)[1]
    # regularization only adds to the residual sum of squares
    assert v @ v >= v_ols @ v_ols - 1e-9
