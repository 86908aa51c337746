import numpy as np
import pytest
import statsmodels.api as sm
from numpy.testing import assert_allclose
from scipy import optimize
from scipy.stats import norm

from regcf.errors import CollinearityError, DegenerateOutcomeError, SeparationError
from regcf.first_stage import fit_first_stage
from regcf.hilbert import TIKHONOV, FilterScheme
from regcf.inference import estimate_vcov
from regcf.second_stage import (PROBIT, RCMLE, RNLSE, fit_control_function, fit_index_model,
                                fit_rcmle, fit_rnlse, maximize, nls_objective, probit_objective,
                                reparametrization_matrix)
from regcf.baselines import fit_probit

from .conftest import eig_of, strong_design


def _probit_data(rng, n=300, p=3):
    X = np.column_stack([np.ones(n), rng.standard_normal((n, p - 1))])
    theta = rng.uniform(-1, 1, p)
    y = (X @ theta + rng.standard_normal(n) > 0).astype(float)
    return X, y


class TestObjectives:
    def test_intercept_half(self):
        X = np.ones((4, 1))
        y = np.array([0.0, 1.0, 0.0, 1.0])
        val, g, _ = probit_objective([0.0], X, y)
        assert val == pytest.approx(np.log(0.5), abs=1e-15)
        assert_allclose(g, 0, atol=1e-15)

    def test_intercept_phi1(self):
        # 8413 ones in 10000 draws: the MLE is Phi^{-1}(0.8413)
        y = np.r_[np.ones(8413), np.zeros(1587)]
        X = np.ones((y.size, 1))
        tr = fit_index_model(y, X)
        assert tr.theta[0] == pytest.approx(norm.ppf(0.8413), abs=1e-10)
        assert round(tr.theta[0], 3) == 1.0

    def test_nls_zero_at_truth(self, rng):
        X = rng.standard_normal((50, 2))
        theta = np.array([0.4, -0.7])
        _, g, _ = nls_objective(theta, X, norm.cdf(X @ theta))
        assert_allclose(g, 0, atol=1e-15)

    def test_nls_value_intercept(self):
        val, _, _ = nls_objective([0.0], np.ones((6, 1)), np.array([0, 1, 0, 1, 1, 0.0]))
        assert val == pytest.approx(-0.125, abs=1e-15)

    @pytest.mark.parametrize("which", ["probit", "nls", "nls_exact"])
    def test_finite_differences(self, rng, which):
        X, y = _probit_data(rng, 80, 4)
        theta = rng.uniform(-1, 1, 4)
        if which == "probit":
            f = lambda t: probit_objective(t, X, y)  # noqa: E731
        else:
            f = lambda t: nls_objective(t, X, y, exact_hessian=(which == "nls_exact"))  # noqa: E731
        _, g, H = f(theta)
        h = 1e-6
        E = np.eye(4) * h
        g_fd = np.array([(f(theta + e)[0] - f(theta - e)[0]) / (2 * h) for e in E])
        assert_allclose(g, g_fd, rtol=1e-6, atol=1e-9)
        if which != "nls":
            H_fd = np.array([(f(theta + e)[1] - f(theta - e)[1]) / (2 * h) for e in E])
            assert_allclose(H, H_fd, rtol=1e-6, atol=1e-9)

    def test_extreme_index_finite(self):
        X = np.array([[40.0], [-40.0]])
        val, g, H = probit_objective([1.0], X, np.array([0.0, 1.0]))
        assert np.isfinite(val) and np.all(np.isfinite(g)) and np.all(np.isfinite(H))
        assert val < -700


class TestProbitFit:
    def test_matches_statsmodels(self, rng):
        X, y = _probit_data(rng, 500, 4)
        tr = fit_index_model(y, X)
        ref = sm.Probit(y, X).fit(disp=0, method="newton", tol=1e-12)
        assert tr.converged
        assert_allclose(tr.theta, ref.params, rtol=1e-8, atol=1e-10)
        assert tr.value * y.size == pytest.approx(ref.llf, rel=1e-12)

    def test_history_monotone_and_gradient(self, rng):
        X, y = _probit_data(rng)
        tr = fit_index_model(y, X)
        assert np.all(np.diff(tr.history) >= 0)
        assert np.linalg.norm(tr.grad) < 1e-8

    def test_separation(self, rng):
        x = rng.standard_normal(40)
        X = np.column_stack([np.ones(40), x])
        with pytest.raises(SeparationError):
            fit_index_model((x > 0).astype(float), X)

    def test_degenerate(self):
        with pytest.raises(DegenerateOutcomeError):
            fit_index_model(np.ones(5), np.ones((5, 1)))

    def test_non_binary(self):
        with pytest.raises(ValueError):
            fit_index_model(np.array([0, 1, 2.0]), np.ones((3, 1)))

    def test_collinear(self, rng):
        x = rng.standard_normal(30)
        with pytest.raises(CollinearityError):
            fit_index_model((x > 0).astype(float), np.column_stack([x, 2 * x]))

    def test_maximize_quadratic(self):
        f = lambda t: (-0.5 * float(t @ t), -t, -np.eye(2))  # noqa: E731
        tr = maximize(f, np.array([3.0, -4.0]))
        assert tr.converged and tr.iterations == 1
        assert_allclose(tr.theta, 0, atol=1e-15)


class TestNLSFit:
    def test_matches_least_squares(self, rng):
        X, y = _probit_data(rng, 400, 3)
        tr = fit_index_model(y, X, RNLSE)
        ref = optimize.least_squares(lambda t: y - norm.cdf(X @ t), np.zeros(3), xtol=1e-15,
                                     ftol=1e-15, gtol=1e-15)
        assert tr.converged
        assert_allclose(tr.theta, ref.x, rtol=1e-6, atol=1e-8)

    def test_continuous_outcome_recovers_theta(self, rng):
        X = rng.standard_normal((60, 2))
        theta = np.array([0.5, -0.25])
        tr = fit_index_model(norm.cdf(X @ theta), X, RNLSE)
        assert_allclose(tr.theta, theta, atol=1e-8)


class TestControlFunction:
    def _fit(self, rng, kind=RCMLE, **kw):
        y, Y2, Z, mask = strong_design(rng, **kw)
        Zc, e = eig_of(Z)
        fs = fit_first_stage(Y2, Zc, e, FilterScheme(TIKHONOV, 1e-6), mask)
        fitter = fit_rcmle if kind == RCMLE else fit_rnlse
        return fitter(y, Y2, fs), fs, y, Y2

    def test_matches_statsmodels_on_augmented_design(self, rng):
        fit, fs, y, Y2 = self._fit(rng)
        ref = sm.Probit(y, np.column_stack([Y2, fs.v_endog])).fit(disp=0, method="newton", tol=1e-12)
        assert_allclose(fit.coef, ref.params, rtol=1e-8, atol=1e-10)

    def test_reparametrization_invariance(self, rng):
        fit, fs, y, _ = self._fit(rng)
        g = np.column_stack([fs.gamma_hat, fs.v_endog])
        tr = fit_index_model(y, g)
        T = reparametrization_matrix(fit.endog_mask)
        assert_allclose(tr.theta, T @ fit.coef, rtol=1e-8, atol=1e-10)
        assert tr.value == pytest.approx(fit.objective, abs=1e-10)
        assert_allclose(fit.theta, T @ fit.coef, rtol=0, atol=1e-14)

    def test_nesting(self, rng):
        fit, _, y, Y2 = self._fit(rng)
        assert fit.objective >= fit_probit(y, Y2).objective

    def test_exogenous_design_nests_probit(self, rng):
        fit, _, y, Y2 = self._fit(rng, n=3000, psi_zero=True)
        pr = fit_probit(y, Y2)
        se = estimate_vcov(pr).se
        assert np.all(np.abs(fit.beta_hat - pr.beta_hat) < 3 * se)

    def test_rnlse_agrees_with_rcmle(self, rng):
        y, Y2, Z, mask = strong_design(rng, n=4000)
        Zc, e = eig_of(Z)
        fs = fit_first_stage(Y2, Zc, e, FilterScheme(TIKHONOV, 1e-6), mask)
        a, b = fit_rcmle(y, Y2, fs), fit_rnlse(y, Y2, fs)
        sa, sb = estimate_vcov(a, fs).se, estimate_vcov(b, fs).se
        assert np.all(np.abs(a.coef - b.coef) < 3 * np.hypot(sa, sb))
        assert a.estimator_kind == RCMLE and b.estimator_kind == RNLSE

    def test_separation_through_y2(self, rng):
        y, Y2, Z, mask = strong_design(rng, n=100)
        Zc, e = eig_of(Z)
        fs = fit_first_stage(Y2, Zc, e, FilterScheme(TIKHONOV, 1e-6), mask)
        y_sep = (Y2[:, 0] > 0).astype(float)
        for fitter in (fit_rcmle, fit_rnlse):
            with pytest.raises(SeparationError):
                fitter(y_sep, Y2, fs)

    def test_mask_mismatch(self, rng):
        with pytest.raises(ValueError):
            fit_control_function(np.r_[0.0, 1, 0], np.ones((3, 2)), np.zeros((3, 2)),
                                 np.array([True, False]))


def test_reparametrization_matrix():
    T = reparametrization_matrix([True, False, True])
    expect = np.eye(5)
    expect[3, 0] = expect[4, 2] = 1.0
    assert_allclose(T, expect, rtol=0, atol=0)
    assert PROBIT == "probit"
