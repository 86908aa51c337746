import numpy as np
import pytest
import statsmodels.api as sm
from numpy.testing import assert_allclose
from scipy.stats import norm

from regcf.baselines import (fit_2scmle, fit_ols, fit_probit, fit_ttsls, ols_first_stage,
                             ols_residuals)
from regcf.errors import CollinearityError, SeparationError
from regcf.first_stage import fit_first_stage
from regcf.hilbert import TIKHONOV, FilterScheme
from regcf.second_stage import fit_rcmle

from .conftest import eig_of, strong_design, with_const


class TestOLS:
    def test_hc1_matches_statsmodels(self, rng):
        n = 150
        X = with_const(rng.standard_normal((n, 3)))
        y = X @ [1.0, -2.0, 0.5, 0.3] + rng.standard_normal(n) * (1 + np.abs(X[:, 1]))
        fit = fit_ols(y, X)
        ref = sm.OLS(y, X).fit(cov_type="HC1")
        assert_allclose(fit.coefficients, ref.params, rtol=1e-12)
        assert_allclose(fit.vcov_hc1, ref.cov_params(), rtol=1e-10)
        assert_allclose(fit.se, ref.bse, rtol=1e-10)

    def test_zero_residuals(self, rng):
        X = with_const(rng.standard_normal((20, 2)))
        fit = fit_ols(X @ [1.0, 2.0, 3.0], X)
        assert_allclose(fit.vcov_hc1, 0, atol=1e-25)

    def test_constant_magnitude(self):
        # balanced +-1 regressor with residual pattern (c, c, -c, -c) orthogonal to it
        n, c = 40, 0.7
        X = np.column_stack([np.ones(n), np.tile([1.0, -1.0], n // 2)])
        e = np.tile([c, c, -c, -c], n // 4)
        fit = fit_ols(X @ [0.5, 2.0] + e, X)
        assert_allclose(fit.residuals, e, atol=1e-14)
        expect = n / (n - 2) * c**2 * np.linalg.inv(X.T @ X)
        assert_allclose(fit.vcov_hc1, expect, rtol=1e-12, atol=1e-16)

    def test_homoskedastic_close_to_classical(self, rng):
        n = 20000
        X = with_const(rng.standard_normal((n, 2)))
        y = X @ [1.0, 1.0, 1.0] + rng.standard_normal(n)
        fit = fit_ols(y, X)
        classical = (fit.residuals @ fit.residuals / (n - 3)) * np.linalg.inv(X.T @ X)
        assert_allclose(np.diag(fit.vcov_hc1), np.diag(classical), rtol=0.10)

    def test_rank_deficient(self, rng):
        x = rng.standard_normal(10)
        with pytest.raises(CollinearityError):
            fit_ols(x, np.column_stack([x, x]))
        with pytest.raises(CollinearityError):
            fit_ols(x[:2], np.ones((2, 2)))


class TestProbitBaseline:
    def test_intercept_half(self):
        fit = fit_probit(np.tile([0.0, 1.0], 10), np.ones(20))
        assert fit.beta_hat[0] == pytest.approx(0.0, abs=1e-14)
        assert fit.psi_hat.size == 0 and fit.v_endog.shape == (20, 0)

    def test_intercept_phi1(self):
        y = np.r_[np.ones(8413), np.zeros(1587)]
        fit = fit_probit(y, np.ones(y.size))
        assert fit.beta_hat[0] == pytest.approx(norm.ppf(0.8413), abs=1e-10)
        assert fit.beta_hat[0] == pytest.approx(1.0, abs=1e-3)

    def test_separation(self, rng):
        x = rng.standard_normal(50)
        with pytest.raises(SeparationError):
            fit_probit((x > 0.2).astype(float), with_const(x[:, None]))


class TestTwoStep:
    def test_residuals_orthogonal(self, rng):
        _, Y2, Z, mask = strong_design(rng, n=200)
        v, m = ols_residuals(Y2, Z, mask)
        assert v.shape == (200, 1)
        assert_allclose(with_const(Z).T @ v, 0, atol=1e-10)

    def test_matches_statsmodels(self, rng):
        y, Y2, Z, mask = strong_design(rng, n=400)
        v, _ = ols_residuals(Y2, Z, mask)
        fit = fit_2scmle(y, Y2, Z, mask)
        ref = sm.Probit(y, np.column_stack([Y2, v])).fit(disp=0, method="newton", tol=1e-12)
        assert_allclose(fit.coef, ref.params, rtol=1e-8)

    def test_equals_rcmle_limit(self, rng):
        y, Y2, Z, mask = strong_design(rng, n=500)
        Zc, e = eig_of(Z)
        fs = fit_first_stage(Y2, Zc, e, FilterScheme(TIKHONOV, 1e-12), mask)
        assert_allclose(fit_rcmle(y, Y2, fs).coef, fit_2scmle(y, Y2, Z, mask).coef, atol=1e-4)

    def test_spectral_first_stage_agrees(self, rng):
        _, Y2, Z, mask = strong_design(rng, n=100)
        fs = ols_first_stage(Y2, Z, mask)
        assert_allclose(fs.v_endog, ols_residuals(Y2, Z, mask)[0], atol=1e-10)

    def test_too_many_instruments(self, rng):
        with pytest.raises(CollinearityError):
            ols_residuals(rng.standard_normal(10), rng.standard_normal((10, 9)))

    def test_ttsls_matches_statsmodels(self, rng):
        y, Y2, Z, mask = strong_design(rng, n=300)
        Zc, e = eig_of(Z)
        fs = fit_first_stage(Y2, Zc, e, FilterScheme(TIKHONOV, 0.01), mask)
        lf = fit_ttsls(y, Y2, fs)
        X = with_const(np.column_stack([Y2, fs.v_endog]))
        ref = sm.OLS(y, X).fit(cov_type="HC1")
        assert_allclose(lf.coefficients, ref.params, rtol=1e-10)
        assert_allclose(lf.se, ref.bse, rtol=1e-9)
        assert fit_ttsls(y, Y2, fs, intercept=False).p == 3
