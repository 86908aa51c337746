"""Comparison estimators: naive probit, two-step control-function probit and
a regularized linear probability model with a control function."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import CollinearityError
from .first_stage import FirstStageFit, unregularized_first_stage
from .hilbert import InstrumentSample, center, covariance_eigensystem
from .second_stage import PROBIT, RCMLE, SecondStageFit, fit_control_function, fit_index_model

__all__ = ["LinearFit", "fit_probit", "fit_2scmle", "ols_first_stage", "ols_residuals", "fit_ols",
           "fit_ttsls"]


@dataclass(frozen=True)
class LinearFit:
    """OLS fit with heteroskedasticity-robust (HC1) covariance."""

    coefficients: np.ndarray
    residuals: np.ndarray
    vcov_hc1: np.ndarray
    n: int
    p: int

    @property
    def se(self) -> np.ndarray:
        return np.sqrt(np.diag(self.vcov_hc1))


def fit_ols(y, X) -> LinearFit:
    """Least squares with the HC1 sandwich ``n/(n-p) (X'X)^{-1} X' diag(e^2) X (X'X)^{-1}``."""
    y = np.asarray(y, dtype=float).ravel()
    X = np.asarray(X, dtype=float)
    n, p = X.shape
    if n <= p:
        raise CollinearityError(f"need more observations than regressors (n={n}, p={p})")
    if np.linalg.matrix_rank(X) < p:
        raise CollinearityError("OLS design is rank deficient")
    Q, Rm = np.linalg.qr(X)
    b = np.linalg.solve(Rm, Q.T @ y)
    e = y - X @ b
    Rinv = np.linalg.inv(Rm)
    bread = Rinv @ Rinv.T
    meat = (X.T * e**2) @ X
    V = n / (n - p) * bread @ meat @ bread
    return LinearFit(b, e, 0.5 * (V + V.T), n, p)


def fit_probit(y, X, **opts) -> SecondStageFit:
    """Probit of ``y`` on ``X`` ignoring endogeneity (no intercept is added)."""
    X = np.asarray(X, dtype=float)
    X = X[:, None] if X.ndim == 1 else X
    trace = fit_index_model(y, X, PROBIT, **opts)
    n, d = X.shape
    return SecondStageFit(
        beta_hat=trace.theta.copy(),
        psi_hat=np.zeros(0),
        objective=trace.value,
        iterations=trace.iterations,
        converged=trace.converged,
        grad_norm=float(np.linalg.norm(trace.grad)),
        estimator_kind=PROBIT,
        endog_mask=np.zeros(d, bool),
        design=X,
        y=np.asarray(y, dtype=float).ravel(),
        v_endog=np.zeros((n, 0)),
    )


def ols_residuals(Y2, Z_design, endog_mask=None):
    """OLS (with intercept) residuals of each endogenous column on ``Z_design``."""
    Y2 = np.asarray(Y2, dtype=float)
    Y2 = Y2[:, None] if Y2.ndim == 1 else Y2
    Zd = np.asarray(Z_design, dtype=float)
    Zd = Zd[:, None] if Zd.ndim == 1 else Zd
    mask = np.ones(Y2.shape[1], bool) if endog_mask is None else np.asarray(endog_mask, bool)
    n, d_z = Zd.shape
    if d_z + 1 >= n:
        raise CollinearityError(f"OLS first stage needs d_z + 1 < n (d_z={d_z}, n={n})")
    X = np.hstack([np.ones((n, 1)), Zd])
    if np.linalg.matrix_rank(X) < d_z + 1:
        raise CollinearityError("first-stage instrument design is rank deficient")
    Yn = Y2[:, mask]
    coef = np.linalg.lstsq(X, Yn, rcond=None)[0]
    return Yn - X @ coef, mask


def ols_first_stage(Y2, Z_design, endog_mask=None) -> FirstStageFit:
    """The unregularized first stage on a Euclidean design, in spectral form.

    Used to feed :func:`regcf.inference.estimate_vcov` for the two-step
    estimator; its residuals agree with :func:`ols_residuals` up to rounding
    when the design has full rank.
    """
    Zs = center(InstrumentSample.euclidean(Z_design))
    eig = covariance_eigensystem(Zs)
    return unregularized_first_stage(Y2, Zs, eig, endog_mask)


def fit_2scmle(y, Y2, Z_design, endog_mask=None, **opts) -> SecondStageFit:
    """Two-step conditional MLE: OLS first stage, then probit on ``(Y2, V_ols)``.

    ``Z_design`` must contain every instrument, included exogenous regressors
    as well.  Only Euclidean instruments are supported.
    """
    v, mask = ols_residuals(Y2, Z_design, endog_mask)
    return fit_control_function(y, Y2, v, mask, RCMLE, **opts)


def fit_ttsls(y, Y2, fs: FirstStageFit, intercept: bool = True) -> LinearFit:
    """Linear probability model on ``(Y2, V_hat_endog)``, HC1 errors.

    With ``intercept`` a constant is appended as the last regressor, so the
    coefficient order stays ``(Y2..., V..., const)``.
    """
    Y2 = np.asarray(Y2, dtype=float)
    Y2 = Y2[:, None] if Y2.ndim == 1 else Y2
    X = np.hstack([Y2, fs.v_endog])
    if intercept:
        X = np.hstack([X, np.ones((X.shape[0], 1))])
    return fit_ols(y, X)
