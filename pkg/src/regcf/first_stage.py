"""Regularized first-stage projection and its diagnostics.

The first stage regresses every endogenous column of ``Y2`` on the centered
instruments through the regularized inverse of their covariance operator.
Everything is computed in the dual (score) coordinates of the covariance
eigensystem, so the cost does not depend on the instrument dimension.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .errors import DegenerateSampleError, NoSignalError
from .hilbert import CovarianceEigensystem, FilterScheme, InstrumentSample, filter_value

__all__ = ["FirstStageFit", "fit_first_stage", "unregularized_first_stage", "hat_traces",
           "first_stage_F", "INFINITE_F"]

#: Reported in place of an infinite F statistic.
INFINITE_F = 1e12
_MAX_FUNCTIONAL_PCS = 25


@dataclass(frozen=True)
class FirstStageFit:
    """Output of :func:`fit_first_stage`.

    ``coef_spectral[j, l]`` is the coefficient of ``<h, phi_j>`` in the
    regularized projection of endogenous column ``l``.  ``scheme`` is ``None``
    for the unregularized (OLS) limit.
    """

    alpha: float
    scheme: FilterScheme | None
    coef_spectral: np.ndarray
    intercept: np.ndarray
    gamma_hat: np.ndarray
    v_hat: np.ndarray
    q_values: np.ndarray
    endog_mask: np.ndarray
    eig: CovarianceEigensystem

    @property
    def n(self) -> int:
        return self.gamma_hat.shape[0]

    @property
    def v_endog(self) -> np.ndarray:
        return self.v_hat[:, self.endog_mask]

    def projection(self) -> np.ndarray:
        """The operator ``Pi_alpha`` as a ``(d_endog, D)`` array of representers."""
        return self.coef_spectral.T @ self.eig.eigenvectors

    def predict(self, Z_centered, exog=None) -> np.ndarray:
        """Fitted endogenous values for new (centered) instrument rows."""
        s = self.eig.scores(Z_centered)
        return self.intercept + s @ self.coef_spectral


def _as_2d(Y2):
    Y2 = np.asarray(Y2, dtype=float)
    return Y2[:, None] if Y2.ndim == 1 else Y2


def _fit(Y2, Z, eig, q, endog_mask, intercept, alpha, scheme):
    Y2 = _as_2d(Y2)
    n, d_e = Y2.shape
    mask = np.ones(d_e, bool) if endog_mask is None else np.asarray(endog_mask, bool)
    if mask.shape != (d_e,):
        raise ValueError(f"endog_mask must have length {d_e}")
    if not mask.any():
        raise ValueError("at least one column of Y2 must be endogenous")
    if Z.n != n:
        raise ValueError(f"Y2 has {n} rows but the instrument sample has {Z.n}")
    if n < d_e + 1:
        raise DegenerateSampleError(f"need n >= d_e + 1 = {d_e + 1}, got {n}")
    if not Z.centered:
        raise ValueError("instrument sample must be centered")
    if eig.rank == 0:
        raise NoSignalError("instrument covariance has numerical rank zero")

    Yn = Y2[:, mask]
    S = eig.dual_scores
    # n^{-1} sum_i <Z_i, phi_j> Y2_il, then filtered and divided by kappa_j
    cross = S.T @ Yn / n
    coef = (q / eig.eigenvalues)[:, None] * cross
    mean = Yn.mean(axis=0) if intercept else np.zeros(Yn.shape[1])
    fitted = mean + S @ coef

    gamma = Y2.copy()
    v = np.zeros_like(Y2)
    v[:, mask] = Yn - fitted
    gamma[:, mask] = fitted
    return FirstStageFit(alpha, scheme, coef, mean, gamma, v, q, mask, eig)


def fit_first_stage(Y2, Z: InstrumentSample, eig: CovarianceEigensystem, scheme: FilterScheme,
                    endog_mask=None, intercept: bool = True) -> FirstStageFit:
    """Regularized first stage ``Pi_alpha = (n^{-1} sum Y2_i Z_i') K_{n alpha}^{-1}``.

    Parameters
    ----------
    Y2 : (n, d_e) array
        Right-hand-side variables of the outcome equation.
    Z : InstrumentSample
        Centered instruments; exogenous regressors must be included here too.
    eig : CovarianceEigensystem
        Spectrum of ``Z``.
    scheme : FilterScheme
        Regularization scheme and parameter.
    endog_mask : (d_e,) bool array, optional
        Which columns of ``Y2`` are endogenous; default all.  Exogenous
        columns pass through with ``gamma_hat`` equal to the data and a zero
        residual.
    intercept : bool
        Fit each endogenous column's sample mean unregularized, so that the
        residuals average to zero.

    Returns
    -------
    FirstStageFit
    """
    q = filter_value(eig.eigenvalues, scheme)
    return _fit(Y2, Z, eig, np.atleast_1d(q), endog_mask, intercept, scheme.alpha, scheme)


def unregularized_first_stage(Y2, Z: InstrumentSample, eig: CovarianceEigensystem,
                              endog_mask=None, intercept: bool = True) -> FirstStageFit:
    """The ``alpha -> 0`` limit: least squares on the retained eigen-directions."""
    return _fit(Y2, Z, eig, np.ones(eig.rank), endog_mask, intercept, 0.0, None)


def hat_traces(eig: CovarianceEigensystem, scheme: FilterScheme):
    """``(tr P, tr P^2)`` of the first-stage smoother over the retained spectrum."""
    q = np.atleast_1d(filter_value(eig.eigenvalues, scheme))
    return float(q.sum()), float((q * q).sum())


def _ols_F(y, X):
    n = y.size
    Xc = X - X.mean(axis=0)
    yc = y - y.mean()
    tss = float(yc @ yc)
    coef, _, rank, sv = np.linalg.lstsq(Xc, yc, rcond=None)
    k = int(rank)
    if k < X.shape[1]:
        warnings.warn(f"singular first-stage design: rank {k} < {X.shape[1]} columns, "
                      "F computed from the pseudo-inverse fit", RuntimeWarning, stacklevel=3)
    resid = yc - Xc @ coef
    rss = float(resid @ resid)
    if k == 0 or tss == 0.0:
        return 0.0
    if rss < 1e-14 * tss:
        return INFINITE_F
    df2 = n - k - 1
    if df2 <= 0:
        raise DegenerateSampleError(f"F statistic needs n > k + 1 (n={n}, k={k})")
    return ((tss - rss) / k) / (rss / df2)


def first_stage_F(y2_col, Z: InstrumentSample, eig: CovarianceEigensystem | None = None) -> float:
    """OLS F statistic for joint significance of all instruments (with intercept).

    Euclidean instruments enter as they are.  For function-valued (or mixed)
    instruments the leading ``min(25, rank)`` principal-component scores are
    used instead.
    """
    y = np.asarray(y2_col, dtype=float).ravel()
    if y.size != Z.n:
        raise ValueError("y2_col and Z have different numbers of observations")
    if Z.space.kind == "euclidean":
        return _ols_F(y, Z.values)
    if eig is None:
        from .hilbert import center, covariance_eigensystem

        eig = covariance_eigensystem(center(Z))
    m = min(_MAX_FUNCTIONAL_PCS, eig.rank)
    return _ols_F(y, eig.dual_scores[:, :m])
