"""Sandwich variances, Wald-type tests and average structural functions.

The variance is assembled in the ``(gamma_hat, V_hat_endog)`` parametrization
with coefficients ``theta = (beta, beta_endog + psi)`` and mapped back to
``(beta, psi)`` through the fixed matrix ``T`` of
:func:`regcf.second_stage.reparametrization_matrix`.  The first-stage
estimation effect is computed in the spectral coordinates of the instrument
covariance, so no ambient-dimension matrix is ever formed.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import linalg, stats
from scipy.special import ndtr

from .errors import SingularInformationError
from .first_stage import FirstStageFit
from .second_stage import RNLSE, SecondStageFit, _mills, norm_pdf, reparametrization_matrix

__all__ = [
    "VarianceEstimate",
    "WaldResult",
    "estimate_vcov",
    "wald_test",
    "exogeneity_test",
    "asf",
    "ape",
    "MAX_CONDITION",
]

#: Information matrices with a larger 2-norm condition number are rejected.
MAX_CONDITION = 1e12


@dataclass(frozen=True)
class VarianceEstimate:
    """Feasible sandwich ``W_hat = Gamma^{-1} (J1 + J2) Gamma^{-1}``.

    ``W_hat`` is the asymptotic variance of ``sqrt(n) (theta_hat - theta)``;
    ``vcov_bp`` is the finite-sample covariance of ``(beta_hat, psi_hat)``,
    i.e. ``T^{-1} (W_hat / n) T^{-T}``.
    """

    W_hat: np.ndarray
    vcov_bp: np.ndarray
    gamma1: np.ndarray
    J1: np.ndarray
    J2: np.ndarray
    sigma2: float
    T: np.ndarray
    n: int
    condition_number: float

    @property
    def se(self) -> np.ndarray:
        return np.sqrt(np.clip(np.diag(self.vcov_bp), 0.0, None))


@dataclass(frozen=True)
class WaldResult:
    stat: float
    df: int
    p_value: float

    def __iter__(self):
        return iter((self.stat, self.df, self.p_value))


def _guarded_inverse(M, what):
    M = 0.5 * (M + M.T)
    cond = float(np.linalg.cond(M))
    if not np.isfinite(cond) or cond > MAX_CONDITION:
        raise SingularInformationError(f"{what} is numerically singular (condition number {cond:.3g})",
                                       condition_number=cond)
    try:
        c = linalg.cho_factor(M, check_finite=False)
        inv = linalg.cho_solve(c, np.eye(M.shape[0]), check_finite=False)
    except linalg.LinAlgError:
        # indefinite but well conditioned: fall back to a symmetric eigen-solve
        w, U = np.linalg.eigh(M)
        inv = (U / w) @ U.T
    return 0.5 * (inv + inv.T), cond


def _weights(fit: SecondStageFit):
    """Per-observation ``(mdot2, m1^2)`` at the estimate."""
    z = fit.index
    y = fit.y
    pdf = norm_pdf(z)
    if fit.estimator_kind == RNLSE:
        resid = y - ndtr(z)
        return pdf * pdf, (resid * pdf) ** 2
    # ((y - Phi) phi / (Phi (1 - Phi)))^2 through the guarded Mills ratios
    lam = y * _mills(z) - (1.0 - y) * _mills(-z)
    lam2 = lam * lam
    return lam2, lam2


def estimate_vcov(fit: SecondStageFit, fs: FirstStageFit | None = None) -> VarianceEstimate:
    """Sandwich variance for a second-stage fit.

    Parameters
    ----------
    fit : SecondStageFit
        Converged RCMLE, RNLSE or probit fit.
    fs : FirstStageFit, optional
        The first stage that produced ``fit.v_endog``.  Without it (plain
        probit, or when the first-stage effect should be ignored) ``J2 = 0``.

    Returns
    -------
    VarianceEstimate

    Raises
    ------
    SingularInformationError
        If ``Gamma`` has condition number above :data:`MAX_CONDITION`.
    """
    n = fit.y.size
    d_e = fit.beta_hat.size
    mask = fit.endog_mask
    v = fit.v_endog
    # reduced regressors g_i = (gamma_hat_i, V_hat_i,endog)
    Y2 = fit.design[:, :d_e]
    gamma = Y2.copy()
    gamma[:, mask] = Y2[:, mask] - v
    g = np.hstack([gamma, v])

    mdot2, m1sq = _weights(fit)
    G = (g.T * mdot2) @ g / n
    J1 = (g.T * m1sq) @ g / n
    p = g.shape[1]
    J2 = np.zeros((p, p))
    sigma2 = 0.0
    if fs is not None and fit.psi_hat.size:
        scale = max(1.0, float(np.abs(v).max()))
        if fs.v_endog.shape != v.shape or not np.allclose(fs.v_endog, v, rtol=0, atol=1e-8 * scale):
            raise ValueError("first-stage fit does not match the control functions used in the fit")
        sigma2 = float(np.mean((v @ fit.psi_hat) ** 2))
        S = fs.eig.dual_scores
        # V_n phi_j = n^{-1} sum_i mdot2_i g_i <Z_i, phi_j>
        A = (g.T * mdot2) @ S / n
        kappa = fs.eig.eigenvalues
        J2 = (A * (fs.q_values ** 2 / kappa)) @ A.T
        if np.any(fs.intercept != 0):
            # the first-stage mean is estimated as well
            a0 = g.T @ mdot2 / n
            J2 = J2 + np.outer(a0, a0)
        J2 = sigma2 * 0.5 * (J2 + J2.T)

    Ginv, cond = _guarded_inverse(G, "second-stage information")
    W = Ginv @ (J1 + J2) @ Ginv
    W = 0.5 * (W + W.T)
    T = reparametrization_matrix(mask)
    Tinv = np.linalg.inv(T)
    vcov = Tinv @ (W / n) @ Tinv.T
    vcov = 0.5 * (vcov + vcov.T)
    return VarianceEstimate(W, vcov, G, J1, J2, sigma2, T, n, cond)


def wald_test(estimate, vcov, R, r=None) -> WaldResult:
    """Wald statistic for ``R theta = r`` with a chi-square reference."""
    est = np.asarray(estimate, dtype=float).ravel()
    V = np.asarray(vcov, dtype=float)
    R = np.atleast_2d(np.asarray(R, dtype=float))
    r = np.zeros(R.shape[0]) if r is None else np.atleast_1d(np.asarray(r, dtype=float))
    if R.shape[1] != est.size or r.size != R.shape[0]:
        raise ValueError("restriction dimensions do not conform")
    if np.linalg.matrix_rank(R) < R.shape[0]:
        raise ValueError("restriction matrix R must have full row rank")
    diff = R @ est - r
    M = R @ V @ R.T
    Minv, _ = _guarded_inverse(M, "R V R'")
    stat = float(diff @ Minv @ diff)
    df = R.shape[0]
    return WaldResult(stat, df, float(stats.chi2.sf(stat, df)))


def exogeneity_test(fit: SecondStageFit, vcov) -> WaldResult:
    """Joint Wald test of ``psi = 0`` (no endogeneity).

    ``vcov`` is either a :class:`VarianceEstimate` or the covariance of
    ``(beta_hat, psi_hat)``.
    """
    V = vcov.vcov_bp if isinstance(vcov, VarianceEstimate) else np.asarray(vcov, dtype=float)
    d_e, d_n = fit.beta_hat.size, fit.psi_hat.size
    if d_n == 0:
        raise ValueError("fit has no control-function coefficients to test")
    R = np.hstack([np.zeros((d_n, d_e)), np.eye(d_n)])
    return wald_test(fit.coef, V, R)


def _index_grid(fit, y2_points):
    pts = np.asarray(y2_points, dtype=float)
    d_e = fit.beta_hat.size
    pts = pts.reshape(-1, d_e) if pts.ndim < 2 else pts
    if pts.shape[1] != d_e:
        raise ValueError(f"grid points must have {d_e} coordinates")
    if not np.all(np.isfinite(pts)):
        raise ValueError("grid points must be finite")
    cf = fit.v_endog @ fit.psi_hat if fit.psi_hat.size else np.zeros(fit.y.size)
    return (pts @ fit.beta_hat)[:, None] + cf[None, :]


def asf(fit: SecondStageFit, y2_points) -> np.ndarray:
    """Average structural function ``n^{-1} sum_i Phi(y2' beta + V_i' psi)``."""
    return ndtr(_index_grid(fit, y2_points)).mean(axis=1)


def ape(fit: SecondStageFit, y2_points) -> np.ndarray:
    """Average partial effects ``[n^{-1} sum_i phi(y2' beta + V_i' psi)] beta``, shape ``(m, d_e)``."""
    dens = norm_pdf(_index_grid(fit, y2_points)).mean(axis=1)
    return dens[:, None] * fit.beta_hat[None, :]
