"""Control-function probit second stage (conditional MLE and nonlinear LS).

Regressors are ``(Y2, V_hat_endog)`` with coefficients ``(beta, psi)``.  The
equivalent ``(gamma_hat, V_hat)`` parametrization with coefficients
``theta = (beta, beta_endog + psi)`` is exposed through
:meth:`SecondStageFit.theta` and :func:`reparametrization_matrix`.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import linalg, optimize
from scipy.special import log_ndtr, ndtr

from .errors import CollinearityError, DegenerateOutcomeError, SeparationError

__all__ = [
    "SecondStageFit",
    "RCMLE",
    "RNLSE",
    "PROBIT",
    "norm_cdf",
    "norm_pdf",
    "probit_objective",
    "nls_objective",
    "maximize",
    "fit_index_model",
    "separating_direction",
    "fit_control_function",
    "fit_rcmle",
    "fit_rnlse",
    "reparametrization_matrix",
]

RCMLE = "RCMLE"
RNLSE = "RNLSE"
PROBIT = "probit"

SEPARATION_INDEX = 30.0
_LOG_SQRT_2PI = 0.5 * np.log(2.0 * np.pi)


def norm_pdf(z):
    return np.exp(-0.5 * np.square(z) - _LOG_SQRT_2PI)


def norm_cdf(z):
    return ndtr(z)


def _mills(z):
    """``phi(z) / Phi(z)``, finite for all ``z`` (log-domain)."""
    return np.exp(-0.5 * np.square(z) - _LOG_SQRT_2PI - log_ndtr(z))


def _probit_pieces(z, y):
    """Log-likelihood terms, score weights and their index derivatives."""
    m_pos = _mills(z)
    m_neg = _mills(-z)
    ll = y * log_ndtr(z) + (1.0 - y) * log_ndtr(-z)
    # (y - Phi) phi / (Phi (1 - Phi)) written without cancellation
    lam = y * m_pos - (1.0 - y) * m_neg
    dlam = -y * m_pos * (z + m_pos) - (1.0 - y) * m_neg * (m_neg - z)
    return ll, lam, dlam


def probit_objective(theta, X, y):
    """Mean probit log-likelihood with exact gradient and Hessian.

    Returns
    -------
    value : float
    gradient : (p,) array
    hessian : (p, p) array
        Negative definite wherever ``0 < Phi < 1``.
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    z = X @ np.asarray(theta, dtype=float)
    ll, lam, dlam = _probit_pieces(z, y)
    n = y.size
    return float(ll.mean()), X.T @ lam / n, (X.T * dlam) @ X / n


def nls_objective(theta, X, y, exact_hessian: bool = False):
    """``-1/2`` mean squared probability residual.

    The default curvature is the Gauss-Newton matrix ``-mean(phi^2 x x')``;
    ``exact_hessian=True`` adds the residual term ``mean((y - Phi) phi' x x')``.
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    z = X @ np.asarray(theta, dtype=float)
    pdf = norm_pdf(z)
    resid = y - ndtr(z)
    n = y.size
    value = -0.5 * float(np.mean(resid * resid))
    grad = X.T @ (resid * pdf) / n
    w = -pdf * pdf
    if exact_hessian:
        w = w - resid * z * pdf
    return value, grad, (X.T * w) @ X / n


def _ascent_direction(g, H):
    try:
        c = linalg.cho_factor(-H, check_finite=False)
        return linalg.cho_solve(c, g, check_finite=False)
    except linalg.LinAlgError:
        return np.linalg.lstsq(-H, g, rcond=None)[0]


@dataclass
class _Trace:
    theta: np.ndarray
    value: float
    grad: np.ndarray
    iterations: int
    converged: bool
    history: list = field(default_factory=list)


def maximize(objective, theta0, *, max_iter=100, max_halvings=30, gtol=1e-8, ftol=1e-12):
    """Newton ascent with step halving.

    ``objective(theta)`` returns ``(value, gradient, curvature)`` with a
    negative (semi)definite curvature.  A step is accepted only if it does not
    decrease the objective.  Stops when the gradient norm falls below
    ``gtol * max(1, |value|)``, when the objective improves by less than
    ``ftol``, or after ``max_iter`` iterations.
    """
    theta = np.array(theta0, dtype=float)
    value, grad, H = objective(theta)
    history = [value]
    it = 0
    flat = 0
    while it < max_iter:
        if np.linalg.norm(grad) < gtol * max(1.0, abs(value)):
            break
        step = _ascent_direction(grad, H)
        t = 1.0
        for _ in range(max_halvings + 1):
            cand = theta + t * step
            c_value, c_grad, c_H = objective(cand)
            if np.isfinite(c_value) and c_value >= value:
                break
            t *= 0.5
        else:
            break
        it += 1
        improvement = c_value - value
        theta, value, grad, H = cand, c_value, c_grad, c_H
        history.append(value)
        # a single tiny change is normal right before quadratic convergence
        flat = flat + 1 if improvement < ftol else 0
        if flat >= 2:
            break
    converged = bool(np.linalg.norm(grad) < gtol * max(1.0, abs(value)))
    return _Trace(theta, value, grad, it, converged, history)


@dataclass(frozen=True)
class SecondStageFit:
    """Second-stage estimates.

    ``design`` is the regressor matrix ``[Y2, V_hat_endog]`` used for the fit,
    ``v_endog`` the control-function columns (empty for a plain probit).
    """

    beta_hat: np.ndarray
    psi_hat: np.ndarray
    objective: float
    iterations: int
    converged: bool
    grad_norm: float
    estimator_kind: str
    endog_mask: np.ndarray
    design: np.ndarray
    y: np.ndarray
    v_endog: np.ndarray

    @property
    def coef(self) -> np.ndarray:
        return np.concatenate([self.beta_hat, self.psi_hat])

    @property
    def index(self) -> np.ndarray:
        return self.design @ self.coef

    @property
    def theta(self) -> np.ndarray:
        """Coefficients on ``(gamma_hat, V_hat_endog)``: ``(beta, beta_endog + psi)``."""
        return reparametrization_matrix(self.endog_mask) @ self.coef


def reparametrization_matrix(endog_mask) -> np.ndarray:
    """``T`` with ``theta = T @ (beta, psi)``."""
    mask = np.asarray(endog_mask, bool)
    d_e, d_n = mask.size, int(mask.sum())
    T = np.eye(d_e + d_n)
    T[d_e:, :d_e] = np.eye(d_e)[mask]
    return T


def _check_outcome(y, binary=True):
    y = np.asarray(y, dtype=float).ravel()
    if not np.all(np.isfinite(y)):
        raise ValueError("outcome contains NaN or Inf")
    if binary and not np.all((y == 0) | (y == 1)):
        raise ValueError("binary outcome must be coded 0/1")
    if np.all(y == y[0]):
        raise DegenerateOutcomeError("outcome is constant")
    return y


def _check_design(X):
    X = np.asarray(X, dtype=float)
    if not np.all(np.isfinite(X)):
        raise ValueError("design contains NaN or Inf")
    rank = np.linalg.matrix_rank(X)
    if rank < X.shape[1]:
        raise CollinearityError(f"design has rank {rank} < {X.shape[1]} columns")
    return X


def separating_direction(X, y):
    """A direction ``b`` with ``(2y - 1) x_i'b >= 0`` for all ``i``, not all zero, or ``None``.

    Such a direction exists exactly when the data are completely or
    quasi-completely separated, in which case the likelihood has no maximizer.
    Solved as the linear program ``max sum_i s_i x_i'b`` over ``|b_k| <= 1``.
    """
    X = np.asarray(X, dtype=float)
    sx = (2.0 * np.asarray(y, dtype=float) - 1.0)[:, None] * X
    scale = float(np.abs(X).max()) or 1.0
    res = optimize.linprog(-sx.sum(axis=0), A_ub=-sx, b_ub=np.zeros(X.shape[0]),
                           bounds=[(-1.0, 1.0)] * X.shape[1], method="highs")
    if res.status != 0:
        return None
    m = sx @ res.x
    tol = 1e-7 * scale * X.shape[1]
    if m.min() >= -tol and m.max() > 1e3 * tol:
        return res.x
    return None


def _check_separation(trace, X, y, kind):
    if not np.all((y == 0) | (y == 1)):
        return  # fractional outcomes (nonlinear least squares) cannot separate
    z = X @ trace.theta
    suspicious = (not trace.converged) or np.abs(z).max() > 3.0
    if suspicious and separating_direction(X, y) is not None:
        raise SeparationError(f"{kind}: outcome is (quasi-)completely separated by the regressors; "
                              "no finite estimate exists",
                              max_abs_index=float(np.abs(z).max()), iterations=trace.iterations)
    if not trace.converged and np.all(np.abs(z) > SEPARATION_INDEX):
        raise SeparationError(f"{kind}: all index values exceed {SEPARATION_INDEX} "
                              "at a non-stationary point",
                              max_abs_index=float(np.abs(z).max()), iterations=trace.iterations)


def fit_index_model(y, X, kind=PROBIT, theta0=None, **opts):
    """Maximize the probit likelihood (``kind`` probit/RCMLE) or NLS objective (RNLSE)."""
    y = _check_outcome(y, binary=(kind != RNLSE))
    X = _check_design(X)
    if kind == RNLSE:
        obj = lambda t: nls_objective(t, X, y)  # noqa: E731
    else:
        obj = lambda t: probit_objective(t, X, y)  # noqa: E731
    theta0 = np.zeros(X.shape[1]) if theta0 is None else np.asarray(theta0, dtype=float)
    trace = maximize(obj, theta0, **opts)
    _check_separation(trace, X, y, kind)
    return trace


def fit_control_function(y, Y2, v_endog, endog_mask, kind=RCMLE, **opts) -> SecondStageFit:
    """Second stage on ``[Y2, v_endog]`` for any first-stage residuals.

    Newton iterations start from the naive probit of ``y`` on ``Y2`` with
    ``psi = 0``.  Keyword options are passed to :func:`maximize`.
    """
    Y2 = np.asarray(Y2, dtype=float)
    Y2 = Y2[:, None] if Y2.ndim == 1 else Y2
    v = np.asarray(v_endog, dtype=float).reshape(Y2.shape[0], -1)
    mask = np.asarray(endog_mask, bool)
    if mask.shape != (Y2.shape[1],) or int(mask.sum()) != v.shape[1]:
        raise ValueError("endog_mask does not match the control-function columns")
    X = np.hstack([Y2, v])
    d_e = Y2.shape[1]
    yb = _check_outcome(y, binary=True)
    _check_design(X)
    start = fit_index_model(yb, Y2, PROBIT, **opts)
    theta0 = np.concatenate([start.theta, np.zeros(v.shape[1])])
    trace = fit_index_model(yb, X, kind, theta0=theta0, **opts)
    return SecondStageFit(
        beta_hat=trace.theta[:d_e].copy(),
        psi_hat=trace.theta[d_e:].copy(),
        objective=trace.value,
        iterations=trace.iterations,
        converged=trace.converged,
        grad_norm=float(np.linalg.norm(trace.grad)),
        estimator_kind=kind,
        endog_mask=mask.copy(),
        design=X,
        y=yb,
        v_endog=v,
    )


def fit_rcmle(y, Y2, fs, **opts) -> SecondStageFit:
    """Regularized conditional MLE: probit of ``y`` on ``(Y2, V_hat_endog)``."""
    return fit_control_function(y, Y2, fs.v_endog, fs.endog_mask, RCMLE, **opts)


def fit_rnlse(y, Y2, fs, **opts) -> SecondStageFit:
    """Regularized nonlinear least squares; Gauss-Newton from the naive probit."""
    return fit_control_function(y, Y2, fs.v_endog, fs.endog_mask, RNLSE, **opts)
