"""Data-driven choice of the regularization parameter.

The grid is ``25`` equispaced points on ``[c_a n^{-0.6} / 1000, c_a n^{-0.6}]``
with a constant that grows when the first stage looks weak.  The parameter is
picked by minimizing a Mallows ``C_p`` estimate of the first-stage prediction
error along the direction ``w = Y2_endog h``.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .first_stage import first_stage_F
from .hilbert import (RIDGE, SPECTRAL_CUTOFF, TIKHONOV, CovarianceEigensystem, FilterScheme,
                      InstrumentSample, filter_value)

__all__ = ["AlphaGrid", "AlphaSelection", "build_alpha_grid", "grid_constant", "mallows_cp",
           "select_alpha", "auto_alpha", "GRID_SIZE", "GRID_EXPONENT"]

GRID_SIZE = 25
GRID_EXPONENT = -0.6
GRID_SPAN = 1e-3


@dataclass(frozen=True)
class AlphaGrid:
    points: np.ndarray
    c_a: float
    exponent: float = GRID_EXPONENT


@dataclass(frozen=True)
class AlphaSelection:
    """Result of :func:`select_alpha`; ``curve[k]`` is ``C_p`` at ``grid.points[k]``."""

    alpha: float
    curve: np.ndarray
    grid: AlphaGrid
    sigma2_pilot: float
    index: int


def grid_constant(cov_norm: float, scheme, F_stat: float) -> float:
    """``c_a = ||Sigma|| max(0.1, 1/F)`` (Tikhonov) or ``||Sigma||^2 max(0.1, 1/F)`` (cutoff)."""
    kind = FilterScheme(scheme, 1.0).kind if isinstance(scheme, str) else scheme.kind
    if not cov_norm > 0 or not F_stat > 0:
        raise ValueError("covariance norm and F statistic must be positive")
    weak = max(0.1, 1.0 / F_stat)
    if kind == TIKHONOV:
        return cov_norm * weak
    if kind == SPECTRAL_CUTOFF:
        return cov_norm**2 * weak
    raise ValueError("the automatic grid is defined for Tikhonov and spectral cut-off only; "
                     "pass an explicit alpha for ridge")


def build_alpha_grid(n: int, cov_norm: float, scheme, F_stat: float) -> AlphaGrid:
    """The 25-point grid for sample size ``n``."""
    if n < 2:
        raise ValueError(f"need n >= 2, got {n}")
    c_a = grid_constant(cov_norm, scheme, F_stat)
    top = c_a * float(n) ** GRID_EXPONENT
    return AlphaGrid(np.linspace(top * GRID_SPAN, top, GRID_SIZE), c_a)


def _residual_ss(w, a, q):
    # ||(I - P) w||^2 with P = U diag(q) U', a = U' w
    return float(w @ w - 2.0 * np.sum(q * a * a) + np.sum(q * q * a * a))


def mallows_cp(w, eig: CovarianceEigensystem, scheme: FilterScheme, sigma2_pilot: float) -> float:
    """``n^{-1} ||(I - P_alpha) w||^2 + 2 sigma2 tr(P_alpha) / n`` in spectral coordinates."""
    if not sigma2_pilot > 0:
        raise ValueError("pilot variance must be positive")
    w = np.asarray(w, dtype=float).ravel()
    n = w.size
    a = eig.left_vectors().T @ w
    q = np.atleast_1d(filter_value(eig.eigenvalues, scheme))
    return _residual_ss(w, a, q) / n + 2.0 * sigma2_pilot * float(q.sum()) / n


def select_alpha(Y2, eig: CovarianceEigensystem, scheme, grid: AlphaGrid, h=None,
                 endog_mask=None, center: bool = True) -> AlphaSelection:
    """Minimize ``C_p`` over ``grid`` (ties go to the smaller ``alpha``).

    The pilot variance is the residual variance of ``w`` at the smallest grid
    point, with ``n - 1 - tr(P)`` degrees of freedom (one for the mean).
    """
    Y2 = np.asarray(Y2, dtype=float)
    Y2 = Y2[:, None] if Y2.ndim == 1 else Y2
    mask = np.ones(Y2.shape[1], bool) if endog_mask is None else np.asarray(endog_mask, bool)
    Yn = Y2[:, mask]
    h = np.ones(Yn.shape[1]) if h is None else np.asarray(h, dtype=float)
    w = Yn @ h
    if center:
        w = w - w.mean()
    kind = FilterScheme(scheme, 1.0).kind if isinstance(scheme, str) else scheme.kind
    n = w.size
    a = eig.left_vectors().T @ w
    qs = [np.atleast_1d(filter_value(eig.eigenvalues, FilterScheme(kind, al))) for al in grid.points]

    dof = n - (1 if center else 0) - float(qs[0].sum())
    if dof < 1.0:
        warnings.warn("fewer than one residual degree of freedom at the smallest alpha; "
                      "pilot variance uses one", RuntimeWarning, stacklevel=2)
        dof = 1.0
    sigma2 = _residual_ss(w, a, qs[0]) / dof
    if not sigma2 > 0:
        sigma2 = np.finfo(float).tiny

    curve = np.array([_residual_ss(w, a, q) / n + 2.0 * sigma2 * float(q.sum()) / n for q in qs])
    k = int(np.argmin(curve))  # first minimum, i.e. the smallest alpha on ties
    return AlphaSelection(float(grid.points[k]), curve, grid, float(sigma2), k)


def auto_alpha(Y2, Z: InstrumentSample, eig: CovarianceEigensystem, scheme, endog_mask=None,
               h=None, tikhonov_norm: str = "cross_product") -> AlphaSelection:
    """Grid from the data (largest eigenvalue, weakest first-stage F) then ``C_p`` selection.

    Parameters
    ----------
    tikhonov_norm : {"cross_product", "covariance"}
        Norm entering the Tikhonov grid constant: the largest eigenvalue of
        ``sum_i Z_i (x) Z_i`` (``n kappa_1``, default) or of the sample
        covariance (``kappa_1``).  The spectral cut-off constant always uses
        ``kappa_1^2``.
    """
    kind = FilterScheme(scheme, 1.0).kind if isinstance(scheme, str) else scheme.kind
    if kind == RIDGE:
        raise ValueError("automatic alpha is not available for ridge; its filter may violate "
                         "the rate condition, supply alpha explicitly")
    if tikhonov_norm not in ("cross_product", "covariance"):
        raise ValueError(f"unknown tikhonov_norm {tikhonov_norm!r}")
    Y2 = np.asarray(Y2, dtype=float)
    Y2 = Y2[:, None] if Y2.ndim == 1 else Y2
    mask = np.ones(Y2.shape[1], bool) if endog_mask is None else np.asarray(endog_mask, bool)
    n = Y2.shape[0]
    F = min(first_stage_F(Y2[:, j], Z, eig) for j in np.flatnonzero(mask))
    cov_norm = float(eig.eigenvalues[0])
    if kind == TIKHONOV and tikhonov_norm == "cross_product":
        cov_norm *= n
    grid = build_alpha_grid(n, cov_norm, kind, max(F, 1e-12))
    return select_alpha(Y2, eig, kind, grid, h=h, endog_mask=mask)
