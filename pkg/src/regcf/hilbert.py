"""Instrument spaces, covariance eigensystems and spectral filters.

Instruments are stored as rows of an ``(n, D)`` array.  For vector
instruments ``D`` is the number of instruments; for function-valued
instruments each row holds a curve evaluated on a common index grid and the
space carries the quadrature weights ``w_k = tau(t_k) * dt_k`` that define
``<h1, h2> = sum_k h1(t_k) h2(t_k) w_k``.  Blocks of both kinds can be stacked
with :meth:`InstrumentSpace.direct_sum`.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.stats import norm

from .errors import DegenerateSampleError

__all__ = [
    "InstrumentSpace",
    "InstrumentSample",
    "CovarianceEigensystem",
    "FilterScheme",
    "TIKHONOV",
    "SPECTRAL_CUTOFF",
    "RIDGE",
    "center",
    "inner_product",
    "covariance_eigensystem",
    "filter_value",
    "apply_regularized_inverse",
]

TIKHONOV = "tikhonov"
SPECTRAL_CUTOFF = "spectral_cutoff"
RIDGE = "ridge"
_SCHEMES = (TIKHONOV, SPECTRAL_CUTOFF, RIDGE)

#: Eigenvalues below ``RANK_RTOL * kappa_1`` are treated as zero.
RANK_RTOL = 1e-12


@dataclass(frozen=True)
class InstrumentSpace:
    """Inner-product geometry of the instrument values.

    Use the constructors :meth:`euclidean`, :meth:`weighted_grid` or
    :meth:`normal_density_grid` rather than calling the class directly.
    """

    weights: np.ndarray
    kind: str = "euclidean"
    grid: np.ndarray | None = None
    blocks: tuple = field(default=(), compare=False)

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=float)
        w.setflags(write=False)
        object.__setattr__(self, "weights", w)
        if w.ndim != 1 or w.size < 1:
            raise ValueError("weights must be a non-empty vector")
        if np.any(~np.isfinite(w)) or np.any(w <= 0):
            raise ValueError("all quadrature weights must be finite and > 0")
        if not self.blocks:
            object.__setattr__(self, "blocks", ((self.kind, w.size),))

    @classmethod
    def euclidean(cls, dim: int) -> InstrumentSpace:
        if int(dim) < 1:
            raise ValueError(f"Euclidean dimension must be >= 1, got {dim}")
        return cls(np.ones(int(dim)), kind="euclidean")

    @classmethod
    def weighted_grid(cls, grid, weights) -> InstrumentSpace:
        grid = np.asarray(grid, dtype=float)
        weights = np.asarray(weights, dtype=float)
        if grid.ndim != 1 or grid.size < 2:
            raise ValueError("a weighted grid needs at least two points")
        if np.any(np.diff(grid) <= 0):
            raise ValueError("grid points must be strictly ascending")
        if weights.shape != grid.shape:
            raise ValueError("grid and weights must have the same length")
        grid = grid.copy()
        grid.setflags(write=False)
        return cls(weights, kind="weighted_grid", grid=grid)

    @classmethod
    def normal_density_grid(cls, lower=-5.0, upper=5.0, size=100) -> InstrumentSpace:
        """Equispaced grid with standard-normal weight and Riemann spacing."""
        t = np.linspace(lower, upper, size)
        dt = (upper - lower) / (size - 1)
        return cls.weighted_grid(t, norm.pdf(t) * dt)

    @property
    def dim(self) -> int:
        return self.weights.size

    def direct_sum(self, other: InstrumentSpace) -> InstrumentSpace:
        """Stack two spaces; elements are concatenated coordinate vectors."""
        grid = None
        if self.grid is not None or other.grid is not None:
            grid = np.concatenate([
                self.grid if self.grid is not None else np.full(self.dim, np.nan),
                other.grid if other.grid is not None else np.full(other.dim, np.nan),
            ])
        return InstrumentSpace(
            np.concatenate([self.weights, other.weights]),
            kind="direct_sum",
            grid=grid,
            blocks=self.blocks + other.blocks,
        )

    def as_weighted_grid(self) -> InstrumentSpace:
        """The same space viewed as a unit-weight grid on ``1..D``."""
        return InstrumentSpace.weighted_grid(np.arange(1.0, self.dim + 1), self.weights)

    def inner(self, h1, h2):
        """Weighted inner product along the last axis (broadcasts)."""
        h1 = np.asarray(h1, dtype=float)
        h2 = np.asarray(h2, dtype=float)
        if h1.shape[-1] != self.dim or h2.shape[-1] != self.dim:
            raise ValueError(
                f"elements have length {h1.shape[-1]} and {h2.shape[-1]}, "
                f"space dimension is {self.dim}"
            )
        if self.kind == "euclidean":
            return np.sum(h1 * h2, axis=-1)
        return np.sum(h1 * h2 * self.weights, axis=-1)

    def norm(self, h):
        return np.sqrt(self.inner(h, h))


def inner_product(h1, h2, space: InstrumentSpace) -> float:
    return float(space.inner(h1, h2))


@dataclass(frozen=True)
class InstrumentSample:
    """``n`` instrument observations living in ``space``."""

    values: np.ndarray
    space: InstrumentSpace
    centered: bool = False
    mean: np.ndarray | None = None

    def __post_init__(self):
        v = np.array(self.values, dtype=float)
        if v.ndim != 2:
            raise ValueError("instrument values must be an (n, D) array")
        if v.shape[1] != self.space.dim:
            raise ValueError(
                f"instrument values have {v.shape[1]} coordinates, "
                f"space dimension is {self.space.dim}"
            )
        if not np.all(np.isfinite(v)):
            raise ValueError("instrument values contain NaN or Inf")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)
        if self.mean is None:
            object.__setattr__(self, "mean", np.zeros(self.space.dim))

    @classmethod
    def euclidean(cls, values) -> InstrumentSample:
        values = np.asarray(values, dtype=float)
        if values.ndim == 1:
            values = values[:, None]
        return cls(values, InstrumentSpace.euclidean(values.shape[1]))

    @property
    def n(self) -> int:
        return self.values.shape[0]

    def recenter(self, values) -> np.ndarray:
        """Apply the stored centering to new observations."""
        return np.asarray(values, dtype=float) - self.mean


def center(sample: InstrumentSample) -> InstrumentSample:
    """Subtract the coordinatewise sample mean (idempotent)."""
    if sample.n < 2:
        raise DegenerateSampleError(f"centering needs n >= 2 observations, got {sample.n}")
    if sample.centered:
        return sample
    mu = sample.values.mean(axis=0)
    return InstrumentSample(sample.values - mu, sample.space, centered=True, mean=sample.mean + mu)


@dataclass(frozen=True)
class CovarianceEigensystem:
    """Nonzero spectrum of ``K_n = n^{-1} sum_i Z_i (x) Z_i``.

    Attributes
    ----------
    eigenvalues : (r,) array
        ``kappa_1 >= ... >= kappa_r > 0``.
    eigenvectors : (r, D) array
        Orthonormal in the space's inner product.
    dual_scores : (n, r) array
        ``<Z_i, phi_j>``; column ``j`` has squared norm ``n * kappa_j``.
    """

    eigenvalues: np.ndarray
    eigenvectors: np.ndarray
    dual_scores: np.ndarray
    space: InstrumentSpace
    n: int

    @property
    def rank(self) -> int:
        return self.eigenvalues.size

    @property
    def trace(self) -> float:
        return float(self.eigenvalues.sum())

    def scores(self, values) -> np.ndarray:
        """Project (already centered) elements onto the eigenvectors."""
        values = np.atleast_2d(np.asarray(values, dtype=float))
        return self.space.inner(values[:, None, :], self.eigenvectors[None, :, :])

    def left_vectors(self) -> np.ndarray:
        """Orthonormal ``(n, r)`` basis ``s_j / sqrt(n kappa_j)``."""
        return self.dual_scores / np.sqrt(self.n * self.eigenvalues)


def covariance_eigensystem(Z: InstrumentSample, space: InstrumentSpace | None = None):
    """Eigensystem of the sample covariance operator through the n-by-n dual.

    The weighted data matrix ``A = Z W^{1/2} / sqrt(n)`` has Gram matrix
    ``A A' = [<Z_i, Z_j> / n]``; its thin SVD gives the same eigenvalues
    without forming a ``D x D`` operator, and is better conditioned than
    an eigendecomposition of the Gram matrix itself.
    """
    space = Z.space if space is None else space
    if not Z.centered:
        raise ValueError("covariance_eigensystem expects a centered sample; call center() first")
    X = Z.values
    n = X.shape[0]
    A = X * np.sqrt(space.weights) / np.sqrt(n)
    U, s, _ = np.linalg.svd(A, full_matrices=False)
    kappa = s**2
    if kappa.size == 0 or kappa[0] <= 0:
        r = 0
    else:
        r = int(np.sum(kappa >= kappa[0] * RANK_RTOL))
    kappa = kappa[:r]
    U = U[:, :r]
    scores = U * np.sqrt(n * kappa)
    # phi_j = n^{-1/2} sum_i Z_i U_ij / sqrt(kappa_j), never divides by the weights
    phi = (U / np.sqrt(kappa)).T @ X / np.sqrt(n) if r else np.zeros((0, space.dim))
    return CovarianceEigensystem(kappa, phi, scores, space, n)


@dataclass(frozen=True)
class FilterScheme:
    """Spectral filter ``q(kappa, alpha)`` of a regularized inverse."""

    kind: str
    alpha: float

    def __post_init__(self):
        kind = str(self.kind).lower().replace("-", "_").replace(" ", "_")
        aliases = {"sc": SPECTRAL_CUTOFF, "cutoff": SPECTRAL_CUTOFF, "spectralcutoff": SPECTRAL_CUTOFF,
                   "tik": TIKHONOV, "t": TIKHONOV}
        kind = aliases.get(kind, kind)
        if kind not in _SCHEMES:
            raise ValueError(f"unknown regularization scheme {self.kind!r}")
        if not np.isfinite(self.alpha) or self.alpha <= 0:
            raise ValueError(f"regularization parameter must be > 0, got {self.alpha}")
        object.__setattr__(self, "kind", kind)
        object.__setattr__(self, "alpha", float(self.alpha))

    def q(self, kappa):
        return filter_value(kappa, self)

    def with_alpha(self, alpha: float) -> FilterScheme:
        return FilterScheme(self.kind, alpha)


def filter_value(kappa, scheme: FilterScheme):
    """Evaluate ``q(kappa, alpha)``; ``q(0, alpha) = 0`` for every scheme."""
    k = np.asarray(kappa, dtype=float)
    a = scheme.alpha
    if scheme.kind == TIKHONOV:
        k2 = k * k
        out = k2 / (k2 + a)
    elif scheme.kind == RIDGE:
        out = k / (k + a)
    else:
        out = (k * k >= a).astype(float)
    out = np.where(k > 0, out, 0.0)
    return out if out.ndim else float(out)


def apply_regularized_inverse(eig: CovarianceEigensystem, scheme: FilterScheme, h) -> np.ndarray:
    """``K_{n,alpha}^{-1} h = sum_j q_j / kappa_j <h, phi_j> phi_j``."""
    h = np.asarray(h, dtype=float)
    if h.shape[-1] != eig.space.dim:
        raise ValueError(f"element has length {h.shape[-1]}, space dimension is {eig.space.dim}")
    if eig.rank == 0:
        warnings.warn("rank-0 eigensystem: regularized inverse is the zero map", RuntimeWarning,
                      stacklevel=2)
        return np.zeros_like(h)
    coef = eig.space.inner(h[..., None, :], eig.eigenvectors) * filter_value(eig.eigenvalues, scheme)
    return (coef / eig.eigenvalues) @ eig.eigenvectors
