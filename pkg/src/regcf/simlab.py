"""Monte Carlo designs and the experiment harness.

Three data generating processes are provided: a Gaussian design with many
sparse or dense instruments, a factor design where only noisy mixtures of a
few true instruments are observed, and a design whose instrument is a
function ``t -> exp(t z2)`` on a grid.  In every design

    y  = 1{y2 b1 + z1 b2 >= u},     y2 = (first stage) + v,

with ``(u, v)`` jointly normal, ``corr(u, v) = rho`` and ``Var(u | v) = 1``,
so that the probit coefficient on the control function is
``psi0 = -rho sigma1 / sigma2``.

Every replication draws from ``SeedSequence(base_seed, spawn_key=(rep,))``
and results are reduced in replication order, so reports do not depend on the
number of worker processes.
"""

from __future__ import annotations

import csv
import io
import json
import math
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace

import numpy as np
from scipy.special import ndtr

from .alpha_select import auto_alpha
from .baselines import fit_2scmle, fit_probit, fit_ttsls, ols_first_stage
from .errors import ExperimentFailure, InfeasibleDesignError, RegcfError
from .first_stage import fit_first_stage
from .hilbert import (SPECTRAL_CUTOFF, TIKHONOV, FilterScheme, InstrumentSample, InstrumentSpace,
                      center, covariance_eigensystem)
from .inference import asf, estimate_vcov
from .second_stage import fit_rcmle, fit_rnlse, norm_pdf

__all__ = [
    "ScenarioConfig",
    "SimData",
    "Truth",
    "MonteCarloReport",
    "EstimatorSummary",
    "SCENARIOS",
    "ESTIMATORS",
    "scenario",
    "toeplitz_cov",
    "solve_cstar",
    "concentration",
    "replication_rng",
    "experiment_rng",
    "draw_loadings",
    "gen_gaussian",
    "gen_factor",
    "gen_functional",
    "generate",
    "beta_density",
    "median_bias",
    "median_abs_deviation",
    "run_replication",
    "run_monte_carlo",
    "true_asf",
    "asf_curves",
]

GAUSSIAN = "gaussian"
FACTOR = "factor"
FUNCTIONAL = "functional"

#: Spawn key reserved for draws shared by all replications of an experiment.
EXPERIMENT_KEY = 2**32 - 1

ESTIMATORS = ("trcmle", "scrcmle", "trnlse", "inf_2scmle", "2scmle", "probit", "ttsls")
TABLE_SUITE = ("trcmle", "scrcmle", "inf_2scmle", "2scmle", "probit", "ttsls")
MAX_FAILURE_RATE = 0.2
AUTO_POLICIES = {"auto": "cross_product", "auto-covariance": "covariance"}


@dataclass(frozen=True)
class ScenarioConfig:
    """Simulation design.  Defaults are the sparse Gaussian design."""

    kind: str = GAUSSIAN
    n: int = 200
    K: int = 50
    K_tilde: int = 100
    s: float = 0.2
    mu2: float = 30.0
    rho: float = 0.6
    sigma_z2: float = 0.5
    rho_z: float = 0.7
    sigma_tilde: float = 0.3
    beta1: float = 1.0
    beta2: float = -1.0
    grid_lower: float = -5.0
    grid_upper: float = 5.0
    grid_size: int = 100
    presample: int = 1000
    reps: int = 500
    base_seed: int = 12345

    def __post_init__(self):
        if self.kind not in (GAUSSIAN, FACTOR, FUNCTIONAL):
            raise ValueError(f"unknown design {self.kind!r}")
        if self.n < 10:
            raise ValueError("n must be at least 10")
        if not 0 < self.s <= 1:
            raise ValueError("sparsity fraction s must lie in (0, 1]")
        if not abs(self.rho_z) < 1 or self.sigma_z2 <= 0:
            raise ValueError("instrument covariance must be positive definite")
        if not abs(self.rho) < 1:
            raise ValueError("error correlation must lie in (-1, 1)")
        if self.mu2 < 0:
            raise ValueError("concentration parameter must be nonnegative")
        if self.reps < 1:
            raise ValueError("need at least one replication")

    @property
    def sigma1(self) -> float:
        return 1.0 / math.sqrt(1.0 - self.rho**2)

    @property
    def n_relevant(self) -> int:
        return int(math.floor(self.s * self.K))

    def with_(self, **kw) -> ScenarioConfig:
        return replace(self, **kw)


def _scenarios():
    out = {}
    for n in (200, 400):
        for s in (0.2, 0.8):
            for mu2 in (30, 60):
                out[f"gaussian-s{int(s * 10):02d}-mu{mu2}-n{n}"] = ScenarioConfig(
                    GAUSSIAN, n=n, s=s, mu2=mu2)
            # nothing else varies in the Gaussian family
        for mu2 in (30, 60):
            out[f"factor-mu{mu2}-n{n}"] = ScenarioConfig(
                FACTOR, n=n, K=5, K_tilde=100, s=1.0, mu2=mu2, sigma_z2=1.0, rho_z=0.0)
        for mu2 in (60, 180):
            out[f"functional-mu{mu2}-n{n}"] = ScenarioConfig(FUNCTIONAL, n=n, K=2, s=1.0, mu2=mu2)
    return out


#: Named designs used by the tables; e.g. ``"gaussian-s02-mu30-n200"``.
SCENARIOS = _scenarios()


def scenario(name: str, **overrides) -> ScenarioConfig:
    try:
        cfg = SCENARIOS[name]
    except KeyError:
        raise ValueError(f"unknown scenario {name!r}; known: {', '.join(sorted(SCENARIOS))}") from None
    return cfg.with_(**overrides) if overrides else cfg


def toeplitz_cov(K: int, sigma_z2: float, rho_z: float) -> np.ndarray:
    idx = np.arange(K)
    return sigma_z2 * float(rho_z) ** np.abs(idx[:, None] - idx[None, :])


def concentration(pi, Sigma, n) -> float:
    """``mu^2 = n pi' Sigma pi / (1 - pi' Sigma pi)``."""
    pi = np.asarray(pi, dtype=float)
    r2 = float(pi @ Sigma @ pi)
    return n * r2 / (1.0 - r2)


def solve_cstar(mu2, n, pi_tilde, Sigma_Z) -> float:
    """Scale ``c`` with ``concentration(c pi_tilde, Sigma_Z, n) == mu2``.

    ``c^2 = mu2 / ((n + mu2) pi_tilde' Sigma_Z pi_tilde)``.
    """
    if mu2 < 0:
        raise InfeasibleDesignError("concentration parameter must be nonnegative")
    if mu2 == 0:
        return 0.0
    pt = np.atleast_1d(np.asarray(pi_tilde, dtype=float))
    quad = float(pt @ np.atleast_2d(Sigma_Z) @ pt)
    if not quad > 0:
        raise InfeasibleDesignError("pi_tilde' Sigma_Z pi_tilde must be positive")
    c2 = mu2 / ((n + mu2) * quad)
    # explained share c2 * quad = mu2 / (n + mu2) < 1 always; guard rounding anyway
    if not c2 * quad < 1.0:
        raise InfeasibleDesignError("first-stage variance would exceed the variance of y2")
    return math.sqrt(c2)


def replication_rng(base_seed: int, rep: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(entropy=base_seed, spawn_key=(rep,)))


def experiment_rng(base_seed: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(entropy=base_seed, spawn_key=(EXPERIMENT_KEY,)))


def beta_density(z):
    """Beta(2, 5) density ``30 z (1 - z)^4`` on ``[0, 1]``."""
    z = np.asarray(z, dtype=float)
    return np.where((z >= 0) & (z <= 1), 30.0 * z * (1.0 - z) ** 4, 0.0)


@dataclass(frozen=True)
class Truth:
    beta: np.ndarray
    psi0: float
    sigma1: float
    sigma2: float
    pi: np.ndarray
    ttsls_target: float


@dataclass(frozen=True)
class SimData:
    """One simulated sample.

    ``Y2 = [y2, z1]`` with only the first column endogenous; ``Z`` holds the
    instruments the feasible estimators see (``z1`` among them) and
    ``Z_infeasible`` the design of the infeasible two-step estimator.
    """

    y: np.ndarray
    Y2: np.ndarray
    Z: InstrumentSample
    Z_infeasible: np.ndarray
    truth: Truth
    v: np.ndarray
    endog_mask: np.ndarray = field(default_factory=lambda: np.array([True, False]))


def _errors(rng, n, rho, sigma1, sigma2):
    e1 = rng.standard_normal(n)
    e2 = rng.standard_normal(n)
    v = sigma2 * e2
    u = sigma1 * (rho * e2 + math.sqrt(1.0 - rho**2) * e1)
    return u, v


def _finish(cfg, y2, z1, u, v, pi, sigma2, Z, Z_inf):
    psi0 = -cfg.rho * cfg.sigma1 / sigma2
    y = (y2 * cfg.beta1 + z1 * cfg.beta2 >= u).astype(float)
    target = float(np.mean(norm_pdf(y2 * cfg.beta1 + z1 * cfg.beta2 + psi0 * v))) * cfg.beta1
    truth = Truth(np.array([cfg.beta1, cfg.beta2]), psi0, cfg.sigma1, sigma2, np.asarray(pi), target)
    return SimData(y, np.column_stack([y2, z1]), Z, Z_inf, truth, v)


def _first_stage_noise(cfg, explained):
    s2 = 1.0 - explained
    if not s2 > 0:
        raise InfeasibleDesignError(f"sigma2^2 = 1 - pi' Sigma pi = {s2:.3g} must be positive")
    return math.sqrt(s2)


def gen_gaussian(cfg: ScenarioConfig, rng) -> SimData:
    """Gaussian design: ``Z ~ N(0, Sigma_Z)``, ``pi = c* (1_{floor(sK)}, 0)``."""
    rng = rng if isinstance(rng, np.random.Generator) else np.random.default_rng(rng)
    K, n = cfg.K, cfg.n
    Sigma = toeplitz_cov(K, cfg.sigma_z2, cfg.rho_z)
    m = cfg.n_relevant
    if m < 1:
        raise InfeasibleDesignError("floor(s K) must be at least one")
    pt = np.r_[np.ones(m), np.zeros(K - m)]
    pi = solve_cstar(cfg.mu2, n, pt, Sigma) * pt
    sigma2 = _first_stage_noise(cfg, float(pi @ Sigma @ pi))
    Z = rng.standard_normal((n, K)) @ np.linalg.cholesky(Sigma).T
    u, v = _errors(rng, n, cfg.rho, cfg.sigma1, sigma2)
    y2 = Z @ pi + v
    return _finish(cfg, y2, Z[:, 0], u, v, pi, sigma2, InstrumentSample.euclidean(Z), Z[:, :m])


def draw_loadings(cfg: ScenarioConfig) -> np.ndarray:
    """The ``K_tilde x K`` mixing matrix, fixed for the whole experiment."""
    return experiment_rng(cfg.base_seed).uniform(-1.0, 1.0, size=(cfg.K_tilde, cfg.K))


def gen_factor(cfg: ScenarioConfig, rng, M=None) -> SimData:
    """Factor design: only ``Z_tilde = M Z + noise`` is observed.

    The exogenous regressor ``z1`` is the first observed column, so it is
    available to every estimator.  The infeasible two-step estimator uses the
    true ``Z`` together with ``z1``.
    """
    rng = rng if isinstance(rng, np.random.Generator) else np.random.default_rng(rng)
    M = draw_loadings(cfg) if M is None else np.asarray(M, dtype=float)
    if M.shape != (cfg.K_tilde, cfg.K):
        raise ValueError(f"loading matrix must be {cfg.K_tilde} x {cfg.K}")
    K, n = cfg.K, cfg.n
    Sigma = toeplitz_cov(K, cfg.sigma_z2, cfg.rho_z)
    m = max(cfg.n_relevant, 1)
    pt = np.r_[np.ones(m), np.zeros(K - m)]
    pi = solve_cstar(cfg.mu2, n, pt, Sigma) * pt
    sigma2 = _first_stage_noise(cfg, float(pi @ Sigma @ pi))
    Z = rng.standard_normal((n, K)) @ np.linalg.cholesky(Sigma).T
    Zt = Z @ M.T
    if cfg.sigma_tilde > 0:
        Zt = Zt + cfg.sigma_tilde * rng.standard_normal((n, cfg.K_tilde))
    u, v = _errors(rng, n, cfg.rho, cfg.sigma1, sigma2)
    y2 = Z @ pi + v
    z1 = Zt[:, 0]
    return _finish(cfg, y2, z1, u, v, pi, sigma2, InstrumentSample.euclidean(Zt),
                   np.column_stack([Z, z1]))


def functional_space(cfg: ScenarioConfig) -> InstrumentSpace:
    """``R`` (for ``z1``) plus the weighted grid carrying ``exp(t z2)``."""
    curves = InstrumentSpace.normal_density_grid(cfg.grid_lower, cfg.grid_upper, cfg.grid_size)
    return InstrumentSpace.euclidean(1).direct_sum(curves)


def functional_pi(cfg: ScenarioConfig) -> float:
    """Common first-stage slope calibrated on a presample of ``(z1, f(z2))``.

    The presample moment matrix is the raw second moment ``mean(x x')``,
    the same object ``Sigma_Z`` is for the mean-zero Gaussian instruments.
    """
    rng = experiment_rng(cfg.base_seed)
    pre = np.column_stack([rng.standard_normal(cfg.presample),
                           beta_density(rng.uniform(size=cfg.presample))])
    Sigma_hat = pre.T @ pre / cfg.presample
    return solve_cstar(cfg.mu2, cfg.n, np.ones(2), Sigma_hat), Sigma_hat


def gen_functional(cfg: ScenarioConfig, rng, calibration=None) -> SimData:
    """Function-valued instrument ``t -> exp(t z2)`` with ``y2 = pi z1 + pi f(z2) + v``."""
    rng = rng if isinstance(rng, np.random.Generator) else np.random.default_rng(rng)
    c, Sigma_hat = functional_pi(cfg) if calibration is None else calibration
    n = cfg.n
    sigma2 = _first_stage_noise(cfg, c * c * float(Sigma_hat.sum()))
    z1 = rng.standard_normal(n)
    z2 = rng.uniform(size=n)
    f = beta_density(z2)
    u, v = _errors(rng, n, cfg.rho, cfg.sigma1, sigma2)
    y2 = c * z1 + c * f + v
    space = functional_space(cfg)
    t = space.grid[1:]
    values = np.column_stack([z1, np.exp(np.outer(z2, t))])
    return _finish(cfg, y2, z1, u, v, np.array([c, c]), sigma2, InstrumentSample(values, space),
                   np.column_stack([z1, f]))


def _shared_draws(cfg):
    if cfg.kind == FACTOR:
        return draw_loadings(cfg)
    if cfg.kind == FUNCTIONAL:
        return functional_pi(cfg)
    return None


def generate(cfg: ScenarioConfig, rep: int, shared=None) -> SimData:
    rng = replication_rng(cfg.base_seed, rep)
    shared = _shared_draws(cfg) if shared is None else shared
    if cfg.kind == GAUSSIAN:
        return gen_gaussian(cfg, rng)
    if cfg.kind == FACTOR:
        return gen_factor(cfg, rng, shared)
    return gen_functional(cfg, rng, shared)


def median_bias(estimates, target=0.0) -> float:
    est = np.asarray(estimates, dtype=float)
    return float(np.median(est - np.asarray(target, dtype=float)))


def median_abs_deviation(estimates) -> float:
    """``median(|x - median(x)|)`` (midpoint rule for even counts, no rescaling)."""
    est = np.asarray(estimates, dtype=float)
    return float(np.median(np.abs(est - np.median(est))))


@dataclass(frozen=True)
class _Outcome:
    estimate: float = math.nan
    se: float = math.nan
    target: float = math.nan
    reject: bool = False
    alpha: float = math.nan
    error: str | None = None


def _wald_reject(est, se, target, level_z=1.959963984540054):
    return bool(abs(est - target) / se > level_z)


def _cf_outcome(fit, fs, target, alpha):
    if not fit.converged:
        return _Outcome(error="not converged")
    V = estimate_vcov(fit, fs)
    se = float(V.se[0])
    return _Outcome(float(fit.beta_hat[0]), se, target, _wald_reject(fit.beta_hat[0], se, target), alpha)


def run_replication(cfg: ScenarioConfig, rep: int, suite=TABLE_SUITE, alpha_policy="auto",
                    shared=None, return_fits=False):
    """Generate one sample and run every estimator in ``suite``.

    ``alpha_policy`` is ``"auto"`` (grid plus ``C_p``), ``"auto-covariance"``
    (the same with the covariance norm in the Tikhonov grid), a positive number used
    for both schemes, or a mapping ``{"tikhonov": a, "spectral_cutoff": b}``.
    Returns ``{name: _Outcome}`` (and the fitted objects with ``return_fits``).
    """
    data = generate(cfg, rep, shared)
    b1 = cfg.beta1
    out, fits = {}, {}
    Zc = eig = None
    firsts = {}

    def first(kind):
        nonlocal Zc, eig
        if kind not in firsts:
            if Zc is None:
                Zc = center(data.Z)
                eig = covariance_eigensystem(Zc)
            if isinstance(alpha_policy, str) and alpha_policy in AUTO_POLICIES:
                alpha = auto_alpha(data.Y2, Zc, eig, kind, data.endog_mask,
                                   tikhonov_norm=AUTO_POLICIES[alpha_policy]).alpha
            elif isinstance(alpha_policy, dict):
                alpha = float(alpha_policy[kind])
            else:
                alpha = float(alpha_policy)
            firsts[kind] = fit_first_stage(data.Y2, Zc, eig, FilterScheme(kind, alpha), data.endog_mask)
        return firsts[kind]

    for name in suite:
        try:
            if name in ("trcmle", "scrcmle", "trnlse"):
                kind = SPECTRAL_CUTOFF if name == "scrcmle" else TIKHONOV
                fs = first(kind)
                fitter = fit_rnlse if name == "trnlse" else fit_rcmle
                fit = fitter(data.y, data.Y2, fs)
                out[name] = _cf_outcome(fit, fs, b1, fs.alpha)
                fits[name] = (fit, fs)
            elif name in ("2scmle", "inf_2scmle"):
                if name == "2scmle":
                    if data.Z.space.kind != "euclidean":
                        raise ValueError("the two-step estimator needs Euclidean instruments")
                    Zd = data.Z.values
                else:
                    Zd = data.Z_infeasible
                fit = fit_2scmle(data.y, data.Y2, Zd, data.endog_mask)
                fs = ols_first_stage(data.Y2, Zd, data.endog_mask)
                out[name] = _cf_outcome(fit, fs, b1, 0.0)
                fits[name] = (fit, fs)
            elif name == "probit":
                fit = fit_probit(data.y, data.Y2)
                out[name] = _cf_outcome(fit, None, b1, math.nan)
                fits[name] = (fit, None)
            elif name == "ttsls":
                fs = first(TIKHONOV)
                lf = fit_ttsls(data.y, data.Y2, fs)
                tgt = data.truth.ttsls_target
                se = float(lf.se[0])
                out[name] = _Outcome(float(lf.coefficients[0]), se, tgt,
                                     _wald_reject(lf.coefficients[0], se, tgt), fs.alpha)
                fits[name] = (lf, fs)
            else:
                raise ValueError(f"unknown estimator {name!r}; choose from {ESTIMATORS}")
        except (RegcfError, np.linalg.LinAlgError, FloatingPointError) as exc:
            out[name] = _Outcome(error=f"{type(exc).__name__}: {exc}")
    if return_fits:
        return out, fits, data
    return out


@dataclass(frozen=True)
class EstimatorSummary:
    median_bias: float
    mad: float
    rejection_rate: float
    n_ok: int
    n_failed: int


@dataclass
class MonteCarloReport:
    """Aggregated results; ``raw[name]`` has per-replication arrays."""

    config: ScenarioConfig
    suite: tuple
    rows: dict
    raw: dict
    seeds: list
    failures: dict

    def table(self):
        return [(k, self.rows[k]) for k in self.suite]

    def to_csv(self, path=None) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["estimator", "median_bias", "mad", "rejection_rate", "n_ok", "n_failed"])
        for name, r in self.table():
            w.writerow([name, f"{r.median_bias:.6f}", f"{r.mad:.6f}", f"{r.rejection_rate:.6f}",
                        r.n_ok, r.n_failed])
        text = buf.getvalue()
        if path is not None:
            with open(path, "w", encoding="utf-8", newline="") as fh:
                fh.write(text)
        return text

    def to_dict(self) -> dict:
        def clean(x):
            return None if isinstance(x, float) and not math.isfinite(x) else x

        return {
            "config": asdict(self.config),
            "estimators": {k: asdict(v) for k, v in self.table()},
            "replications": {k: {f: [clean(float(x)) if f != "reject" else bool(x) for x in arr]
                                 for f, arr in self.raw[k].items()} for k in self.suite},
            "failures": {k: list(v) for k, v in self.failures.items()},
            "seeds": list(self.seeds),
        }

    def to_json(self, path=None) -> str:
        text = json.dumps(self.to_dict(), sort_keys=True, indent=2, allow_nan=False)
        if path is not None:
            with open(path, "w", encoding="utf-8") as fh:
                fh.write(text + "\n")
        return text


def _worker(args):
    cfg, reps, suite, alpha_policy = args
    shared = _shared_draws(cfg)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        return [(r, run_replication(cfg, r, suite, alpha_policy, shared)) for r in reps]


def aggregate(cfg, suite, results, max_failure_rate=MAX_FAILURE_RATE) -> MonteCarloReport:
    """Reduce ``[(rep, {name: _Outcome})]`` in replication order."""
    results = sorted(results, key=lambda t: t[0])
    rows, raw, failures = {}, {}, {}
    reps = [r for r, _ in results]
    for name in suite:
        outs = [o[name] for _, o in results]
        ok = [o for o in outs if o.error is None]
        failures[name] = [f"{r}: {o.error}" for r, o in zip(reps, outs) if o.error is not None]
        n_fail = len(outs) - len(ok)
        if n_fail > max_failure_rate * len(outs):
            raise ExperimentFailure(f"{name}: {n_fail} of {len(outs)} replications failed "
                                    f"(first: {failures[name][0]})")
        est = np.array([o.estimate for o in ok])
        tgt = np.array([o.target for o in ok])
        rej = np.array([o.reject for o in ok], bool)
        rows[name] = EstimatorSummary(median_bias(est, tgt), median_abs_deviation(est),
                                      float(rej.mean()), len(ok), n_fail)
        raw[name] = {
            "rep": np.array([r for r, o in zip(reps, outs) if o.error is None]),
            "estimate": est, "se": np.array([o.se for o in ok]), "target": tgt,
            "reject": rej, "alpha": np.array([o.alpha for o in ok]),
        }
    return MonteCarloReport(cfg, tuple(suite), rows, raw, reps, failures)


def run_monte_carlo(cfg: ScenarioConfig, estimator_suite=None, alpha_policy="auto",
                    threads: int = 1, reps=None) -> MonteCarloReport:
    """Run ``cfg.reps`` replications and summarize ``beta1`` estimates.

    Parameters
    ----------
    cfg : ScenarioConfig
    estimator_suite : sequence of str, optional
        Names from :data:`ESTIMATORS`; defaults to the six table rows (the
        feasible two-step estimator is dropped for function-valued designs).
    alpha_policy : "auto", float or dict
    threads : int
        Number of worker processes.  Results are identical for any value.
    reps : iterable of int, optional
        Replication indices; default ``range(cfg.reps)``.

    Raises
    ------
    ExperimentFailure
        If more than 20% of the replications fail for some estimator.
    """
    if estimator_suite is None:
        estimator_suite = tuple(e for e in TABLE_SUITE if not (cfg.kind == FUNCTIONAL and e == "2scmle"))
    suite = tuple(estimator_suite)
    if not suite:
        raise ValueError("estimator suite is empty")
    bad = [e for e in suite if e not in ESTIMATORS]
    if bad:
        raise ValueError(f"unknown estimators {bad}; choose from {ESTIMATORS}")
    idx = list(range(cfg.reps)) if reps is None else [int(r) for r in reps]
    threads = max(1, int(threads))
    if threads == 1:
        results = _worker((cfg, idx, suite, alpha_policy))
    else:
        chunks = [idx[i::threads] for i in range(threads)]
        with ProcessPoolExecutor(max_workers=threads) as ex:
            parts = ex.map(_worker, [(cfg, c, suite, alpha_policy) for c in chunks if c])
            results = [item for part in parts for item in part]
    return aggregate(cfg, suite, results)


def true_asf(y2, beta1, psi0, sigma_v, z1_term=0.0, nodes: int = 40) -> np.ndarray:
    """Population ``E_v[Phi(y2 b1 + z1 b2 + psi0 v)]`` by Gauss-Hermite quadrature."""
    x, w = np.polynomial.hermite.hermgauss(nodes)
    y2 = np.atleast_1d(np.asarray(y2, dtype=float))
    idx = (y2 * beta1 + z1_term)[:, None] + psi0 * sigma_v * math.sqrt(2.0) * x[None, :]
    return ndtr(idx) @ w / math.sqrt(math.pi)


def asf_curves(cfg: ScenarioConfig, estimator_suite=("trcmle", "2scmle", "probit", "ttsls"),
               reps: int = 100, grid_size: int = 41, alpha_policy="auto") -> dict:
    """Replication-averaged ASF curves in ``y2`` with ``z1`` held at zero.

    The ``y2`` grid spans the 5th to 95th percentile of the first
    replication's ``y2``.  Returns a column dictionary with ``y2``, one
    ``asf_<estimator>`` column per estimator and ``asf_true``.
    """
    shared = _shared_draws(cfg)
    first = generate(cfg, 0, shared)
    lo, hi = np.percentile(first.Y2[:, 0], [5, 95])
    grid = np.linspace(lo, hi, grid_size)
    pts = np.column_stack([grid, np.zeros(grid_size)])
    sums = {e: np.zeros(grid_size) for e in estimator_suite}
    counts = {e: 0 for e in estimator_suite}
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        for r in range(reps):
            outs, fits, _ = run_replication(cfg, r, estimator_suite, alpha_policy, shared, return_fits=True)
            for e in estimator_suite:
                if outs[e].error is not None:
                    continue
                obj, _fs = fits[e]
                if e == "ttsls":
                    b = obj.coefficients
                    curve = b[0] * grid + b[-1]
                else:
                    curve = asf(obj, pts)
                sums[e] += curve
                counts[e] += 1
    cols = {"y2": grid}
    for e in estimator_suite:
        cols[f"asf_{e}"] = sums[e] / max(counts[e], 1)
    t = first.truth
    cols["asf_true"] = true_asf(grid, cfg.beta1, t.psi0, t.sigma2)
    return cols


def write_columns_csv(cols: dict, path=None) -> str:
    keys = list(cols)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(keys)
    for row in zip(*(cols[k] for k in keys)):
        w.writerow([repr(float(x)) for x in row])
    text = buf.getvalue()
    if path is not None:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
    return text
