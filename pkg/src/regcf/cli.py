"""Command-line front end.

Usage::

    regcf fit          --config run.cfg [--output fit.json]
    regcf select-alpha --config run.cfg [--output curve.csv]
    regcf asf          --config run.cfg [--output asf.csv]
    regcf simulate     --config sim.cfg | --scenario NAME  [--output report.csv] [--seed N] [--threads N]

The config file holds one ``key = value`` pair per line (``#`` starts a
comment).  Keys are listed in ``CONFIG_KEYS``.  Exit status is 0 on success,
2 for unusable input data or configuration and 3 for numerical failures.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import math
import sys
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .alpha_select import auto_alpha
from .baselines import fit_2scmle, fit_probit, ols_first_stage
from .errors import DataError, ExperimentFailure, NumericalError, RegcfError
from .first_stage import fit_first_stage
from .hilbert import (RIDGE, FilterScheme, InstrumentSample, InstrumentSpace, center,
                      covariance_eigensystem)
from .inference import asf, estimate_vcov, exogeneity_test
from .second_stage import fit_rcmle, fit_rnlse
from .simlab import ESTIMATORS, SCENARIOS, asf_curves, run_monte_carlo, scenario, write_columns_csv

__all__ = ["RunConfig", "Dataset", "load_config", "ingest_csv", "write_dataset_csv", "run_command",
           "main", "EXIT_OK", "EXIT_DATA", "EXIT_NUMERICAL", "CONFIG_KEYS"]

log = logging.getLogger("regcf")

EXIT_OK = 0
EXIT_DATA = 2
EXIT_NUMERICAL = 3

CONFIG_KEYS = {
    "data": "CSV file with a header row",
    "outcome": "binary outcome column",
    "endog": "comma-separated endogenous regressors",
    "exog": "comma-separated exogenous regressors (also used as instruments)",
    "instruments": "comma-separated excluded instruments",
    "functional_columns": "comma-separated curve columns, in grid order",
    "grid_file": "sidecar CSV of (t, w) pairs for the curve columns",
    "standardize": "true/false: standardize continuous exogenous regressors",
    "scheme": "tikhonov | spectral_cutoff | ridge",
    "alpha": "auto or a positive number",
    "estimator": "rcmle | rnlse | 2scmle | probit",
    "h": "comma-separated direction for the alpha criterion",
    "asf_points": "number of ASF grid points",
    "scenario": "named simulation design",
    "reps": "number of replications",
    "estimators": "comma-separated simulation estimators",
    "seed": "base seed",
    "threads": "worker processes",
    "output": "output path",
}

_MISSING = {"", "na", "nan", "null", "none", "."}
_TRUE = {"1", "true", "yes", "on"}
_FALSE = {"0", "false", "no", "off"}


class ConfigError(DataError):
    """Invalid or incomplete run configuration."""


@dataclass
class RunConfig:
    command: str
    values: dict = field(default_factory=dict)

    def get(self, key, default=None):
        return self.values.get(key, default)

    def require(self, key):
        if key not in self.values or self.values[key] == "":
            raise ConfigError(f"config key {key!r} is required for {self.command!r}")
        return self.values[key]

    def list(self, key):
        raw = self.values.get(key, "")
        return [s.strip() for s in raw.split(",") if s.strip()]

    def flag(self, key, default=False):
        raw = str(self.values.get(key, "")).strip().lower()
        if raw == "":
            return default
        if raw in _TRUE:
            return True
        if raw in _FALSE:
            return False
        raise ConfigError(f"config key {key!r} must be true or false, got {raw!r}")


def load_config(path, command) -> RunConfig:
    values = {}
    base = Path(path).resolve().parent if path else Path.cwd()
    if path:
        try:
            text = Path(path).read_text(encoding="utf-8")
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from None
        for no, line in enumerate(text.splitlines(), 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"{path}:{no}: expected key = value")
            key, val = (s.strip() for s in line.split("=", 1))
            if key not in CONFIG_KEYS:
                raise ConfigError(f"{path}:{no}: unknown key {key!r}")
            values[key] = val
    for key in ("data", "grid_file"):
        if key in values and not Path(values[key]).is_absolute():
            values[key] = str(base / values[key])
    return RunConfig(command, values)


@dataclass
class Dataset:
    """Parsed estimation data.  ``Z`` is centered; raw values are ``Z.values + Z.mean``."""

    y: np.ndarray
    Y2: np.ndarray
    Z: InstrumentSample
    space: InstrumentSpace
    endog_mask: np.ndarray
    y2_names: list
    n_dropped: int
    z_names: list


def _read_table(path):
    try:
        with open(path, newline="", encoding="utf-8") as fh:
            rows = list(csv.reader(fh))
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc}") from None
    if not rows:
        raise DataError(f"{path} is empty")
    return [h.strip() for h in rows[0]], rows[1:]


def _parse_cell(cell, row_no, col):
    c = cell.strip()
    if c.lower() in _MISSING:
        return math.nan
    try:
        return float(c)
    except ValueError:
        raise DataError(f"row {row_no}, column {col!r}: non-numeric value {c!r}") from None


def read_grid_file(path):
    _, rows = _read_table(path)
    try:
        arr = np.array([[float(a), float(b)] for a, b, *_ in rows if any(x.strip() for x in (a, b))])
    except ValueError:
        raise DataError(f"grid file {path} must hold numeric (t, w) pairs") from None
    if arr.ndim != 2 or arr.shape[0] < 2:
        raise DataError(f"grid file {path} needs at least two (t, w) rows")
    return arr[:, 0], arr[:, 1]


def ingest_csv(path, config: RunConfig) -> Dataset:
    """Read ``path`` according to the column roles in ``config``.

    Rows with a missing value in any used column are dropped (the count is
    logged and returned).  Exogenous regressors enter ``Y2`` and, first, the
    instrument vector; curve columns form a weighted-grid block.
    """
    header, rows = _read_table(path)
    outcome = config.require("outcome")
    endog = config.list("endog")
    exog = config.list("exog")
    instr = config.list("instruments")
    curves = config.list("functional_columns")
    if not endog:
        raise ConfigError("at least one endogenous regressor ('endog') is required")
    if not instr and not curves:
        raise ConfigError("give excluded 'instruments' and/or 'functional_columns'")
    used = [outcome] + endog + exog + instr + curves
    missing = [c for c in used if c not in header]
    if missing:
        raise DataError(f"columns not found in {path}: {', '.join(missing)}")
    if len(set(used)) != len(used):
        raise ConfigError("a column is assigned to more than one role")
    pos = {h: i for i, h in enumerate(header)}
    data = np.empty((len(rows), len(used)))
    for r, row in enumerate(rows):
        if len(row) != len(header):
            raise DataError(f"row {r + 2} has {len(row)} fields, header has {len(header)}")
        for j, col in enumerate(used):
            data[r, j] = _parse_cell(row[pos[col]], r + 2, col)
    keep = ~np.isnan(data).any(axis=1)
    n_dropped = int((~keep).sum())
    if n_dropped:
        log.warning("dropped %d row(s) with missing values", n_dropped)
    data = data[keep]
    if data.shape[0] == 0:
        raise DataError("no complete rows left after dropping missing values")
    if not np.all(np.isfinite(data)):
        raise DataError("data contain infinite values")

    y = data[:, 0]
    if not np.all((y == 0) | (y == 1)):
        bad = np.unique(y[(y != 0) & (y != 1)])[:5]
        raise DataError(f"outcome {outcome!r} must be binary 0/1, found {bad.tolist()}")
    k = 1
    Yn = data[:, k:k + len(endog)]
    k += len(endog)
    X = data[:, k:k + len(exog)].copy()
    k += len(exog)
    Zi = data[:, k:k + len(instr)]
    k += len(instr)
    C = data[:, k:]
    if config.flag("standardize"):
        for j in range(X.shape[1]):
            col = X[:, j]
            if np.all(np.isin(col, (0.0, 1.0))):
                continue  # indicators are left alone
            sd = col.std(ddof=1) if col.size > 1 else 0.0
            if sd > 0:
                X[:, j] = (col - col.mean()) / sd

    Y2 = np.hstack([Yn, X])
    mask = np.r_[np.ones(len(endog), bool), np.zeros(len(exog), bool)]
    Zeu = np.hstack([X, Zi])
    if curves:
        gf = config.get("grid_file")
        if not gf:
            raise ConfigError("functional_columns need a grid_file of (t, w) pairs")
        t, w = read_grid_file(gf)
        if t.size != len(curves):
            raise DataError(f"grid file has {t.size} points but {len(curves)} curve columns are listed")
        grid_space = InstrumentSpace.weighted_grid(t, w)
        if Zeu.shape[1]:
            space = InstrumentSpace.euclidean(Zeu.shape[1]).direct_sum(grid_space)
        else:
            space = grid_space
        values = np.hstack([Zeu, C])
    else:
        space = InstrumentSpace.euclidean(Zeu.shape[1])
        values = Zeu
    Z = center(InstrumentSample(values, space))
    return Dataset(y, Y2, Z, space, mask, endog + exog, n_dropped, exog + instr + curves)


def write_dataset_csv(path, y, Y2, Z_values, outcome="y", y2_names=None, z_names=None):
    """Emit a dataset in the format :func:`ingest_csv` reads (full precision)."""
    Y2 = np.atleast_2d(np.asarray(Y2, dtype=float).T).T
    Zv = np.atleast_2d(np.asarray(Z_values, dtype=float).T).T
    y2_names = y2_names or [f"y2_{j}" for j in range(Y2.shape[1])]
    z_names = z_names or [f"z_{j}" for j in range(Zv.shape[1])]
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow([outcome] + list(y2_names) + list(z_names))
        for i in range(len(y)):
            w.writerow([repr(float(y[i]))] + [repr(float(x)) for x in Y2[i]] + [repr(float(x)) for x in Zv[i]])


def _scheme_kind(cfg):
    try:
        return FilterScheme(cfg.get("scheme", "tikhonov"), 1.0).kind
    except ValueError as exc:
        raise ConfigError(str(exc)) from None


def _alpha(cfg, ds, eig, kind):
    raw = str(cfg.get("alpha", "auto")).strip().lower()
    if raw == "auto":
        if kind == RIDGE:
            raise ConfigError("alpha = auto is not available for ridge; supply a positive alpha")
        return auto_alpha(ds.Y2, ds.Z, eig, kind, ds.endog_mask, _direction(cfg)).alpha
    try:
        alpha = float(raw)
    except ValueError:
        raise ConfigError(f"alpha must be 'auto' or a number, got {raw!r}") from None
    if not alpha > 0:
        raise ConfigError("alpha must be positive")
    if kind == RIDGE:
        warnings.warn("ridge regularization may fail the filter rate condition required for "
                      "asymptotic normality; interpret standard errors with care", UserWarning,
                      stacklevel=2)
    return alpha


def _direction(cfg):
    h = cfg.list("h")
    if not h:
        return None
    try:
        return np.array([float(x) for x in h])
    except ValueError:
        raise ConfigError("h must be a comma-separated list of numbers") from None


def _fit_from_config(cfg, ds):
    est = cfg.get("estimator", "rcmle").strip().lower()
    if est == "probit":
        fit = fit_probit(ds.y, ds.Y2)
        return est, fit, None, None
    if est == "2scmle":
        if ds.space.kind != "euclidean":
            raise ConfigError("2scmle needs Euclidean instruments")
        raw = ds.Z.values + ds.Z.mean
        fit = fit_2scmle(ds.y, ds.Y2, raw, ds.endog_mask)
        return est, fit, ols_first_stage(ds.Y2, raw, ds.endog_mask), None
    if est not in ("rcmle", "rnlse"):
        raise ConfigError(f"unknown estimator {est!r}")
    eig = covariance_eigensystem(ds.Z)
    kind = _scheme_kind(cfg)
    alpha = _alpha(cfg, ds, eig, kind)
    fs = fit_first_stage(ds.Y2, ds.Z, eig, FilterScheme(kind, alpha), ds.endog_mask)
    fit = (fit_rcmle if est == "rcmle" else fit_rnlse)(ds.y, ds.Y2, fs)
    return est, fit, fs, alpha


def fit_document(est, fit, fs, alpha, names):
    V = estimate_vcov(fit, fs)
    endog_names = [nm for nm, m in zip(names, fit.endog_mask) if m]
    se = V.se
    doc = {
        "estimator": est,
        "beta": {nm: float(b) for nm, b in zip(names, fit.beta_hat)},
        "psi": {nm: float(p) for nm, p in zip(endog_names, fit.psi_hat)},
        "se": {"beta": {nm: float(s) for nm, s in zip(names, se[:len(names)])},
               "psi": {nm: float(s) for nm, s in zip(endog_names, se[len(names):])}},
        "wald_exogeneity": None,
        "alpha_used": None if alpha is None else float(alpha),
        "convergence": {"converged": bool(fit.converged), "iterations": int(fit.iterations),
                        "grad_norm": float(fit.grad_norm), "objective": float(fit.objective)},
    }
    if fit.psi_hat.size:
        w = exogeneity_test(fit, V)
        doc["wald_exogeneity"] = {"stat": w.stat, "df": w.df, "p": w.p_value}
    return doc


def dumps(doc) -> str:
    return json.dumps(doc, sort_keys=True, indent=2, allow_nan=False) + "\n"


def _emit(text, output):
    if output and output != "-":
        Path(output).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)


def _cmd_fit(cfg, output):
    ds = ingest_csv(cfg.require("data"), cfg)
    est, fit, fs, alpha = _fit_from_config(cfg, ds)
    _emit(dumps(fit_document(est, fit, fs, alpha, ds.y2_names)), output)


def _cmd_select_alpha(cfg, output):
    ds = ingest_csv(cfg.require("data"), cfg)
    eig = covariance_eigensystem(ds.Z)
    kind = _scheme_kind(cfg)
    if kind == RIDGE:
        raise ConfigError("select-alpha supports tikhonov and spectral_cutoff only")
    sel = auto_alpha(ds.Y2, ds.Z, eig, kind, ds.endog_mask, _direction(cfg))
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["alpha", "cp", "selected"])
    for k, (a, c) in enumerate(zip(sel.grid.points, sel.curve)):
        w.writerow([repr(float(a)), repr(float(c)), int(k == sel.index)])
    _emit(buf.getvalue(), output)
    log.info("selected alpha = %.6g (grid constant %.6g)", sel.alpha, sel.grid.c_a)


def _cmd_asf(cfg, output):
    m = int(cfg.get("asf_points", 41))
    if cfg.get("scenario"):
        sc = scenario(cfg.get("scenario"), **_sim_overrides(cfg))
        suite = cfg.list("estimators") or ["trcmle", "probit"]
        cols = asf_curves(sc, suite, reps=sc.reps, grid_size=m)
        _emit(write_columns_csv(cols), output)
        return
    ds = ingest_csv(cfg.require("data"), cfg)
    est, fit, fs, alpha = _fit_from_config(cfg, ds)
    lo, hi = np.percentile(ds.Y2[:, 0], [5, 95])
    grid = np.linspace(lo, hi, m)
    pts = np.tile(ds.Y2.mean(axis=0), (m, 1))
    pts[:, 0] = grid
    _emit(write_columns_csv({ds.y2_names[0]: grid, f"asf_{est}": asf(fit, pts)}), output)


def _sim_overrides(cfg):
    out = {}
    if cfg.get("reps"):
        out["reps"] = int(cfg.get("reps"))
    if cfg.get("seed"):
        out["base_seed"] = int(cfg.get("seed"))
    return out


def _cmd_simulate(cfg, output, threads):
    name = cfg.get("scenario")
    if not name:
        raise ConfigError("simulate needs a scenario (config key or --scenario); known: "
                          + ", ".join(sorted(SCENARIOS)))
    sc = scenario(name, **_sim_overrides(cfg))
    suite = cfg.list("estimators") or None
    if suite:
        bad = [e for e in suite if e not in ESTIMATORS]
        if bad:
            raise ConfigError(f"unknown estimators {bad}")
    rep = run_monte_carlo(sc, suite, threads=threads)
    if output and str(output).endswith(".json"):
        _emit(rep.to_json() + "\n", output)
    else:
        _emit(rep.to_csv(), output)


def run_command(cfg: RunConfig, output=None, threads=1) -> int:
    """Dispatch ``cfg.command``; returns the process exit status."""
    try:
        with np.errstate(all="ignore"):
            if cfg.command == "fit":
                _cmd_fit(cfg, output)
            elif cfg.command == "select-alpha":
                _cmd_select_alpha(cfg, output)
            elif cfg.command == "asf":
                _cmd_asf(cfg, output)
            elif cfg.command == "simulate":
                _cmd_simulate(cfg, output, threads)
            else:
                raise ConfigError(f"unknown command {cfg.command!r}")
    except (NumericalError, ExperimentFailure, np.linalg.LinAlgError) as exc:
        print(f"regcf: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except (RegcfError, ValueError, OSError) as exc:
        print(f"regcf: error: {exc}", file=sys.stderr)
        return EXIT_DATA
    return EXIT_OK


def build_parser():
    p = argparse.ArgumentParser(prog="regcf", description="Regularized control-function probit")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)
    for name in ("fit", "simulate", "select-alpha", "asf"):
        sp = sub.add_parser(name)
        sp.add_argument("--config", help="key = value configuration file")
        sp.add_argument("--output", help="output path (default: standard output)")
        sp.add_argument("--seed", type=int, help="base seed (simulate, asf)")
        sp.add_argument("--threads", type=int, default=None, help="worker processes (simulate)")
        sp.add_argument("--scenario", help="named simulation design")
        sp.add_argument("--reps", type=int, help="number of replications")
        sp.add_argument("-v", "--verbose", action="store_true")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="regcf: %(message)s", stream=sys.stderr)
    try:
        cfg = load_config(args.config, args.command)
    except RegcfError as exc:
        print(f"regcf: error: {exc}", file=sys.stderr)
        return EXIT_DATA
    for key in ("seed", "scenario", "reps", "threads"):
        val = getattr(args, key)
        if val is not None:
            cfg.values[key] = str(val)
    output = args.output or cfg.get("output")
    threads = int(cfg.get("threads", 1))
    return run_command(cfg, output, threads)


if __name__ == "__main__":
    sys.exit(main())
