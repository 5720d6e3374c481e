"""Convergence-rate experiments against the grid-filter oracle.

A study runs the particle filter at several particle counts N, with M
independent replicates each, measures per-step estimation errors against
the grid filter, and fits log2-log2 slopes of the error moments versus
N.  Mean-square errors should scale like 1/N and fourth-moment errors
like 1/N^2 whenever the weight-moment conditions hold.

Replicate (N, r) always draws from the stream labelled
(master_seed, N-index, r), so results are byte-identical no matter how
many worker processes execute the cells.
"""

from __future__ import annotations

import os
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

from .cox import CoxParams, GammaProposal, ObservationSeries, \
    make_bootstrap_proposal, make_cox_model, make_gamma_proposal
from .engine import run_filter
from .errors import DomainError, InsufficientPoints, NonPositiveValue, StudyError
from .gridfilter import run_cox_grid_filter
from .model import make_test_function
from .resampling import SCHEMES, get_scheme
from .rng import RngStream

SCHEMA_VERSION = 1
WORKERS_ENV = "PFCONV_WORKERS"


@dataclass(frozen=True)
class ExperimentConfig:
    """Everything needed to reproduce one convergence study."""

    observations: str
    c: float = 0.5
    eta: float = 0.1
    proposal: str = "gamma"  # "gamma" or "bootstrap"
    alpha: float = 1.5
    beta: float = 0.5
    particle_counts: tuple[int, ...] = (128, 512, 2048, 8192)
    replicates: int = 200
    test_functions: tuple[str, ...] = ("exp_neg",)
    moments: tuple[int, ...] = (2, 4)
    resampler: str = "multinomial"
    master_seed: int = 1
    grid_dx: float = 0.005
    grid_x_max: float = 15.0
    out_csv: str | None = None
    out_json: str | None = None
    out_svg: str | None = None

    def validate(self) -> None:
        if len(self.particle_counts) < 1 or any(n < 2 for n in self.particle_counts):
            raise DomainError("particle counts must all be >= 2")
        if list(self.particle_counts) != sorted(set(self.particle_counts)):
            raise DomainError("particle counts must be strictly increasing")
        if self.replicates < 2:
            raise DomainError("need at least 2 replicates")
        if not self.test_functions:
            raise DomainError("need at least one test function")
        for name in self.test_functions:
            make_test_function(name)
        if not set(self.moments) <= {2, 4} or not self.moments:
            raise DomainError("moments must be a nonempty subset of {2, 4}")
        if self.resampler not in SCHEMES:
            raise DomainError(f"unknown resampler {self.resampler!r}")
        if self.proposal not in ("gamma", "bootstrap"):
            raise DomainError(f"unknown proposal kind {self.proposal!r}")
        if self.grid_dx <= 0 or self.grid_x_max <= self.grid_dx:
            raise DomainError("oracle grid needs 0 < dx < x_max")

    def to_dict(self) -> dict:
        return {
            "observations": self.observations,
            "c": self.c,
            "eta": self.eta,
            "proposal": self.proposal,
            "alpha": self.alpha,
            "beta": self.beta,
            "particle_counts": list(self.particle_counts),
            "replicates": self.replicates,
            "test_functions": list(self.test_functions),
            "moments": list(self.moments),
            "resampler": self.resampler,
            "master_seed": self.master_seed,
            "grid_dx": self.grid_dx,
            "grid_x_max": self.grid_x_max,
            "out_csv": self.out_csv,
            "out_json": self.out_json,
            "out_svg": self.out_svg,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentConfig":
        kwargs = dict(data)
        for key in ("particle_counts", "test_functions", "moments"):
            if key in kwargs:
                kwargs[key] = tuple(kwargs[key])
        return cls(**kwargs)


@dataclass(frozen=True)
class RateFit:
    """Ordinary least squares on (log2 N, log2 value)."""

    slope: float
    intercept: float
    r_squared: float


def fit_loglog_slope(points) -> RateFit:
    """Fit log2(value) = intercept + slope * log2(N) by OLS.

    Requires at least three points with distinct N and strictly positive
    values.
    """
    points = list(points)
    ns = [float(n) for n, _ in points]
    vals = [float(v) for _, v in points]
    if len(points) < 3 or len(set(ns)) != len(ns):
        raise InsufficientPoints("rate fit needs >= 3 points with distinct N")
    if any(not v > 0 for v in vals):  # rejects zeros, negatives and NaN
        raise NonPositiveValue("rate fit needs strictly positive values")
    x = np.log2(ns)
    y = np.log2(vals)
    xc = x - x.mean()
    slope = float(np.dot(xc, y - y.mean()) / np.dot(xc, xc))
    intercept = float(y.mean() - slope * x.mean())
    resid = y - (intercept + slope * x)
    ss_tot = float(np.dot(y - y.mean(), y - y.mean()))
    r2 = 1.0 if ss_tot == 0.0 else 1.0 - float(np.dot(resid, resid)) / ss_tot
    return RateFit(slope=slope, intercept=intercept, r_squared=r2)


@dataclass(frozen=True)
class ConvergenceReport:
    """Aggregated study results; `to_dict` is the JSON wire format."""

    config: ExperimentConfig
    steps: tuple[int, ...]
    truth: dict[str, tuple[float, ...]]
    oracle_check: dict
    tables: dict  # stage -> phi -> {"mse": [[t] per N], ...}
    rate_fits: tuple[dict, ...]
    partial: bool = False

    def to_dict(self) -> dict:
        return {
            "schema_version": SCHEMA_VERSION,
            "partial": self.partial,
            "config": self.config.to_dict(),
            "steps": list(self.steps),
            "truth": {k: list(v) for k, v in self.truth.items()},
            "oracle_check": self.oracle_check,
            "tables": self.tables,
            "rate_fits": [dict(f) for f in self.rate_fits],
        }

    @classmethod
    def from_dict(cls, data: dict) -> "ConvergenceReport":
        if data.get("schema_version") != SCHEMA_VERSION:
            raise DomainError(f"unsupported schema_version {data.get('schema_version')!r}")
        return cls(
            config=ExperimentConfig.from_dict(data["config"]),
            steps=tuple(data["steps"]),
            truth={k: tuple(v) for k, v in data["truth"].items()},
            oracle_check=data["oracle_check"],
            tables=data["tables"],
            rate_fits=tuple(data["rate_fits"]),
            partial=data["partial"],
        )

    def fit(self, phi: str, t, moment: int, stage: str = "normalized") -> RateFit:
        """Look up one fitted rate (t may be a step index or "mean")."""
        for f in self.rate_fits:
            if (f["phi"], f["t"], f["moment"], f["stage"]) == (phi, t, moment, stage):
                return RateFit(f["slope"], f["intercept"], f["r_squared"])
        raise KeyError(f"no rate fit for ({stage}, {phi}, t={t}, p={moment})")

    def cell(self, phi: str, n: int, t: int, stage: str = "normalized") -> dict:
        n_idx = list(self.config.particle_counts).index(n)
        t_idx = list(self.steps).index(t)
        tab = self.tables[stage][phi]
        return {key: tab[key][n_idx][t_idx]
                for key in ("mse", "mse_stderr", "l4", "l4_stderr")}


def resolve_workers(workers: int | None = None) -> int:
    """Explicit argument wins; otherwise logical cores, capped by the
    PFCONV_WORKERS environment variable."""
    if workers is not None:
        return max(1, int(workers))
    count = os.cpu_count() or 1
    env = os.environ.get(WORKERS_ENV)
    if env:
        count = min(count, max(1, int(env)))
    return count


def _build_model_and_proposal(config: ExperimentConfig):
    params = CoxParams(config.c, config.eta)
    model = make_cox_model(params)
    if config.proposal == "bootstrap":
        proposal = make_bootstrap_proposal(params)
    else:
        proposal = make_gamma_proposal(GammaProposal(config.alpha, config.beta))
    return model, proposal


def _study_cell(args):
    """Run one (N-index, replicate) cell; returns per-step estimates."""
    config, obs_rows, n_idx, r = args
    model, proposal = _build_model_and_proposal(config)
    phis = [make_test_function(name) for name in config.test_functions]
    rng = RngStream(config.master_seed, labels=(n_idx, r))
    run = run_filter(model, proposal, obs_rows, config.particle_counts[n_idx],
                     get_scheme(config.resampler), rng, phis)
    est_n = np.array([[s.estimates[p.name] for p in phis] for s in run.steps])
    est_r = np.array([[s.resampled_estimates[p.name] for p in phis] for s in run.steps])
    return n_idx, r, est_n, est_r


def _oracle_tables(config: ExperimentConfig, obs, phis):
    """Grid-filter truth plus a halved-dx self-consistency check."""
    n_cells = int(round(config.grid_x_max / config.grid_dx))
    coarse = run_cox_grid_filter(CoxParams(config.c, config.eta), obs,
                                 config.grid_x_max, n_cells, phis)
    fine = run_cox_grid_filter(CoxParams(config.c, config.eta), obs,
                               config.grid_x_max, 2 * n_cells, phis)
    delta = max(
        abs(a - b)
        for phi in phis
        for a, b in zip(coarse.estimates[phi.name], fine.estimates[phi.name])
    )
    check = {
        "dx": config.grid_dx,
        "x_max": config.grid_x_max,
        "fine_dx": config.grid_x_max / (2 * n_cells),
        "max_abs_delta": delta,
    }
    return coarse, check


def _aggregate(est: np.ndarray, truth: np.ndarray, phis) -> dict:
    """est has shape (n_N, M, T, P); returns per-phi moment tables."""
    err = est - truth[None, None, :, :]
    m = est.shape[1]
    e2, e4 = err ** 2, err ** 4
    mse = np.nanmean(e2, axis=1)
    l4 = np.nanmean(e4, axis=1)
    mse_se = np.nanstd(e2, axis=1, ddof=1) / np.sqrt(m)
    l4_se = np.nanstd(e4, axis=1, ddof=1) / np.sqrt(m)
    out = {}
    for p_idx, phi in enumerate(phis):
        out[phi.name] = {
            "mse": mse[:, :, p_idx].tolist(),
            "mse_stderr": mse_se[:, :, p_idx].tolist(),
            "l4": l4[:, :, p_idx].tolist(),
            "l4_stderr": l4_se[:, :, p_idx].tolist(),
        }
    return out


def _rate_fits(config: ExperimentConfig, steps, tables) -> list[dict]:
    fits = []
    ns = config.particle_counts
    moment_key = {2: "mse", 4: "l4"}
    for stage in ("normalized", "resampled"):
        for phi in config.test_functions:
            tab = tables[stage][phi]
            for p in config.moments:
                values = np.array(tab[moment_key[p]])  # (n_N, T)
                targets = [(t, values[:, i]) for i, t in enumerate(steps)]
                targets.append(("mean", values.mean(axis=1)))
                for t, col in targets:
                    try:
                        f = fit_loglog_slope(zip(ns, col))
                    except (InsufficientPoints, NonPositiveValue):
                        continue
                    fits.append({
                        "stage": stage, "phi": phi, "t": t, "moment": p,
                        "slope": f.slope, "intercept": f.intercept,
                        "r_squared": f.r_squared,
                    })
    return fits


def _assemble(config, steps, truth_map, check, est_n, est_r, phis, partial=False):
    truth_arr = np.array([truth_map[phi.name] for phi in phis]).T  # (T, P)
    tables = {
        "normalized": _aggregate(est_n, truth_arr, phis),
        "resampled": _aggregate(est_r, truth_arr, phis),
    }
    return ConvergenceReport(
        config=config,
        steps=tuple(steps),
        truth={k: tuple(v) for k, v in truth_map.items()},
        oracle_check=check,
        tables=tables,
        rate_fits=tuple(_rate_fits(config, steps, tables)),
        partial=partial,
    )


def run_convergence_study(config: ExperimentConfig,
                          workers: int | None = None) -> ConvergenceReport:
    """Run the full study; deterministic in config regardless of workers.

    On a cell failure, whatever aggregates exist are flushed to the
    configured output paths (marked partial) before the error propagates
    with its (N, replicate) context.
    """
    from .report import emit_report

    config.validate()
    obs = ObservationSeries.from_csv(config.observations)
    obs_rows = tuple(obs)
    phis = [make_test_function(name) for name in config.test_functions]
    oracle, check = _oracle_tables(config, obs_rows, phis)
    truth_map = {name: list(vals) for name, vals in oracle.estimates.items()}
    steps = list(oracle.steps)

    n_n, m, t_len, p_len = len(config.particle_counts), config.replicates, len(steps), len(phis)
    est_n = np.full((n_n, m, t_len, p_len), np.nan)
    est_r = np.full((n_n, m, t_len, p_len), np.nan)
    tasks = [(config, obs_rows, i, r) for i in range(n_n) for r in range(m)]

    n_workers = resolve_workers(workers)
    current = tasks[0]
    try:
        if n_workers == 1:
            for task in tasks:
                current = task
                i, r, cell_n, cell_r = _study_cell(task)
                est_n[i, r], est_r[i, r] = cell_n, cell_r
        else:
            with ProcessPoolExecutor(max_workers=n_workers) as pool:
                chunk = max(1, len(tasks) // (4 * n_workers))
                results = pool.map(_study_cell, tasks, chunksize=chunk)
                for task in tasks:  # map yields in task order
                    current = task
                    i, r, cell_n, cell_r = next(results)
                    est_n[i, r], est_r[i, r] = cell_n, cell_r
    except Exception as err:
        with np.errstate(invalid="ignore"), warnings.catch_warnings():
            warnings.simplefilter("ignore", RuntimeWarning)  # nan-only slices
            partial = _assemble(config, steps, truth_map, check, est_n, est_r,
                                phis, partial=True)
        for fmt, path in (("csv", config.out_csv), ("json", config.out_json)):
            if path:
                try:
                    emit_report(partial, fmt, path)
                except OSError:
                    pass
        n_failed = config.particle_counts[current[2]]
        raise StudyError(
            f"convergence study aborted at N={n_failed}, replicate={current[3]}: {err}"
        ) from err

    return _assemble(config, steps, truth_map, check, est_n, est_r, phis)
