"""Experiment orchestration: config ingestion, replicates, coverage and sweeps.

Every replicate owns the random streams ``stream(master_seed, 2, r, tag)``,
so results depend only on the replicate index and never on worker count or
scheduling order. Streams do not depend on the sweep cell either: cells
share noise paths (common random numbers), which is what makes a T sweep a
family of nested windows on one path.
"""
from __future__ import annotations

import csv
import json
import logging
import math
import multiprocessing
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np
from scipy.stats import binom, binomtest

from . import bounds as B
from .dynamics import (STEP_SAFETY, CoupledTrajectory, SdeConfig, geometric_gap, initial_point, integral_gap,
                       integrate_coupled, save_trajectory, worst_case_gap)
from .fractal import InsufficientResolution, box_dimension
from .pacbayes import (SmoothedOccupation, eval_thm5, eval_thm6, kl_oracle, kl_upper_bound,
                       median_gap_scale, optimize_lambda, renyi_oracle, renyi_upper_bound)
from .problems import (LearningProblem, NotDissipative, ProblemConfig, analytic_dissipativity,
                       estimate_dissipativity, full_support_dataset, make_problem, sample_dataset)
from .stable_noise import StableSpec, levy_path_increments, stream

log = logging.getLogger(__name__)

SEED_ENV = "GENBOUNDS_SEED"
THEOREMS = (2, 3, 4, 5, 6, 13)
SWEEP_PARAMS = ("n", "alpha", "T", "s")

# streams
_PROBLEM, _CERT, _REPLICATE = 0, 1, 2
_DATA, _NOISE, _POSTERIOR = 0, 1, 2


class ConfigError(ValueError):
    pass


def confidence_level(theorem: int, zeta: float) -> float:
    """Probability with which each statement holds."""
    k = {2: 2, 3: 2, 4: 4, 5: 1, 6: 1, 13: 1}[theorem]
    return max(0.0, 1.0 - k * zeta)


# config ------------------------------------------------------------------

@dataclass(frozen=True)
class DynamicsSection:
    step_h: float = 1e-3
    horizon_T: float = 1.0
    alpha: float = 1.5
    scale: float = 1.0
    init_z0: object = "zero"
    enforce_step: bool = True


@dataclass(frozen=True)
class BoundsSection:
    zeta: float = 0.05
    s: object = "median_gap"
    lambda_rule: str = "sqrt_n"
    lam: float = 1.0
    beta: float = 2.0
    gamma_source: object = "alpha"
    theorems: tuple = (2, 3, 4)
    variant: str = "lipschitz"
    mc_draws: int = 1000
    thm6_draws: int = 1
    certificate: str = "empirical"
    cert_probes: int = 10_000
    cert_radius: float = 1.0
    estimate_gamma: bool = False

    def __post_init__(self):
        if not 0 < self.zeta < 1:
            raise ConfigError("bounds.zeta must lie in (0, 1)")
        if not (self.s == "median_gap" or (isinstance(self.s, (int, float)) and self.s > 0)):
            raise ConfigError("bounds.s must be 'median_gap' or a positive number")
        if self.lambda_rule not in ("sqrt_n", "fixed", "optimize"):
            raise ConfigError(f"unknown lambda_rule {self.lambda_rule!r}")
        if not self.lam > 0 or not self.beta > 1:
            raise ConfigError("bounds.lam must be positive and bounds.beta > 1")
        if not (self.gamma_source in ("alpha", "estimate")
                or (isinstance(self.gamma_source, (int, float)) and self.gamma_source >= 0)):
            raise ConfigError("bounds.gamma_source must be 'alpha', 'estimate' or a number")
        bad = [t for t in self.theorems if t not in THEOREMS]
        if bad:
            raise ConfigError(f"unknown theorems {bad}; choose from {THEOREMS}")
        if self.variant not in B.VARIANTS:
            raise ConfigError(f"bounds.variant must be one of {B.VARIANTS}")
        if self.mc_draws < 1000:
            raise ConfigError("bounds.mc_draws must be at least 1000")
        if self.thm6_draws < 1:
            raise ConfigError("bounds.thm6_draws must be at least 1")
        if self.certificate not in ("empirical", "analytic"):
            raise ConfigError("bounds.certificate must be 'empirical' or 'analytic'")


@dataclass(frozen=True)
class ExperimentSection:
    master_seed: int
    replicates: int = 200
    n: tuple = (256,)
    alpha: tuple = ()
    workers: int = 1
    failure_threshold: float = 0.05
    force_full_support: bool = False

    def __post_init__(self):
        if int(self.master_seed) != self.master_seed or self.master_seed < 0:
            raise ConfigError("experiment.master_seed must be a non-negative integer")
        if self.replicates < 0:
            raise ConfigError("experiment.replicates must be >= 0")
        if not self.n or any(int(v) != v or v < 1 for v in self.n):
            raise ConfigError("experiment.n must list positive integers")
        if self.workers < 1:
            raise ConfigError("experiment.workers must be >= 1")
        if not 0 <= self.failure_threshold <= 1:
            raise ConfigError("experiment.failure_threshold must lie in [0, 1]")


@dataclass(frozen=True)
class ExperimentConfig:
    problem: ProblemConfig
    dynamics: DynamicsSection
    bounds: BoundsSection
    experiment: ExperimentSection

    @property
    def alphas(self) -> tuple:
        return tuple(self.experiment.alpha) or (self.dynamics.alpha,)

    def sde(self, alpha: float, horizon_T: float | None = None) -> SdeConfig:
        d = self.dynamics
        return SdeConfig(step_h=d.step_h, horizon_T=d.horizon_T if horizon_T is None else horizon_T,
                         noise=StableSpec(alpha, d.scale, self.problem.dim), init_z0=d.init_z0,
                         seed=self.experiment.master_seed, enforce_step=d.enforce_step)

    def to_dict(self) -> dict:
        out = {k: asdict(getattr(self, k)) for k in ("problem", "dynamics", "bounds", "experiment")}
        out["bounds"]["theorems"] = list(out["bounds"]["theorems"])
        out["experiment"]["n"] = list(out["experiment"]["n"])
        out["experiment"]["alpha"] = list(out["experiment"]["alpha"])
        return out

    def report_dict(self) -> dict:
        """Config as recorded in outputs; worker count is omitted because it
        cannot change any result."""
        d = self.to_dict()
        del d["experiment"]["workers"]
        return d

    def replace(self, section: str, **changes) -> "ExperimentConfig":
        d = self.to_dict()
        d[section].update(changes)
        return config_from_dict(d, env={})


def _section(cls, name: str, data, tuples=()):
    if not isinstance(data, dict):
        raise ConfigError(f"section {name!r} must be an object")
    known = {f.name for f in fields(cls)}
    unknown = sorted(set(data) - known)
    if unknown:
        raise ConfigError(f"unknown keys in {name!r}: {unknown}")
    data = {k: (tuple(v) if k in tuples and isinstance(v, list) else v) for k, v in data.items()}
    try:
        return cls(**data)
    except ConfigError:
        raise
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{name}: {exc}") from exc


def config_from_dict(data: dict, env: dict | None = None) -> ExperimentConfig:
    """Validate a config document. ``GENBOUNDS_SEED`` in ``env`` overrides the master seed."""
    if not isinstance(data, dict):
        raise ConfigError("config must be a JSON object")
    unknown = sorted(set(data) - {"problem", "dynamics", "bounds", "experiment"})
    if unknown:
        raise ConfigError(f"unknown top-level keys: {unknown}")
    exp = dict(data.get("experiment", {}))
    env = os.environ if env is None else env
    if env.get(SEED_ENV):
        try:
            exp["master_seed"] = int(env[SEED_ENV])
        except ValueError as exc:
            raise ConfigError(f"{SEED_ENV} must be an integer") from exc
    if "master_seed" not in exp:
        raise ConfigError("experiment.master_seed is required")
    dyn = dict(data.get("dynamics", {}))
    if isinstance(dyn.get("init_z0"), list):
        dyn["init_z0"] = tuple(dyn["init_z0"])
    cfg = ExperimentConfig(
        problem=_section(ProblemConfig, "problem", data.get("problem", {})),
        dynamics=_section(DynamicsSection, "dynamics", dyn),
        bounds=_section(BoundsSection, "bounds", data.get("bounds", {}), tuples=("theorems",)),
        experiment=_section(ExperimentSection, "experiment", exp, tuples=("n", "alpha")),
    )
    try:
        for a in cfg.alphas:
            cfg.sde(a)
    except ValueError as exc:
        raise ConfigError(f"dynamics: {exc}") from exc
    return cfg


def load_config(path, env: dict | None = None) -> ExperimentConfig:
    try:
        data = json.loads(Path(path).read_text())
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config {path} is not valid JSON: {exc}") from exc
    return config_from_dict(data, env)


# one replicate -----------------------------------------------------------

@dataclass(frozen=True)
class Setup:
    """Per-experiment objects shared by all replicates."""
    problem: LearningProblem
    m: float | None = None
    K: float | None = None


def build_setup(cfg: ExperimentConfig) -> Setup:
    seed = cfg.experiment.master_seed
    problem = make_problem(cfg.problem, stream(seed, _PROBLEM))
    h_max = STEP_SAFETY * min(1.0, 1.0 / problem.M)
    if cfg.dynamics.enforce_step and cfg.dynamics.step_h > h_max:
        raise ConfigError(f"dynamics.step_h={cfg.dynamics.step_h} exceeds {h_max:.3g} = 0.01*min(1, 1/M); "
                          "set enforce_step to false to override")
    if 13 not in cfg.bounds.theorems:
        return Setup(problem)
    try:
        if cfg.bounds.certificate == "analytic":
            cert = analytic_dissipativity(problem)
        else:
            cert = estimate_dissipativity(problem, stream(seed, _CERT), probes=cfg.bounds.cert_probes,
                                          radius=cfg.bounds.cert_radius)
    except NotDissipative as exc:
        raise ConfigError(f"theorem 13 requested but {exc}") from exc
    return Setup(problem, cert.m, cert.K)


def _dataset(cfg: ExperimentConfig, problem: LearningProblem, replicate: int, n: int):
    if cfg.experiment.force_full_support:
        # repeat the support so the sample size stays close to n
        return full_support_dataset(problem, max(1, round(n / int(problem.counts.sum()))))
    seed = cfg.experiment.master_seed
    return sample_dataset(problem, n, stream(seed, _REPLICATE, replicate, _DATA),
                          seed=[seed, _REPLICATE, replicate, _DATA])


def simulate(cfg: ExperimentConfig, setup: Setup, replicate: int, n: int, alpha: float,
             horizon_T: float | None = None, noise_T: float | None = None):
    """Dataset and coupled run of one replicate.

    ``noise_T`` draws the noise path for a longer horizon and keeps its
    prefix, so runs with different ``horizon_T`` see the same path.
    """
    seed = cfg.experiment.master_seed
    problem = setup.problem
    dataset = _dataset(cfg, problem, replicate, n)
    sde = cfg.sde(alpha, horizon_T)
    rng = stream(seed, _REPLICATE, replicate, _NOISE)
    z0 = initial_point(sde, rng)
    steps = sde.n_steps if noise_T is None else max(sde.n_steps, cfg.sde(alpha, noise_T).n_steps)
    inc = levy_path_increments(sde.noise, sde.step_h, steps, rng)[:sde.n_steps]
    traj = integrate_coupled(problem, dataset, sde, rng, increments=inc, z0=z0)
    traj.meta.update({"replicate": replicate, "n": dataset.n, "noise_seed": [seed, _REPLICATE, replicate, _NOISE]})
    return dataset, traj


def _gamma(cfg: ExperimentConfig, alpha: float, d: int, gamma_hat: float) -> tuple[float, str]:
    src = cfg.bounds.gamma_source
    if src == "alpha":
        # gamma <= alpha, and no subset of R^d exceeds dimension d
        return min(alpha, float(d)), "alpha"
    if src == "estimate":
        if not math.isfinite(gamma_hat):
            raise InsufficientResolution("gamma estimate unavailable")
        return min(gamma_hat, d + 0.5), "estimate"
    return float(src), "override"


def evaluate(cfg: ExperimentConfig, setup: Setup, dataset, traj: CoupledTrajectory, replicate: int,
             alpha: float, theorems=None, s_override: float | None = None) -> dict:
    """All requested bound reports for one coupled run."""
    bc = cfg.bounds
    theorems = bc.theorems if theorems is None else theorems
    problem = setup.problem
    n = dataset.n
    gap = geometric_gap(traj)
    rec = {"replicate": replicate, "n": n, "alpha": alpha, "T": traj.T, "ok": True,
           "geometric_gap": gap, "worst_case_gap": worst_case_gap(traj, problem, dataset),
           "integral_gap": integral_gap(traj), "gamma_hat": math.nan}
    if bc.estimate_gamma or bc.gamma_source == "estimate":
        try:
            rec["gamma_hat"] = box_dimension(traj.Y).gamma_hat
        except InsufficientResolution:
            pass
    gamma, source = _gamma(cfg, alpha, problem.dim, rec["gamma_hat"])
    if s_override is not None:
        s = float(s_override)
    else:
        s = median_gap_scale(traj) if bc.s == "median_gap" else float(bc.s)
    if bc.lambda_rule == "sqrt_n":
        lam = math.sqrt(n)
    elif bc.lambda_rule == "fixed":
        lam = bc.lam
    else:
        lam = optimize_lambda(rec["integral_gap"] / s ** 2, bc.zeta, n, problem.sigma)
    rec.update({"gamma": gamma, "s": s, "lam": lam})
    inp = B.BoundInputs.from_problem(problem, n=n, zeta=bc.zeta, gamma=gamma, T=traj.T, s=s, lam=lam,
                                     beta=bc.beta, m=setup.m, K=setup.K, gamma_source=source)
    reports, domain = [], []
    for t in theorems:
        try:
            reports.extend(_theorem_reports(t, cfg, setup, dataset, traj, inp, replicate))
        except B.BoundDomainError as exc:
            # outside the statement's range of n (or missing certificate): no verdict
            domain.append({"theorem": f"thm{t}", "error": str(exc)})
    rec["results"] = [{"theorem": r.theorem, "lhs": r.lhs, "rhs": r.rhs, "holds": r.holds,
                       "terms": dict(r.terms)} for r in reports]
    rec["out_of_domain"] = domain
    return rec


def _theorem_reports(t, cfg, setup, dataset, traj, inp, replicate) -> list:
    bc, problem, seed = cfg.bounds, setup.problem, cfg.experiment.master_seed
    gap, lhs = geometric_gap(traj), worst_case_gap(traj, problem, dataset)
    if t == 2:
        return [B.rhs_thm2(gap, inp, lhs=lhs)]
    if t == 3:
        return [B.report_thm3(gap, inp, bc.variant)]
    if t == 4:
        return [B.rhs_thm4(inp, bc.variant, lhs=lhs)]
    if t == 5:
        rng = stream(seed, _REPLICATE, replicate, _POSTERIOR, 5)
        return [eval_thm5(traj, problem, dataset, inp, bc.mc_draws, rng)]
    if t == 6:
        rng = stream(seed, _REPLICATE, replicate, _POSTERIOR, 6)
        return [eval_thm6(traj, problem, dataset, inp, rng) for _ in range(bc.thm6_draws)]
    return [B.report_thm13(gap ** 2, inp)]


def run_replicate(args) -> dict:
    """Worker entry point; errors are captured, never raised."""
    cfg, setup, r, cell = args
    try:
        dataset, traj = simulate(cfg, setup, r, cell["n"], cell["alpha"], cell.get("T"), cell.get("noise_T"))
        return evaluate(cfg, setup, dataset, traj, r, cell["alpha"], s_override=cell.get("s"))
    except (ValueError, FloatingPointError, ArithmeticError) as exc:
        log.warning("replicate %d (%s) failed: %s", r, cell, exc)
        return {"replicate": r, "n": cell["n"], "alpha": cell["alpha"], "ok": False,
                "error": f"{type(exc).__name__}: {exc}"}


def run_replicates(cfg: ExperimentConfig, setup: Setup, cells: list[dict], replicates: int) -> list[dict]:
    """Every (cell, replicate) task, returned in (cell, replicate) order."""
    tasks = [(cfg, setup, r, cell) for cell in cells for r in range(replicates)]
    workers = cfg.experiment.workers
    if workers == 1 or len(tasks) <= 1:
        return [run_replicate(t) for t in tasks]
    ctx = multiprocessing.get_context("fork")
    with ProcessPoolExecutor(max_workers=workers, mp_context=ctx) as pool:
        out = list(pool.map(run_replicate, tasks, chunksize=max(1, len(tasks) // (4 * workers))))
    return out


# coverage ----------------------------------------------------------------

@dataclass
class TheoremCoverage:
    theorem: str
    holds: int
    total: int
    target: float
    mean_lhs: float
    mean_rhs: float
    mean_ratio: float
    max_ratio: float
    term_means: dict

    @property
    def rate(self) -> float:
        return self.holds / self.total if self.total else math.nan

    @property
    def interval(self) -> tuple[float, float]:
        """Exact (Clopper-Pearson) two-sided 95% interval on the hold rate."""
        if not self.total:
            return (0.0, 1.0)
        ci = binomtest(self.holds, self.total).proportion_ci(0.95, method="exact")
        return (float(ci.low), float(ci.high))

    @property
    def p_value(self) -> float:
        """One-sided exact test of ``rate >= target`` against ``rate < target``."""
        if not self.total:
            return 1.0
        return float(min(1.0, binom.cdf(self.holds, self.total, self.target)))

    @property
    def passes(self) -> bool:
        return self.p_value >= 0.01

    def to_dict(self) -> dict:
        lo, hi = self.interval
        return {"theorem": self.theorem, "holds": self.holds, "total": self.total, "rate": self.rate,
                "ci_low": lo, "ci_high": hi, "target": self.target, "p_value": self.p_value,
                "passes": self.passes, "mean_lhs": self.mean_lhs, "mean_rhs": self.mean_rhs,
                "mean_ratio": self.mean_ratio, "max_ratio": self.max_ratio, "term_means": self.term_means}


@dataclass
class CoverageReport:
    replicates: int
    cells: list
    records: list = field(repr=False)
    config: dict = field(repr=False, default_factory=dict)
    flags: list = field(default_factory=list)

    @property
    def failures(self) -> list:
        return [r for r in self.records if not r["ok"]]

    @property
    def n_failed(self) -> int:
        return len(self.failures)

    @property
    def failure_rate(self) -> float:
        return self.n_failed / len(self.records) if self.records else 0.0

    def theorem(self, name: str, cell: int = 0) -> TheoremCoverage:
        return self.cells[cell]["theorems"][name]

    def to_dict(self) -> dict:
        return {
            "replicates": self.replicates, "flags": list(self.flags), "n_failed": self.n_failed,
            "errors": [{"replicate": r["replicate"], "n": r["n"], "alpha": r["alpha"], "error": r["error"]}
                       for r in self.failures],
            "cells": [{"n": c["n"], "alpha": c["alpha"],
                       "theorems": {k: v.to_dict() for k, v in c["theorems"].items()}} for c in self.cells],
            "config": self.config,
        }


def _mean(xs) -> float:
    return math.fsum(xs) / len(xs) if xs else math.nan


def summarize(records: list[dict], zeta: float) -> dict:
    by: dict[str, list] = {}
    for rec in records:
        if rec["ok"]:
            for res in rec["results"]:
                by.setdefault(res["theorem"], []).append(res)
    out = {}
    for name, rows in by.items():
        number = int(name.removeprefix("thm").split("-")[0])
        ratios = [r["lhs"] / r["rhs"] for r in rows if r["rhs"] > 0]
        keys = rows[0]["terms"].keys()
        out[name] = TheoremCoverage(
            theorem=name, holds=sum(bool(r["holds"]) for r in rows), total=len(rows),
            target=confidence_level(number, zeta), mean_lhs=_mean([r["lhs"] for r in rows]),
            mean_rhs=_mean([r["rhs"] for r in rows]), mean_ratio=_mean(ratios),
            max_ratio=max(ratios) if ratios else math.nan,
            term_means={k: _mean([r["terms"][k] for r in rows]) for k in keys})
    return out


def _domain_flags(records) -> list[str]:
    counts: dict[tuple, int] = {}
    for rec in records:
        for item in rec.get("out_of_domain", []):
            key = (item["theorem"], rec["n"])
            counts[key] = counts.get(key, 0) + 1
    return [f"{t} outside its domain at n={n} in {c} replicates" for (t, n), c in sorted(counts.items())]


def run_coverage(cfg: ExperimentConfig, replicates: int | None = None) -> CoverageReport:
    """Hold rates of every enabled theorem over ``R`` replicates per (n, alpha) cell."""
    R = cfg.experiment.replicates if replicates is None else replicates
    cells = [{"n": int(n), "alpha": float(a)} for n in cfg.experiment.n for a in cfg.alphas]
    if R == 0:
        return CoverageReport(0, [], [], cfg.report_dict(), flags=["no replicates"])
    setup = build_setup(cfg)
    records = run_replicates(cfg, setup, cells, R)
    out = []
    for i, cell in enumerate(cells):
        recs = records[i * R:(i + 1) * R]
        out.append({**cell, "theorems": summarize(recs, cfg.bounds.zeta)})
    report = CoverageReport(R, out, records, cfg.report_dict())
    if report.n_failed:
        report.flags.append(f"{report.n_failed} replicate failures")
    report.flags.extend(_domain_flags(records))
    return report


# sweeps ------------------------------------------------------------------

SERIES_LABELS = {
    "geometric_gap": "sup_t ||W_t - Y_t|| (geometric gap)",
    "worst_case_gap": "sup_t R(W_t) - R_S(W_t) (worst-case gap)",
    "gamma_hat": "box dimension of Y",
}
PARAM_LABELS = {"n": "n (sample size)", "alpha": "alpha (tail index)", "T": "T (horizon)",
                "s": "s (smoothing scale)"}


@dataclass
class SweepTable:
    param: str
    columns: list
    rows: list
    slope: float | None = None
    records: list = field(default_factory=list, repr=False)
    flags: list = field(default_factory=list)

    def column(self, name: str) -> np.ndarray:
        return np.array([r[name] for r in self.rows], dtype=float)

    def to_dict(self) -> dict:
        return {"param": self.param, "columns": list(self.columns), "rows": self.rows,
                "slope": self.slope, "flags": list(self.flags)}


def _quantiles(xs) -> tuple[float, float, float]:
    xs = np.asarray([x for x in xs if x is not None and math.isfinite(x)], dtype=float)
    if xs.size == 0:
        return (math.nan,) * 3
    q = np.percentile(xs, [50, 25, 75])
    return float(q[0]), float(q[1]), float(q[2])


def loglog_slope(x, y) -> float:
    x, y = np.asarray(x, dtype=float), np.asarray(y, dtype=float)
    keep = (x > 0) & (y > 0) & np.isfinite(y)
    if keep.sum() < 2:
        return math.nan
    return float(np.polyfit(np.log(x[keep]), np.log(y[keep]), 1)[0])


def run_sweep(cfg: ExperimentConfig, param: str, values, replicates: int | None = None) -> SweepTable:
    """Median and IQR over replicates of gaps, dimension and bound values per
    swept value; fitted log-log slope of the median geometric gap for n."""
    if param not in SWEEP_PARAMS:
        raise ConfigError(f"unknown sweep parameter {param!r}; choose from {SWEEP_PARAMS}")
    values = list(values)
    if len(values) < 3:
        raise ConfigError("a sweep needs at least 3 values")
    R = cfg.experiment.replicates if replicates is None else replicates
    if R < 1:
        raise ConfigError("a sweep needs at least one replicate")
    if param == "alpha":
        cfg = cfg.replace("bounds", estimate_gamma=True)
    base = {"n": int(cfg.experiment.n[0]), "alpha": float(cfg.alphas[0])}
    cells = []
    for v in values:
        cell = dict(base)
        if param == "n":
            cell["n"] = int(v)
        elif param == "alpha":
            cell["alpha"] = float(v)
        elif param == "T":
            cell["T"], cell["noise_T"] = float(v), float(max(values))
        else:
            cell["s"] = float(v)
        cells.append(cell)
    setup = build_setup(cfg)
    records = run_replicates(cfg, setup, cells, R)
    series = ["geometric_gap", "worst_case_gap", "gamma_hat"]
    theorem_names = []
    for rec in records:
        for res in rec.get("results", []):
            if res["theorem"] not in theorem_names:
                theorem_names.append(res["theorem"])
    columns = ["value", "n_ok", "n_failed"]
    for name in series + [f"rhs_{t}" for t in theorem_names]:
        columns += [f"median_{name}", f"q25_{name}", f"q75_{name}"]
    rows = []
    for i, v in enumerate(values):
        recs = records[i * R:(i + 1) * R]
        ok = [r for r in recs if r["ok"]]
        row = {"value": float(v), "n_ok": len(ok), "n_failed": len(recs) - len(ok)}
        for name in series:
            row[f"median_{name}"], row[f"q25_{name}"], row[f"q75_{name}"] = _quantiles([r[name] for r in ok])
        for t in theorem_names:
            vals = [res["rhs"] for r in ok for res in r["results"] if res["theorem"] == t]
            row[f"median_rhs_{t}"], row[f"q25_rhs_{t}"], row[f"q75_rhs_{t}"] = _quantiles(vals)
        rows.append(row)
    table = SweepTable(param, columns, rows, records=records)
    if param == "n":
        table.slope = loglog_slope(table.column("value"), table.column("median_geometric_gap"))
    failed = sum(r["n_failed"] for r in rows)
    if failed:
        table.flags.append(f"{failed} replicate failures")
    table.flags.extend(_domain_flags(records))
    return table


# lemma validation --------------------------------------------------------

LEMMA_COLUMNS = ["case_id", "s", "beta", "oracle_value", "upper_bound", "margin"]


def lemma_cases(cases: int = 50, seed: int = 0, points: int = 100):
    """Random d=1 coupled runs with ``points`` grid points and a smoothing
    scale between half and twice the median gap."""
    problem = make_problem(ProblemConfig(dim=1, atoms=16, layout="lattice", weights="random"),
                           stream(seed, _PROBLEM))
    h = 0.01
    for c in range(cases):
        rng = stream(seed, 3, c)
        dataset = sample_dataset(problem, int(rng.integers(4, 33)), rng)
        alpha = float(rng.uniform(1.2, 2.0))
        sde = SdeConfig(step_h=h, horizon_T=h * (points - 1), noise=StableSpec(alpha, 1.0, 1))
        traj = integrate_coupled(problem, dataset, sde, rng)
        s = median_gap_scale(traj) * float(rng.uniform(0.5, 2.0))
        yield c, traj, s


def validate_lemmas(cases: int = 50, seed: int = 0, beta: float = 2.0) -> list[dict]:
    """Quadrature divergences against their coupling bounds. KL rows carry
    ``beta = 1`` (its limiting order)."""
    rows = []
    for c, traj, s in lemma_cases(cases, seed):
        post, prior = SmoothedOccupation.posterior(traj, s), SmoothedOccupation.prior(traj, s)
        kl, kb = kl_oracle(post, prior), kl_upper_bound(traj, s)
        rv, rb = renyi_oracle(post, prior, beta), renyi_upper_bound(traj, s, beta)
        rows.append({"case_id": c, "s": s, "beta": 1.0, "oracle_value": kl, "upper_bound": kb, "margin": kb - kl})
        rows.append({"case_id": c, "s": s, "beta": beta, "oracle_value": rv, "upper_bound": rb, "margin": rb - rv})
    return rows


# emission ----------------------------------------------------------------

def _clean(x):
    """JSON-safe copy: NaN becomes null, numpy scalars become Python numbers."""
    if isinstance(x, dict):
        return {str(k): _clean(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_clean(v) for v in x]
    if isinstance(x, (np.floating, float)):
        x = float(x)
        return None if math.isnan(x) else x
    if isinstance(x, np.integer):
        return int(x)
    if isinstance(x, np.bool_):
        return bool(x)
    if isinstance(x, np.ndarray):
        return _clean(x.tolist())
    return x


def _fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return str(bool(v)).lower()
    if isinstance(v, (float, np.floating)):
        return "" if math.isnan(v) else repr(float(v))
    return str(v)


COVERAGE_COLUMNS = ["n", "alpha", "theorem", "holds", "total", "rate", "ci_low", "ci_high", "target",
                    "p_value", "passes", "mean_lhs", "mean_rhs", "mean_ratio", "max_ratio"]
RECORD_COLUMNS = ["replicate", "n", "alpha", "theorem", "lhs", "rhs", "holds", "error"]


def _table(report) -> tuple[list, list]:
    if isinstance(report, CoverageReport):
        rows = []
        for c in report.cells:
            for name in sorted(c["theorems"]):
                rows.append({"n": c["n"], "alpha": c["alpha"], **c["theorems"][name].to_dict()})
        return COVERAGE_COLUMNS, rows
    if isinstance(report, SweepTable):
        return report.columns, report.rows
    if isinstance(report, dict) and "columns" in report:
        return report["columns"], report["rows"]
    raise TypeError(f"cannot tabulate {type(report).__name__}")


def record_rows(records: list[dict]) -> list[dict]:
    rows = []
    for rec in records:
        if not rec["ok"]:
            rows.append({"replicate": rec["replicate"], "n": rec["n"], "alpha": rec["alpha"], "theorem": "",
                         "lhs": math.nan, "rhs": math.nan, "holds": "", "error": rec["error"]})
            continue
        for res in rec["results"]:
            rows.append({"replicate": rec["replicate"], "n": rec["n"], "alpha": rec["alpha"],
                         "theorem": res["theorem"], "lhs": res["lhs"], "rhs": res["rhs"],
                         "holds": res["holds"], "error": ""})
    return rows


def write_csv(columns: list, rows: list, path) -> Path:
    path = Path(path)
    try:
        with path.open("w", newline="") as fh:
            wr = csv.writer(fh, lineterminator="\n")
            wr.writerow(columns)
            for row in rows:
                wr.writerow([_fmt(row.get(c, "")) for c in columns])
    except OSError as exc:
        raise OSError(f"cannot write {path}: {exc}") from exc
    return path


def emit(report, fmt: str, path) -> Path:
    """Write ``report`` as csv, json or svg."""
    path = Path(path)
    if fmt == "json":
        data = report.to_dict() if hasattr(report, "to_dict") else report
        try:
            path.write_text(json.dumps(_clean(data), indent=2, sort_keys=True, allow_nan=False) + "\n")
        except OSError as exc:
            raise OSError(f"cannot write {path}: {exc}") from exc
        return path
    if fmt == "csv":
        columns, rows = _table(report)
        return write_csv(columns, rows, path)
    if fmt == "svg":
        columns, rows = _table(report)
        param = report.param if isinstance(report, SweepTable) else report.get("param", "value")
        x = [r["value"] for r in rows]
        series = {c.removeprefix("median_"): [r[c] for r in rows] for c in columns if c.startswith("median_")}
        svg = svg_plot(x, series, PARAM_LABELS.get(param, param), "median over replicates")
        try:
            path.write_text(svg)
        except OSError as exc:
            raise OSError(f"cannot write {path}: {exc}") from exc
        return path
    raise ValueError(f"unknown format {fmt!r}")


def read_table(path) -> dict:
    """CSV produced by :func:`emit` back into ``{columns, rows}`` (numbers parsed)."""
    with Path(path).open() as fh:
        reader = csv.reader(fh)
        columns = next(reader)
        rows = []
        for raw in reader:
            row = {}
            for c, v in zip(columns, raw):
                try:
                    row[c] = float(v) if v != "" else math.nan
                except ValueError:
                    row[c] = v
            rows.append(row)
    return {"columns": columns, "rows": rows}


def svg_plot(x, series: dict, xlabel: str, ylabel: str, width: int = 640, height: int = 420) -> str:
    """Minimal SVG line plot, one ``<polyline>`` per series with at least one
    drawable point. Axes are logarithmic when every drawn value is positive."""
    x = np.asarray(x, dtype=float)
    drawable = {}
    for name, ys in series.items():
        ys = np.asarray(ys, dtype=float)
        ok = np.isfinite(ys) & np.isfinite(x)
        if ok.any():
            drawable[name] = (x[ok], ys[ok])
    logx = bool(np.all(x > 0))
    logy = bool(drawable) and all(np.all(ys > 0) for _, ys in drawable.values())
    fx = np.log10 if logx else (lambda v: v)
    fy = np.log10 if logy else (lambda v: v)
    left, right, top, bottom = 70, 170, 20, 50
    pw, ph = width - left - right, height - top - bottom
    allx = fx(x[np.isfinite(x)]) if x.size else np.array([0.0])
    ally = np.concatenate([fy(ys) for _, ys in drawable.values()]) if drawable else np.array([0.0])
    x0, x1 = float(allx.min()), float(allx.max())
    y0, y1 = float(ally.min()), float(ally.max())
    if x1 == x0:
        x0, x1 = x0 - 1, x1 + 1
    if y1 == y0:
        y0, y1 = y0 - 1, y1 + 1

    def px(v):
        return left + (fx(v) - x0) / (x1 - x0) * pw

    def py(v):
        return top + ph - (fy(v) - y0) / (y1 - y0) * ph

    colours = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#e377c2", "#17becf"]
    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
           f'viewBox="0 0 {width} {height}">',
           f'<rect x="{left}" y="{top}" width="{pw}" height="{ph}" fill="none" stroke="black"/>',
           f'<text x="{left + pw / 2:.1f}" y="{height - 12}" text-anchor="middle" font-size="13">'
           f'{_esc(xlabel)}{" [log]" if logx else ""}</text>',
           f'<text x="16" y="{top + ph / 2:.1f}" text-anchor="middle" font-size="13" '
           f'transform="rotate(-90 16 {top + ph / 2:.1f})">{_esc(ylabel)}{" [log]" if logy else ""}</text>']
    for val, lab in ((x0, "lo"), (x1, "hi")):
        shown = 10 ** val if logx else val
        xp = left + (val - x0) / (x1 - x0) * pw
        out.append(f'<text x="{xp:.1f}" y="{top + ph + 16}" text-anchor="middle" font-size="11">{shown:.3g}</text>')
    for val in (y0, y1):
        shown = 10 ** val if logy else val
        yp = top + ph - (val - y0) / (y1 - y0) * ph
        out.append(f'<text x="{left - 6}" y="{yp + 4:.1f}" text-anchor="end" font-size="11">{shown:.3g}</text>')
    for i, (name, (xs, ys)) in enumerate(drawable.items()):
        c = colours[i % len(colours)]
        pts = " ".join(f"{px(a):.2f},{py(b):.2f}" for a, b in zip(xs, ys))
        label = SERIES_LABELS.get(name, name.replace("rhs_", "rhs "))
        out.append(f'<polyline fill="none" stroke="{c}" stroke-width="1.5" points="{pts}">'
                   f'<title>{_esc(label)}</title></polyline>')
        ly = top + 14 + 16 * i
        out.append(f'<text x="{left + pw + 8}" y="{ly}" font-size="11" fill="{c}">{_esc(label)}</text>')
    out.append("</svg>\n")
    return "\n".join(out)


def _esc(s: str) -> str:
    return s.replace("&", "&amp;").replace("<", "&lt;").replace(">", "&gt;")


def write_run(cfg: ExperimentConfig, out_dir, replicate: int = 0) -> Path:
    """Simulate one replicate of the first (n, alpha) cell into ``out_dir``."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    setup = build_setup(cfg)
    n, alpha = int(cfg.experiment.n[0]), float(cfg.alphas[0])
    _, traj = simulate(cfg, setup, replicate, n, alpha)
    (out / "config.json").write_text(json.dumps(_clean(cfg.report_dict()), indent=2, sort_keys=True) + "\n")
    return save_trajectory(traj, out / "trajectory.csv", {"alpha": alpha, "replicate": replicate})


def evaluate_saved(run_dir, theorems=None) -> dict:
    """Bound reports for a run written by :func:`write_run`."""
    from .dynamics import load_trajectory
    run = Path(run_dir)
    cfg = load_config(run / "config.json", env={})
    traj = load_trajectory(run / "trajectory.csv")
    setup = build_setup(cfg if theorems is None or 13 not in theorems
                        else cfg.replace("bounds", theorems=list(theorems)))
    r, n = int(traj.meta["replicate"]), int(traj.meta["n"])
    dataset = _dataset(cfg, setup.problem, r, n)
    return evaluate(cfg, setup, dataset, traj, r, float(traj.meta["alpha"]),
                    theorems=cfg.bounds.theorems if theorems is None else tuple(theorems))
