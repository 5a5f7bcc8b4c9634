"""
Seeded experiment driver for comparing subsampling schemes.

``run_experiment`` loops over quantile levels, subsample sizes, methods and
repetitions, and writes plain CSV files:

    metrics.csv      method,tau,r,metric,value,reps,seed
    replicates.csv   one row per (method, tau, r, rep)
    beta_curves.csv  estimated slope on a 200-point grid, one row per fit
    timings.csv      wall-clock seconds per fit (not reproducible)
    manifest.json    resolved spec, selected lambdas, failures, timestamp
    plans/           optional plan audit files

Every random draw comes from a seed derived from the experiment seed and
the cell coordinates, so metrics.csv, replicates.csv and beta_curves.csv
are byte-identical across runs with the same spec.
"""

import csv
import dataclasses
import json
import logging
import math
import platform
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy import linalg

from . import __version__
from .basis import make_basis, penalty_matrix
from .design import compute_scores, load_dataset
from .exceptions import ConfigError, FQRError
from .metrics import prediction_efficiency, relative_efficiency, root_ise
from .sampling import (draw_uniform, draw_with_replacement, make_faopt_pipeline,
                       prob_flopt, write_plan_csv)
from .simulate import SimulationConfig, signal, simulate, true_beta
from .solver import eval_beta, fit_full, fit_subsample
from .tuning import lambda_grid, select_lambda

__all__ = [
    "ALL_METHODS",
    "EVAL_GRID",
    "ExperimentSpec",
    "ExperimentResult",
    "derive_seed",
    "load_real_split",
    "run_experiment",
    "BenchSpec",
    "run_bench",
]

log = logging.getLogger(__name__)

ALL_METHODS = ("Unif", "FLopt", "FAopt", "Full")
EVAL_GRID = np.linspace(0.0, 1.0, 200)
_ERRORS = (FQRError, linalg.LinAlgError, FloatingPointError)


def derive_seed(*keys):
    """Deterministic 63-bit seed from integer coordinates."""
    return int(np.random.SeedSequence([int(k) for k in keys]).generate_state(2, np.uint64)[0] >> 1)


def _fmt(x):
    if isinstance(x, (bool, np.bool_)):
        return str(int(x))
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        return repr(float(x))
    return str(x)


def _write_csv(path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(v) for v in row])


@dataclass
class ExperimentSpec:
    """Resolved experiment description.

    ``lam`` is a number or the string "gacv". With "gacv" each subsample
    fit picks its own lambda on ``lambda_grid``; the full-data reference
    fit uses the lambda GACV selects on a uniform subsample of size
    max(r_values).
    """

    mode: str = "simulate"
    simulation: dict = field(default_factory=dict)
    curves: str = None
    responses: str = None
    test_fraction: float = 0.2
    taus: list = field(default_factory=lambda: [0.5])
    r_values: list = field(default_factory=lambda: [600, 1600])
    methods: list = field(default_factory=lambda: ["Unif", "FLopt", "FAopt", "Full"])
    reps: int = 10
    K: int = None
    p: int = 3
    q: int = 2
    lam: object = 1.0
    lambda_grid: list = field(default_factory=lambda: [1e-6, 1e2, 17])
    pilot_size: int = None
    seed: int = 0
    out: str = "results"
    save_plans: bool = False
    workers: int = 1

    @classmethod
    def from_dict(cls, data):
        if not isinstance(data, dict):
            raise ConfigError("experiment config must be a mapping")
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = sorted(set(data) - known)
        if unknown:
            raise ConfigError(f"unknown config keys: {', '.join(unknown)}")
        spec = cls(**data)
        spec.validate()
        return spec

    def to_dict(self):
        return dataclasses.asdict(self)

    def validate(self):
        if self.mode not in ("simulate", "real"):
            raise ConfigError(f"mode must be 'simulate' or 'real', got {self.mode!r}")
        if self.mode == "simulate":
            sim_keys = {f.name for f in dataclasses.fields(SimulationConfig)}
            unknown = sorted(set(self.simulation) - sim_keys)
            if unknown:
                raise ConfigError(f"unknown simulation keys: {', '.join(unknown)}")
            SimulationConfig(**self.simulation)
        elif not self.curves or not self.responses:
            raise ConfigError("real mode needs 'curves' and 'responses' paths")
        if not self.taus or any(not 0 < t < 1 for t in self.taus):
            raise ConfigError("taus must be a non-empty list of values in (0, 1)")
        if not self.methods or any(m not in ALL_METHODS for m in self.methods):
            raise ConfigError(f"methods must be a non-empty subset of {ALL_METHODS}")
        if any(int(r) != r or r < 1 for r in self.r_values):
            raise ConfigError("r_values must be positive integers")
        if int(self.reps) != self.reps or self.reps < 1:
            raise ConfigError("reps must be a positive integer")
        if not (self.lam == "gacv" or (isinstance(self.lam, (int, float)) and self.lam >= 0)):
            raise ConfigError("lam must be a non-negative number or 'gacv'")
        if len(self.lambda_grid) != 3:
            raise ConfigError("lambda_grid must be [low, high, count]")
        if not 0 < self.test_fraction < 1:
            raise ConfigError("test_fraction must lie in (0, 1)")
        if self.K is not None and (int(self.K) != self.K or self.K < 1):
            raise ConfigError("K must be a positive integer")
        if self.workers < 1:
            raise ConfigError("workers must be at least 1")


@dataclass
class ExperimentResult:
    out: Path
    failures: list
    lambdas: dict

    @property
    def exit_code(self):
        return 1 if self.failures else 0


def load_real_split(curves, responses, test_fraction, seed):
    """Seeded random train/test partition of a curve + response CSV pair."""
    ds = load_dataset(curves, responses)
    perm = np.random.default_rng(derive_seed(seed, 7)).permutation(ds.n)
    n_test = int(round(test_fraction * ds.n))
    return ds.subset(np.sort(perm[n_test:])), ds.subset(np.sort(perm[:n_test]))


def _load_data(spec):
    if spec.mode == "simulate":
        cfg = SimulationConfig(**{"seed": spec.seed, **spec.simulation})
        train, test = simulate(cfg)
        return train, test, signal(test)
    train, test = load_real_split(spec.curves, spec.responses, spec.test_fraction, spec.seed)
    return train, test, None


class _Context:
    """Shared, read-only state for one experiment."""

    def __init__(self, spec):
        self.spec = spec
        self.train, self.test, self.test_signal = _load_data(spec)
        n = self.train.n
        if any(r > n for r in spec.r_values):
            raise ConfigError(f"subsample sizes must not exceed n = {n}")
        K = spec.K if spec.K is not None else math.ceil(n ** 0.25)
        self.basis = make_basis(K, spec.p)
        self.design = compute_scores(self.train, self.basis)
        self.test_design = compute_scores(self.test, self.basis) if self.test.n else None
        self.D = penalty_matrix(self.basis, spec.q)
        self.grid = EVAL_GRID
        self.truth = true_beta(self.grid) if spec.mode == "simulate" else None
        lo, hi, num = spec.lambda_grid
        self.lambda_grid = lambda_grid(lo, hi, int(num))


def _reference_lambda(ctx, tau, ti):
    spec = ctx.spec
    if spec.lam != "gacv":
        return float(spec.lam)
    plan = draw_uniform(ctx.train.n, max(spec.r_values), derive_seed(spec.seed, 11, ti))
    idx = plan.indices
    lam, _ = select_lambda(ctx.design.scores[idx], ctx.train.responses[idx], tau, ctx.D,
                           grid=ctx.lambda_grid, case_weights=plan.case_weights())
    return lam


def _one_rep(ctx, tau, ti, method, mi, r, rep, probs, lam_ref, full_theta, full_beta):
    spec = ctx.spec
    seed = derive_seed(spec.seed, ti, mi, r, rep)
    t0 = time.perf_counter()
    if method == "Unif":
        plan = draw_uniform(ctx.train.n, r, seed)
    else:
        plan = draw_with_replacement(probs, r, seed, method=method)
    lam = lam_ref
    if spec.lam == "gacv":
        idx = plan.indices
        lam, _ = select_lambda(ctx.design.scores[idx], ctx.train.responses[idx], tau, ctx.D,
                               grid=ctx.lambda_grid, case_weights=plan.case_weights())
    model = fit_subsample(ctx.train, ctx.basis, tau, lam, spec.q, plan, design=ctx.design)
    seconds = time.perf_counter() - t0
    beta = eval_beta(model, ctx.grid)
    row = {
        "lambda": lam,
        "root_ise": float(root_ise(beta, ctx.truth, ctx.grid)[0]) if ctx.truth is not None else math.nan,
        "root_ise_full": float(root_ise(beta, full_beta, ctx.grid)[0]),
        "pe": math.nan,
        "re": math.nan,
        "converged": model.converged,
    }
    if ctx.test_design is not None:
        if ctx.test_signal is not None:
            row["pe"] = prediction_efficiency(ctx.test_design, model.theta, full_theta,
                                              ctx.test_signal)
        row["re"] = relative_efficiency(ctx.test_design, model.theta, full_theta)
    if spec.save_plans:
        plan_dir = Path(spec.out) / "plans"
        write_plan_csv(plan, plan_dir / f"{method}_tau{tau:g}_r{r}_rep{rep}.csv")
    return row, beta, seconds


def _aggregate(method, tau, r, rows, seed, simulate_mode):
    ok = [row for row in rows if row is not None]
    reps = len(ok)
    if not reps:
        return []
    col = lambda k: np.array([row[k] for row in ok], dtype=float)  # noqa: E731
    out = []
    if simulate_mode:
        out.append(("imse", col("root_ise").mean()))
    out.append(("eimse", col("root_ise_full").mean()))
    if simulate_mode and np.all(np.isfinite(col("pe"))):
        pe = col("pe").mean()
        out += [("pe", pe), ("log_pe", math.log(pe))]
    if np.all(np.isfinite(col("re"))):
        re = col("re").mean()
        out += [("re", re), ("log_re", math.log(re) if re > 0 else -math.inf)]
    out.append(("nonconverged", float(reps - sum(row["converged"] for row in ok))))
    return [(method, tau, r, name, value, reps, seed) for name, value in out]


def run_experiment(spec):
    """Run every (tau, method, r, rep) cell of ``spec`` and write the outputs.

    A failing cell is logged, recorded in the manifest and skipped; the
    returned result's ``exit_code`` is 1 if anything failed.
    """
    if isinstance(spec, dict):
        spec = ExperimentSpec.from_dict(spec)
    spec.validate()
    out = Path(spec.out)
    out.mkdir(parents=True, exist_ok=True)
    if spec.save_plans:
        (out / "plans").mkdir(exist_ok=True)
    ctx = _Context(spec)
    n = ctx.train.n
    simulate_mode = spec.mode == "simulate"

    metrics, replicates, curves, timings, failures = [], [], [], [], []
    lambdas = {}
    if ctx.truth is not None:
        curves.append(("Truth", "", "", "", *ctx.truth))
    flopt = prob_flopt(ctx.design) if "FLopt" in spec.methods else None

    for ti, tau in enumerate(spec.taus):
        try:
            lam_ref = _reference_lambda(ctx, tau, ti)
            t0 = time.perf_counter()
            full = fit_full(ctx.train, ctx.basis, tau, lam_ref, spec.q, design=ctx.design)
            timings.append(("Full", tau, n, 0, time.perf_counter() - t0))
        except _ERRORS as exc:
            log.error("full-data fit failed at tau=%g: %s", tau, exc)
            failures.append({"tau": tau, "method": "Full", "error": str(exc)})
            continue
        lambdas[str(tau)] = lam_ref
        full_beta = eval_beta(full, ctx.grid)
        curves.append(("Full", tau, n, 0, *full_beta))
        if "Full" in spec.methods:
            row = {"root_ise": float(root_ise(full_beta, ctx.truth, ctx.grid)[0])
                   if simulate_mode else math.nan,
                   "root_ise_full": 0.0, "pe": math.nan, "re": math.nan,
                   "converged": full.converged}
            if simulate_mode and ctx.test_design is not None:
                row["pe"] = 1.0
            replicates.append(("Full", tau, n, 0, lam_ref, row["root_ise"], 0.0, row["pe"],
                               0.0, full.converged))
            metrics += _aggregate("Full", tau, n, [row], spec.seed, simulate_mode)

        for mi, method in enumerate(ALL_METHODS):
            if method == "Full" or method not in spec.methods:
                continue
            for r in spec.r_values:
                probs = flopt
                if method == "FAopt":
                    r0 = spec.pilot_size or max(200, r // 2)
                    try:
                        probs = make_faopt_pipeline(
                            ctx.train, ctx.basis, tau, lam_ref, spec.q, r0=r0,
                            seed=derive_seed(spec.seed, ti, mi, r, 10**6), design=ctx.design)
                    except _ERRORS as exc:
                        log.error("FAopt probabilities failed (tau=%g, r=%d): %s", tau, r, exc)
                        failures.append({"tau": tau, "method": method, "r": r, "error": str(exc)})
                        continue

                def task(rep, method=method, mi=mi, r=r, probs=probs):
                    try:
                        return _one_rep(ctx, tau, ti, method, mi, r, rep, probs, lam_ref,
                                        full.theta, full_beta)
                    except _ERRORS as exc:
                        log.error("%s tau=%g r=%d rep=%d failed: %s", method, tau, r, rep, exc)
                        return exc

                if spec.workers > 1:
                    with ThreadPoolExecutor(spec.workers) as pool:
                        results = list(pool.map(task, range(spec.reps)))
                else:
                    results = [task(rep) for rep in range(spec.reps)]

                rows = []
                for rep, res in enumerate(results):
                    if isinstance(res, Exception):
                        failures.append({"tau": tau, "method": method, "r": r, "rep": rep,
                                         "error": str(res)})
                        rows.append(None)
                        continue
                    row, beta, seconds = res
                    rows.append(row)
                    replicates.append((method, tau, r, rep, row["lambda"], row["root_ise"],
                                       row["root_ise_full"], row["pe"], row["re"],
                                       row["converged"]))
                    curves.append((method, tau, r, rep, *beta))
                    timings.append((method, tau, r, rep, seconds))
                metrics += _aggregate(method, tau, r, rows, spec.seed, simulate_mode)

    _write_csv(out / "metrics.csv", ["method", "tau", "r", "metric", "value", "reps", "seed"],
               metrics)
    _write_csv(out / "replicates.csv",
               ["method", "tau", "r", "rep", "lambda", "root_ise", "root_ise_full", "pe", "re",
                "converged"], replicates)
    _write_csv(out / "beta_curves.csv",
               ["method", "tau", "r", "rep"] + [f"b{j:03d}" for j in range(len(EVAL_GRID))],
               curves)
    _write_csv(out / "timings.csv", ["method", "tau", "r", "rep", "seconds"], timings)
    manifest = {
        "spec": spec.to_dict(),
        "n_train": n,
        "n_test": ctx.test.n,
        "K": ctx.basis.n_interior,
        "eval_grid": {"start": 0.0, "stop": 1.0, "num": len(EVAL_GRID)},
        "lambdas": lambdas,
        "failures": failures,
        "version": __version__,
        "python": platform.python_version(),
        "numpy": np.__version__,
        "timestamp": time.strftime("%Y-%m-%dT%H:%M:%S%z"),
    }
    with open(out / "manifest.json", "w") as fh:
        json.dump(manifest, fh, indent=2, default=str)
    return ExperimentResult(out=out, failures=failures, lambdas=lambdas)


# -- timing protocol ---------------------------------------------------------

@dataclass
class BenchSpec:
    """Per-method timing of probability computation, draw and fit."""

    simulation: dict = field(default_factory=dict)
    K_values: list = field(default_factory=lambda: [50])
    p: int = 3
    q: int = 2
    r: int = 1000
    tau: float = 0.75
    lam: float = 0.001
    reps: int = 50
    full_reps: int = None
    methods: list = field(default_factory=lambda: list(ALL_METHODS))
    pilot_size: int = None
    seed: int = 0
    out: str = "bench"

    @classmethod
    def from_dict(cls, data):
        if not isinstance(data, dict):
            raise ConfigError("bench config must be a mapping")
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = sorted(set(data) - known)
        if unknown:
            raise ConfigError(f"unknown config keys: {', '.join(unknown)}")
        spec = cls(**data)
        if not spec.methods or any(m not in ALL_METHODS for m in spec.methods):
            raise ConfigError(f"methods must be a non-empty subset of {ALL_METHODS}")
        if not 0 < spec.tau < 1:
            raise ConfigError("tau must lie in (0, 1)")
        SimulationConfig(**spec.simulation)
        return spec


def run_bench(spec):
    """Time each method ``reps`` times for every K; returns per-rep rows.

    Only estimation work is timed: probabilities (including the FAopt
    pilot), the draw and the fit. Scores are precomputed once per K.
    Writes ``bench.csv`` (method,K,rep,seconds) and ``bench_summary.csv``
    (method,K,median_seconds,reps) into ``spec.out``.
    """
    if isinstance(spec, dict):
        spec = BenchSpec.from_dict(spec)
    cfg = SimulationConfig(**{**spec.simulation, "m_test": 0})
    train, _ = simulate(cfg)
    n = train.n
    # compile the alias sampler before anything is timed
    draw_with_replacement(np.array([0.5, 0.5]), 1, 0)
    rows = []
    for K in spec.K_values:
        basis = make_basis(K, spec.p)
        design = compute_scores(train, basis)
        r0 = spec.pilot_size or max(200, spec.r // 2)
        for mi, method in enumerate(ALL_METHODS):
            if method not in spec.methods:
                continue
            reps = spec.reps if method != "Full" else (spec.full_reps or spec.reps)
            for rep in range(reps):
                seed = derive_seed(spec.seed, K, mi, rep)
                t0 = time.perf_counter()
                if method == "Full":
                    fit_full(train, basis, spec.tau, spec.lam, spec.q, design=design)
                else:
                    if method == "Unif":
                        plan = draw_uniform(n, spec.r, seed)
                    else:
                        if method == "FLopt":
                            probs = prob_flopt(design)
                        else:
                            probs = make_faopt_pipeline(train, basis, spec.tau, spec.lam, spec.q,
                                                        r0=r0, seed=seed, design=design)
                        plan = draw_with_replacement(probs, spec.r, seed, method=method)
                    fit_subsample(train, basis, spec.tau, spec.lam, spec.q, plan, design=design)
                rows.append((method, K, rep, time.perf_counter() - t0))
    out = Path(spec.out)
    out.mkdir(parents=True, exist_ok=True)
    _write_csv(out / "bench.csv", ["method", "K", "rep", "seconds"], rows)
    summary = []
    for K in spec.K_values:
        for method in ALL_METHODS:
            secs = [s for m, k, _, s in rows if m == method and k == K]
            if secs:
                summary.append((method, K, float(np.median(secs)), len(secs)))
    _write_csv(out / "bench_summary.csv", ["method", "K", "median_seconds", "reps"], summary)
    return rows
