"""
Command-line interface.

    fqrsub simulate       write a synthetic dataset as CSV
    fqrsub fit            full-data fit
    fqrsub probs          export a subsampling probability vector
    fqrsub subsample-fit  draw one plan and fit it
    fqrsub tune           GACV table over a lambda grid
    fqrsub bench          per-method timings
    fqrsub run            full experiment driver

Every command takes ``--config FILE`` (YAML or JSON mapping), ``--seed``
and ``--out``. Flags override config values; unknown config keys are an
error. Exit codes: 0 success, 1 some experiment cells failed, 2 bad
configuration or input.
"""

import argparse
import json
import logging
import math
import sys
from pathlib import Path

import numpy as np
import yaml

from .basis import make_basis, penalty_matrix
from .design import compute_scores, load_dataset, write_curves_csv, write_responses_csv
from .exceptions import ConfigError, FQRError
from .experiment import BenchSpec, ExperimentSpec, run_bench, run_experiment
from .sampling import (draw_uniform, draw_with_replacement, make_faopt_pipeline, prob_flopt,
                       prob_uniform, write_plan_csv)
from .simulate import SimulationConfig, simulate
from .solver import eval_beta, fit_full, fit_subsample
from .tuning import lambda_grid, select_lambda, write_score_table

log = logging.getLogger("fqrsub")

EXIT_OK, EXIT_PARTIAL, EXIT_CONFIG = 0, 1, 2

# per-command config schema: key -> default
_DATA = {"curves": None, "responses": None, "K": None, "p": 3, "q": 2}
SCHEMAS = {
    "simulate": {"n": 10_000, "m_test": 1000, "coefficient_dist": "mvNormal",
                 "error_dist": "Normal", "generator_basis_size": 10, "grid_size": 100},
    "fit": {**_DATA, "tau": 0.5, "lam": 1.0, "lambda_grid": [1e-6, 1e2, 17],
            "tol": 1e-8, "max_iter": 200},
    "probs": {**_DATA, "method": "FLopt", "tau": 0.5, "lam": 1.0, "pilot_size": 200},
    "subsample-fit": {**_DATA, "method": "FLopt", "r": 1000, "tau": 0.5, "lam": 1.0,
                      "pilot_size": None},
    "tune": {**_DATA, "tau": 0.5, "method": "Unif", "r": None,
             "lambda_grid": [1e-6, 1e2, 17]},
}
EVAL_POINTS = 200


def _load_config(path):
    if path is None:
        return {}
    try:
        with open(path) as fh:
            data = yaml.safe_load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc}") from None
    except yaml.YAMLError as exc:
        raise ConfigError(f"{path}: not valid YAML/JSON: {exc}") from None
    if data is None:
        return {}
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: config must be a mapping")
    return data


def _resolve(command, args):
    """Merge schema defaults, config file and command-line flags."""
    cfg = _load_config(args.config)
    if command in SCHEMAS:
        schema = SCHEMAS[command]
        unknown = sorted(set(cfg) - set(schema) - {"seed", "out"})
        if unknown:
            raise ConfigError(f"unknown config keys for '{command}': {', '.join(unknown)}")
        cfg = {**schema, **cfg}
    for key, value in vars(args).items():
        if key in ("command", "config", "func", "verbose") or value is None:
            continue
        cfg[key] = value
    cfg.setdefault("seed", 0)
    cfg.setdefault("out", {"run": "results", "bench": "bench"}.get(command, "."))
    return cfg


def _lam(value):
    if value == "gacv":
        return value
    try:
        lam = float(value)
    except (TypeError, ValueError):
        raise ConfigError(f"lam must be a number or 'gacv', got {value!r}") from None
    if lam < 0:
        raise ConfigError("lam must be non-negative")
    return lam


def _data(cfg, need_responses=True):
    if not cfg.get("curves"):
        raise ConfigError("a curves CSV is required (--curves)")
    if need_responses and not cfg.get("responses"):
        raise ConfigError("a responses CSV is required (--responses)")
    ds = load_dataset(cfg["curves"], cfg.get("responses"))
    K = cfg["K"] if cfg.get("K") is not None else math.ceil(ds.n ** 0.25)
    basis = make_basis(K, cfg["p"])
    return ds, basis, compute_scores(ds, basis)


def _out(cfg):
    out = Path(cfg["out"])
    out.mkdir(parents=True, exist_ok=True)
    return out


def _write_beta(model, path):
    t = np.linspace(0.0, 1.0, EVAL_POINTS)
    beta = eval_beta(model, t)
    with open(path, "w") as fh:
        fh.write("t,beta\n")
        for ti, bi in zip(t, beta):
            fh.write(f"{ti!r},{float(bi)!r}\n")


def _probs(method, ds, basis, design, cfg, seed):
    if method == "Unif":
        return prob_uniform(ds.n)
    if method == "FLopt":
        return prob_flopt(design)
    if method == "FAopt":
        lam = _lam(cfg["lam"])
        if lam == "gacv":
            raise ConfigError("FAopt needs a numeric lam")
        r0 = cfg.get("pilot_size") or max(200, int(cfg.get("r") or 0) // 2)
        return make_faopt_pipeline(ds, basis, cfg["tau"], lam, cfg["q"], r0=r0, seed=seed,
                                   design=design)
    raise ConfigError(f"unknown method {method!r}; expected Unif, FLopt or FAopt")


def cmd_simulate(cfg):
    sim = {k: cfg[k] for k in SCHEMAS["simulate"]}
    train, test = simulate(SimulationConfig(seed=cfg["seed"], **sim))
    out = _out(cfg)
    write_curves_csv(train, out / "curves.csv")
    write_responses_csv(train, out / "responses.csv")
    if test.n:
        write_curves_csv(test, out / "test_curves.csv")
        write_responses_csv(test, out / "test_responses.csv")
    print(f"wrote {train.n} training and {test.n} test curves to {out}")
    return EXIT_OK


def cmd_fit(cfg):
    ds, basis, design = _data(cfg)
    D = penalty_matrix(basis, cfg["q"])
    lam = _lam(cfg["lam"])
    if lam == "gacv":
        lam, _ = select_lambda(design, ds.responses, cfg["tau"], D,
                               grid=lambda_grid(*cfg["lambda_grid"][:2], int(cfg["lambda_grid"][2])))
    model = fit_full(ds, basis, cfg["tau"], lam, cfg["q"], design=design,
                     tol=cfg["tol"], max_iter=cfg["max_iter"])
    resid = ds.responses - design.scores @ model.theta
    frac = float(np.mean(resid < 0))
    band = 2 * math.sqrt(cfg["tau"] * (1 - cfg["tau"]) / ds.n)
    out = _out(cfg)
    _write_beta(model, out / "beta.csv")
    summary = {"tau": cfg["tau"], "lambda": lam, "K": basis.n_interior,
               "theta": model.theta.tolist(), "objective": model.objective,
               "iterations": model.iterations, "converged": model.converged,
               "negative_residual_fraction": frac, "calibration_band": band}
    with open(out / "fit.json", "w") as fh:
        json.dump(summary, fh, indent=2)
    print("theta:", " ".join(f"{v:.6g}" for v in model.theta))
    print(f"objective: {model.objective:.8g}  iterations: {model.iterations}  "
          f"converged: {model.converged}")
    print(f"negative residual fraction: {frac:.4f}  (tau {cfg['tau']} +/- {band:.4f})")
    return EXIT_OK


def cmd_probs(cfg):
    ds, basis, design = _data(cfg, need_responses=cfg["method"] == "FAopt")
    probs = _probs(cfg["method"], ds, basis, design, cfg, cfg["seed"])
    out = _out(cfg)
    with open(out / "probs.csv", "w") as fh:
        fh.write("index,id,prob\n")
        for i, (key, p) in enumerate(zip(ds.ids, probs)):
            fh.write(f"{i},{key},{float(p)!r}\n")
    print(f"{cfg['method']}: wrote {len(probs)} probabilities, "
          f"max (n pi)^-1 = {1 / (len(probs) * probs.min()):.4g}")
    return EXIT_OK


def cmd_subsample_fit(cfg):
    ds, basis, design = _data(cfg)
    r = int(cfg["r"])
    lam = _lam(cfg["lam"])
    if lam == "gacv":
        raise ConfigError("subsample-fit needs a numeric lam; use 'tune' to choose one")
    seed = cfg["seed"]
    if cfg["method"] == "Unif":
        plan = draw_uniform(ds.n, r, seed)
    else:
        probs = _probs(cfg["method"], ds, basis, design, cfg, seed)
        plan = draw_with_replacement(probs, r, seed, method=cfg["method"])
    model = fit_subsample(ds, basis, cfg["tau"], lam, cfg["q"], plan, design=design)
    out = _out(cfg)
    write_plan_csv(plan, out / "plan.csv")
    _write_beta(model, out / "beta.csv")
    print(f"{cfg['method']}: r={r}, {len(plan.indices)} distinct rows, "
          f"objective {model.objective:.8g}, converged {model.converged}")
    return EXIT_OK


def cmd_tune(cfg):
    ds, basis, design = _data(cfg)
    D = penalty_matrix(basis, cfg["q"])
    B, y, weights = design.scores, ds.responses, None
    if cfg["method"] not in ("Unif", "FLopt"):
        raise ConfigError("tune subsamples with Unif or FLopt only")
    if cfg.get("r"):
        r = int(cfg["r"])
        if cfg["method"] == "Unif":
            plan = draw_uniform(ds.n, r, cfg["seed"])
        else:
            plan = draw_with_replacement(prob_flopt(design), r, cfg["seed"], method="FLopt")
        B, y, weights = B[plan.indices], y[plan.indices], plan.case_weights()
    lo, hi, num = cfg["lambda_grid"]
    lam, table = select_lambda(B, y, cfg["tau"], D, grid=lambda_grid(lo, hi, int(num)),
                               case_weights=weights)
    out = _out(cfg)
    write_score_table(table, out / "gacv.csv")
    for row in table:
        mark = " *" if row.lam == lam else ""
        print(f"lambda={row.lam:<10.4g} gacv={row.gacv:.8g} df={row.df:.3f}{mark}")
    return EXIT_OK


def cmd_bench(cfg):
    spec = BenchSpec.from_dict({k: v for k, v in cfg.items()})
    run_bench(spec)
    print(Path(spec.out, "bench_summary.csv").read_text(), end="")
    return EXIT_OK


def cmd_run(cfg):
    result = run_experiment(ExperimentSpec.from_dict(cfg))
    for f in result.failures:
        log.error("failed cell: %s", f)
    print(f"results in {result.out}" + (f" ({len(result.failures)} failed cells)"
                                        if result.failures else ""))
    return result.exit_code


COMMANDS = {
    "simulate": cmd_simulate,
    "fit": cmd_fit,
    "probs": cmd_probs,
    "subsample-fit": cmd_subsample_fit,
    "tune": cmd_tune,
    "bench": cmd_bench,
    "run": cmd_run,
}


def build_parser():
    parser = argparse.ArgumentParser(prog="fqrsub", description=__doc__.split("\n\n")[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", help="YAML or JSON config file")
        p.add_argument("--seed", type=int)
        p.add_argument("--out")
        if name in ("fit", "probs", "subsample-fit", "tune"):
            p.add_argument("--curves")
            p.add_argument("--responses")
            p.add_argument("--tau", type=float)
            p.add_argument("--K", type=int)
        if name in ("fit", "probs", "subsample-fit"):
            p.add_argument("--lam")
        if name in ("probs", "subsample-fit"):
            p.add_argument("--method", choices=["Unif", "FLopt", "FAopt"])
        if name == "tune":
            p.add_argument("--method", choices=["Unif", "FLopt"])
        if name in ("subsample-fit", "tune"):
            p.add_argument("--r", type=int)
        if name == "simulate":
            p.add_argument("--n", type=int)
            p.add_argument("--m-test", dest="m_test", type=int)
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = _resolve(args.command, args)
        return COMMANDS[args.command](cfg)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (FQRError, OSError, TypeError) as exc:
        print(f"input error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
