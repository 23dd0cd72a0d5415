"""Command-line experiment runner.

    brwrate {analyze,simulate,rates,spine,validate} [--config PATH] [--seed INT]
            [--workers INT] [--out DIR]

Exit codes: 0 success, 2 configuration or precondition error, 3 population
overflow (partial outputs are written and flagged), 4 validation failure.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import os
import sys
import warnings

import numpy as np

from . import __version__
from ._stats import mean_se
from .config import ExperimentConfig, load_config, parse_config
from .errors import (BranchingError, ConfigError, DomainError, InsufficientData,
                     PopulationOverflow, PreconditionError)
from .model import mu_p
from .moments import BoundaryWarning, analyze, find_theta, predicted_rate
from .population import s_n_curve, simulate_ensemble
from .series import fit_rate, increment_curve
from .spine import sample_spines, spine_duality_check
from .streams import substream
from .validation import FUNCTIONS, run_suites

__all__ = ["main", "cmd_analyze", "cmd_simulate", "cmd_rates", "cmd_spine", "cmd_validate",
           "SCHEMA_VERSION"]

SCHEMA_VERSION = 1

EXIT_OK, EXIT_CONFIG, EXIT_OVERFLOW, EXIT_VALIDATION = 0, 2, 3, 4


# -- output helpers -----------------------------------------------------------------------

def _fmt(x):
    if isinstance(x, (bool, np.bool_)):
        return str(bool(x)).lower()
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if x is None:
        return ""
    return format(float(x), ".17g")


def write_csv(path, header, rows):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(x) for x in row])


def _jsonable(x):
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, (np.bool_, bool)):
        return bool(x)
    if isinstance(x, (np.integer, int)):
        return int(x)
    if isinstance(x, (np.floating, float)):
        x = float(x)
        return x if math.isfinite(x) else str(x)
    return x


def write_report(path, command, cfg: ExperimentConfig, body):
    report = {"schema_version": SCHEMA_VERSION, "command": command,
              "config": cfg.resolved(), **body}
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(_jsonable(report), fh, indent=2, sort_keys=True, allow_nan=False)
        fh.write("\n")
    return report


def _out(cfg, out_dir, key):
    return os.path.join(out_dir, cfg.output[key])


def _est(e):
    return {"value": e.value, "stderr": e.stderr}


# -- commands ------------------------------------------------------------------------------

def cmd_analyze(cfg: ExperimentConfig, out_dir):
    """Criterion report with samples of ``m``, ``theta``, ``gamma`` and ``q``."""
    law = cfg.build_law()
    p, a = cfg["p"], cfg["a"]
    rep = analyze(law, p, a)
    lo, hi = law.domain
    grid = [r for r in np.linspace(1.0, 3.0, 41) if lo < r < hi]
    body = {
        "law": law.to_dict(),
        "m_curve": [[float(r), law.mean_measure(r)] for r in grid],
        "theta": rep.theta, "gamma": rep.gamma, "q": rep.q,
        "criteria": rep.to_dict(),
    }
    write_report(_out(cfg, out_dir, "report"), "analyze", cfg, body)
    return EXIT_OK


def _simulate(law, cfg, workers):
    try:
        return simulate_ensemble(law, cfg["n_max"], cfg["reps"], r_set=tuple(cfg["r_set"]),
                                 seed=cfg["seed"], cap=cfg["cap"], workers=workers), False
    except PopulationOverflow as exc:
        print(f"error: {exc}; writing partial output", file=sys.stderr)
        return exc.partial, True


def cmd_simulate(cfg: ExperimentConfig, out_dir, workers=1):
    """Trajectory CSV with one row per replicate and generation."""
    law = cfg.build_law()
    ens, truncated = _simulate(law, cfg, workers)
    header = ["run_id", "n", "W_n", *(f"W_n_r{_fmt(r)}" for r in ens.Wr), "M_n", "pop_size"]
    write_csv(_out(cfg, out_dir, "trajectory"), header, ens.rows())
    body = {
        "law": law.to_dict(),
        "truncated": truncated,
        "generations": ens.n_max,
        "dropped_underflow": ens.dropped,
        "mean_W": [_est(mean_se(ens.W[:, n])) for n in range(ens.n_max + 1)],
    }
    write_report(_out(cfg, out_dir, "report"), "simulate", cfg, body)
    return EXIT_OVERFLOW if truncated else EXIT_OK


def cmd_rates(cfg: ExperimentConfig, out_dir, workers=1):
    """Rate CSV (``n, estimate, stderr, predicted``) plus a fitted-slope report."""
    law = cfg.build_law()
    p, a = cfg["p"], cfg["a"]
    criteria = None
    if cfg["quantity"] == "increment":
        if a is None:
            raise ConfigError("rates with quantity = increment needs a")
        # increments up to generation n need only n + 1 generations
        N = cfg["horizon"] or (cfg["fit_max"] or 8) + 1
        curve = increment_curve(law, p, a, N, cfg["reps"], seed=cfg["seed"], cap=cfg["cap"],
                                workers=workers)
        points = [(c.n, c.scaled_increment.value, c.scaled_increment.stderr, c.nonzero)
                  for c in curve]
        if p == 2:
            base = mu_p(law, 2.0).value
            ratio = math.exp(2 * a) * law.mean_measure(2.0)
            predicted = [base * ratio**n for n, *_ in points]
            slope_pred = math.log(ratio)
        else:
            predicted = [None] * len(points)
            slope_pred = None
        criteria = analyze(law, p, a).to_dict()
    else:
        if not 1 < p < 2:
            raise PreconditionError("quantity = s_n needs 1 < p < 2")
        N = cfg["horizon"] or cfg["n_max"]
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", BoundaryWarning)
            rate = predicted_rate(find_theta(law), p, cfg["r"])
        curve = s_n_curve(law, N, cfg["r"], p, cfg["reps"], seed=cfg["seed"], cap=cfg["cap"],
                          workers=workers)
        points = [(n, e.value, e.stderr, cnt) for n, e, cnt in curve]
        predicted = [rate**n for n, *_ in points]
        slope_pred = math.log(rate)
        if a is not None:
            criteria = analyze(law, p, a).to_dict()

    write_csv(_out(cfg, out_dir, "rates"), ["n", "estimate", "stderr", "predicted"],
              [(n, v, s, pr) for (n, v, s, _), pr in zip(points, predicted)])
    lo = cfg["fit_min"]
    hi = cfg["fit_max"] if cfg["fit_max"] is not None else points[-1][0]
    if cfg["quantity"] == "s_n":
        lo = max(lo, 1)   # s_0 = 1 exactly
    try:
        fit = fit_rate([pt for pt in points if lo <= pt[0] <= hi], predicted=slope_pred)
        fitted = {"slope": fit.slope, "slope_stderr": fit.slope_stderr,
                  "intercept": fit.intercept, "fit_range": list(fit.fit_range),
                  "n_points": fit.n_points}
        verdict = None if slope_pred is None else fit.matches(cfg["slope_tol"])
    except InsufficientData as exc:
        fitted, verdict = {"error": str(exc)}, None
    body = {"law": law.to_dict(), "quantity": cfg["quantity"], "horizon": N,
            "fitted": fitted, "predicted_slope": slope_pred, "slope_matches": verdict,
            "criteria": criteria}
    write_report(_out(cfg, out_dir, "report"), "rates", cfg, body)
    return EXIT_OK


def cmd_spine(cfg: ExperimentConfig, out_dir, workers=1):
    """Spine CSV and the duality report at generation ``n_max``."""
    law = cfg.build_law()
    n = cfg["n_max"]
    if n < 1:
        raise PreconditionError("spine needs n_max >= 1")
    mode = None if cfg["mode"] == "auto" else cfg["mode"]
    sample = sample_spines(law, n, cfg["reps"], substream(cfg["seed"], 0, 7), mode)
    write_csv(_out(cfg, out_dir, "spine"),
              ["run_id", "k", "Pi_k", "Q_k", "I_k_size", "importance_weight"], sample.rows())
    duality = {}
    for name, f in FUNCTIONS.items():
        res = spine_duality_check(law, n, f, cfg["reps"], seed=cfg["seed"], mode=mode,
                                  cap=cfg["cap"])
        duality[name] = {"spine": _est(res.spine), "population": _est(res.population),
                         "agree": res.agree()}
    body = {"law": law.to_dict(), "mode": sample.mode, "ess": sample.ess,
            "duality": duality}
    write_report(_out(cfg, out_dir, "report"), "spine", cfg, body)
    return EXIT_OK


def cmd_validate(cfg: ExperimentConfig, out_dir, workers=1):
    """Run every invariant suite on the catalog laws (and the configured law)."""
    laws = None
    if cfg.law is not None:
        from .catalog import catalog
        laws = catalog()
        laws["configured"] = cfg.build_law()
    checks = run_suites(seed=cfg["seed"], scale=cfg["scale"], laws=laws)
    failed = [c for c in checks if not c.passed]
    skipped = sum(c.skipped for c in checks)
    for c in failed:
        print(f"FAIL [{c.suite}] {c.name} {c.detail}".rstrip())
    print(f"{len(checks)} checks: {len(checks) - len(failed) - skipped} passed, "
          f"{len(failed)} failed, {skipped} skipped")
    body = {"total": len(checks), "failed": len(failed), "skipped": skipped,
            "checks": [c.to_dict() for c in checks]}
    write_report(_out(cfg, out_dir, "report"), "validate", cfg, body)
    return EXIT_VALIDATION if failed else EXIT_OK


COMMANDS = {
    "analyze": cmd_analyze,
    "simulate": cmd_simulate,
    "rates": cmd_rates,
    "spine": cmd_spine,
    "validate": cmd_validate,
}


def build_parser():
    ap = argparse.ArgumentParser(prog="brwrate",
                                 description="Rates of convergence in branching processes.")
    ap.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    ap.add_argument("command", choices=sorted(COMMANDS))
    ap.add_argument("--config", help="experiment config file (INI)")
    ap.add_argument("--seed", type=int, help="override the master seed")
    ap.add_argument("--workers", type=int, help="worker processes (results do not depend on it)")
    ap.add_argument("--out", default=".", help="output directory (default: .)")
    return ap


def main(argv=None):
    args = build_parser().parse_args(argv)
    overrides = {"seed": args.seed, "workers": args.workers}
    try:
        if args.config:
            cfg = load_config(args.config, overrides)
        elif args.command == "validate":
            cfg = parse_config("", overrides)
        else:
            raise ConfigError(f"{args.command} needs --config")
        os.makedirs(args.out, exist_ok=True)
        fn = COMMANDS[args.command]
        if args.command == "analyze":
            return fn(cfg, args.out)
        return fn(cfg, args.out, workers=cfg["workers"])
    except (ConfigError, PreconditionError, DomainError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except PopulationOverflow as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_OVERFLOW
    except BranchingError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
