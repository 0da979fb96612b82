"""Command line entry point: ``parahedge <experiment> --config cfg.json --out dir``.

Exit status is 0 when every check passes, 2 when a check misses its
tolerance and 1 on configuration or numerical errors.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import os
import sys
import time

import numpy as np

from . import __version__
from ._validation import ContractError
from .checks import (bounds_records, check_boundary_symmetry, check_degenerate, check_error_identity,
                     check_hedge_identity, check_parametrix, convergence_sweep, record)
from .config import EXPERIMENTS, RunConfig, load_config
from .diffusion_models import build_model_report
from .bounds_ledger import compute_constants
from .hedge_operators import KnockInOperator, build_hedge_terms, write_hedge_terms_csv
from .kernels import KernelEval
from .quadrature import QuadratureScheme
from .simulation import PathConfig, price_knock_in, price_knock_out, price_plain, simulate_paths

log = logging.getLogger("parahedge")

EXIT_OK, EXIT_ERROR, EXIT_VIOLATION = 0, 1, 2


def _clean(obj):
    """Make ``obj`` strict-JSON: numpy scalars to Python, non-finite floats to strings."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        if math.isnan(v):
            return None
        if math.isinf(v):
            return "inf" if v > 0 else "-inf"
        return v
    return obj


def _dump(path, obj):
    with open(path, "w") as fh:
        json.dump(_clean(obj), fh, indent=2, sort_keys=True)
        fh.write("\n")


def _scaled(cfg: RunConfig):
    tol = dict(cfg.raw["tolerances"])
    s = float(cfg.raw["tolerance_scale"])
    return {k: v * s for k, v in tol.items()}


def _guard(check, fn, *args, **kwargs):
    """Run one check; a raised error becomes an ERROR record instead of aborting the run."""
    try:
        return fn(*args, **kwargs)
    except Exception as exc:  # numerical failure is recorded per check
        log.exception("check %s failed", check)
        return {"check": check, "anchor": "", "status": "ERROR", "error": f"{type(exc).__name__}: {exc}"}


# --------------------------------------------------------------------------
# experiments
# --------------------------------------------------------------------------
def experiment_verify(cfg: RunConfig, out: str) -> list:
    dom, model, f = cfg.domain(), cfg.model(), cfg.payoff()
    quad = cfg.quadrature()
    tol = _scaled(cfg)
    v = cfg.raw["verify"]
    T, x0 = float(cfg.raw["T"]), cfg.raw["x0"]
    paths = cfg.paths()
    recs = [_guard("boundary_symmetry", check_boundary_symmetry, model, dom, v["symmetry_samples"], paths.seed,
                   tol["symmetry_rel"])]
    degen = _guard("degenerate", check_degenerate, model, dom, f, x0, T, paths, seed=paths.seed,
                   sigmas=tol["mc_sigmas"], quad=quad)
    recs.extend(degen if isinstance(degen, list) else [degen])
    recs.append(_guard("parametrix_identity", check_parametrix, model, dom, v["parametrix_grid"],
                       tol["parametrix_rel"], quad))
    id_paths = PathConfig(v["identity_paths"] or paths.n_paths, paths.n_steps, paths.seed, paths.bridge_correction)
    recs.append(_guard("error_identity", check_error_identity, model, dom, f, x0, T, id_paths, quad,
                       tol["mc_sigmas"]))
    _, _, brecs = bounds_records(model, dom, f, T, {**cfg.raw["bounds"], "h0_samples": 10_000, "t1_samples": 100},
                                 paths.seed, quad, float(cfg.raw["tolerance_scale"]))
    recs.extend(r for r in brecs if r["check"] in ("determinant_identities", "beta_chain", "gamma_reciprocal"))
    return recs


def experiment_price(cfg: RunConfig, out: str) -> list:
    dom, model, f = cfg.domain(), cfg.model(), cfg.payoff()
    pc = cfg.paths()
    T, r, x0 = float(cfg.raw["T"]), float(cfg.raw["r"]), cfg.raw["x0"]
    ens = simulate_paths(model, dom, x0, T, pc)
    h = model.model_hash()
    ko = price_knock_out(f, model, dom, x0, T, r, pc, ens)
    ki = price_knock_in(f, model, dom, x0, T, r, pc, ens)
    pl = price_plain(f, model, x0, T, r, pc, ens)
    recs = [dict(record("price", True, quantity=name), **est.record(pc.seed, h))
            for name, est in (("knock_out", ko), ("knock_in", ki), ("plain", pl))]
    recs.append(record("price", abs(ko.mean + ki.mean - pl.mean) <= 1e-12 * max(1.0, abs(pl.mean)),
                       quantity="parity", difference=ko.mean + ki.mean - pl.mean))
    n_dump = int(cfg.raw["montecarlo"].get("dump_paths", 0) or 0)
    if n_dump:
        _write_paths(os.path.join(out, "paths.csv"), ens, n_dump)
    return recs


def _write_paths(path, ens, n):
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh)
        d = ens.X_T.shape[1]
        wr.writerow(["path", "exited", "exit_time"] + [f"exit_x{i}" for i in range(d)] + [f"xT{i}" for i in range(d)])
        for i in range(min(n, ens.X_T.shape[0])):
            wr.writerow([i, int(ens.exited[i]), repr(float(ens.exit_time[i]))]
                        + [repr(float(v)) for v in ens.exit_state[i]] + [repr(float(v)) for v in ens.X_T[i]])


def experiment_hedge(cfg: RunConfig, out: str) -> list:
    dom, model, f = cfg.domain(), cfg.model(), cfg.payoff()
    quad = cfg.quadrature()
    tol = _scaled(cfg)
    T, r, x0 = float(cfg.raw["T"]), float(cfg.raw["r"]), cfg.raw["x0"]
    n_max = int(cfg.raw["hedge"]["n_max"])
    rep, recs = check_hedge_identity(model, dom, f, x0, T, r, cfg.paths(), n_max, quad, tol["mc_sigmas"])
    with open(os.path.join(out, "hedge_ledger.csv"), "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(["quantity", "order", "estimate", "std_error", "n_paths"])
        rows = [("knock_out", "", rep.knock_out), ("knock_in", "", rep.knock_in), ("plain", 0, rep.plain),
                ("error_lhs", "", rep.error_lhs)]
        rows += [("order", h, v) for h, v in sorted(rep.orders.items())]
        rows += [("residual", n, v) for n, v in sorted(rep.residuals.items())]
        rows.append(("defect", n_max, rep.defect))
        for name, order, est in rows:
            wr.writerow([name, order, repr(est.mean), repr(est.std_error), est.n_effective])
    # plot-ready liquidation payoffs across the barrier, order 1 only by default (cheap)
    op = KnockInOperator(model, dom, quad)
    if op.reduced(f) is not None:
        n = int(cfg.raw["hedge"]["csv_grid"])
        grid = dom.k * dom.gamma - np.linspace(0.0, 2.0, n)[:, None] * dom.gamma
        if dom.d > 1:
            # on the transverse origin harmonic liquidation values cancel across the mirror
            grid = grid + 0.5 * dom.orthonormal_frame()[:, 1]
        terms = build_hedge_terms(n_max, T, f, dom)[:2]
        write_hedge_terms_csv(os.path.join(out, "hedge_terms.csv"), op, f, terms, grid, [0.25 * T, 0.5 * T, 0.75 * T])
    return recs


def experiment_convergence(cfg: RunConfig, out: str) -> list:
    dom = cfg.domain()
    c = cfg.raw["convergence"]
    T = float(cfg.raw["T"])
    pc = PathConfig(c["n_paths"], c["n_steps"], cfg.raw["montecarlo"]["seed"], cfg.raw["montecarlo"]["bridge_correction"])
    q = cfg.raw["quadrature"]
    quad = QuadratureScheme(q["space_order"], c["time_order"], q["truncation_sigmas"], q["singularity_substitution"],
                            q["grid_points"])
    mp = cfg.raw["model"].get("params", {}) if cfg.raw["model"]["family"] == "rotated_constant" else {}
    rows, recs = convergence_sweep(c["commutator_values"], dom, c["start"], T, pc, quad, c["omega"],
                                   mp.get("base", 1.0), mp.get("b"), c["ratio_slack"] * cfg.raw["tolerance_scale"],
                                   pc.seed)
    keys = ["commutator", "delta", "C6", "margin", "convergent", "residual_1", "residual_2", "ratio", "ratio_ok"]
    with open(os.path.join(out, "convergence.csv"), "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(keys)
        for row in rows:
            wr.writerow(["" if row[k] is None else (repr(row[k]) if isinstance(row[k], float) else row[k]) for k in keys])
    recs.append({"check": "convergence_table", "anchor": "convergence margin along the rotated family",
                 "status": "PASS", "rows": rows})
    return recs


def experiment_bounds(cfg: RunConfig, out: str) -> list:
    dom, model, f = cfg.domain(), cfg.model(), cfg.payoff()
    _, _, recs = bounds_records(model, dom, f, float(cfg.raw["T"]), cfg.raw["bounds"], cfg.raw["montecarlo"]["seed"],
                                cfg.quadrature(), float(cfg.raw["tolerance_scale"]))
    return recs


EXPERIMENT_FUNCS = {
    "verify": experiment_verify,
    "price": experiment_price,
    "hedge": experiment_hedge,
    "convergence": experiment_convergence,
    "bounds": experiment_bounds,
}


def kernel_dump(cfg: RunConfig, out: str) -> str:
    """Write ``p``, ``h0`` and ``h`` on a small ``(t, x, y)`` grid for debugging."""
    dom, model = cfg.domain(), cfg.model()
    kern = KernelEval(model, dom)
    path = os.path.join(out, "kernels.csv")
    d = dom.d
    offs = np.linspace(-1.0, 1.0, 5)
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(["t"] + [f"x{i}" for i in range(d)] + [f"y{i}" for i in range(d)] + ["p", "h0", "h"])
        for t in (0.1, 0.5, 1.0):
            for a in offs:
                for b in offs:
                    x = dom.k * dom.gamma + a * dom.gamma
                    y = dom.k * dom.gamma + b * dom.gamma
                    vals = [kern.p_kernel(t, x, y), kern.h0(t, x, y), kern.h_sym(t, x, y)]
                    wr.writerow([repr(t)] + [repr(float(v)) for v in x] + [repr(float(v)) for v in y]
                                + [repr(float(np.asarray(v).ravel()[0])) for v in vals])
    return path


# --------------------------------------------------------------------------
def run(cfg: RunConfig, out: str, experiment: str | None = None) -> tuple:
    """Run one experiment and write ``report.json``, ``constants.json`` and CSVs.

    Returns ``(report, exit_code)``.
    """
    experiment = experiment or cfg.experiment
    os.makedirs(out, exist_ok=True)
    t0 = time.perf_counter()
    dom, model = cfg.domain(), cfg.model()
    T = float(cfg.raw["T"])
    seed = cfg.raw["montecarlo"]["seed"]
    mrep = build_model_report(model, dom, cfg.raw["bounds"]["model_samples"], seed, T)
    ct = compute_constants(mrep, model.d, T)
    _dump(os.path.join(out, "constants.json"), {"model_report": mrep.to_dict(), "constants": ct.to_dict()})
    records = EXPERIMENT_FUNCS[experiment](cfg, out)
    statuses = [r["status"] for r in records]
    code = EXIT_ERROR if "ERROR" in statuses else (EXIT_VIOLATION if "TOLERANCE" in statuses else EXIT_OK)
    report = {
        "tool": "parahedge",
        "version": __version__,
        "experiment": experiment,
        "config_hash": cfg.config_hash(),
        "model_hash": model.model_hash(),
        "config": cfg.to_dict(),
        "convergence_margin": ct.convergence_margin,
        "convergent": ct.convergent,
        "records": records,
        "summary": {s: statuses.count(s) for s in ("PASS", "TOLERANCE", "SKIP", "ERROR")},
        "exit_code": code,
    }
    _dump(os.path.join(out, "report.json"), report)
    # wall-clock time is kept out of report.json so reports stay byte-identical
    _dump(os.path.join(out, "timing.json"), {"experiment": experiment, "seconds": time.perf_counter() - t0})
    return report, code


def _print_table(report):
    for r in report["records"]:
        extra = ""
        for key in ("max_rel_diff", "max_rel", "max_ratio", "difference", "defect", "estimate", "max_rel_err"):
            if key in r and not isinstance(r[key], (dict, list)):
                extra = f"{key}={r[key]}"
                break
        print(f"{r['status']:<9} {r['check']:<26} {extra}")
    print(f"convergence_margin={report['convergence_margin']} exit={report['exit_code']}")


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="parahedge", description="Semi-static barrier hedging experiments.")
    p.add_argument("experiment", choices=list(EXPERIMENTS) + ["kernel-dump"])
    p.add_argument("--config", required=True, help="JSON configuration file")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--seed", type=int, help="override montecarlo.seed")
    p.add_argument("--paths", type=int, help="override montecarlo.n_paths")
    p.add_argument("--order", type=int, help="override hedge.n_max")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    overrides = {"experiment": args.experiment if args.experiment != "kernel-dump" else "verify"}
    if args.seed is not None:
        overrides["montecarlo.seed"] = args.seed
    if args.paths is not None:
        overrides["montecarlo.n_paths"] = args.paths
    if args.order is not None:
        overrides["hedge.n_max"] = args.order
    try:
        cfg = load_config(args.config, overrides)
    except (ContractError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR
    try:
        if args.experiment == "kernel-dump":
            os.makedirs(args.out, exist_ok=True)
            print(kernel_dump(cfg, args.out))
            return EXIT_OK
        report, code = run(cfg, args.out)
    except ContractError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR
    _print_table(report)
    return code


if __name__ == "__main__":
    sys.exit(main())
