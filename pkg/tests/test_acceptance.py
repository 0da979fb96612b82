"""One test per acceptance criterion, each at its stated tolerance and scale."""

import math
import time

import numpy as np
import pytest
from scipy.stats import norm

from parahedge import (HalfSpaceDomain, PathConfig, QuadratureScheme, build_model_report, compute_constants,
                       constant_model, constant_payoff, diagonal_model, rotated_constant_model,
                       simulate_paths)
from parahedge.bounds_ledger import beta_chain_check, check_h0_bound, det_identity_sweep
from parahedge.checks import (check_boundary_symmetry, check_degenerate, check_error_identity,
                              check_hedge_identity, check_parametrix, convergence_sweep)

DOM1 = HalfSpaceDomain(np.array([1.0]), 0.0)
DOM2 = HalfSpaceDomain(np.array([1.0, 0.0]), 0.0)
DRIFT_1D = constant_model([[1.0]], [0.2])


def test_ac1_boundary_symmetry(verdict):
    t0 = time.perf_counter()
    rec = check_boundary_symmetry(rotated_constant_model(0.3), DOM2, n_samples=1000, seed=1, rel_tol=1e-12)
    dt = time.perf_counter() - t0
    verdict("AC1", rec["status"] == "PASS" and dt < 1.0, f"max_rel={rec['max_rel_diff']:.2e} time={dt:.2f}s")


@pytest.mark.parametrize("d", [1, 2, 3])
def test_ac2_degenerate_exactness(verdict, d):
    dom = HalfSpaceDomain(np.eye(d)[0], 0.0)
    x0 = np.full(d, 0.5)
    x0[0] = 1.0
    t0 = time.perf_counter()
    recs = check_degenerate(constant_model(np.eye(d)), dom, constant_payoff(dom), x0, 1.0,
                            PathConfig(10_000, 256, seed=d), n_h0=100_000, seed=d)
    dt = time.perf_counter() - t0
    ok = all(r["status"] == "PASS" for r in recs) and dt < 30.0
    err = recs[2]
    verdict(f"AC2[d={d}]", ok, f"h0_nonzero={recs[0]['nonzero']} S_max={recs[1]['max_abs']:.1e} "
                               f"error={err['estimate']:.4f}+-{err['std_error']:.4f} time={dt:.1f}s")


def test_ac3_survival_oracle(verdict):
    t0 = time.perf_counter()
    paths = simulate_paths(constant_model([[1.0]]), DOM1, [1.0], 1.0, PathConfig(10_000, 256, seed=3))
    surv = 1.0 - paths.exited.astype(float)
    est, se = surv.mean(), surv.std(ddof=1) / math.sqrt(surv.size)
    exact = 2.0 * norm.cdf(1.0) - 1.0
    dt = time.perf_counter() - t0
    verdict("AC3", abs(est - exact) <= 3 * se and dt < 10.0,
            f"survival={est:.5f}+-{se:.5f} exact={exact:.6f} time={dt:.1f}s")


def test_ac4_parametrix_identity(verdict):
    t0 = time.perf_counter()
    rec = check_parametrix(constant_model([[1.0, 0.3], [0.3, 1.0]]), DOM2, n=3, rel_tol=0.02)
    dt = time.perf_counter() - t0
    verdict("AC4", rec["status"] == "PASS" and rec["points"] == 27 and dt < 300.0,
            f"max_rel={rec['max_rel']:.2e} points={rec['points']} time={dt:.1f}s")


def test_ac5_error_identity(verdict):
    t0 = time.perf_counter()
    rec = check_error_identity(DRIFT_1D, DOM1, constant_payoff(DOM1), [1.0], 1.0, PathConfig(10_000, 256, seed=5))
    dt = time.perf_counter() - t0
    verdict("AC5", rec["status"] == "PASS" and dt < 300.0,
            f"lhs={rec['lhs']:.4f} rhs={rec['rhs']:.4f} diff={rec['difference']:.4f} "
            f"se={rec['combined_se']:.4f} time={dt:.1f}s")


def test_ac6_hedge_ledger(verdict):
    t0 = time.perf_counter()
    rep, recs = check_hedge_identity(DRIFT_1D, DOM1, constant_payoff(DOM1), [1.0], 1.0, 0.0,
                                     PathConfig(10_000, 256, seed=6), n_max=2)
    dt = time.perf_counter() - t0
    res = recs[1]["residual_magnitudes"]
    verdict("AC6", recs[0]["status"] == "PASS" and recs[1]["status"] == "PASS" and dt < 900.0,
            f"defect={rep.defect.mean:.4f} se={rep.combined_se:.4f} residuals={[f'{r:.2e}' for r in res]} "
            f"time={dt:.1f}s")


REGRESSION_MODELS = {
    "bm_1d": (constant_model([[1.0]]), DOM1),
    "drift_1d": (DRIFT_1D, DOM1),
    "rotated_2d": (rotated_constant_model(0.1), DOM2),
    "diagonal_2d": (diagonal_model([1.0, 1.0], [0.3, 0.2], axis=0, b=[0.1, 0.0]), DOM2),
    "diagonal_tanh_2d": (diagonal_model([1.0, 1.0], [0.3, 0.2], axis=1, profile="tanh"), DOM2),
}


@pytest.mark.parametrize("name", sorted(REGRESSION_MODELS))
def test_ac7_h0_bound(verdict, name):
    model, dom = REGRESSION_MODELS[name]
    t0 = time.perf_counter()
    ct = compute_constants(build_model_report(model, dom), model.d, 1.0)
    res = check_h0_bound(model, dom, 100_000, seed=7, constants=ct)
    dt = time.perf_counter() - t0
    verdict(f"AC7[{name}]", res["violations"] == 0 and dt < 60.0,
            f"violations={res['violations']} max_ratio={res['max_ratio']:.3f} time={dt:.1f}s")


def test_ac8_determinant_identities(verdict):
    t0 = time.perf_counter()
    res = det_identity_sweep(n_max=6, n_random=100, seed=8, rtol=1e-10)
    dt = time.perf_counter() - t0
    verdict("AC8", res["ok"] and dt < 60.0,
            f"cases={res['cases']} skipped={res['skipped']} identity_failures={res['identity_failures']} "
            f"detbound={res['detbound_violations']} hiqq={res['hiqq_violations']} time={dt:.1f}s")


def test_ac9_beta_chain(verdict):
    t0 = time.perf_counter()
    worst = 0.0
    for m in (1, 2, 3):
        for eps in (0.0, 0.125, 0.25):
            for beta in (0.25, 0.5, 1.0):
                worst = max(worst, beta_chain_check(m, eps, beta)["max_rel_err"])
    dt = time.perf_counter() - t0
    verdict("AC9", worst <= 1e-6 and dt < 60.0, f"max_rel_err={worst:.2e} time={dt:.1f}s")


def test_ac10_convergence_flag(verdict):
    values = [0.0, 0.005, 0.01, 0.02, 0.025, 0.05, 0.1, 0.2, 0.3, 0.4, 0.5]
    quad = QuadratureScheme(time_order=16)
    t0 = time.perf_counter()
    rows, recs = convergence_sweep(values, DOM2, [0.5, 0.0], 1.0, PathConfig(4000, 128, seed=10), quad,
                                   omega=(0.0, 1.0), slack=0.1, seed=10)
    dt = time.perf_counter() - t0
    ok = all(r["status"] == "PASS" for r in recs) and recs[2]["checked"] > 0 and dt < 1200.0
    ratios = [f"{r['commutator']}:{r['ratio']:.1e}/{r['margin']:.2f}" for r in rows if r["ratio"] is not None]
    verdict("AC10", ok, f"crossings={recs[1]['crossings']} ratio/margin={ratios} time={dt:.0f}s")
