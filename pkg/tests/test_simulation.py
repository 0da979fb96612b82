import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.stats import norm

from parahedge import (ContractError, HalfSpaceDomain, MCEstimate, PathConfig, QuadratureScheme, call_payoff, constant_model,
                       constant_payoff, hedge_ledger, price_knock_in, price_knock_out, price_plain,
                       simulate_paths)

DOM1 = HalfSpaceDomain(np.array([1.0]), 0.0)
BM = constant_model([[1.0]])


def test_knock_out_plus_knock_in_is_plain():
    model = constant_model([[0.8]], [0.1])
    f = call_payoff(DOM1, strike=1.0, cap=4.0)
    cfg = PathConfig(2000, 64, seed=11)
    paths = simulate_paths(model, DOM1, [1.2], 1.0, cfg)
    args = (model, DOM1, [1.2], 1.0, 0.03, cfg)
    total = price_knock_out(f, *args, paths=paths).mean + price_knock_in(f, *args, paths=paths).mean
    assert total == pytest.approx(price_plain(f, model, [1.2], 1.0, 0.03, cfg, paths=paths).mean, rel=1e-12)


def test_same_seed_same_paths_and_prefix_stability():
    a = simulate_paths(BM, DOM1, [1.0], 1.0, PathConfig(300, 32, seed=4))
    b = simulate_paths(BM, DOM1, [1.0], 1.0, PathConfig(300, 32, seed=4))
    c = simulate_paths(BM, DOM1, [1.0], 1.0, PathConfig(150, 32, seed=4))
    np.testing.assert_array_equal(a.X_T, b.X_T)
    # each path owns its random stream, so a shorter run is a prefix
    np.testing.assert_array_equal(a.X_T[:150], c.X_T)
    d = simulate_paths(BM, DOM1, [1.0], 1.0, PathConfig(300, 32, seed=5))
    assert not np.array_equal(a.X_T, d.X_T)


@settings(max_examples=10, deadline=None)
@given(st.integers(0, 2 ** 32), st.floats(0.2, 1.5))
def test_bridge_correction_only_adds_exits(seed, x0):
    on = simulate_paths(BM, DOM1, [x0], 1.0, PathConfig(200, 16, seed, bridge_correction=True))
    off = simulate_paths(BM, DOM1, [x0], 1.0, PathConfig(200, 16, seed, bridge_correction=False))
    assert np.all(on.exited >= off.exited)


def test_exit_bookkeeping():
    paths = simulate_paths(BM, DOM1, [0.5], 1.0, PathConfig(1000, 64, seed=2), record_times=[0.25, 0.5])
    hit = paths.exited
    np.testing.assert_allclose(paths.exit_state[hit], 0.0, atol=1e-12)
    assert np.all(paths.exit_time[hit] <= 1.0) and np.all(paths.exit_time[~hit] == 1.0)
    # exit indicators are monotone in time
    assert np.all(paths.exited_by[:, 0] <= paths.exited_by[:, 1])
    assert np.all(paths.exited_by[:, 1] <= hit)


def test_survival_with_coarse_grid():
    paths = simulate_paths(BM, DOM1, [1.0], 1.0, PathConfig(20000, 16, seed=9))
    surv = 1.0 - paths.exited.mean()
    se = math.sqrt(surv * (1 - surv) / 20000)
    assert abs(surv - (2 * norm.cdf(1.0) - 1)) <= 4 * se


def test_estimate_from_samples():
    est = MCEstimate.from_samples(np.array([1.0, 2.0, 3.0, 4.0]), scale=2.0)
    assert est.mean == pytest.approx(5.0)
    assert est.std_error == pytest.approx(2.0 * np.std([1, 2, 3, 4], ddof=1) / 2.0)
    rec = est.record(seed=3, model_hash="abc")
    assert rec["n_paths"] == 4 and rec["seed"] == 3


def test_ledger_is_null_for_brownian_motion():
    rep = hedge_ledger(2, constant_payoff(DOM1), BM, DOM1, [1.0], 1.0, 0.0, PathConfig(1000, 64, seed=1),
                       QuadratureScheme(time_order=8, grid_points=51))
    assert all(e.mean == 0.0 for e in rep.orders.values())
    assert all(e.mean == 0.0 for e in rep.residuals.values())
    assert rep.defect_ok()


def test_path_config_validation():
    with pytest.raises(ContractError):
        PathConfig(n_paths=5)
    with pytest.raises(ContractError):
        PathConfig(n_steps=4)
    with pytest.raises(ContractError):
        PathConfig(scheme="milstein")
