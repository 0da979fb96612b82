import json
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import special

from parahedge import DetCase, HalfSpaceDomain, build_model_report, compute_constants, constant_model
from parahedge import rotated_constant_model
from parahedge.bounds_ledger import (C8_supremum, K_beta, beta_chain_check, beta_chain_T1_check, build_H,
                                     det_identity_check, gamma_ratio_check, log_C10)

DOM1 = HalfSpaceDomain(np.array([1.0]), 0.0)
DOM2 = HalfSpaceDomain(np.array([1.0, 0.0]), 0.0)


def test_K_beta_known_values():
    assert K_beta(0.5) == pytest.approx(0.42888194248, rel=1e-10)
    assert K_beta(1.0) == pytest.approx(math.exp(-1), rel=1e-14)


@settings(max_examples=50, deadline=None)
@given(st.floats(0.05, 3.0), st.floats(1e-4, 40.0))
def test_K_beta_is_a_supremum(beta, x):
    assert x ** beta * math.exp(-x) <= K_beta(beta) * (1 + 1e-12)


@settings(max_examples=40, deadline=None)
@given(st.floats(1e-3, 50.0), st.floats(0.01, 30.0))
def test_C10_dominates_reciprocal_gamma(xi, x):
    assert -special.gammaln(x) - x * math.log(xi) <= log_C10(xi) + 1e-9


def test_gamma_ratio_grid_check():
    assert gamma_ratio_check(0.5)["ok"]


def test_C8_attained_at_first_index():
    val, k = C8_supremum()
    assert val == pytest.approx(8.0, rel=1e-12)
    assert k == 1


def test_brownian_constants():
    ct = compute_constants(build_model_report(constant_model([[1.0]]), DOM1, 500), 1, 1.0)
    assert ct.C1 == 0.0 and ct.delta == 0.0
    assert ct.convergence_margin == 0.0 and ct.convergent
    # C2 = 2^{1/2} (2 K_1 + 1/2) for m = M = 1, d = 1
    assert ct.C2 == pytest.approx(math.sqrt(2) * (2 * math.exp(-1) + 0.5), rel=1e-12)
    assert ct.C13 is None
    json.dumps(ct.to_dict(), allow_nan=False)


def test_margin_grows_with_commutator():
    margins = [compute_constants(build_model_report(rotated_constant_model(c), DOM2, 300), 2, 1.0)
               .convergence_margin for c in (0.0, 0.01, 0.05, 0.2)]
    assert margins[0] == 0.0
    assert all(b > a for a, b in zip(margins, margins[1:]))


def test_two_by_two_chain_matrix():
    case = DetCase(2, (1,), (1.0, 2.0))
    np.testing.assert_allclose(build_H(case), [[1.0, 0.0], [0.0, 1.5]])
    assert det_identity_check(case)["det"] == pytest.approx(1.5)
    # without the cut the link is present and det = 1/s1 * (1/s1 + 1/s2) - 1/s1^2
    full = DetCase(2, (), (1.0, 2.0))
    H = build_H(full)
    assert H[0, 1] == -1.0
    assert np.linalg.det(H) == pytest.approx(0.5)


@settings(max_examples=40, deadline=None)
@given(st.integers(1, 6), st.data())
def test_determinant_identities_random(n, data):
    s = data.draw(st.lists(st.floats(0.01, 10.0), min_size=n, max_size=n))
    subset = data.draw(st.sets(st.integers(1, n)))
    assert det_identity_check(DetCase(n, tuple(sorted(subset)), tuple(s)))["ok"]


@pytest.mark.parametrize("m", [1, 2, 3])
def test_beta_chain_closed_form(m):
    assert beta_chain_check(m, 0.125, 0.5)["max_rel_err"] <= 1e-6


def test_beta_chain_mixed_inequality():
    assert beta_chain_T1_check(0.125, 0.5, n_samples=200, seed=1)["violations"] == 0
