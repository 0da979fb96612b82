import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from parahedge import (ContractError, HalfSpaceDomain, call_payoff, harmonic_payoff, project_pi,
                       project_pi_perp, psi_matrix, reflect)

finite = st.floats(-5, 5, allow_nan=False)


def _domain(raw, k):
    raw = np.asarray(raw, dtype=float)
    if np.linalg.norm(raw) < 1e-3:
        raw = raw + 1.0
    return HalfSpaceDomain(raw / np.linalg.norm(raw), k)


@settings(max_examples=60, deadline=None)
@given(arrays(float, 3, elements=finite), st.floats(-2, 2), arrays(float, (7, 3), elements=finite))
def test_reflection_is_an_involution(g, k, x):
    dom = _domain(g, k)
    np.testing.assert_allclose(reflect(reflect(x, dom), dom), x, atol=1e-12)
    # the signed distance flips sign
    np.testing.assert_allclose(dom.signed_distance(reflect(x, dom)), -dom.signed_distance(x), atol=1e-12)


@settings(max_examples=30, deadline=None)
@given(arrays(float, 3, elements=finite))
def test_psi_is_a_symmetric_orthogonal_matrix(g):
    dom = _domain(g, 0.0)
    P = psi_matrix(dom)
    np.testing.assert_allclose(P, P.T, atol=1e-15)
    np.testing.assert_allclose(P @ P, np.eye(3), atol=1e-12)
    np.testing.assert_allclose(P @ dom.gamma, -dom.gamma, atol=1e-12)


@settings(max_examples=60, deadline=None)
@given(arrays(float, (9, 2), elements=finite), st.floats(-1, 1))
def test_projections_sum_to_payoff_off_the_barrier(x, k):
    dom = HalfSpaceDomain(np.array([1.0, 0.0]), k)
    f = harmonic_payoff(dom, [0.0, 1.3], phase=0.4)
    off = np.abs(dom.signed_distance(x)) > 1e-9
    total = project_pi(f, dom, x) + project_pi_perp(f, dom, x)
    np.testing.assert_allclose(total[off], f(x)[off], atol=1e-12)


def test_pi_is_odd_across_the_barrier():
    dom = HalfSpaceDomain(np.array([1.0]), 0.5)
    f = call_payoff(dom, strike=0.2, cap=3.0)
    x = np.array([[0.9], [1.7], [2.4]])
    np.testing.assert_allclose(project_pi(f, dom, reflect(x, dom)), -project_pi(f, dom, x), atol=1e-14)
    # the liquidation payoff lives outside D only
    assert np.all(project_pi_perp(f, dom, x) == 0.0)


def test_unnormalized_direction_is_rejected():
    with pytest.raises(ContractError):
        HalfSpaceDomain(np.array([2.0, 0.0]), 0.0)


def test_frame_is_orthonormal_with_gamma_first():
    with pytest.warns(UserWarning):
        dom = HalfSpaceDomain.normalized(np.array([1.0, 2.0, -0.5]), 0.3)
    Q = dom.orthonormal_frame()
    np.testing.assert_allclose(Q.T @ Q, np.eye(3), atol=1e-12)
    np.testing.assert_allclose(Q[:, 0], dom.gamma, atol=1e-12)
