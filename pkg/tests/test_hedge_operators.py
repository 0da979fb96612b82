import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import integrate

from parahedge import (ContractError, HalfSpaceDomain, KnockInOperator, QuadratureScheme, build_hedge_terms,
                       constant_model, constant_payoff, harmonic_payoff, rotated_constant_model)

DOM1 = HalfSpaceDomain(np.array([1.0]), 0.0)
DOM2 = HalfSpaceDomain(np.array([1.0, 0.0]), 0.0)


def _phi(t, x):
    return np.exp(-x * x / (2 * t)) / np.sqrt(2 * np.pi * t)


@settings(max_examples=25, deadline=None)
@given(st.floats(-1, 1), st.floats(0.05, 2.0), st.floats(0.01, 3.0))
def test_first_order_drift_oracle(b, t, x):
    # A = 1 with drift b on the half line: S_t 1(x) = 2 b phi_t(x)
    op = KnockInOperator(constant_model([[1.0]], [b]), DOM1)
    got = op.apply_S(t, constant_payoff(DOM1), np.array([[x]]), method="direct")[0]
    assert got == pytest.approx(2 * b * _phi(t, x), rel=1e-8, abs=1e-10)


def test_second_iterate_against_independent_quadrature():
    b, t, x = 0.3, 0.5, 0.7

    def h(s, x, y):
        return (-b * (x - y) * _phi(s, x - y) + b * (x + y) * _phi(s, x + y)) / s

    def inner(s):
        return integrate.quad(lambda y: h(s, x, y) * 2 * b * _phi(t - s, y), 0, np.inf, epsabs=1e-13)[0]

    ref = integrate.quad(inner, 0, t, epsabs=1e-12, limit=200)[0]
    op = KnockInOperator(constant_model([[1.0]], [b]), DOM1)
    f = constant_payoff(DOM1)
    for method in ("direct", "reduced"):
        assert op.apply_S_star(2, t, f, np.array([[x]]), method=method)[0] == pytest.approx(ref, rel=1e-4)


def test_engines_agree_on_rotated_model():
    model = rotated_constant_model(0.2)
    f = harmonic_payoff(DOM2, [0.0, 1.0], phase=0.3)
    op = KnockInOperator(model, DOM2, QuadratureScheme(space_order=40))
    x = np.array([[0.1, -0.5], [0.3, 0.2], [0.6, -0.5], [1.5, 0.2]])
    direct = op.apply_S(0.4, f, x, method="direct")
    reduced = op.apply_S(0.4, f, x, method="reduced")
    np.testing.assert_allclose(direct, reduced, rtol=1e-4, atol=2e-6)


def test_operator_vanishes_without_defect():
    op = KnockInOperator(constant_model(np.eye(2)), DOM2)
    f = harmonic_payoff(DOM2, [0.0, 2.0])
    x = np.array([[0.5, 0.1], [2.0, 1.0]])
    assert np.all(op.apply_S(0.3, f, x) == 0.0)
    assert np.all(op.apply_S_star(2, 0.3, f, x) == 0.0)


def test_order_cap_and_bad_arguments():
    op = KnockInOperator(constant_model([[1.0]], [0.2]), DOM1, n_cap=2)
    f = constant_payoff(DOM1)
    with pytest.raises(ContractError):
        op.apply_S_star(3, 0.5, f, [[0.5]])
    with pytest.raises(ContractError):
        op.residual_term(2, 1.0, f, 0.0, [[0.5]])
    with pytest.raises(ContractError):
        op.apply_S(-1.0, f, [[0.5]])
    with pytest.raises(ContractError):
        op.apply_S(0.5, f, [[0.5]], method="bogus")


def test_hedge_term_catalogue():
    terms = build_hedge_terms(3, 1.0)
    assert [t.order for t in terms] == [0, 1, 2, 3]
    assert not terms[0].liquidation and all(t.liquidation for t in terms[1:])


def test_liquidation_payoffs_vanish_inside_domain():
    op = KnockInOperator(constant_model([[1.0]], [0.2]), DOM1)
    f = constant_payoff(DOM1)
    term = build_hedge_terms(1, 1.0)[1]
    vals = term.at(0.5, None).payoff(op, f, np.array([[0.4], [-0.4]]))
    assert vals[0] == 0.0 and vals[1] != 0.0
