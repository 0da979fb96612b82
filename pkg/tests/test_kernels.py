import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import integrate

from parahedge import HalfSpaceDomain, KernelEval, constant_model, reflect, rotated_constant_model
from parahedge.kernels import p2M

DOM1 = HalfSpaceDomain(np.array([1.0]), 0.0)
DOM2 = HalfSpaceDomain(np.array([1.0, 0.0]), 0.0)


@settings(max_examples=50, deadline=None)
@given(st.floats(-0.45, 0.45), st.floats(0.01, 2.0), st.floats(-2, 2), st.floats(-2, 2), st.floats(-2, 2))
def test_kernel_is_mirror_symmetric_on_the_barrier(c, t, z, y1, y2):
    kern = KernelEval(rotated_constant_model(c), DOM2)
    x = np.array([0.0, z])
    y = np.array([y1, y2])
    p = kern.p_kernel(t, x, y)
    assert abs(p - kern.p_kernel(t, x, reflect(y, DOM2))) <= 1e-12 * p


def test_defect_vanishes_for_brownian_motion():
    kern = KernelEval(constant_model(np.eye(2)), DOM2)
    rng = np.random.default_rng(0)
    y = rng.standard_normal((5000, 2))
    assert np.count_nonzero(kern.h0(rng.uniform(0.01, 1, 5000), y + rng.standard_normal((5000, 2)), y)) == 0


def test_drift_defect_closed_form():
    # p carries no drift, so h0 = -b (x - y) / t * phi_t(x - y) for A = 1
    b = 0.4
    kern = KernelEval(constant_model([[1.0]], [b]), DOM1)
    t, x, y = 0.3, np.array([[0.7]]), np.array([[0.2]])
    w = 0.5
    phi = np.exp(-w * w / (2 * t)) / np.sqrt(2 * np.pi * t)
    assert kern.h0(t, x, y)[0] == pytest.approx(-b * w / t * phi, rel=1e-13)


def test_reference_density_integrates_to_one():
    kern = KernelEval(constant_model([[1.3]], [0.5]), DOM1)
    val, _ = integrate.quad(lambda y: kern.q_reference(0.7, [[0.2]], [[y]])[0], -20, 20)
    assert val == pytest.approx(1.0, abs=1e-10)


def test_kernel_matches_reference_inside_for_constant_coefficients():
    model = constant_model([[1.0, 0.3], [0.3, 1.0]])
    kern = KernelEval(model, DOM2)
    x, y = np.array([0.4, 0.1]), np.array([0.9, -0.2])
    assert kern.p_kernel(0.5, x, y) == pytest.approx(kern.q_reference(0.5, x, y), rel=1e-13)


def test_gaussian_envelope_dominates():
    model = constant_model([[1.0, 0.3], [0.3, 1.0]])
    kern = KernelEval(model, DOM2)
    rng = np.random.default_rng(1)
    x, y = rng.standard_normal((2, 2000, 2))
    t = rng.uniform(0.05, 1.0, 2000)
    ratio = kern.p_kernel(t, x, y) / p2M(t, x, y, model.M)
    # envelope is 2^{d/2} (M/m)^{d/2}-sharp; p2M itself dominates up to that constant
    assert np.all(ratio <= 2.0 * (model.M / model.m))


def test_parametrix_identity_single_point():
    kern = KernelEval(constant_model([[1.0, 0.3], [0.3, 1.0]]), DOM2)
    x, y = np.array([0.6, 0.0]), np.array([-0.6, 0.3])
    q, p = kern.q_reference(0.5, x, y), kern.p_kernel(0.5, x, y)
    assert kern.parametrix_integral(0.5, x, y) == pytest.approx(q - p, rel=0.02)
