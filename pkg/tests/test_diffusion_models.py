import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from parahedge import (ContractError, HalfSpaceDomain, build_model_report, constant_model, diagonal_model,
                       grid_model, psi_matrix, reflect, rotated_constant_model, symmetrize_A)
from parahedge.diffusion_models import commutator_defect, model_from_config

DOM2 = HalfSpaceDomain(np.array([1.0, 0.0]), 0.0)


@settings(max_examples=40, deadline=None)
@given(st.floats(-0.45, 0.45))
def test_rotated_defect_matches_closed_form(c):
    model = rotated_constant_model(c)
    assert commutator_defect(model, DOM2) == pytest.approx(2 * np.sqrt(2) * abs(c), abs=1e-15)


@settings(max_examples=40, deadline=None)
@given(st.floats(-0.45, 0.45), st.floats(-3, 3), st.floats(-3, 3))
def test_symmetrized_matrix_is_psi_conjugate_off_domain(c, eta, z):
    model = rotated_constant_model(c)
    y = np.array([eta, z])
    out = symmetrize_A(model, DOM2, y)
    if eta > 1e-9:
        np.testing.assert_allclose(out, model.const_A, atol=1e-14)
    elif eta < -1e-9:
        P = psi_matrix(DOM2)
        np.testing.assert_allclose(out, P @ model.A_at(reflect(y, DOM2)) @ P, atol=1e-14)


def test_diagonal_model_commutes_with_axis_barrier():
    model = diagonal_model([1.0, 2.0], [0.5, 0.3], axis=1)
    assert commutator_defect(model, DOM2, 500) == 0.0
    assert model.is_layered(HalfSpaceDomain(np.array([0.0, 1.0]), 0.0))


def test_ellipticity_is_enforced():
    with pytest.raises(ContractError):
        constant_model([[1.0, 2.0], [2.0, 1.0]])
    with pytest.raises(ContractError):
        diagonal_model([0.2], [-0.5])


def test_report_on_constant_model():
    rep = build_model_report(constant_model([[2.0, 0.0], [0.0, 0.5]], [0.1, -0.3]), DOM2, 500)
    assert rep.m == pytest.approx(0.5)
    assert rep.M == pytest.approx(2.0)
    assert rep.delta == 0.0


def test_grid_model_reproduces_constant_table(tmp_path):
    path = tmp_path / "grid.csv"
    lines = ["x,a,b"] + [f"{x},1.5,0.25" for x in np.linspace(-2, 2, 5)]
    path.write_text("\n".join(lines) + "\n")
    model = grid_model(str(path), 1)
    x = np.array([[-5.0], [0.3], [1.9]])
    np.testing.assert_allclose(model.A_at(x)[:, 0, 0], 1.5)
    np.testing.assert_allclose(model.b_at(x)[:, 0], 0.25)
    assert model.a_inf == 0.0


def test_config_factory_reports_missing_params():
    with pytest.raises(ContractError, match="model.params"):
        model_from_config({"family": "diagonal", "params": {}})
    with pytest.raises(ContractError, match="unknown family"):
        model_from_config({"family": "nope"})
