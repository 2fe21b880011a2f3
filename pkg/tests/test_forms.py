import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from hypothesis.extra.numpy import arrays

from gplump import forms
from gplump.exceptions import MeshError
from gplump.forms import ProblemData
from gplump.mesh import FeFunction, friedrichs_keller, interval_mesh


def single_node(kappa=2.0):
    return ProblemData.from_callable(friedrichs_keller(((0, 0), (1, 1)), 2), None, kappa)


@given(c=st.floats(-100, 100))
def test_single_node_energy(c):
    data = single_node()
    u = FeFunction.from_interior(data.mesh, np.array([c]))
    assert forms.discrete_energy(u, data) == pytest.approx(2 * c * c + c ** 4 / 8, rel=1e-14, abs=1e-300)


def test_single_node_eigenvalue_and_residual():
    data = single_node(kappa=2.0)
    u = FeFunction.from_interior(data.mesh, np.array([3.0]))
    # normalized coefficient is 2 because the lumped mass is 1/4
    assert forms.discrete_eigenvalue(u, data) == pytest.approx(16 + 2 * 0.25 * 16, rel=1e-15)
    assert forms.residual(u, data).rel_norm == pytest.approx(0.0, abs=1e-15)


def test_energy_requires_boundary_zeros_and_same_mesh():
    data = single_node()
    with pytest.raises(ValueError):
        forms.discrete_energy(FeFunction(data.mesh, np.ones(data.mesh.n_nodes)), data)
    other = friedrichs_keller(((0, 0), (1, 1)), 2)
    with pytest.raises(MeshError):
        forms.discrete_energy(other.zero_function(), data)


def test_problem_data_validation():
    m = friedrichs_keller(((0, 0), (1, 1)), 2)
    with pytest.raises(ValueError):
        ProblemData(m, -np.ones(3 * m.n_elements), 1.0)
    with pytest.raises(ValueError):
        ProblemData(m, np.zeros(3 * m.n_elements), -1.0)
    with pytest.raises(ValueError):
        ProblemData(m, np.zeros(5), 1.0)


@given(
    coeffs=arrays(np.float64, 9, elements=st.floats(-10, 10)).filter(lambda a: np.abs(a).max() > 1e-3),
    kappa=st.floats(0, 1000),
)
def test_eigenvalue_energy_identity(coeffs, kappa):
    m = friedrichs_keller(((0, 0), (1, 1)), 4)
    data = ProblemData.from_callable(m, lambda x: (x ** 2).sum(axis=-1), kappa)
    u = forms.normalize_coeffs(coeffs, data)
    lam = forms.eigenvalue_coeffs(u, data)
    E = forms.energy_coeffs(u, data)
    assert lam == pytest.approx(2 * E + 0.5 * kappa * forms.quartic_lumped(u, data), rel=1e-12)
    assert forms.energy_coeffs(-u, data) == pytest.approx(E, rel=1e-15)
    assert forms.eigenvalue_coeffs(-u, data) == pytest.approx(lam, rel=1e-15)


@given(coeffs=arrays(np.float64, 7, elements=st.floats(-1, 1)).filter(lambda a: np.abs(a).max() > 1e-2))
def test_residual_vanishes_only_at_eigenvectors(coeffs):
    m = interval_mesh(0, 1, 8)
    data = ProblemData.from_callable(m, None, 0.0)
    _, rel = forms.residual_coeffs(coeffs, data)
    assert rel >= 0
    x = np.arange(1, 8) / 8
    _, rel_eig = forms.residual_coeffs(np.sin(3 * np.pi * x), data)
    assert rel_eig < 1e-14


def test_lumped_inner_is_vertex_quadrature():
    m = friedrichs_keller(((0, 0), (1, 1)), 4)
    v = FeFunction.interpolate(m, lambda x: x[:, 0] * (1 - x[:, 0]))
    w = FeFunction.interpolate(m, lambda x: np.ones(len(x)))
    full = np.repeat(m.volumes / 3, 3)
    assert forms.lumped_inner(v, w) == pytest.approx(float(np.dot(full, v.coeffs[m.elements].ravel())), rel=1e-15)
    assert forms.lumped_norm(w) == pytest.approx(1.0, rel=1e-15)


def test_hat_quartic_integral():
    m = interval_mesh(0, 1, 2)
    hat = FeFunction.from_interior(m, np.array([1.0]))
    data = ProblemData.from_callable(m, None, 4.0)
    # kinetic 1/2 * 4, quartic 4/4 * 1/5
    assert forms.standard_energy(hat, data) == pytest.approx(2.2, rel=1e-14)
    assert forms.l2_pairing(hat, hat) == pytest.approx(1 / 3, rel=1e-14)


def test_standard_energy_potential_term():
    m = friedrichs_keller(((0, 0), (1, 1)), 8)
    data = ProblemData.from_callable(m, lambda x: x[:, 0] ** 2, 0.0)
    v = FeFunction.interpolate(m, lambda x: x[:, 0] * 0 + np.where(m.boundary_mask, 0.0, 1.0)[: len(x)])
    quad = forms.l2_pairing(v, v, weight=lambda x: x[:, 0] ** 2, degree=5)
    kin = float(v.interior @ (data.stiffness @ v.interior))
    assert forms.standard_energy(v, data) == pytest.approx(0.5 * kin + 0.5 * quad, rel=1e-13)
    with pytest.raises(ValueError):
        forms.standard_energy(v, data, quadrature_degree=2)


def test_potential_without_callable_uses_linear_interpolant():
    m = friedrichs_keller(((0, 0), (1, 1)), 2)
    vals = np.arange(3 * m.n_elements, dtype=float)
    data = ProblemData(m, vals, 0.0)
    bary = np.eye(3)
    assert np.array_equal(forms.potential_at_points(data, bary).ravel(), vals)


def test_normalize_rejects_zero():
    data = single_node()
    with pytest.raises(ValueError):
        forms.normalize_coeffs(np.zeros(1), data)


@given(coeffs=arrays(np.float64, 49, elements=st.floats(-5, 5)), kappa=st.floats(0, 100))
def test_absolute_value_does_not_raise_energy(coeffs, kappa):
    m = friedrichs_keller(((0, 0), (1, 1)), 8)
    data = ProblemData.from_callable(m, lambda x: (x ** 2).sum(axis=-1), kappa)
    E = forms.energy_coeffs(coeffs, data)
    assert forms.energy_coeffs(np.abs(coeffs), data) <= E + 1e-12 * abs(E)
