"""Lumped inner product, discrete energies, eigenvalue functional and residual.

Functions take :class:`~gplump.mesh.FeFunction` objects; the ``*_coeffs``
variants work on interior coefficient vectors and are what the solvers use.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
from typing import Callable, Optional

import numpy as np
import scipy.sparse as sp

from gplump import assembly
from gplump.exceptions import MeshError
from gplump.mesh import FeFunction, SimplicialMesh, element_nodal_map
from gplump.quadrature import physical_points, simplex_rule


@dataclass(eq=False)
class ProblemData:
    """Mesh, potential and interaction strength of one discrete problem.

    ``potential_values`` is the element-nodal vector of V (length
    ``(d+1) * #elements``). ``potential`` optionally gives V pointwise; it is
    used by quadrature-based (non-lumped) terms. Without it, V is taken as the
    element-wise linear interpolant of ``potential_values``.
    """

    mesh: SimplicialMesh
    potential_values: np.ndarray
    kappa: float
    potential: Optional[Callable] = None

    def __post_init__(self):
        k = self.mesh.n_elements * (self.mesh.dim + 1)
        self.potential_values = np.asarray(self.potential_values, dtype=float)
        if self.potential_values.shape != (k,):
            raise ValueError(f"potential_values must have length {k}")
        if np.any(self.potential_values < 0):
            raise ValueError("potential must be non-negative")
        if not self.kappa >= 0:
            raise ValueError("kappa must be non-negative")

    @classmethod
    def from_callable(
        cls, mesh: SimplicialMesh, V: Optional[Callable], kappa: float, piecewise_constant: bool = False
    ) -> "ProblemData":
        if V is None:
            return cls(mesh, np.zeros(mesh.n_elements * (mesh.dim + 1)), kappa)
        vals = element_nodal_map(mesh, V, piecewise_constant=piecewise_constant)
        return cls(mesh, vals, kappa, potential=V)

    @cached_property
    def stiffness(self) -> sp.csr_matrix:
        return assembly.assemble_stiffness(self.mesh)

    @cached_property
    def lumped_mass(self) -> np.ndarray:
        return assembly.assemble_lumped_mass(self.mesh)

    @cached_property
    def lumped_potential(self) -> np.ndarray:
        return assembly.assemble_lumped_mass(self.mesh, self.potential_values)

    @cached_property
    def consistent_mass(self) -> sp.csr_matrix:
        return assembly.assemble_consistent_mass(self.mesh)

    @cached_property
    def linear_operator(self) -> sp.csr_matrix:
        """``S + M(V)``, the part of the lumped operator independent of the state."""
        return (self.stiffness + sp.diags(self.lumped_potential)).tocsr()


def _same_mesh(*fs: FeFunction):
    m = fs[0].mesh
    if any(f.mesh is not m for f in fs[1:]):
        raise MeshError("functions live on different meshes")
    return m


def lumped_inner(v: FeFunction, w: FeFunction, weight: Optional[np.ndarray] = None) -> float:
    """``l(a v, w) = sum_K |K|/(d+1) sum_j a v w`` at the element nodes."""
    mesh = _same_mesh(v, w)
    c = assembly.lumped_weights(mesh)
    if weight is not None:
        c = c * np.asarray(weight, dtype=float)
    return float(np.dot(c, element_nodal_map(mesh, v) * element_nodal_map(mesh, w)))


def lumped_norm(v: FeFunction) -> float:
    return float(np.sqrt(max(lumped_inner(v, v), 0.0)))


def _require_v0(v: FeFunction, data: ProblemData):
    if v.mesh is not data.mesh:
        raise MeshError("function and problem live on different meshes")
    if not v.in_v0():
        raise ValueError("function does not vanish on the boundary")


def energy_coeffs(u: np.ndarray, data: ProblemData) -> float:
    """Lumped energy of interior coefficients ``u``."""
    M = data.lumped_mass
    quad = float(u @ (data.linear_operator @ u))
    return 0.5 * quad + 0.25 * data.kappa * float(np.dot(M, u ** 4))


def discrete_energy(v: FeFunction, data: ProblemData) -> float:
    """``1/2 (grad v, grad v) + 1/2 l(V v, v) + kappa/4 l(|v|^2 v, v)``."""
    _require_v0(v, data)
    return energy_coeffs(v.interior, data)


def normalize_coeffs(u: np.ndarray, data: ProblemData) -> np.ndarray:
    n2 = float(np.dot(data.lumped_mass, u * u))
    if n2 <= 0:
        raise ValueError("cannot normalize the zero function")
    return u / np.sqrt(n2)


def eigenvalue_coeffs(u: np.ndarray, data: ProblemData) -> float:
    u = normalize_coeffs(u, data)
    M = data.lumped_mass
    return float(u @ (data.linear_operator @ u)) + data.kappa * float(np.dot(M, u ** 4))


def discrete_eigenvalue(u: FeFunction, data: ProblemData) -> float:
    """Eigenvalue functional of the lumped problem at ``u / ||u||_l``."""
    _require_v0(u, data)
    return eigenvalue_coeffs(u.interior, data)


def residual_coeffs(u: np.ndarray, data: ProblemData) -> tuple[np.ndarray, float]:
    """``M^{-1} r`` and ``||M^{-1} r||_l / lambda(u)`` for the normalized state."""
    u = normalize_coeffs(u, data)
    M = data.lumped_mass
    lam = eigenvalue_coeffs(u, data)
    r = data.linear_operator @ u + data.kappa * M * u ** 3 - lam * M * u
    z = r / M
    return z, float(np.sqrt(np.dot(M, z * z)) / lam)


@dataclass
class Residual:
    vector: FeFunction
    rel_norm: float


def residual(u: FeFunction, data: ProblemData) -> Residual:
    _require_v0(u, data)
    z, rel = residual_coeffs(u.interior, data)
    return Residual(FeFunction.from_interior(data.mesh, z), rel)


def quartic_lumped(u: np.ndarray, data: ProblemData) -> float:
    """``l(|u|^2 u, u)`` for interior coefficients."""
    return float(np.dot(data.lumped_mass, u ** 4))


# -- quadrature-based (standard FEM) forms ------------------------------------

def potential_at_points(data: ProblemData, bary: np.ndarray) -> np.ndarray:
    """V at the quadrature points of every element, shape (nt, q)."""
    mesh = data.mesh
    if data.potential is not None:
        pts = physical_points(mesh, bary)
        vals = np.asarray(data.potential(pts.reshape(-1, mesh.dim)), dtype=float)
        return vals.reshape(mesh.n_elements, -1)
    nodal = data.potential_values.reshape(mesh.n_elements, mesh.dim + 1)
    return nodal @ bary.T


def values_at_points(coeffs_full: np.ndarray, mesh: SimplicialMesh, bary: np.ndarray) -> np.ndarray:
    return coeffs_full[mesh.elements] @ bary.T


def integrate(mesh: SimplicialMesh, vals: np.ndarray, qweights: np.ndarray) -> float:
    """Integral of a function sampled at quadrature points, (nt, q)."""
    return float(np.dot(mesh.volumes, vals @ qweights))


def standard_energy(v: FeFunction, data: ProblemData, quadrature_degree: int = 4) -> float:
    """Gross-Pitaevskii energy of a P1 function with quadrature for V and |v|^4."""
    if quadrature_degree < 4:
        raise ValueError("quadrature degree must be at least 4")
    _require_v0(v, data)
    mesh = data.mesh
    bary, w = simplex_rule(mesh.dim, quadrature_degree)
    u = v.interior
    vq = values_at_points(v.coeffs, mesh, bary)
    Vq = potential_at_points(data, bary)
    kinetic = float(u @ (data.stiffness @ u))
    return (
        0.5 * kinetic
        + 0.5 * integrate(mesh, Vq * vq ** 2, w)
        + 0.25 * data.kappa * integrate(mesh, vq ** 4, w)
    )


def l2_pairing(v: FeFunction, w: FeFunction, weight: Optional[Callable] = None, degree: int = 4) -> float:
    """``(a v, w)_{L^2}`` by quadrature; ``weight`` is a pointwise callable."""
    mesh = _same_mesh(v, w)
    bary, qw = simplex_rule(mesh.dim, degree)
    vals = values_at_points(v.coeffs, mesh, bary) * values_at_points(w.coeffs, mesh, bary)
    if weight is not None:
        pts = physical_points(mesh, bary).reshape(-1, mesh.dim)
        vals = vals * np.asarray(weight(pts), dtype=float).reshape(vals.shape)
    return integrate(mesh, vals, qw)
