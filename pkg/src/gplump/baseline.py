"""Standard (consistent-mass) P1 discretization and errors against references.

The standard method uses the same gradient flow as the lumped one, with the
L^2 inner product everywhere and V and the cubic term integrated by a
degree-4 rule (exact for quadratic V times P1 squared, and for |u_h|^4).
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property
from typing import Optional

import numpy as np
import scipy.sparse as sp

from gplump import assembly
from gplump.exceptions import MeshError
from gplump.forms import ProblemData, potential_at_points
from gplump.linalg import SpdSolver, jacobi_preconditioner
from gplump.mesh import FeFunction, prolongate
from gplump.quadrature import simplex_rule
from gplump.solver import FlowConfig, FlowModel, GroundStateSolution, _finish, gradient_flow

QUAD_DEGREE = 4


class StandardModel(FlowModel):
    name = "standard"

    def __init__(self, data: ProblemData, config: FlowConfig):
        super().__init__(data, config)
        mesh = data.mesh
        self.bary, self.qw = simplex_rule(mesh.dim, QUAD_DEGREE)
        self.Mc = data.consistent_mass
        self._asm = assembly.element_assembler(mesh)
        self._mass_solver = None

    @cached_property
    def potential_mass(self) -> sp.csr_matrix:
        Vq = potential_at_points(self.data, self.bary)
        return assembly.assemble_weighted_mass(self.data.mesh, Vq, self.bary, self.qw)

    @cached_property
    def H(self):
        return (self.data.stiffness + self.potential_mass).tocsr()

    def _at_points(self, u):
        mesh = self.data.mesh
        return mesh.extend(u)[mesh.elements] @ self.bary.T

    def mass_dot(self, a, b):
        return float(a @ (self.Mc @ b))

    def mass_apply(self, f):
        return self.Mc @ f

    def pairing_dot(self, a, b):
        return self.mass_dot(a, b)

    def mass_solve(self, r):
        if self._mass_solver is None:
            self._mass_solver = SpdSolver(self.Mc, "auto", 1e-14, preconditioner=jacobi_preconditioner(self.Mc))
        return self._mass_solver.solve(r)

    def density_matrix(self, u):
        uq = self._at_points(u)
        local = assembly.weighted_local_mass(self.data.mesh.volumes, uq * uq, self.bary, self.qw)
        return self._asm.assemble(local)

    @cached_property
    def _point_weights(self):
        return self.data.mesh.volumes[:, None] * self.qw[None, :]

    def cubic_load(self, u):
        uq = self._at_points(u)
        local = (self._point_weights * uq * uq * uq) @ self.bary  # (nt, d+1)
        mesh = self.data.mesh
        full = np.bincount(mesh.elements.ravel(), weights=local.ravel(), minlength=mesh.n_nodes)
        return full[mesh.interior_nodes]

    def quartic(self, u):
        u2 = self._at_points(u) ** 2
        return float(np.sum(self._point_weights * u2 * u2))

    def quartic_moments(self, u, d):
        uq, dq = self._at_points(u), self._at_points(d)
        u2, d2, ud = uq * uq, dq * dq, uq * dq
        w = self._point_weights
        return np.array([float(np.sum(w * t)) for t in (u2 * u2, u2 * ud, u2 * d2, ud * d2, d2 * d2)])


def initial_guess_standard(data: ProblemData) -> FeFunction:
    u = np.ones(data.mesh.n_interior)
    u /= math.sqrt(float(u @ (data.consistent_mass @ u)))
    return FeFunction.from_interior(data.mesh, u)


def solve_ground_state_standard(
    data: ProblemData, config: Optional[FlowConfig] = None, initial: Optional[FeFunction] = None
) -> GroundStateSolution:
    """Standard P1 ground state, L^2-normalized."""
    config = config or FlowConfig()
    model = StandardModel(data, config)
    u0 = (initial if initial is not None else initial_guess_standard(data)).interior
    return _finish(model, gradient_flow(model, u0))


def standard_eigenvalue(u: FeFunction, data: ProblemData) -> float:
    return StandardModel(data, FlowConfig()).eigenvalue(u.interior)


@dataclass
class ErrorReport:
    l2_error: float
    h1_semi_error: float
    energy_error: float
    eigenvalue_error: float
    relative: bool = True


def errors_vs_reference(
    coarse: GroundStateSolution, ref: GroundStateSolution, relative: bool = True
) -> ErrorReport:
    """Errors of ``coarse`` against ``ref`` after prolongation to the reference mesh.

    States are compared as produced (no renormalization). Relative errors
    divide by the corresponding reference quantity.
    """
    fine = ref.u.mesh
    try:
        up = prolongate(coarse.u, fine)
    except MeshError:
        raise MeshError("reference mesh is not a refinement of the coarse mesh") from None
    e = (ref.u.coeffs - up.coeffs)[fine.interior_nodes]
    r = ref.u.interior
    Mc = assembly.assemble_consistent_mass(fine)
    S = assembly.assemble_stiffness(fine)
    l2 = math.sqrt(max(float(e @ (Mc @ e)), 0.0))
    h1 = math.sqrt(max(float(e @ (S @ e)), 0.0))
    dE = abs(ref.energy_h - coarse.energy_h)
    dl = abs(ref.lambda_h - coarse.lambda_h)
    if relative:
        l2 /= math.sqrt(float(r @ (Mc @ r)))
        h1 /= math.sqrt(float(r @ (S @ r)))
        dE /= abs(ref.energy_h)
        dl /= abs(ref.lambda_h)
    return ErrorReport(l2, h1, dE, dl, relative)
