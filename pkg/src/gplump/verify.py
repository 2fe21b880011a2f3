"""Executable checks of the structural properties of the lumped discretization.

All randomized checks draw from ``numpy.random.default_rng`` (PCG64) with an
explicit seed, so a rerun with the same seed reproduces every number.
"""
from __future__ import annotations

import csv
import math
import os
from dataclasses import dataclass
from typing import Callable, Iterable, Optional, Sequence

import numpy as np
import scipy.sparse as sp

from gplump import assembly
from gplump.forms import ProblemData, integrate, lumped_inner, l2_pairing, values_at_points
from gplump.mesh import FeFunction, SimplicialMesh, element_nodal_map
from gplump.quadrature import simplex_rule
from gplump.solver import FlowConfig, GroundStateSolution, solve_ground_state


# -- Picone inequality ------------------------------------------------------------

@dataclass
class PiconeResult:
    holds: bool
    lhs: float
    rhs: float


def picone_check(S, u: np.ndarray, v: np.ndarray, rtol: float = 1e-12) -> PiconeResult:
    """Check ``<S v, u^2 / v> <= <S u, u>`` for ``u >= 0`` and ``v > 0``."""
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    if np.any(v <= 0):
        raise ValueError("v must be strictly positive")
    if np.any(u < 0):
        raise ValueError("u must be non-negative")
    lhs = float((S @ v) @ (u * u / v))
    rhs = float((S @ u) @ u)
    return PiconeResult(lhs <= rhs + rtol * abs(rhs), lhs, rhs)


def picone_trials(S, n_trials: int, seed: int) -> tuple[bool, float]:
    """Random (u >= 0, v > 0) pairs; returns (all hold, min relative slack).

    Half of the pairs use independent uniform vectors, the other half take
    ``u`` close to a multiple of ``v`` where the inequality is nearly tight.
    """
    rng = np.random.default_rng(seed)
    m = S.shape[0]
    ok, slack = True, math.inf
    for k in range(n_trials):
        v = rng.uniform(0.01, 1.0, m)
        if k % 2:
            u = v * (1.0 + 1e-3 * rng.standard_normal(m)) * rng.uniform(0.1, 10)
            u = np.abs(u)
        else:
            u = rng.uniform(0.0, 1.0, m) * (rng.random(m) < 0.8)
        res = picone_check(S, u, v)
        ok &= res.holds
        slack = min(slack, (res.rhs - res.lhs) / max(abs(res.rhs), 1e-300))
    return ok, slack


# -- convex reformulation -----------------------------------------------------------

@dataclass
class ConvexObjective:
    """``F(w) = 1/2 sqrt(w)^T S sqrt(w) + 1/2 |V o Pw|_C + kappa/4 |P w^2|_C``.

    ``w`` holds one density value per interior node; ``P`` copies nodal
    values to element-nodal slots, with boundary slots equal to zero, and
    ``|z|_C = sum_K |K|/(d+1) sum_j z_{K,j}``.
    """

    S: sp.csr_matrix
    potential: np.ndarray
    kappa: float
    mesh: SimplicialMesh

    @classmethod
    def from_data(cls, data: ProblemData) -> "ConvexObjective":
        return cls(data.stiffness, data.potential_values, data.kappa, data.mesh)

    def P(self, w: np.ndarray) -> np.ndarray:
        return element_nodal_map(self.mesh, self.mesh.extend(w))

    def c_norm(self, z: np.ndarray) -> float:
        return float(np.dot(assembly.lumped_weights(self.mesh), z))

    def __call__(self, w: np.ndarray) -> float:
        w = np.asarray(w, dtype=float)
        if np.any(w < 0):
            raise ValueError("density must be non-negative")
        r = np.sqrt(w)
        Pw = self.P(w)
        return (
            0.5 * float(r @ (self.S @ r))
            + 0.5 * self.c_norm(self.potential * Pw)
            + 0.25 * self.kappa * self.c_norm(Pw * Pw)
        )

    def rescale(self, w: np.ndarray) -> np.ndarray:
        """Scale ``w`` onto the constraint ``|Pw|_C = 1``."""
        mass = self.c_norm(self.P(w))
        if not mass > 0:
            raise ValueError("sample has zero mass and cannot be rescaled")
        return w / mass


@dataclass
class MinimalityResult:
    holds: bool
    min_gap: float
    samples: int


def convex_minimality_check(
    solution: GroundStateSolution,
    data: ProblemData,
    sample_count: int = 500,
    seed: int = 0,
    tol: float = 1e-10,
) -> MinimalityResult:
    """Sample feasible densities ``w`` and check ``F(u^2) <= F(w)``.

    Half of the samples are random non-negative vectors, the other half are
    relative perturbations of ``u^2`` at scales between 1e-1 and 1e-6.
    """
    F = ConvexObjective.from_data(data)
    u = solution.u.interior
    w0 = F.rescale(u * u)
    f0 = F(w0)
    rng = np.random.default_rng(seed)
    m = u.size
    gap = math.inf
    n_random = sample_count // 2
    for k in range(sample_count):
        if k < n_random:
            w = rng.random(m) ** rng.uniform(0.5, 4.0)
        else:
            scale = 10.0 ** rng.uniform(-6, -1)
            w = w0 * (1.0 + scale * rng.uniform(-1.0, 1.0, m))
        gap = min(gap, F(F.rescale(np.maximum(w, 0.0))) - f0)
    return MinimalityResult(gap >= -tol, float(gap), sample_count)


# -- non-negative eigenstates -----------------------------------------------------------

def nonneg_eigenstate_check(
    candidates: Sequence[tuple[float, FeFunction]],
    ground: GroundStateSolution,
    tol: float = 1e-8,
) -> bool:
    """Every candidate of constant sign must coincide with the ground state.

    Candidates are ``(eigenvalue, state)`` pairs; sign-changing states are
    outside the premise and are skipped.
    """
    M = assembly.assemble_lumped_mass(ground.u.mesh)
    g = ground.u.interior / math.sqrt(float(np.dot(M, ground.u.interior ** 2)))
    for lam, f in candidates:
        x = f.interior
        if np.all(x <= 0):
            x = -x
        if np.any(x < 0):
            continue
        x = x / math.sqrt(float(np.dot(M, x * x)))
        dist = math.sqrt(float(np.dot(M, (x - g) ** 2)))
        if dist > tol or abs(lam - ground.lambda_h) > tol * abs(ground.lambda_h):
            return False
    return True


# -- mesh-dependence scans -------------------------------------------------------------

@dataclass
class LumpingScan:
    h: np.ndarray
    err_potential: np.ndarray
    err_cubic: np.ndarray
    slope_potential: float
    slope_cubic: float


def _slope(h, err) -> float:
    h, err = np.asarray(h), np.asarray(err)
    if np.any(err <= 0):
        return math.nan
    return float(np.polyfit(np.log(h), np.log(err), 1)[0])


def lumping_error_scan(
    meshes: Sequence[SimplicialMesh], V: Callable, func: Callable, degree: int = 4
) -> LumpingScan:
    """Lumping errors ``|l(a v, v) - (a v, v)_{L^2}|`` for ``a = V`` and ``a = v^2``.

    ``v`` is the nodal interpolant of ``func`` on each mesh; slopes are least
    squares fits of log error against log h.
    """
    if len(meshes) < 2:
        raise ValueError("need at least two meshes")
    hs, eV, eC = [], [], []
    for mesh in meshes:
        v = FeFunction.interpolate(mesh, func)
        bary, qw = simplex_rule(mesh.dim, degree)
        vq = values_at_points(v.coeffs, mesh, bary)
        ev = element_nodal_map(mesh, v)
        eV.append(abs(lumped_inner(v, v, weight=element_nodal_map(mesh, V)) - l2_pairing(v, v, weight=V, degree=degree)))
        eC.append(abs(lumped_inner(v, v, weight=ev * ev) - integrate(mesh, vq ** 4, qw)))
        hs.append(mesh.h)
    return LumpingScan(np.array(hs), np.array(eV), np.array(eC), _slope(hs, eV), _slope(hs, eC))


def linf_bound_scan(
    problems: Iterable[ProblemData], config: Optional[FlowConfig] = None
) -> list[tuple[float, float]]:
    """``(h, max |u_h|)`` of the lumped ground state for each problem."""
    out = []
    for data in problems:
        sol = solve_ground_state(data, config, check_mesh=False)
        out.append((data.mesh.h, float(np.abs(sol.u.coeffs).max())))
    return out


@dataclass
class LocalizationBox:
    lower: np.ndarray
    upper: np.ndarray
    area: float
    mass: float


def localization_box(u: FeFunction, fraction: float = 0.99) -> LocalizationBox:
    """Smallest-area axis-aligned box (over node coordinates) holding ``fraction`` of the l-mass.

    Node masses are ``M_jj u_j^2``; 2D meshes only.
    """
    mesh = u.mesh
    if mesh.dim != 2:
        raise ValueError("localization box is implemented for 2D meshes")
    w = assembly.assemble_lumped_mass(mesh, full=True) * u.coeffs ** 2
    total = w.sum()
    xs, ix = np.unique(mesh.vertices[:, 0], return_inverse=True)
    ys, iy = np.unique(mesh.vertices[:, 1], return_inverse=True)
    grid = np.zeros((xs.size, ys.size))
    np.add.at(grid, (ix, iy), w)
    # prefix sums over y, then partial sums for every x-range
    cy = np.concatenate([np.zeros((xs.size, 1)), np.cumsum(grid, axis=1)], axis=1)
    j0, j1 = np.triu_indices(ys.size)
    heights = ys[j1] - ys[j0]
    best = (math.inf, None)
    for a in range(xs.size):
        col = np.zeros(ys.size + 1)
        for b in range(a, xs.size):
            col += cy[b]
            mass = col[j1 + 1] - col[j0]
            ok = mass >= fraction * total
            if np.any(ok):
                area = (xs[b] - xs[a]) * heights[ok]
                k = int(np.argmin(area))
                if area[k] < best[0]:
                    best = (float(area[k]), (a, b, j0[ok][k], j1[ok][k], float(mass[ok][k])))
    a, b, c, d, mass = best[1]
    return LocalizationBox(np.array([xs[a], ys[c]]), np.array([xs[b], ys[d]]), best[0], float(mass / total))


# -- report -----------------------------------------------------------------------------

@dataclass
class CheckRow:
    check: str
    param: str
    value: float
    passed: bool


def write_report(rows: Sequence[CheckRow], path) -> None:
    tmp = f"{path}.tmp"
    with open(tmp, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["check", "param", "value", "pass"])
        for r in rows:
            w.writerow([r.check, r.param, repr(float(r.value)), "true" if r.passed else "false"])
    os.replace(tmp, path)
