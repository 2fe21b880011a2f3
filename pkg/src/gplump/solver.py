"""Energy-adaptive Sobolev gradient flow for the lumped discrete ground state.

One step maps a normalized state u to the normalized
``(1 - tau) u + tau * G u / (u, G u)``, where ``G u`` solves the linear
problem with the density of ``u`` frozen. The same iteration also drives the
standard (consistent-mass) discretization in :mod:`gplump.baseline`; the two
differ only in the :class:`FlowModel` plugged into :func:`gradient_flow`.
"""
from __future__ import annotations

import csv
import logging
import math
import os
import time
import warnings
from dataclasses import dataclass, field
from typing import Literal, Optional

import numpy as np
import scipy.sparse as sp

from gplump import assembly
from gplump.exceptions import MeshHypothesisError, SolverError
from gplump.forms import ProblemData, energy_coeffs, eigenvalue_coeffs, residual_coeffs
from gplump.linalg import SystemSequenceSolver
from gplump.mesh import FeFunction

log = logging.getLogger(__name__)

GRID_POINTS = 65
GOLDEN_TOL = 1e-6
STAGNATION_FLOOR_FACTOR = 10.0


@dataclass
class FlowConfig:
    step_policy: Literal["adaptive", "fixed", "ceiling"] = "adaptive"
    tau: float = 1.0
    tau_min: float = 1e-3
    tol_residual: float = 1e-12
    max_iters: int = 10_000
    linear_solver: Literal["auto", "direct", "cg"] = "auto"
    linear_solver_tol: float = 1e-13
    record_trace: bool = True
    stagnation_window: int = 30
    pairing: Literal["consistent", "lumped"] = "consistent"
    greens_kappa_weight: bool = True

    def __post_init__(self):
        if not 0 < self.tau_min <= 1:
            raise ValueError("tau_min must lie in (0, 1]")
        if not self.tol_residual > 0:
            raise ValueError("tol_residual must be positive")
        if self.step_policy not in ("adaptive", "fixed", "ceiling"):
            raise ValueError(f"unknown step policy {self.step_policy!r}")
        if self.pairing not in ("consistent", "lumped"):
            raise ValueError(f"unknown pairing {self.pairing!r}")


@dataclass
class TraceRecord:
    iter: int
    energy: float
    residual: float
    tau: float
    min_coeff: float
    energy_change: float = 0.0  # E(u^n) - E(u^{n-1}), evaluated without cancellation


@dataclass
class GroundStateSolution:
    u: FeFunction
    lambda_h: float
    energy_h: float
    iterations: int
    residual: float
    converged: bool
    trace: list[TraceRecord] = field(default_factory=list)
    method: str = "lumped"
    metadata: dict = field(default_factory=dict)


@dataclass
class StepSizeBound:
    gamma: float
    C1: float
    C2: float
    bound: float


class FlowModel:
    """Discretization-specific pieces of the gradient flow.

    All vectors are interior coefficient vectors. Subclasses provide the norm
    (mass) inner product, the state-independent operator ``H = S + M_V``,
    the density-weighted matrix, and moments of the quartic term.
    """

    data: ProblemData
    config: FlowConfig
    name = "abstract"

    def __init__(self, data: ProblemData, config: FlowConfig):
        self.data = data
        self.config = config
        self.kappa = float(data.kappa)
        self.linear = SystemSequenceSolver(data.mesh.n_interior, config.linear_solver, config.linear_solver_tol)
        self._abs_H = None

    # norm and pairing
    def mass_dot(self, a, b) -> float:
        raise NotImplementedError

    def mass_apply(self, f) -> np.ndarray:
        raise NotImplementedError

    def pairing_dot(self, a, b) -> float:
        raise NotImplementedError

    def density_matrix(self, u) -> sp.spmatrix:
        """Matrix of ``v, w -> <|u|^2 v, w>`` in the model's mass form."""
        raise NotImplementedError

    def quartic_moments(self, u, d) -> np.ndarray:
        """``c_k = <u^(4-k) d^k>`` for k = 0..4."""
        raise NotImplementedError

    def quartic(self, u) -> float:
        return float(self.quartic_moments(u, np.zeros_like(u))[0])

    def mass_solve(self, r) -> np.ndarray:
        raise NotImplementedError

    @property
    def H(self) -> sp.csr_matrix:
        raise NotImplementedError

    # derived quantities
    def normalize(self, u):
        n2 = self.mass_dot(u, u)
        if not n2 > 0:
            raise SolverError("cannot normalize the zero state")
        return u / math.sqrt(n2)

    def energy(self, u) -> float:
        return 0.5 * float(u @ (self.H @ u)) + 0.25 * self.kappa * self.quartic(u)

    def eigenvalue(self, u) -> float:
        u = self.normalize(u)
        return float(u @ (self.H @ u)) + self.kappa * self.quartic(u)

    def cubic_load(self, u) -> np.ndarray:
        """Vector of ``<|u|^2 u, phi_i>`` in the model's mass form."""
        return self.density_matrix(u) @ u

    def residual_vector(self, u) -> tuple[np.ndarray, float]:
        """``r = H u + kappa <|u|^2 u, .> - lambda M u`` at the normalized ``u``."""
        u = self.normalize(u)
        lam = self.eigenvalue(u)
        return self.H @ u + self.kappa * self.cubic_load(u) - lam * self.mass_apply(u), lam

    def residual(self, u) -> float:
        """``||M^{-1} r||_M / lambda`` with ``r = A(u) u - lambda M u``."""
        r, lam = self.residual_vector(u)
        z = self.mass_solve(r)
        return math.sqrt(max(float(np.dot(r, z)), 0.0)) / lam

    def residual_floor(self, u) -> float:
        """Rounding level of :meth:`residual` at ``u``: eps times the residual of ``|terms|``."""
        au = np.abs(u)
        lam = self.eigenvalue(u)
        if self._abs_H is None:
            self._abs_H = abs(self.H)
        t = self._abs_H @ au + self.kappa * np.abs(self.cubic_load(au)) + lam * self.mass_apply(au)
        z = np.abs(self.mass_solve(t))
        return float(np.finfo(float).eps * math.sqrt(self.mass_dot(z, z)) / lam)

    def system_matrix(self, w) -> sp.csr_matrix:
        c = self.kappa if self.config.greens_kappa_weight else 1.0
        return (self.H + c * self.density_matrix(w)).tocsr()

    def greens_solve(self, w, f, x0=None) -> np.ndarray:
        return self.linear.solve(self.system_matrix(w), self.mass_apply(f), x0=x0)


class LumpedModel(FlowModel):
    name = "lumped"

    def __init__(self, data: ProblemData, config: FlowConfig):
        super().__init__(data, config)
        self.M = data.lumped_mass

    @property
    def H(self):
        return self.data.linear_operator

    def mass_dot(self, a, b):
        return float(np.dot(self.M, a * b))

    def mass_apply(self, f):
        return self.M * f

    def mass_solve(self, r):
        return r / self.M

    def pairing_dot(self, a, b):
        if self.config.pairing == "lumped":
            return self.mass_dot(a, b)
        return float(a @ (self.data.consistent_mass @ b))

    def density_matrix(self, u):
        return sp.diags(self.M * u * u)

    def cubic_load(self, u):
        return self.M * u * u * u

    def quartic_moments(self, u, d):
        u2, d2, ud = u * u, d * d, u * d
        return np.array([float(np.dot(self.M, t)) for t in (u2 * u2, u2 * ud, u2 * d2, ud * d2, d2 * d2)])

    def energy(self, u):
        return energy_coeffs(u, self.data)

    def eigenvalue(self, u):
        return eigenvalue_coeffs(u, self.data)

    def residual(self, u):
        return residual_coeffs(u, self.data)[1]


# -- line search ---------------------------------------------------------------

class EnergyPencil:
    """Energy change ``E(normalize(u + s d)) - E(u)`` for a normalized ``u``.

    The component of ``d`` along ``u`` only rescales the state, so it is
    split off: ``normalize(u + s d) = normalize(u + sigma e)`` with ``e``
    mass-orthogonal to ``u`` and ``sigma = s / (1 + s <u, d>)``. The first-order
    coefficient is ``r . e`` with ``r`` the residual vector at ``u``; all other
    coefficients are O(|e|^2). This resolves the change far below the rounding
    level of the energy itself.
    """

    def __init__(self, model: FlowModel, u: np.ndarray, d: np.ndarray):
        self.a = model.mass_dot(u, d)
        e = d - self.a * u
        self.e = e
        H = model.H
        r, _ = model.residual_vector(u)
        self.beta = float(r @ e)
        Qa = float(u @ (H @ u))
        m1 = model.mass_dot(u, e)
        m2 = model.mass_dot(e, e)
        c = model.quartic_moments(u, e)
        self.m1, self.m2, self.kappa = m1, m2, model.kappa
        self.bQ = c[1] - c[0] * m1
        self.q2 = 0.5 * (float(e @ (H @ e)) - Qa * m2)
        self.p2 = 6 * c[2] - 4 * c[0] * m1 * m1 - 2 * c[0] * m2
        self.p3 = 4 * c[3] - 4 * c[0] * m1 * m2
        self.p4 = c[4] - c[0] * m2 * m2

    def sigma(self, s):
        return s / (1.0 + s * self.a)

    def __call__(self, s):
        s = self.sigma(np.asarray(s, dtype=float))
        dn = 2 * s * self.m1 + s * s * self.m2  # N - 1
        N = 1.0 + dn
        quart = s * s * (self.p2 + s * (self.p3 + s * self.p4))
        return (
            s * self.beta / N
            + (s * s * self.q2) / N
            + 0.25 * self.kappa * (quart - 4 * s * self.bQ * dn) / (N * N)
        )

    def step(self, u, s):
        """Unnormalized ``u + sigma(s) e``, parallel to ``u + s d``."""
        return u + self.sigma(s) * self.e


def _golden(f, a: float, b: float, tol: float) -> tuple[float, float]:
    invphi = (math.sqrt(5) - 1) / 2
    c, d = b - invphi * (b - a), a + invphi * (b - a)
    fc, fd = f(c), f(d)
    while b - a > tol:
        if fc <= fd:
            b, d, fd = d, c, fc
            c = b - invphi * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + invphi * (b - a)
            fd = f(d)
    return (c, fc) if fc <= fd else (d, fd)


def line_search(pencil: EnergyPencil, tau_min: float) -> tuple[float, float]:
    """Minimize the energy change over ``tau in [tau_min, 1]``.

    A uniform grid locates the basin, golden-section search refines it.
    Returns ``(tau, energy change)``.
    """
    grid = np.linspace(tau_min, 1.0, GRID_POINTS)
    vals = pencil(grid)
    i = int(np.argmin(vals))
    best_t, best_v = float(grid[i]), float(vals[i])
    lo, hi = grid[max(i - 1, 0)], grid[min(i + 1, GRID_POINTS - 1)]
    t, v = _golden(lambda s: float(pencil(s)), float(lo), float(hi), GOLDEN_TOL)
    if v < best_v:
        best_t, best_v = t, v
    return best_t, best_v


# -- public operations ----------------------------------------------------------

def greens_solve(w: FeFunction, f: FeFunction, data: ProblemData, config: Optional[FlowConfig] = None) -> FeFunction:
    """Solve ``(S + M(V) + c M(P w^2)) x = M f`` on the interior nodes.

    ``c`` is kappa, or 1 when ``config.greens_kappa_weight`` is False.
    """
    config = config or FlowConfig()
    model = LumpedModel(data, config)
    x = model.greens_solve(w.interior, f.interior)
    return FeFunction.from_interior(data.mesh, x)


def _direction(model: FlowModel, u: np.ndarray, x0=None) -> tuple[np.ndarray, np.ndarray]:
    g = model.greens_solve(u, u, x0=x0)
    s = model.pairing_dot(u, g)
    if not s > 0:
        raise SolverError(f"non-positive pairing (u, Gu) = {s!r}")
    return g / s - u, g


def flow_step(u: FeFunction, tau: float, data: ProblemData, config: Optional[FlowConfig] = None) -> FeFunction:
    """One gradient-flow step from an l-normalized state."""
    if not 0 < tau <= 1:
        raise ValueError("tau must lie in (0, 1]")
    model = LumpedModel(data, config or FlowConfig())
    uc = u.interior
    d, _ = _direction(model, uc)
    return FeFunction.from_interior(data.mesh, model.normalize(uc + tau * d))


def adaptive_tau(u: FeFunction, data: ProblemData, config: Optional[FlowConfig] = None) -> float:
    config = config or FlowConfig()
    model = LumpedModel(data, config)
    uc = model.normalize(u.interior)
    d, _ = _direction(model, uc)
    tau, _ = line_search(EnergyPencil(model, uc, d), config.tau_min)
    return tau


def step_bound(data: ProblemData, E0: float) -> StepSizeBound:
    """Step-size ceiling ``2 min{(1 + kappa C1 C2^4)^-1, E0^-1/2}``.

    ``C1 = 1/(gamma (d+1) d!)`` with gamma the smallest eigenvalue of the
    quadratic reference-element mass matrix; ``C2`` is the L^4 embedding
    constant for the domain volume.
    """
    if not E0 > 0:
        raise ValueError("E0 must be positive")
    d = data.mesh.dim
    if d not in (1, 2, 3):
        raise ValueError(f"unsupported dimension d={d}")
    gamma = float(np.linalg.eigvalsh(assembly.reference_p2_mass(d))[0])
    C1 = 1.0 / (gamma * (d + 1) * math.factorial(d))
    vol = data.mesh.measure
    C2 = {1: vol ** 0.75, 2: 2.0 * vol ** 0.25, 3: 4.0 * vol ** (1.0 / 12.0)}[d]
    bound = 2.0 * min(1.0 / (1.0 + data.kappa * C1 * C2 ** 4), E0 ** -0.5)
    return StepSizeBound(gamma, C1, C2, bound)


def initial_guess(data: ProblemData) -> FeFunction:
    """Interpolant of the constant 1 with zero boundary values, l-normalized."""
    mesh = data.mesh
    u = np.ones(mesh.n_interior)
    u /= math.sqrt(float(np.dot(data.lumped_mass, u * u)))
    return FeFunction.from_interior(mesh, u)


def check_mesh_hypotheses(data: ProblemData, strict: bool = False) -> bool:
    S = data.stiffness
    mm = assembly.is_m_matrix(S)
    irr = assembly.is_irreducible(S)
    if mm.holds and irr:
        return True
    msg = f"stiffness matrix hypotheses violated: M-matrix={mm.holds} ({mm.reason}), irreducible={irr}"
    if strict:
        raise MeshHypothesisError(msg)
    warnings.warn(msg, RuntimeWarning, stacklevel=3)
    return False


def gradient_flow(model: FlowModel, u0: np.ndarray, E0_for_bound: Optional[float] = None) -> dict:
    """Run the flow from interior coefficients ``u0``; returns raw results."""
    cfg = model.config
    u = model.normalize(np.asarray(u0, dtype=float))
    trace: list[TraceRecord] = []
    tau_fixed = cfg.tau
    if cfg.step_policy == "ceiling":
        E0 = model.energy(u) if E0_for_bound is None else E0_for_bound
        tau_fixed = min(1.0, step_bound(model.data, E0).bound)

    t0 = time.perf_counter()
    energy = model.energy(u)
    res = model.residual(u)
    tau, dE = 0.0, 0.0
    g_prev = None
    best = (res, u, energy)
    anchor, anchor_it = res, 0
    stagnated = False
    it = 0
    while True:
        if cfg.record_trace:
            trace.append(TraceRecord(it, energy, res, tau, float(u.min()) if u.size else 0.0, dE))
        if res < 0.5 * anchor:
            anchor, anchor_it = res, it
        if res < best[0]:
            best = (res, u, energy)
        if res <= cfg.tol_residual or it >= cfg.max_iters:
            break
        # no halving for a whole window while within reach of the rounding floor
        if (
            cfg.stagnation_window
            and it - anchor_it >= cfg.stagnation_window
            and best[0] <= STAGNATION_FLOOR_FACTOR * model.residual_floor(best[1])
        ):
            stagnated = True
            break
        d, g_prev = _direction(model, u, x0=g_prev)
        pencil = EnergyPencil(model, u, d)
        if cfg.step_policy == "adaptive":
            tau, dE = line_search(pencil, cfg.tau_min)
        else:
            tau = tau_fixed
            dE = float(pencil(tau))
        u = model.normalize(pencil.step(u, tau))
        energy = model.energy(u)
        res = model.residual(u)
        it += 1
        if it % 50 == 0:
            log.debug("%s iter %d: E=%.15g res=%.3e tau=%.3g", model.name, it, energy, res, tau)

    converged = res <= cfg.tol_residual
    if not converged:
        res, u, energy = best
    return dict(
        u=u, energy=energy, residual=res, iterations=it, converged=converged, trace=trace, stagnated=stagnated,
        wall_time=time.perf_counter() - t0,
    )


def _finish(model: FlowModel, raw: dict) -> GroundStateSolution:
    mesh = model.data.mesh
    u = raw["u"]
    if u.sum() < 0:
        u = -u
    meta = dict(
        linear_solver=model.linear.method,
        factorizations=model.linear.factorizations,
        cg_iterations=model.linear.cg_iterations,
        wall_time=raw["wall_time"],
        threads=os.environ.get("OMP_NUM_THREADS", str(os.cpu_count())),
        step_policy=model.config.step_policy,
        pairing=model.config.pairing,
        greens_kappa_weight=model.config.greens_kappa_weight,
        stagnated=raw["stagnated"],
    )
    if not raw["converged"]:
        log.warning("%s flow stopped after %d iterations, residual %.3e", model.name, raw["iterations"], raw["residual"])
    return GroundStateSolution(
        u=FeFunction.from_interior(mesh, u),
        lambda_h=model.eigenvalue(u),
        energy_h=raw["energy"],
        iterations=raw["iterations"],
        residual=raw["residual"],
        converged=raw["converged"],
        trace=raw["trace"],
        method=model.name,
        metadata=meta,
    )


def solve_ground_state(
    data: ProblemData,
    config: Optional[FlowConfig] = None,
    initial: Optional[FeFunction] = None,
    strict: bool = False,
    check_mesh: bool = True,
) -> GroundStateSolution:
    """Lumped discrete ground state by the adaptive Sobolev gradient flow.

    ``initial`` must be non-negative for the positivity guarantees; the
    default is the normalized interpolant of 1. When ``max_iters`` is hit the
    best iterate is returned with ``converged=False``.
    """
    config = config or FlowConfig()
    if check_mesh:
        check_mesh_hypotheses(data, strict)
    model = LumpedModel(data, config)
    u0 = (initial if initial is not None else initial_guess(data)).interior
    raw = gradient_flow(model, u0)
    return _finish(model, raw)


def linearized_eigs(u: FeFunction, data: ProblemData, count: int = 2) -> list[tuple[float, FeFunction]]:
    """Smallest eigenpairs of ``(S + M(V) + kappa M(P u^2)) x = mu M x``.

    ``u`` is l-normalized first. Eigenvectors are l-orthonormal with positive
    coefficient sum.
    """
    if not 1 <= count <= 6:
        raise ValueError("count must be between 1 and 6")
    M = data.lumped_mass
    uc = u.interior / math.sqrt(float(np.dot(M, u.interior ** 2)))
    A = (data.linear_operator + data.kappa * sp.diags(M * uc * uc)).tocsr()
    m = A.shape[0]
    count = min(count, m)
    dinv = 1.0 / np.sqrt(M)
    B = sp.diags(dinv) @ A @ sp.diags(dinv)
    if m <= 3000:
        mu, Y = np.linalg.eigh(B.toarray())
        mu, Y = mu[:count], Y[:, :count]
    else:
        from scipy.sparse.linalg import eigsh

        try:
            mu, Y = eigsh(B.tocsc(), k=count, sigma=0.0, which="LM", tol=1e-14)
        except Exception as exc:  # ARPACK raises several exception types
            raise SolverError(f"eigensolver failed: {exc}") from exc
        order = np.argsort(mu)
        mu, Y = mu[order], Y[:, order]
    out = []
    for k in range(count):
        x = dinv * Y[:, k]
        x /= math.sqrt(float(np.dot(M, x * x)))
        if x.sum() < 0:
            x = -x
        out.append((float(mu[k]), FeFunction.from_interior(data.mesh, x)))
    return out


TRACE_COLUMNS = ("iter", "energy", "residual", "tau", "min_coeff")


def write_trace_csv(solution: GroundStateSolution, path) -> None:
    tmp = f"{path}.tmp"
    with open(tmp, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(TRACE_COLUMNS)
        for r in solution.trace:
            w.writerow([r.iter] + [format(getattr(r, c), ".17g") for c in TRACE_COLUMNS[1:]])
    os.replace(tmp, path)


def read_trace_csv(path) -> list[TraceRecord]:
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    return [
        TraceRecord(int(r["iter"]), float(r["energy"]), float(r["residual"]), float(r["tau"]), float(r["min_coeff"]))
        for r in rows
    ]
