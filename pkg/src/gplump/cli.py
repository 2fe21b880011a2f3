"""Experiment runner: ground states, convergence tables and verification reports.

Usage::

    gplump convergence --quick --out results/quick
    gplump convergence --config harmonic.json --out results/harmonic
    gplump solve --preset disorder --level 6 --out results/disorder
    gplump verify --preset harmonic --out results/verify
    gplump export-mesh --preset harmonic --level 4 --out results/mesh

Configs are JSON files whose keys mirror :class:`ExperimentConfig`; missing
keys fall back to the chosen preset (``--preset``, default ``harmonic``).
"""
from __future__ import annotations

import argparse
import csv
import dataclasses
import json
import logging
import math
import os
import platform
import sys
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np
import scipy

from gplump import __version__, assembly, verify
from gplump.baseline import errors_vs_reference, solve_ground_state_standard
from gplump.exceptions import MeshError, MeshHypothesisError, SolverError
from gplump.forms import ProblemData, energy_coeffs, quartic_lumped
from gplump.mesh import SimplicialMesh, fk_hierarchy, prolongate, write_mesh
from gplump.solver import (
    FlowConfig,
    GroundStateSolution,
    check_mesh_hypotheses,
    initial_guess,
    linearized_eigs,
    solve_ground_state,
    step_bound,
    write_trace_csv,
)

log = logging.getLogger("gplump")

EXIT_OK, EXIT_CHECK, EXIT_SOLVER = 0, 2, 3


@dataclass
class PotentialConfig:
    """``kind`` is one of harmonic, disorder, zero, custom.

    harmonic: ``scale/2 * |x - center|^2`` (center defaults to the origin).
    disorder: fair coin tosses between 0 and ``amplitude`` on a
    ``grid_n``-per-axis Cartesian grid of the box.
    custom: cell values read from ``file`` (whitespace separated, one grid
    row per line, first line the lowest y), used like the disorder grid.
    """

    kind: str = "harmonic"
    center: Optional[list] = None
    scale: float = 1.0
    grid_n: int = 32
    seed: int = 0
    amplitude: float = 256.0
    file: Optional[str] = None


@dataclass
class ExperimentConfig:
    name: str = "harmonic"
    box: list = field(default_factory=lambda: [[-8.0, -8.0], [8.0, 8.0]])
    n_base: int = 1
    levels: list = field(default_factory=lambda: [4, 5, 6, 7])
    reference_extra_refines: int = 2
    potential: PotentialConfig = field(default_factory=PotentialConfig)
    kappa: float = 1000.0
    lumped: FlowConfig = field(default_factory=FlowConfig)
    standard: FlowConfig = field(default_factory=FlowConfig)
    warm_start_reference: bool = True
    verify_level: Optional[int] = None
    picone_trials: int = 1000
    minimality_samples: int = 500
    seed: int = 0

    def __post_init__(self):
        if isinstance(self.potential, dict):
            self.potential = PotentialConfig(**self.potential)
        if isinstance(self.lumped, dict):
            self.lumped = FlowConfig(**self.lumped)
        if isinstance(self.standard, dict):
            self.standard = FlowConfig(**self.standard)
        self.levels = [int(l) for l in self.levels]
        if not self.levels or self.levels != sorted(set(self.levels)):
            raise ValueError("levels must be strictly ascending and non-empty")
        if self.reference_extra_refines < 1:
            raise ValueError("reference_extra_refines must be at least 1")
        if self.potential.kind not in ("harmonic", "disorder", "zero", "custom"):
            raise ValueError(f"unknown potential kind {self.potential.kind!r}")

    @property
    def reference_level(self) -> int:
        return self.levels[-1] + self.reference_extra_refines

    @property
    def dim(self) -> int:
        return len(self.box[0])

    def n_per_axis(self, level: int) -> int:
        return self.n_base * 2 ** level

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


PRESETS = {
    "quick": dict(
        name="quick", box=[[0.0, 0.0], [1.0, 1.0]], levels=[2, 3, 4, 5], kappa=10.0,
        potential=dict(kind="harmonic", center=[0.5, 0.5]), verify_level=3,
    ),
    "harmonic": dict(name="harmonic"),
    "disorder": dict(
        name="disorder", box=[[-1.0, -1.0], [1.0, 1.0]], levels=[5, 6, 7], kappa=1.0,
        potential=dict(kind="disorder", grid_n=32, seed=0, amplitude=256.0),
    ),
}


def load_config(preset: str = "harmonic", path: Optional[str] = None, seed: Optional[int] = None) -> ExperimentConfig:
    raw = json.loads(json.dumps(PRESETS[preset]))
    if path is not None:
        with open(path) as fh:
            user = json.load(fh)
        pot = {**raw.get("potential", {}), **user.pop("potential", {})}
        raw.update(user)
        raw["potential"] = pot
    if seed is not None:
        raw["seed"] = seed
        raw.setdefault("potential", {})["seed"] = seed
    return ExperimentConfig(**raw)


# -- potentials -------------------------------------------------------------------------

class CellPotential:
    """Piecewise constant function on a uniform Cartesian grid of a box."""

    def __init__(self, box, values: np.ndarray):
        self.lo = np.asarray(box[0], dtype=float)
        self.hi = np.asarray(box[1], dtype=float)
        self.values = np.asarray(values, dtype=float)

    @property
    def grid_n(self) -> int:
        return self.values.shape[0]

    def __call__(self, x):
        x = np.atleast_2d(x)
        n = np.array(self.values.shape[::-1])
        idx = np.floor((x - self.lo) / (self.hi - self.lo) * n).astype(int)
        idx = np.clip(idx, 0, n - 1)
        if x.shape[1] == 1:
            return self.values[idx[:, 0]]
        return self.values[idx[:, 1], idx[:, 0]]


def disorder_values(pc: PotentialConfig, dim: int) -> np.ndarray:
    rng = np.random.default_rng(pc.seed)
    return pc.amplitude * rng.integers(0, 2, size=(pc.grid_n,) * dim).astype(float)


def potential_function(config: ExperimentConfig):
    """The configured potential as a callable on (k, d) points, or None for V = 0."""
    pc = config.potential
    if pc.kind == "zero":
        return None
    if pc.kind == "harmonic":
        c = np.zeros(config.dim) if pc.center is None else np.asarray(pc.center, dtype=float)
        return lambda x: 0.5 * pc.scale * ((np.atleast_2d(x) - c) ** 2).sum(axis=-1)
    if pc.kind == "disorder":
        return CellPotential(config.box, disorder_values(pc, config.dim))
    vals = np.loadtxt(pc.file, ndmin=2)
    if np.any(vals < 0):
        raise ValueError("custom potential has negative values")
    return CellPotential(config.box, vals if config.dim > 1 else vals.ravel())


def build_potential(config: ExperimentConfig, mesh: SimplicialMesh, level: Optional[int] = None) -> np.ndarray:
    """Element-nodal potential vector on ``mesh``.

    Smooth potentials are evaluated at the element nodes; cell potentials
    assign each element its cell's value at all of its nodes, which requires
    the mesh lines to contain the cell lines.
    """
    V = potential_function(config)
    if V is None:
        return np.zeros(mesh.n_elements * (mesh.dim + 1))
    if isinstance(V, CellPotential):
        if level is not None and config.n_per_axis(level) % V.grid_n:
            raise MeshError(
                f"potential grid with {V.grid_n} cells per axis is not resolved by "
                f"{config.n_per_axis(level)} mesh cells per axis"
            )
        return np.repeat(V(mesh.centroids), mesh.dim + 1)
    pts = mesh.vertices[mesh.elements].reshape(-1, mesh.dim)
    return np.asarray(V(pts), dtype=float)


def make_problem(config: ExperimentConfig, mesh: SimplicialMesh, level: Optional[int] = None) -> ProblemData:
    V = potential_function(config)
    vals = build_potential(config, mesh, level)
    # cell potentials are element-wise constant: the standard method's quadrature
    # then reads them from the element-nodal values
    pointwise = None if isinstance(V, CellPotential) else V
    return ProblemData(mesh, vals, config.kappa, potential=pointwise)


def meshes_for(config: ExperimentConfig, levels) -> dict:
    lo, hi = config.box
    return fk_hierarchy((tuple(lo), tuple(hi)), config.n_base, levels)


# -- convergence ------------------------------------------------------------------------

ERROR_COLUMNS = ("l2_error", "h1_error", "energy_error", "eigenvalue_error")


@dataclass
class ConvergenceRecord:
    level: int
    h: float
    l2_error: float = math.nan
    h1_error: float = math.nan
    energy_error: float = math.nan
    eigenvalue_error: float = math.nan
    eoc_l2: float = math.nan
    eoc_h1: float = math.nan
    eoc_energy: float = math.nan
    eoc_eigenvalue: float = math.nan
    iterations: int = 0
    wall_time: float = 0.0
    residual: float = math.nan
    converged: bool = False
    status: str = "ok"


def _eoc(prev: float, cur: float) -> float:
    if prev > 0 and cur > 0:
        return math.log2(prev / cur)
    return math.nan


def fill_eoc(records: list[ConvergenceRecord]) -> None:
    for prev, cur in zip(records, records[1:]):
        if cur.level != prev.level + 1:
            continue
        cur.eoc_l2 = _eoc(prev.l2_error, cur.l2_error)
        cur.eoc_h1 = _eoc(prev.h1_error, cur.h1_error)
        cur.eoc_energy = _eoc(prev.energy_error, cur.energy_error)
        cur.eoc_eigenvalue = _eoc(prev.eigenvalue_error, cur.eigenvalue_error)


def _fmt(x) -> str:
    if isinstance(x, bool):
        return "true" if x else "false"
    if isinstance(x, float):
        return repr(float(x))
    return str(x)


def write_csv(path: Path, header, rows) -> None:
    tmp = path.with_name(path.name + ".tmp")
    with open(tmp, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for r in rows:
            w.writerow([_fmt(x) for x in r])
    os.replace(tmp, path)


def write_json(path: Path, obj) -> None:
    tmp = path.with_name(path.name + ".tmp")
    with open(tmp, "w") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True, default=str)
        fh.write("\n")
    os.replace(tmp, path)


def _solve(method: str, data: ProblemData, config: ExperimentConfig, strict: bool, initial=None):
    if method == "lumped":
        return solve_ground_state(data, config.lumped, initial=initial, strict=strict)
    if strict:
        check_mesh_hypotheses(data, strict=True)
    return solve_ground_state_standard(data, config.standard, initial=initial)


def _versions() -> dict:
    return dict(
        gplump=__version__, python=platform.python_version(), numpy=np.__version__, scipy=scipy.__version__,
        threads=os.environ.get("OMP_NUM_THREADS", str(os.cpu_count())),
    )


@dataclass
class ConvergenceResult:
    records: dict
    reference: Optional[GroundStateSolution]
    energies: list
    failures: int
    solutions: dict = field(default_factory=dict)


def run_convergence(config: ExperimentConfig, out: Optional[Path] = None, strict: bool = False) -> ConvergenceResult:
    """Solve every level with both methods and compare to a standard-FEM reference.

    The reference lives on ``reference_extra_refines`` red refinements of the
    finest level. Failed solves are recorded and the remaining levels still run.
    """
    if out is not None:
        out = Path(out)
        (out / "traces").mkdir(parents=True, exist_ok=True)
    ref_level = config.reference_level
    meshes = meshes_for(config, config.levels + [ref_level])
    sols: dict = {"lumped": {}, "standard": {}}
    records: dict = {"lumped": [], "standard": []}
    failures = 0
    for level in config.levels:
        data = make_problem(config, meshes[level], level)
        for method in ("lumped", "standard"):
            rec = ConvergenceRecord(level, meshes[level].h)
            t0 = time.perf_counter()
            try:
                sol = _solve(method, data, config, strict)
            except SolverError as exc:
                log.error("%s level %d failed: %s", method, level, exc)
                rec.status = "failed"
                failures += 1
            else:
                sols[method][level] = sol
                rec.iterations, rec.residual, rec.converged = sol.iterations, sol.residual, sol.converged
                if not sol.converged:
                    rec.status = "not_converged"
                    failures += 1
                if out is not None:
                    write_trace_csv(sol, out / "traces" / f"trace_{method}_L{level}.csv")
            rec.wall_time = time.perf_counter() - t0
            records[method].append(rec)
            log.info("%s level %d: %s in %.2fs", method, level, rec.status, rec.wall_time)

    ref_data = make_problem(config, meshes[ref_level], ref_level)
    start = None
    finest = config.levels[-1]
    if config.warm_start_reference and finest in sols["standard"]:
        start = prolongate(sols["standard"][finest].u, meshes[ref_level])
    t0 = time.perf_counter()
    try:
        ref = _solve("standard", ref_data, config, strict, initial=start)
    except SolverError as exc:
        log.error("reference solve failed: %s", exc)
        ref = None
        failures += 1
    ref_time = time.perf_counter() - t0
    if ref is not None and not ref.converged:
        failures += 1
    if ref is not None:
        for method in ("lumped", "standard"):
            for rec in records[method]:
                sol = sols[method].get(rec.level)
                if sol is None:
                    continue
                e = errors_vs_reference(sol, ref)
                rec.l2_error, rec.h1_error = e.l2_error, e.h1_semi_error
                rec.energy_error, rec.eigenvalue_error = e.energy_error, e.eigenvalue_error
            fill_eoc(records[method])

    energies = []
    for level in config.levels:
        lu, st = sols["lumped"].get(level), sols["standard"].get(level)
        energies.append([
            level,
            lu.energy_h if lu else math.nan, st.energy_h if st else math.nan,
            lu.lambda_h if lu else math.nan, st.lambda_h if st else math.nan,
        ])

    if out is not None:
        header = [f.name for f in dataclasses.fields(ConvergenceRecord)]
        for method in ("lumped", "standard"):
            write_csv(out / f"convergence_{method}.csv", header,
                      [[getattr(r, c) for c in header] for r in records[method]])
        write_csv(out / "energies.csv", ["level", "energy_lumped", "energy_standard", "lambda_lumped", "lambda_standard"], energies)
        if ref is not None:
            write_trace_csv(ref, out / "traces" / f"trace_reference_L{ref_level}.csv")
        manifest = dict(
            command="convergence",
            config=config.to_dict(),
            reference=dict(
                level=ref_level,
                energy=ref.energy_h if ref else None,
                eigenvalue=ref.lambda_h if ref else None,
                iterations=ref.iterations if ref else None,
                residual=ref.residual if ref else None,
                converged=ref.converged if ref else False,
                warm_started=start is not None,
                wall_time=ref_time,
            ),
            seeds=dict(config=config.seed, potential=config.potential.seed),
            versions=_versions(),
            failures=failures,
        )
        write_json(out / "manifest.json", manifest)
    return ConvergenceResult(records, ref, energies, failures, sols)


# -- verification -------------------------------------------------------------------------

def _rel(a: float, b: float) -> float:
    return abs(a - b) / max(abs(b), 1e-300)


def run_verification(config: ExperimentConfig, out: Optional[Path] = None) -> list[verify.CheckRow]:
    """Structural checks on a coarse level of the configured experiment."""
    rows: list[verify.CheckRow] = []
    add = lambda check, param, value, ok: rows.append(verify.CheckRow(check, str(param), float(value), bool(ok)))
    level = config.verify_level if config.verify_level is not None else config.levels[0]
    scan_levels = list(range(level, level + 4))
    struct_levels = sorted(set(range(1, 6)) | set(scan_levels))
    meshes = meshes_for(config, struct_levels)
    rng_seed = np.random.SeedSequence(config.seed)
    seeds = [int(s.generate_state(1)[0]) for s in rng_seed.spawn(8)]

    for L in struct_levels:
        S = assembly.assemble_stiffness(meshes[L])
        if S.shape[0] == 0:
            continue
        mm = assembly.is_m_matrix(S)
        add("m_matrix", f"level={L}", 1.0 if mm.holds else 0.0, mm.holds)
        irr = assembly.is_irreducible(S)
        add("irreducible", f"level={L}", 1.0 if irr else 0.0, irr)
        if L <= 5:
            ok, slack = verify.picone_trials(S, config.picone_trials, seeds[0] + L)
            add("picone", f"level={L},trials={config.picone_trials}", slack, ok)

    data = make_problem(config, meshes[level], level)
    E0 = energy_coeffs(initial_guess(data).interior, data)
    sb = step_bound(data, E0)
    add("step_bound", "bound", sb.bound, sb.bound > 0)
    add("step_bound", "C1", sb.C1, sb.C1 > 0)
    add("step_bound", "C2", sb.C2, sb.C2 > 0)

    sol = solve_ground_state(data, config.lumped)
    u = sol.u.interior
    add("ground_state", "residual", sol.residual, sol.converged)
    add("ground_state", "min_coeff", u.min(), u.min() > 0)
    descent = all(r.energy_change < 0 for r in sol.trace[1:])
    add("ground_state", "strict_descent", 1.0 if descent else 0.0, descent)
    ident = 2 * sol.energy_h + 0.5 * data.kappa * quartic_lumped(u, data)
    add("identity", "lambda=2E+kappa/2*q", _rel(ident, sol.lambda_h), _rel(ident, sol.lambda_h) <= 1e-12)

    eigs = linearized_eigs(sol.u, data, 2)
    mu1, v1 = eigs[0]
    add("linearized_eigs", "mu1_vs_lambda", _rel(mu1, sol.lambda_h), _rel(mu1, sol.lambda_h) <= 1e-8)
    if len(eigs) > 1:
        add("linearized_eigs", "gap", eigs[1][0] - mu1, eigs[1][0] - mu1 > 0)

    mres = verify.convex_minimality_check(sol, data, config.minimality_samples, seeds[1])
    add("convex_minimality", f"samples={config.minimality_samples}", mres.min_gap, mres.holds)
    rng = np.random.default_rng(seeds[2])
    bad = dataclasses.replace(sol, u=sol.u * 1.0)
    bad.u.coeffs[sol.u.mesh.interior_nodes] *= 1.0 + 0.3 * rng.uniform(-1.0, 1.0, u.size)
    neg = verify.convex_minimality_check(bad, data, config.minimality_samples, seeds[1])
    add("convex_minimality_negative_control", f"samples={config.minimality_samples}", neg.min_gap, not neg.holds)

    ok = verify.nonneg_eigenstate_check([(sol.lambda_h, sol.u), (sol.lambda_h, -sol.u), (mu1, v1)], sol)
    add("nonneg_eigenstate", "candidates=3", 1.0 if ok else 0.0, ok)

    rng = np.random.default_rng(seeds[3])
    M = data.lumped_mass
    dist = 0.0
    for _ in range(3):
        start = sol.u.mesh.zero_function()
        start.coeffs[sol.u.mesh.interior_nodes] = rng.random(u.size)
        other = solve_ground_state(data, config.lumped, initial=start, check_mesh=False)
        dist = max(dist, math.sqrt(float(np.dot(M, (other.u.interior - u) ** 2))))
    add("uniqueness", "starts=3", dist, dist <= 1e-8)

    V = potential_function(config)
    lo, hi = (np.asarray(b, dtype=float) for b in config.box)
    if V is None or isinstance(V, CellPotential):
        mid = 0.5 * (lo + hi)
        V = lambda x: 0.5 * ((np.atleast_2d(x) - mid) ** 2).sum(axis=-1)
    bump = lambda x: np.prod(np.sin(np.pi * (np.atleast_2d(x) - lo) / (hi - lo)), axis=-1)
    scan = verify.lumping_error_scan([meshes[L] for L in scan_levels], V, bump)
    add("lumping_scan", "slope_potential", scan.slope_potential, 1.8 <= scan.slope_potential <= 2.3)
    add("lumping_scan", "slope_cubic", scan.slope_cubic, 1.8 <= scan.slope_cubic <= 2.3)

    problems = [make_problem(config, meshes[L], L) for L in range(level, level + 3)]
    linf = verify.linf_bound_scan(problems, config.lumped)
    for (h0, a), (h1, b) in zip(linf, linf[1:]):
        add("linf_bound", f"h={float(h1)!r}", b, abs(b - a) <= 0.2 * a)

    if out is not None:
        out = Path(out)
        out.mkdir(parents=True, exist_ok=True)
        verify.write_report(rows, out / "verification.csv")
        write_json(out / "manifest.json", dict(
            command="verify", config=config.to_dict(), verify_level=level, scan_levels=scan_levels, structure_levels=struct_levels,
            seeds=dict(config=config.seed, derived=seeds), versions=_versions(),
        ))
    return rows


# -- command line -------------------------------------------------------------------------

def _parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON config file overriding the preset")
    common.add_argument("--preset", choices=sorted(PRESETS), default=None)
    common.add_argument("--quick", action="store_true", help="small unit-square profile (same as --preset quick)")
    common.add_argument("--seed", type=int, default=None, help="seed for the disorder potential and random checks")
    common.add_argument("--out", default="results", help="output directory")
    common.add_argument("--strict-mesh", action="store_true", help="fail on M-matrix or irreducibility violations")
    common.add_argument("-v", "--verbose", action="store_true")

    p = argparse.ArgumentParser(prog="gplump", description=__doc__.split("\n")[0])
    sub = p.add_subparsers(dest="command", required=True)
    s = sub.add_parser("solve", parents=[common], help="ground state on one level")
    s.add_argument("--level", type=int, default=None, help="refinement level (default: finest configured)")
    s.add_argument("--method", choices=["lumped", "standard"], default="lumped")
    sub.add_parser("convergence", parents=[common], help="error tables against a reference solution")
    sub.add_parser("verify", parents=[common], help="structural checks, writes verification.csv")
    e = sub.add_parser("export-mesh", parents=[common], help="write a mesh and its stiffness matrix")
    e.add_argument("--level", type=int, default=None)
    return p


def _config_from_args(args) -> ExperimentConfig:
    preset = "quick" if args.quick else (args.preset or "harmonic")
    return load_config(preset, args.config, args.seed)


def _cmd_solve(args, config: ExperimentConfig) -> int:
    level = args.level if args.level is not None else config.levels[-1]
    mesh = meshes_for(config, [level])[level]
    data = make_problem(config, mesh, level)
    sol = _solve(args.method, data, config, args.strict_mesh)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_trace_csv(sol, out / f"trace_{args.method}_L{level}.csv")
    rows = [list(v) + [c] for v, c in zip(mesh.vertices.tolist(), sol.u.coeffs.tolist())]
    header = [f"x{i}" for i in range(mesh.dim)] + ["u"]
    write_csv(out / f"state_{args.method}_L{level}.csv", header, rows)
    write_json(out / "manifest.json", dict(
        command="solve", config=config.to_dict(), level=level, method=args.method,
        energy=sol.energy_h, eigenvalue=sol.lambda_h, iterations=sol.iterations,
        residual=sol.residual, converged=sol.converged, metadata=sol.metadata,
        seeds=dict(config=config.seed, potential=config.potential.seed), versions=_versions(),
    ))
    print(f"{args.method} level {level}: E_h={float(sol.energy_h)!r} lambda_h={float(sol.lambda_h)!r} "
          f"iterations={sol.iterations} residual={sol.residual:.3e}")
    return EXIT_OK if sol.converged else EXIT_SOLVER


def _cmd_convergence(args, config: ExperimentConfig) -> int:
    res = run_convergence(config, Path(args.out), strict=args.strict_mesh)
    for method, recs in res.records.items():
        print(method)
        print("  level        h     L2 err  eoc    H1 err  eoc     E err  eoc   lam err  eoc  iters")
        for r in recs:
            print(f"  {r.level:5d} {r.h:8.4f} {r.l2_error:10.3e} {r.eoc_l2:4.2f} {r.h1_error:9.3e} {r.eoc_h1:4.2f} "
                  f"{r.energy_error:9.3e} {r.eoc_energy:4.2f} {r.eigenvalue_error:9.3e} {r.eoc_eigenvalue:4.2f} "
                  f"{r.iterations:6d}  {r.status}")
    return EXIT_SOLVER if res.failures else EXIT_OK


def _cmd_verify(args, config: ExperimentConfig) -> int:
    rows = run_verification(config, Path(args.out))
    for r in rows:
        print(f"{'PASS' if r.passed else 'FAIL'}  {r.check} [{r.param}] = {float(r.value)!r}")
    return EXIT_OK if all(r.passed for r in rows) else EXIT_CHECK


def _cmd_export(args, config: ExperimentConfig) -> int:
    level = args.level if args.level is not None else config.levels[0]
    mesh = meshes_for(config, [level])[level]
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_mesh(mesh, out / f"mesh_L{level}.txt")
    assembly.write_matrix(assembly.assemble_stiffness(mesh), out / f"stiffness_L{level}.txt")
    print(f"wrote mesh with {mesh.n_nodes} nodes and {mesh.n_elements} elements to {out}")
    return EXIT_OK


COMMANDS = {"solve": _cmd_solve, "convergence": _cmd_convergence, "verify": _cmd_verify, "export-mesh": _cmd_export}


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        config = _config_from_args(args)
        return COMMANDS[args.command](args, config)
    except MeshHypothesisError as exc:
        print(f"mesh check failed: {exc}", file=sys.stderr)
        return EXIT_CHECK
    except SolverError as exc:
        print(f"solver failed: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    except (ValueError, OSError) as exc:  # includes MeshError
        print(f"invalid input: {exc}", file=sys.stderr)
        return EXIT_CHECK


if __name__ == "__main__":
    sys.exit(main())
