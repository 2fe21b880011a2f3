"""Simplicial meshes on boxes, uniform red refinement and P1 prolongation.

Node numbering is deterministic: generated grids are numbered lexicographically
by (y, x) and red refinement appends one midpoint per parent edge in sorted
edge-key order, so assembled matrices are bitwise reproducible.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable, Optional, Sequence, Union

import numpy as np

from gplump.exceptions import MeshError


@dataclass(frozen=True, eq=False)
class SimplicialMesh:
    """Conforming simplicial mesh.

    Parameters
    ----------
    vertices : (n, d) array of node coordinates.
    elements : (nt, d+1) array of node indices, positively oriented.
    boundary_mask : (n,) bool array, True on boundary nodes.
    parent : coarser mesh this one was red-refined from, if any.
    parent_element : (nt,) index of the parent element of each child.
    midpoint_edges : (n - n_parent, 2) parent-mesh node pairs; fine node
        ``n_parent + i`` is the midpoint of ``midpoint_edges[i]``.
    box : optional ((a_1..a_d), (b_1..b_d)) bounding box the mesh was built on.
    """

    vertices: np.ndarray
    elements: np.ndarray
    boundary_mask: np.ndarray
    parent: Optional["SimplicialMesh"] = None
    parent_element: Optional[np.ndarray] = None
    midpoint_edges: Optional[np.ndarray] = None
    box: Optional[tuple] = None
    level: int = 0

    def __post_init__(self):
        v = np.ascontiguousarray(self.vertices, dtype=float)
        if v.ndim == 1:
            v = v[:, None]
        t = np.ascontiguousarray(self.elements, dtype=np.int64)
        b = np.ascontiguousarray(self.boundary_mask, dtype=bool)
        for arr in (v, t, b):
            arr.setflags(write=False)
        object.__setattr__(self, "vertices", v)
        object.__setattr__(self, "elements", t)
        object.__setattr__(self, "boundary_mask", b)
        d = v.shape[1]
        if d not in (1, 2, 3):
            raise MeshError(f"unsupported dimension d={d}")
        if t.ndim != 2 or t.shape[1] != d + 1:
            raise MeshError(f"elements must have {d + 1} nodes each, got shape {t.shape}")
        if b.shape != (v.shape[0],):
            raise MeshError("boundary_mask length must equal the vertex count")
        if t.size and (t.min() < 0 or t.max() >= v.shape[0]):
            raise MeshError("element node index out of range")
        if np.any(self.signed_volumes <= 0.0):
            bad = int(np.flatnonzero(self.signed_volumes <= 0.0)[0])
            raise MeshError(f"element {bad} has non-positive volume")

    @property
    def dim(self) -> int:
        return self.vertices.shape[1]

    @property
    def n_nodes(self) -> int:
        return self.vertices.shape[0]

    @property
    def n_elements(self) -> int:
        return self.elements.shape[0]

    @property
    def n_interior(self) -> int:
        return int(self.interior_nodes.size)

    @cached_property
    def interior_nodes(self) -> np.ndarray:
        """Global indices of interior nodes, ascending."""
        return np.flatnonzero(~self.boundary_mask)

    @cached_property
    def interior_index(self) -> np.ndarray:
        """Map global node -> interior enumeration (-1 on boundary nodes)."""
        idx = np.full(self.n_nodes, -1, dtype=np.int64)
        idx[self.interior_nodes] = np.arange(self.interior_nodes.size)
        return idx

    @cached_property
    def jacobians(self) -> np.ndarray:
        """(nt, d, d) matrices whose columns are the edge vectors x_i - x_0."""
        x = self.vertices[self.elements]
        return np.transpose(x[:, 1:, :] - x[:, :1, :], (0, 2, 1))

    @cached_property
    def signed_volumes(self) -> np.ndarray:
        return np.linalg.det(self.jacobians) / math.factorial(self.dim)

    @cached_property
    def volumes(self) -> np.ndarray:
        return np.abs(self.signed_volumes)

    @cached_property
    def h(self) -> float:
        """Maximum element diameter (longest edge)."""
        x = self.vertices[self.elements]
        d = self.dim
        best = 0.0
        for i in range(d + 1):
            for j in range(i + 1, d + 1):
                best = max(best, float(np.max(np.linalg.norm(x[:, i] - x[:, j], axis=1))))
        return best

    @cached_property
    def edges(self) -> np.ndarray:
        """Unique edges as sorted node pairs, in lexicographic order."""
        d = self.dim
        pairs = [self.elements[:, [i, j]] for i in range(d + 1) for j in range(i + 1, d + 1)]
        e = np.sort(np.concatenate(pairs, axis=0), axis=1)
        return np.unique(e, axis=0)

    @cached_property
    def centroids(self) -> np.ndarray:
        return self.vertices[self.elements].mean(axis=1)

    @property
    def measure(self) -> float:
        return float(self.volumes.sum())

    def zero_function(self) -> "FeFunction":
        return FeFunction(self, np.zeros(self.n_nodes))

    def extend(self, interior_values: np.ndarray) -> np.ndarray:
        """Full nodal vector from interior coefficients (zero on the boundary)."""
        full = np.zeros(self.n_nodes)
        full[self.interior_nodes] = interior_values
        return full

    def hierarchy(self, levels: int) -> list["SimplicialMesh"]:
        """``[self, refine(self), ...]`` with ``levels`` refinements."""
        out = [self]
        for _ in range(levels):
            out.append(red_refine(out[-1]))
        return out


@dataclass(eq=False)
class FeFunction:
    """P1 function given by one coefficient per mesh node."""

    mesh: SimplicialMesh
    coeffs: np.ndarray = field(default=None)

    def __post_init__(self):
        if self.coeffs is None:
            self.coeffs = np.zeros(self.mesh.n_nodes)
        self.coeffs = np.asarray(self.coeffs, dtype=float)
        if self.coeffs.shape != (self.mesh.n_nodes,):
            raise MeshError(
                f"expected {self.mesh.n_nodes} coefficients, got shape {self.coeffs.shape}"
            )

    @classmethod
    def from_interior(cls, mesh: SimplicialMesh, values: np.ndarray) -> "FeFunction":
        return cls(mesh, mesh.extend(values))

    @classmethod
    def interpolate(cls, mesh: SimplicialMesh, func: Callable) -> "FeFunction":
        """Nodal interpolant of ``func``, which maps (n, d) points to (n,) values."""
        return cls(mesh, np.asarray(func(mesh.vertices), dtype=float))

    @property
    def interior(self) -> np.ndarray:
        return self.coeffs[self.mesh.interior_nodes]

    def in_v0(self, atol: float = 0.0) -> bool:
        """True if the function vanishes on every boundary node."""
        return bool(np.all(np.abs(self.coeffs[self.mesh.boundary_mask]) <= atol))

    def __neg__(self):
        return FeFunction(self.mesh, -self.coeffs)

    def __mul__(self, c: float):
        return FeFunction(self.mesh, c * self.coeffs)

    __rmul__ = __mul__


def _check_box(box) -> tuple[np.ndarray, np.ndarray]:
    lo, hi = (np.atleast_1d(np.asarray(x, dtype=float)) for x in box)
    if lo.shape != hi.shape or lo.ndim != 1:
        raise MeshError("box must be a pair of equal-length coordinate tuples")
    if np.any(hi <= lo) or not np.all(np.isfinite(np.concatenate([lo, hi]))):
        raise MeshError(f"degenerate box {box!r}")
    return lo, hi


def interval_mesh(a: float, b: float, n: int) -> SimplicialMesh:
    """Uniform mesh of (a, b) with ``n`` intervals."""
    return friedrichs_keller(((a,), (b,)), n)


def friedrichs_keller(box, n_per_axis: int) -> SimplicialMesh:
    """Friedrichs-Keller mesh of an axis-aligned box.

    In 2D every grid square is split along its lower-left to upper-right
    diagonal; in 1D the box is cut into uniform intervals.

    Parameters
    ----------
    box : ((a_1, ..., a_d), (b_1, ..., b_d))
    n_per_axis : number of grid cells per axis, >= 1.
    """
    lo, hi = _check_box(box)
    d = lo.size
    if d == 3:
        raise MeshError("3D mesh generation is not supported; supply a mesh explicitly")
    if d not in (1, 2):
        raise MeshError(f"unsupported dimension d={d}")
    n = int(n_per_axis)
    if n < 1 or n != n_per_axis:
        raise MeshError(f"n_per_axis must be a positive integer, got {n_per_axis!r}")
    box_t = (tuple(lo.tolist()), tuple(hi.tolist()))

    if d == 1:
        x = lo[0] + (hi[0] - lo[0]) * np.arange(n + 1) / n
        x[-1] = hi[0]
        elements = np.column_stack([np.arange(n), np.arange(1, n + 1)])
        bmask = np.zeros(n + 1, dtype=bool)
        bmask[[0, n]] = True
        return SimplicialMesh(x[:, None], elements, bmask, box=box_t)

    t = np.arange(n + 1) / n
    xs = lo[0] + (hi[0] - lo[0]) * t
    ys = lo[1] + (hi[1] - lo[1]) * t
    xs[-1], ys[-1] = hi[0], hi[1]
    # node k = j*(n+1) + i sits at (xs[i], ys[j])
    X, Y = np.meshgrid(xs, ys, indexing="xy")
    vertices = np.column_stack([X.ravel(), Y.ravel()])
    i, j = np.meshgrid(np.arange(n), np.arange(n), indexing="xy")
    v00 = (j * (n + 1) + i).ravel()
    v10 = v00 + 1
    v01 = v00 + n + 1
    v11 = v01 + 1
    lower = np.column_stack([v00, v10, v11])
    upper = np.column_stack([v00, v11, v01])
    elements = np.stack([lower, upper], axis=1).reshape(-1, 3)
    ii, jj = np.meshgrid(np.arange(n + 1), np.arange(n + 1), indexing="xy")
    bmask = ((ii == 0) | (ii == n) | (jj == 0) | (jj == n)).ravel()
    return SimplicialMesh(vertices, elements, bmask, box=box_t)


def red_refine(mesh: SimplicialMesh) -> SimplicialMesh:
    """Uniform red refinement: every simplex is split into 2^d children.

    Parent nodes keep their indices; edge midpoints are appended in sorted
    edge order. Only d <= 2 is supported.
    """
    d = mesh.dim
    if d > 2:
        raise MeshError("red refinement is implemented for d <= 2 only")
    edges = mesh.edges
    n0 = mesh.n_nodes
    mids = 0.5 * (mesh.vertices[edges[:, 0]] + mesh.vertices[edges[:, 1]])
    vertices = np.vstack([mesh.vertices, mids])

    # element-local edge -> midpoint node id
    keys = edges[:, 0] * n0 + edges[:, 1]

    def mid(a, b):
        lo_, hi_ = np.minimum(a, b), np.maximum(a, b)
        return n0 + np.searchsorted(keys, lo_ * n0 + hi_)

    t = mesh.elements
    nt = t.shape[0]
    if d == 1:
        m = mid(t[:, 0], t[:, 1])
        children = np.stack(
            [np.column_stack([t[:, 0], m]), np.column_stack([m, t[:, 1]])], axis=1
        ).reshape(-1, 2)
        bmask = np.concatenate([mesh.boundary_mask, np.zeros(edges.shape[0], dtype=bool)])
    else:
        a, b, c = t[:, 0], t[:, 1], t[:, 2]
        mab, mbc, mca = mid(a, b), mid(b, c), mid(c, a)
        children = np.stack(
            [
                np.column_stack([a, mab, mca]),
                np.column_stack([mab, b, mbc]),
                np.column_stack([mca, mbc, c]),
                np.column_stack([mab, mbc, mca]),
            ],
            axis=1,
        ).reshape(-1, 3)
        # boundary edges belong to exactly one element
        all_pairs = np.sort(
            np.concatenate([t[:, [0, 1]], t[:, [1, 2]], t[:, [2, 0]]], axis=0), axis=1
        )
        counts = np.bincount(
            np.searchsorted(keys, all_pairs[:, 0] * n0 + all_pairs[:, 1]),
            minlength=edges.shape[0],
        )
        bmask = np.concatenate([mesh.boundary_mask, counts == 1])
    parent_element = np.repeat(np.arange(nt), 2 ** d)
    return SimplicialMesh(
        vertices,
        children,
        bmask,
        parent=mesh,
        parent_element=parent_element,
        midpoint_edges=edges,
        box=mesh.box,
        level=mesh.level + 1,
    )


def _prolongate_once(coeffs: np.ndarray, fine: SimplicialMesh) -> np.ndarray:
    e = fine.midpoint_edges
    return np.concatenate([coeffs, 0.5 * (coeffs[e[:, 0]] + coeffs[e[:, 1]])])


def prolongate(v: FeFunction, fine: SimplicialMesh) -> FeFunction:
    """Interpolate a coarse P1 function on a (repeatedly) red-refined mesh."""
    chain = []
    m = fine
    while m is not None and m is not v.mesh:
        chain.append(m)
        m = m.parent
    if m is None:
        raise MeshError("target mesh is not a red refinement of the function's mesh")
    coeffs = v.coeffs
    for level in reversed(chain):
        coeffs = _prolongate_once(coeffs, level)
    return FeFunction(fine, coeffs)


def element_nodal_map(
    mesh: SimplicialMesh,
    v: Union[FeFunction, np.ndarray, Callable],
    *,
    piecewise_constant: bool = False,
) -> np.ndarray:
    """Element-wise nodal evaluations, flattened element-major.

    Entry ``i*(d+1) + j`` holds the value at local node ``j`` of element ``i``.

    ``v`` may be an FeFunction, a nodal vector of length n, or a callable on
    (k, d) points. With ``piecewise_constant=True`` a callable is evaluated at
    element centroids and the value is copied to every node of the element,
    which represents functions that jump across element boundaries.
    """
    if isinstance(v, FeFunction):
        if v.mesh is not mesh:
            raise MeshError("function lives on a different mesh")
        return v.coeffs[mesh.elements].ravel()
    if callable(v):
        if piecewise_constant:
            vals = np.asarray(v(mesh.centroids), dtype=float)
            return np.repeat(vals, mesh.dim + 1)
        pts = mesh.vertices[mesh.elements].reshape(-1, mesh.dim)
        return np.asarray(v(pts), dtype=float).ravel()
    arr = np.asarray(v, dtype=float)
    if arr.shape != (mesh.n_nodes,):
        raise MeshError(f"nodal vector must have length {mesh.n_nodes}")
    return arr[mesh.elements].ravel()


def canonical_form(mesh: SimplicialMesh) -> tuple[np.ndarray, np.ndarray]:
    """Node-order independent representation: sorted coordinates and element sets."""
    order = np.lexsort(mesh.vertices.T[::-1])
    rank = np.empty_like(order)
    rank[order] = np.arange(order.size)
    elems = np.sort(rank[mesh.elements], axis=1)
    elems = elems[np.lexsort(elems.T[::-1])]
    return mesh.vertices[order], elems


def write_mesh(mesh: SimplicialMesh, path) -> None:
    """Plain-text export: ``d n nt`` header, coordinates, elements, boundary nodes."""
    lines = [f"{mesh.dim} {mesh.n_nodes} {mesh.n_elements}"]
    lines += [" ".join(repr(float(c)) for c in row) for row in mesh.vertices]
    lines += [" ".join(str(int(k)) for k in row) for row in mesh.elements]
    lines.append(" ".join(str(int(k)) for k in np.flatnonzero(mesh.boundary_mask)))
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def read_mesh(path) -> SimplicialMesh:
    with open(path) as fh:
        lines = fh.read().split("\n")
    d, n, nt = (int(x) for x in lines[0].split())
    if len(lines) < 2 + n + nt:
        raise MeshError(f"truncated mesh file {path}")
    vertices = np.array([[float(x) for x in ln.split()] for ln in lines[1 : 1 + n]]).reshape(n, d)
    elements = np.array(
        [[int(x) for x in ln.split()] for ln in lines[1 + n : 1 + n + nt]], dtype=np.int64
    ).reshape(nt, d + 1)
    bmask = np.zeros(n, dtype=bool)
    bline = lines[1 + n + nt].split()
    if bline:
        bmask[np.array([int(x) for x in bline])] = True
    return SimplicialMesh(vertices, elements, bmask)


def fk_hierarchy(box, n_base: int, levels: Sequence[int]) -> dict[int, SimplicialMesh]:
    """Meshes for the requested refinement levels of ``friedrichs_keller(box, n_base)``.

    All meshes share one refinement chain, so any coarser one can be
    prolongated to any finer one.
    """
    levels = sorted(set(int(l) for l in levels))
    out = {}
    m = friedrichs_keller(box, n_base)
    for lvl in range(levels[-1] + 1):
        if lvl in levels:
            out[lvl] = m
        if lvl < levels[-1]:
            m = red_refine(m)
    return out
