"""P1 stiffness, consistent mass and (weighted) lumped mass matrices.

Matrices are plain ``scipy.sparse.csr_matrix`` objects restricted to the
interior nodes unless ``full=True``; lumped mass matrices are 1D numpy arrays
holding the diagonal. Accumulation is element-major, local-index-minor.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Optional
import weakref

import numpy as np
import scipy.sparse as sp
from scipy.sparse.csgraph import connected_components
from scipy.sparse.linalg import splu

from gplump.exceptions import MeshError
from gplump.mesh import SimplicialMesh


def barycentric_gradients(mesh: SimplicialMesh) -> np.ndarray:
    """(nt, d+1, d) gradients of the P1 basis functions on every element."""
    B = mesh.jacobians
    if np.any(mesh.volumes <= 0.0):
        raise MeshError("degenerate element (zero volume)")
    binv = np.linalg.inv(B)  # rows: gradients of lambda_1..lambda_d
    g = np.empty((mesh.n_elements, mesh.dim + 1, mesh.dim))
    g[:, 1:, :] = binv
    g[:, 0, :] = -binv.sum(axis=1)
    return g


class ElementAssembler:
    """Scatter element matrices into a fixed CSR pattern.

    The pattern (interior x interior, or all nodes when ``full``) and the map
    from element-local entries to CSR slots are computed once per mesh, so
    re-assembling a weighted matrix only costs a ``bincount``.
    """

    def __init__(self, mesh: SimplicialMesh, full: bool = False):
        self.full = full
        t = mesh.elements
        nl = mesh.dim + 1
        idx = np.arange(mesh.n_nodes) if full else mesh.interior_index
        size = mesh.n_nodes if full else mesh.n_interior
        rows = np.repeat(idx[t], nl, axis=1).ravel()
        cols = np.tile(idx[t], (1, nl)).ravel()
        keep = (rows >= 0) & (cols >= 0)
        self.keep = keep
        keys = rows[keep] * size + cols[keep]
        uniq, inverse = np.unique(keys, return_inverse=True)
        self.slot = inverse.ravel()
        r, c = np.divmod(uniq, size)
        indptr = np.zeros(size + 1, dtype=np.int64)
        np.add.at(indptr, r + 1, 1)
        self.indptr = np.cumsum(indptr)
        self.indices = c
        self.shape = (size, size)

    def assemble(self, local: np.ndarray) -> sp.csr_matrix:
        """``local`` has shape (nt, d+1, d+1)."""
        data = np.bincount(self.slot, weights=local.reshape(-1)[self.keep], minlength=self.indices.size)
        return sp.csr_matrix((data, self.indices.copy(), self.indptr.copy()), shape=self.shape)


_assemblers: "weakref.WeakKeyDictionary[SimplicialMesh, dict]" = weakref.WeakKeyDictionary()


def element_assembler(mesh: SimplicialMesh, full: bool = False) -> ElementAssembler:
    cache = _assemblers.setdefault(mesh, {})
    if full not in cache:
        cache[full] = ElementAssembler(mesh, full)
    return cache[full]


def local_stiffness(mesh: SimplicialMesh) -> np.ndarray:
    g = barycentric_gradients(mesh)
    return mesh.volumes[:, None, None] * np.einsum("eid,ejd->eij", g, g)


def local_mass(mesh: SimplicialMesh) -> np.ndarray:
    d = mesh.dim
    ref = (np.ones((d + 1, d + 1)) + np.eye(d + 1)) / ((d + 1) * (d + 2))
    return mesh.volumes[:, None, None] * ref


def assemble_stiffness(mesh: SimplicialMesh, full: bool = False) -> sp.csr_matrix:
    """Stiffness matrix ``S_ij = (grad phi_j, grad phi_i)``."""
    S = element_assembler(mesh, full).assemble(local_stiffness(mesh))
    # symmetrize exactly; element contributions are symmetric up to rounding
    return ((S + S.T) * 0.5).tocsr()


def assemble_consistent_mass(mesh: SimplicialMesh, full: bool = False) -> sp.csr_matrix:
    return element_assembler(mesh, full).assemble(local_mass(mesh))


def assemble_weighted_mass(
    mesh: SimplicialMesh, weight_at_points: np.ndarray, bary: np.ndarray, qweights: np.ndarray,
    full: bool = False,
) -> sp.csr_matrix:
    """Consistent mass weighted by a function sampled at quadrature points.

    ``weight_at_points`` has shape (nt, q); computes
    ``int w phi_i phi_j`` with the given quadrature rule.
    """
    return element_assembler(mesh, full).assemble(weighted_local_mass(mesh.volumes, weight_at_points, bary, qweights))


def weighted_local_mass(volumes, weight_at_points, bary, qweights) -> np.ndarray:
    """Element matrices ``|K| sum_q w_q a_q lambda_i lambda_j``, shape (nt, d+1, d+1)."""
    nl = bary.shape[1]
    outer = (qweights[:, None] * np.einsum("qi,qj->qij", bary, bary).reshape(len(qweights), -1))
    local = (weight_at_points * volumes[:, None]) @ outer
    return local.reshape(-1, nl, nl)


def lumped_weights(mesh: SimplicialMesh) -> np.ndarray:
    """Element-nodal quadrature weights ``|K|/(d+1)``, flattened element-major."""
    return np.repeat(mesh.volumes / (mesh.dim + 1), mesh.dim + 1)


def assemble_lumped_mass(
    mesh: SimplicialMesh,
    weight: Optional[np.ndarray] = None,
    full: bool = False,
    check_nonnegative: bool = False,
) -> np.ndarray:
    """Diagonal of the lumped mass matrix ``M(w)_jj = sum_K |K|/(d+1) w_{K,j}``.

    Parameters
    ----------
    weight : element-nodal vector of length (d+1)*#elements, see
        :func:`gplump.mesh.element_nodal_map`. ``None`` means unit weight.
    check_nonnegative : reject negative weight entries.
    """
    k = mesh.n_elements * (mesh.dim + 1)
    c = lumped_weights(mesh)
    if weight is not None:
        weight = np.asarray(weight, dtype=float)
        if weight.shape != (k,):
            raise ValueError(f"weight must have length {k}, got {weight.shape}")
        if check_nonnegative and np.any(weight < 0):
            raise ValueError("negative entries in lumped-mass weight")
        c = c * weight
    diag = np.bincount(mesh.elements.ravel(), weights=c, minlength=mesh.n_nodes)
    return diag if full else diag[mesh.interior_nodes]


@dataclass
class MMatrixCheck:
    holds: bool
    witness: Optional[tuple[int, int]] = None
    reason: str = ""

    def __bool__(self):
        return self.holds


def _spd_factorizes(A: sp.spmatrix) -> bool:
    """Positive definiteness of a symmetric Z-matrix via a factorization."""
    n = A.shape[0]
    if n == 0:
        return True
    if n <= 2000:
        try:
            np.linalg.cholesky(A.toarray())
            return True
        except np.linalg.LinAlgError:
            return False
    # a Z-matrix is positive definite iff A^{-1} 1 > 0 (nonsingular M-matrix)
    try:
        x = splu(sp.csc_matrix(A)).solve(np.ones(n))
    except RuntimeError:
        return False
    return bool(np.all(np.isfinite(x)) and np.all(x > 0))


def is_m_matrix(S, tol: float = 1e-12) -> MMatrixCheck:
    """Symmetric, positive diagonal, non-positive off-diagonal, positive definite.

    Off-diagonal entries up to ``tol * max(diag)`` are treated as zero.
    """
    S = sp.csr_matrix(S)
    if S.shape[0] != S.shape[1]:
        return MMatrixCheck(False, reason="not square")
    asym = abs(S - S.T)
    if asym.nnz and asym.max() > tol * max(abs(S).max(), 1.0):
        return MMatrixCheck(False, reason="not symmetric")
    diag = S.diagonal()
    if np.any(diag <= 0):
        i = int(np.flatnonzero(diag <= 0)[0])
        return MMatrixCheck(False, (i, i), "non-positive diagonal entry")
    thresh = tol * float(diag.max()) if diag.size else 0.0
    coo = sp.coo_matrix(S)
    off = (coo.row != coo.col) & (coo.data > thresh)
    if np.any(off):
        order = np.lexsort((coo.col[off], coo.row[off]))
        k = order[0]
        return MMatrixCheck(
            False, (int(coo.row[off][k]), int(coo.col[off][k])), "positive off-diagonal entry"
        )
    if not _spd_factorizes(S):
        return MMatrixCheck(False, reason="not positive definite")
    return MMatrixCheck(True)


def is_irreducible(S) -> bool:
    """True iff the graph of nonzero off-diagonal entries is connected."""
    S = sp.csr_matrix(S)
    m = S.shape[0]
    if m <= 1:
        return True
    A = S.copy()
    A.setdiag(0)
    A.eliminate_zeros()
    ncomp, _ = connected_components(A, directed=False)
    return ncomp == 1


def write_matrix(S, path) -> None:
    """Debug dump: ``i j value`` lines, 0-based, sorted by (i, j)."""
    coo = sp.coo_matrix(S)
    order = np.lexsort((coo.col, coo.row))
    with open(path, "w") as fh:
        for k in order:
            fh.write(f"{coo.row[k]} {coo.col[k]} {float(coo.data[k])!r}\n")


def _integrate_barycentric_monomial(alpha: tuple, dim: int) -> float:
    """Exact integral of prod(lambda_i^alpha_i) over the reference simplex."""
    num = math.prod(math.factorial(a) for a in alpha)
    return num / math.factorial(sum(alpha) + dim)


@lru_cache(maxsize=None)
def reference_p2_mass(dim: int) -> np.ndarray:
    """Quadratic Lagrange mass matrix on the reference simplex, integrated exactly.

    Basis order: vertex functions, then edge functions for (0,1), (0,2), ...
    """
    if dim not in (1, 2, 3):
        raise ValueError(f"unsupported dimension d={dim}")
    nb = dim + 1

    def e(*idx):
        a = [0] * nb
        for i in idx:
            a[i] += 1
        return tuple(a)

    # polynomials in barycentric coordinates as {exponent tuple: coefficient}
    basis = [{e(i, i): 2.0, e(i): -1.0} for i in range(nb)]
    basis += [{e(i, j): 4.0} for i in range(nb) for j in range(i + 1, nb)]
    n = len(basis)
    M = np.zeros((n, n))
    for a in range(n):
        for b in range(a, n):
            val = 0.0
            for ea, ca in basis[a].items():
                for eb, cb in basis[b].items():
                    alpha = tuple(x + y for x, y in zip(ea, eb))
                    val += ca * cb * _integrate_barycentric_monomial(alpha, dim)
            M[a, b] = M[b, a] = val
    return M
