"""SPD linear solves for the flow.

Small systems are factorized directly every time. Larger ones are solved by
conjugate gradients preconditioned with a *lagged* preconditioner: an exact
sparse factorization (or an AMG hierarchy above ``LAGGED_LU_LIMIT`` unknowns)
of an earlier system matrix, rebuilt once CG needs too many iterations.
Along the flow the system matrix changes only through the density weight, so
the lagged factorization stays an excellent preconditioner.
"""
from __future__ import annotations

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import LinearOperator, cg, splu

from gplump.exceptions import SolverError

REFACTOR_LIMIT = 20_000
DIRECT_LIMIT = 300_000
LAGGED_LU_LIMIT = 1_500_000
SANITY_RELRES = 1e-9


def factorize(A: sp.spmatrix):
    """Sparse LU with a symmetric fill-reducing ordering and diagonal pivots."""
    try:
        return splu(
            sp.csc_matrix(A),
            permc_spec="MMD_AT_PLUS_A",
            diag_pivot_thresh=0.0,
            options=dict(SymmetricMode=True),
        )
    except RuntimeError as exc:  # singular matrix
        raise SolverError(f"factorization failed: {exc}") from exc


def amg_preconditioner(A: sp.spmatrix):
    import pyamg

    ml = pyamg.smoothed_aggregation_solver(sp.csr_matrix(A), symmetry="symmetric")
    return ml.aspreconditioner(cycle="V")


def jacobi_preconditioner(A: sp.spmatrix):
    dinv = 1.0 / A.diagonal()
    return LinearOperator(A.shape, matvec=lambda x: dinv * x)


def solve_method(n: int, method: str = "auto") -> str:
    if method == "auto":
        return "direct" if n <= REFACTOR_LIMIT else "cg"
    if method not in ("direct", "cg"):
        raise ValueError(f"unknown linear solver {method!r}")
    return method


def _pcg(A, b, x0, M, rtol, maxiter=1000):
    count = [0]

    def cb(_):
        count[0] += 1

    x, info = cg(A, b, x0=x0, rtol=rtol, atol=0.0, M=M, maxiter=maxiter, callback=cb)
    return x, info, count[0]


class SpdSolver:
    """Solves with one fixed SPD matrix (used for mass matrices)."""

    def __init__(self, A: sp.spmatrix, method: str = "auto", rtol: float = 1e-13, preconditioner=None):
        self.A = sp.csr_matrix(A)
        self.rtol = rtol
        self.method = "direct" if A.shape[0] <= DIRECT_LIMIT and method != "cg" else "cg"
        if self.method == "direct":
            self._lu = factorize(self.A)
        else:
            self._M = preconditioner if preconditioner is not None else amg_preconditioner(self.A)

    def solve(self, b: np.ndarray, x0=None) -> np.ndarray:
        if self.method == "direct":
            return self._lu.solve(b)
        bnorm = np.linalg.norm(b)
        if bnorm == 0:
            return np.zeros_like(b)
        x, info, _ = _pcg(self.A, b, x0, self._M, self.rtol)
        _check(self.A, x, b, info)
        return x


def _check(A, x, b, info):
    rel = np.linalg.norm(b - A @ x) / max(np.linalg.norm(b), 1e-300)
    if not np.isfinite(rel) or (info != 0 and rel > SANITY_RELRES):
        raise SolverError(f"CG did not converge (info={info}, relres={rel:.2e})")
    return rel


class SystemSequenceSolver:
    """Solves a sequence of slowly varying SPD systems ``A_k x = b_k``."""

    def __init__(self, n: int, method: str = "auto", rtol: float = 1e-13, refresh_after: int = 12):
        self.method = solve_method(n, method)
        self.rtol = rtol
        self.refresh_after = refresh_after
        self.n = n
        self._P = None
        self.factorizations = 0
        self.cg_iterations = 0

    def _build(self, A):
        self.factorizations += 1
        if self.n <= LAGGED_LU_LIMIT:
            lu = factorize(A)
            return LinearOperator(A.shape, matvec=lu.solve, dtype=float)
        return amg_preconditioner(A)

    def solve(self, A: sp.spmatrix, b: np.ndarray, x0=None) -> np.ndarray:
        """Solve ``A x = b``; with a guess ``x0`` the correction is solved for.

        The tolerance then applies to the correction's own right-hand side,
        so the change ``x - x0`` is resolved to full relative accuracy even
        when it is tiny (the flow direction near convergence is such a change).
        """
        if self.method == "direct":
            self.factorizations += 1
            return factorize(A).solve(b)
        if x0 is not None:
            return x0 + self.solve(A, b - A @ x0)
        if not np.any(b):
            return np.zeros_like(b)
        if self._P is None:
            self._P = self._build(A)
        x, info, its = _pcg(A, b, None, self._P, self.rtol)
        self.cg_iterations += its
        if info != 0 or its > self.refresh_after:
            self._P = self._build(A)
            if info != 0:
                x, info, its = _pcg(A, b, x, self._P, self.rtol)
                self.cg_iterations += its
        _check(A, x, b, info)
        return x
