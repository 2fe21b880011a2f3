import numpy as np
import pytest
import scipy.sparse as sp

from gplump.exceptions import SolverError
from gplump.linalg import SpdSolver, SystemSequenceSolver, solve_method


def laplacian(n, shift=0.0):
    T = sp.diags([-1, 2 + shift, -1], [-1, 0, 1], shape=(n, n))
    return (sp.kron(sp.eye(n), T) + sp.kron(T, sp.eye(n)) - 2 * sp.eye(n * n) + (2 + shift) * sp.eye(n * n)).tocsr()


def test_solve_method_selection():
    assert solve_method(100) == "direct"
    assert solve_method(10 ** 6) == "cg"
    assert solve_method(100, "cg") == "cg"
    with pytest.raises(ValueError):
        solve_method(10, "qr")


@pytest.mark.parametrize("method", ["direct", "cg"])
def test_spd_solver(method):
    A = laplacian(20)
    b = np.random.default_rng(0).random(A.shape[0])
    x = SpdSolver(A, method, 1e-14).solve(b)
    assert np.linalg.norm(A @ x - b) <= 1e-11 * np.linalg.norm(b)
    assert np.array_equal(SpdSolver(A, "cg").solve(np.zeros_like(b)), np.zeros_like(b))


def test_sequence_solver_warm_start_resolves_small_corrections():
    A = laplacian(30)
    b = np.random.default_rng(1).random(A.shape[0])
    ref = SpdSolver(A, "direct").solve(b)
    s = SystemSequenceSolver(A.shape[0], "cg", 1e-13)
    # a guess that is already almost exact must still be improved
    x0 = ref * (1 + 1e-9)
    x = s.solve(A, b, x0=x0)
    assert np.max(np.abs(x - ref)) <= 1e-13 * np.max(np.abs(ref)) * 10
    assert s.factorizations == 1


def test_sequence_solver_refreshes_preconditioner():
    n = 30
    s = SystemSequenceSolver(n * n, "cg", 1e-13, refresh_after=5)
    b = np.ones(n * n)
    for shift in (0.0, 0.0, 50.0, 50.0):
        A = laplacian(n, shift)
        x = s.solve(A, b)
        assert np.linalg.norm(A @ x - b) <= 1e-11 * np.linalg.norm(b)
    assert s.factorizations == 2
    assert s.cg_iterations > 0


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_cg_breakdown_raises():
    A = sp.csr_matrix(np.diag([1.0, -1.0]))
    with pytest.raises(SolverError):
        SpdSolver(A, "cg", 1e-14, preconditioner=sp.eye(2)).solve(np.ones(2))
    with pytest.raises(SolverError):
        SystemSequenceSolver(2, "cg").solve(A + sp.csr_matrix(np.diag([0.0, 1.0])), np.ones(2))
