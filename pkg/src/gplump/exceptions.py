class MeshError(ValueError):
    """Invalid mesh, mesh mismatch or non-nested meshes."""


class MeshHypothesisError(RuntimeError):
    """Stiffness matrix is not an irreducible M-matrix (strict mode)."""


class SolverError(RuntimeError):
    """Linear or nonlinear solver failure."""
