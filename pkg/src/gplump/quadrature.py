"""Symmetric quadrature rules on the reference simplex.

Rules are returned as barycentric points (q, d+1) and weights (q,) that sum
to one, so an integral over an element K is ``|K| * sum(w * f(points))``.
"""
from functools import lru_cache

import numpy as np


def _perm3(a: float) -> list[tuple[float, float, float]]:
    b = 1.0 - 2.0 * a
    return [(a, a, b), (a, b, a), (b, a, a)]


@lru_cache(maxsize=None)
def simplex_rule(dim: int, degree: int) -> tuple[np.ndarray, np.ndarray]:
    """Rule exact for polynomials up to ``degree`` on a ``dim``-simplex."""
    if degree < 0:
        raise ValueError("degree must be non-negative")
    if dim == 1:
        npts = max(1, (degree + 2) // 2)
        x, w = np.polynomial.legendre.leggauss(npts)
        s = 0.5 * (x + 1.0)
        return np.column_stack([1.0 - s, s]), 0.5 * w
    if dim != 2:
        raise ValueError(f"no quadrature rules for dim={dim}")
    if degree <= 1:
        return np.array([[1 / 3, 1 / 3, 1 / 3]]), np.array([1.0])
    if degree == 2:
        return np.array(_perm3(1 / 6)), np.full(3, 1 / 3)
    if degree <= 4:
        # Dunavant, 6 points
        a1, w1 = 0.44594849091596488632, 0.22338158967801146570
        a2, w2 = 0.09157621350977074346, 0.10995174365532186764
        pts = _perm3(a1) + _perm3(a2)
        return np.array(pts), np.array([w1] * 3 + [w2] * 3)
    if degree == 5:
        s15 = np.sqrt(15.0)
        a1, a2 = (6 - s15) / 21, (6 + s15) / 21
        w1, w2 = (155 - s15) / 1200, (155 + s15) / 1200
        pts = [(1 / 3, 1 / 3, 1 / 3)] + _perm3(a1) + _perm3(a2)
        return np.array(pts), np.array([9 / 40] + [w1] * 3 + [w2] * 3)
    raise ValueError(f"unsupported quadrature degree {degree} for triangles (max 5)")


def physical_points(mesh, bary: np.ndarray) -> np.ndarray:
    """(nt, q, d) coordinates of the quadrature points in every element."""
    x = mesh.vertices[mesh.elements]  # (nt, d+1, d)
    return np.einsum("qi,eid->eqd", bary, x)
