"""Dense small-matrix helpers for deformation gradients (d = 2 or 3).

All routines operate on plain ``(d, d)`` float arrays. Nothing here is
general-purpose linear algebra; the fixed dimension keeps the per-call cost
in the sub-microsecond range required by the inner convexification loop.
"""

from __future__ import annotations

import numpy as np

#: Relative singular-value cutoff below which a matrix counts as rank one.
RANK_TOL = 1e-10


def as_matrix(m, dim=None):
    """Return ``m`` as a float64 ``(d, d)`` array, validating shape and finiteness."""
    a = np.asarray(m, dtype=float)
    if a.ndim != 2 or a.shape[0] != a.shape[1] or a.shape[0] not in (2, 3):
        raise ValueError(f"expected a 2x2 or 3x3 matrix, got shape {a.shape}")
    if dim is not None and a.shape[0] != dim:
        raise ValueError(f"expected dimension {dim}, got {a.shape[0]}")
    if not np.all(np.isfinite(a)):
        raise ValueError("matrix entries must be finite")
    return a


def frobenius_norm(m):
    m = np.asarray(m, dtype=float)
    return float(np.sqrt((m * m).sum()))


def det(m):
    """Determinant by cofactor expansion (d <= 3)."""
    m = np.asarray(m, dtype=float)
    if m.shape == (2, 2):
        return float(m[0, 0] * m[1, 1] - m[0, 1] * m[1, 0])
    if m.shape == (3, 3):
        return float(
            m[0, 0] * (m[1, 1] * m[2, 2] - m[1, 2] * m[2, 1])
            - m[0, 1] * (m[1, 0] * m[2, 2] - m[1, 2] * m[2, 0])
            + m[0, 2] * (m[1, 0] * m[2, 1] - m[1, 1] * m[2, 0])
        )
    raise ValueError(f"unsupported shape {m.shape}")


def dyad(a, b):
    """Rank-one product a (x) b."""
    return np.outer(np.asarray(a, dtype=float), np.asarray(b, dtype=float))


def signed_singular_values(m):
    """Signed singular values (nu1, nu2) of a 2x2 matrix.

    nu1 >= |nu2| and nu1 * nu2 == det(m): the smaller singular value carries
    the sign of the determinant.
    """
    m = np.asarray(m, dtype=float)
    if m.shape != (2, 2):
        raise ValueError("signed singular values are defined for 2x2 matrices only")
    s = np.linalg.svd(m, compute_uv=False)
    nu1, nu2 = float(s[0]), float(s[1])
    if det(m) < 0.0:
        nu2 = -nu2
    return nu1, nu2


def is_rank_one(m, tol=RANK_TOL):
    """True iff the second singular value is <= tol * largest and the largest > tol."""
    m = np.asarray(m, dtype=float)
    s = np.linalg.svd(m, compute_uv=False)
    return bool(s[0] > tol and s[1] <= tol * s[0])
