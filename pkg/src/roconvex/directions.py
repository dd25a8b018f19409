"""Discrete rank-one direction sets and per-direction line scaling.

Directions are dyads a (x) b with integer components in {-1, 0, 1}. Parallel
dyads are redundant for line searches, so the set is reduced to one
representative per parallel class (the lexicographically smallest (a, b),
which makes the ordering, and hence every downstream tie-break,
deterministic).

Line sampling is confined to a componentwise (infinity-norm) box of radius
``r`` centered at the root deformation gradient of the current relaxation
call; clipping a line to the box is then a 1-D interval intersection.
"""

from __future__ import annotations

import functools
import itertools
from dataclasses import dataclass, field

import numpy as np


@dataclass(frozen=True)
class Direction:
    """One rank-one direction: the dyad matrix of a (x) b plus its normal b."""

    a: tuple
    b: tuple
    matrix: np.ndarray
    normal: np.ndarray  # unit b, the lamination interface normal


@dataclass(frozen=True)
class DirectionSet:
    dim: int
    directions: tuple
    matrix_stack: np.ndarray = field(default=None, repr=False)  # (n, d*d)

    def __post_init__(self):
        if self.matrix_stack is None:
            stack = np.stack([d.matrix.ravel() for d in self.directions])
            object.__setattr__(self, "matrix_stack", stack)

    def __len__(self):
        return len(self.directions)

    def __iter__(self):
        return iter(self.directions)

    def __getitem__(self, k):
        return self.directions[k]


def _nonzero_sign_vectors(d):
    return [v for v in itertools.product((-1, 0, 1), repeat=d) if any(v)]


def raw_dyads(d):
    """All dyads a (x) b with nonzero sign vectors a, b (before dedup)."""
    vs = _nonzero_sign_vectors(d)
    return [(a, b) for a in vs for b in vs]


def _parallel(m1, m2):
    """True iff m2 == s * m1 for some scalar s != 0."""
    flat1 = m1.ravel()
    flat2 = m2.ravel()
    k = int(np.argmax(np.abs(flat1)))
    if flat1[k] == 0.0:
        return False
    s = flat2[k] / flat1[k]
    return s != 0.0 and np.array_equal(flat2, s * flat1)


@functools.lru_cache(maxsize=None)
def build_direction_set(d):
    """Deduplicated direction set for dimension d (2 or 3).

    Iterates dyads in lexicographic (a, b) order and keeps the first
    representative of each parallel class.
    """
    if d not in (2, 3):
        raise ValueError(f"unsupported dimension {d}")
    kept = []
    for a, b in sorted(raw_dyads(d)):
        m = np.outer(np.asarray(a, float), np.asarray(b, float))
        if any(_parallel(k.matrix, m) for k in kept):
            continue
        n = np.asarray(b, float)
        kept.append(Direction(a=a, b=b, matrix=m, normal=n / np.linalg.norm(n)))
    return DirectionSet(dim=d, directions=tuple(kept))


@dataclass(frozen=True)
class ConvexifyParams:
    """Parameters of one relaxation call.

    N      -- samples per one-dimensional convexification (>= 2)
    r      -- bounding-box radius (infinity norm, centered at the root F)
    k_max  -- maximum lamination tree depth
    directions -- optional DirectionSet; built from the dimension if None
    """

    N: int
    r: float
    k_max: int = 10
    directions: DirectionSet | None = field(default=None)

    def __post_init__(self):
        if self.N < 2:
            raise ValueError("N must be >= 2")
        if self.r <= 0.0:
            raise ValueError("r must be positive")
        if self.k_max < 1:
            raise ValueError("k_max must be >= 1")

    def direction_set(self, dim):
        if self.directions is not None:
            if self.directions.dim != dim:
                raise ValueError("direction set dimension mismatch")
            return self.directions
        return build_direction_set(dim)


def scale_directions_batch(matrix_stack, params, F_root, F_eval):
    """Step sizes and index ranges for a whole stack of directions at once.

    For each direction R (a row of ``matrix_stack``, flattened), the
    admissible parameter interval [t_lo, t_hi] along +-R inside the box of
    radius ``params.r`` around ``F_root`` is covered by exactly ``params.N``
    uniform samples with the i = 0 sample placed on ``F_eval``. The sample
    count on each side of zero is split proportionally to the two interval
    lengths, so the spacing is the largest that keeps every sample inside
    the box.

    Returns ``(delta, i_lo)`` arrays; ``i_hi = i_lo + N - 1`` and
    ``delta == 0`` flags a direction with no admissible extent.
    """
    N, r = params.N, params.r
    offset = (np.asarray(F_eval, float) - np.asarray(F_root, float)).ravel()
    if np.abs(offset).max() > r * (1.0 + 1e-12) + 1e-15:
        raise ValueError("evaluation point outside the bounding box")

    with np.errstate(divide="ignore", invalid="ignore"):
        lo = (-r - offset) / matrix_stack
        hi = (r - offset) / matrix_stack
    neg = matrix_stack < 0.0
    lo2 = np.where(neg, hi, lo)
    hi2 = np.where(neg, lo, hi)
    zero = matrix_stack == 0.0
    lo2[zero] = -np.inf
    hi2[zero] = np.inf
    t_lo = np.minimum(lo2.max(axis=1), 0.0)  # t = 0 is always admissible
    t_hi = np.maximum(hi2.min(axis=1), 0.0)
    span = t_hi - t_lo

    good = np.isfinite(span) & (span > 0.0)
    delta = np.zeros(len(matrix_stack))
    i_lo = np.zeros(len(matrix_stack), dtype=np.intp)
    if good.any():
        n_minus = np.clip(np.round(-t_lo[good] / span[good] * (N - 1)),
                          0, N - 1).astype(np.intp)
        n_plus = (N - 1) - n_minus
        with np.errstate(divide="ignore", invalid="ignore"):
            d_minus = np.where(n_minus > 0, -t_lo[good] / n_minus, np.inf)
            d_plus = np.where(n_plus > 0, t_hi[good] / n_plus, np.inf)
        d = np.minimum(d_minus, d_plus)
        ok = np.isfinite(d) & (d > 0.0)
        rows = np.flatnonzero(good)[ok]
        delta[rows] = d[ok]
        i_lo[rows] = -n_minus[ok]
    return delta, i_lo


def scale_direction(R, params, F_root, F_eval):
    """Single-direction version of :func:`scale_directions_batch`.

    Returns ``(delta, i_min, i_max)`` with ``i_max - i_min + 1 == N``;
    ``delta == 0`` signals a direction with no admissible extent.
    """
    stack = np.asarray(R, float).reshape(1, -1)
    delta, i_lo = scale_directions_batch(stack, params, F_root, F_eval)
    if delta[0] == 0.0:
        return 0.0, 0, 0
    return float(delta[0]), int(i_lo[0]), int(i_lo[0]) + params.N - 1
