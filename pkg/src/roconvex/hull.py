"""Lower convex envelopes of sampled one-dimensional functions.

The sweep exploits the monotone-derivative property of convex functions: a
single pass over the (strictly increasing) abscissae maintains a stack of
support points whose chord slopes are strictly increasing. Collinear points
are dropped, so the support set is minimal. Complexity is O(N) amortized.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from roconvex.backend import lower_hull_sweep

#: Substitute for non-finite samples (e.g. an energy evaluated outside its
#: admissible domain). Large enough that such points never become supports
#: between finite neighbours.
PENALTY = 1e20


@dataclass(frozen=True)
class Hull1D:
    """Lower convex envelope supports: ordinates ``c`` at abscissae ``y``."""

    y: np.ndarray
    c: np.ndarray
    support: np.ndarray  # indices into the input sample arrays

    @property
    def count(self):
        return len(self.y)


def sanitize_samples(w, penalty=PENALTY):
    """Replace non-finite sample values by a large finite penalty."""
    w = np.asarray(w, dtype=float)
    bad = ~np.isfinite(w)
    if bad.any():
        w = w.copy()
        w[bad] = penalty
    return w


def convexify(x, w):
    """Lower convex envelope of samples ``(x[i], w[i])``.

    ``x`` must be strictly increasing with at least two entries. Non-finite
    ``w`` values are replaced by ``PENALTY`` before the sweep.
    """
    x = np.ascontiguousarray(x, dtype=float)
    w = np.ascontiguousarray(sanitize_samples(w), dtype=float)
    if x.ndim != 1 or x.shape != w.shape:
        raise ValueError("x and w must be 1-D arrays of equal length")
    if len(x) < 2:
        raise ValueError("need at least two samples")
    if not np.all(np.diff(x) > 0.0):
        raise ValueError("x must be strictly increasing")
    idx = lower_hull_sweep(x, w)
    return Hull1D(y=x[idx], c=w[idx], support=idx)


def envelope_at(hull, x0):
    """Envelope value and bracketing supports at ``x0``.

    Returns ``(value, left, right, lam)`` with ``x0 == lam * y[left] +
    (1 - lam) * y[right]``. If ``x0`` coincides with a support, ``left ==
    right`` and ``lam == 1``.
    """
    y, c = hull.y, hull.c
    if x0 < y[0] or x0 > y[-1]:
        raise ValueError(f"x0={x0} outside the support range [{y[0]}, {y[-1]}]")
    k = int(np.searchsorted(y, x0))
    if k < len(y) and y[k] == x0:
        return float(c[k]), k, k, 1.0
    left, right = k - 1, k
    lam = (y[right] - x0) / (y[right] - y[left])
    value = lam * c[left] + (1.0 - lam) * c[right]
    return float(value), left, right, float(lam)
