"""Microstructure reconstruction from a lamination tree.

The tree's splits define a nested stripe pattern on the periodic reference
cell [0, 1]^d: at a node with minus fraction ``lam``, interface normal ``n``
and oscillation scale ``eps``, a point x belongs to the plus phase when the
fractional part of x.n / eps falls in [0, 1 - lam). Each level oscillates a
factor ``level_ratio`` faster than its parent so that nested laminates stay
visually separated.

The piecewise-constant lamination gradient is turned into a displacement
field by an L2 gradient projection with periodic boundary conditions: Q1
elements on a structured grid, matrix-free conjugate gradients, zero-mean
constraint by deflation. The (affine) cell average of the gradient is
incompatible with periodicity and is reported separately.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

from roconvex.tree import leaf_nodes


def split_normal(node):
    if node.normal is not None:
        return node.normal
    # Fall back to the right singular vector of the rank-one jump.
    _, _, vt = np.linalg.svd(node.jump)
    return vt[0]


def level_scale(eps, level, level_ratio):
    return eps / level_ratio**level


def coefficient(x, root, eps, level_ratio=8.0):
    """Lamination gradient at a single cell point by the literal recursion
    over per-level stripe offsets."""
    x = np.asarray(x, dtype=float)

    def recurse(node):
        if node.is_leaf:
            return np.zeros_like(root.F)
        n = split_normal(node)
        e = level_scale(eps, node.depth, level_ratio)
        s = x @ n / e
        frac = s - np.floor(s)
        if frac < 1.0 - node.lam:
            return -node.lam * node.jump + recurse(node.plus)
        return (1.0 - node.lam) * node.jump + recurse(node.minus)

    return root.F + recurse(root)


def leaf_assignment(root, points, eps, level_ratio=8.0):
    """Vectorized leaf index per point plus the table of leaf gradients.

    Returns ``(indices, table)`` with ``table[indices]`` the coefficient
    field (each point receives the deformation gradient of its leaf).
    """
    points = np.asarray(points, dtype=float)
    nodes = leaf_nodes(root)
    order = {id(n): k for k, n in enumerate(nodes)}
    table = np.stack([n.F for n in nodes])
    idx = np.empty(len(points), dtype=np.intp)

    def recurse(node, sel):
        if not sel.size:
            return
        if node.is_leaf:
            idx[sel] = order[id(node)]
            return
        n = split_normal(node)
        e = level_scale(eps, node.depth, level_ratio)
        s = points[sel] @ n / e
        frac = s - np.floor(s)
        plus_mask = frac < 1.0 - node.lam
        recurse(node.plus, sel[plus_mask])
        recurse(node.minus, sel[~plus_mask])

    recurse(root, np.arange(len(points)))
    return idx, table


def cell_centers(m, dim):
    axes = [(np.arange(m) + 0.5) / m] * dim
    grid = np.meshgrid(*axes, indexing="ij")
    return np.stack([g.ravel() for g in grid], axis=1)


def node_coordinates(m, dim):
    axes = [np.arange(m) / m] * dim
    grid = np.meshgrid(*axes, indexing="ij")
    return np.stack([g.ravel() for g in grid], axis=1)


def phase_fractions(root, m, eps, level_ratio=8.0):
    """Grid-counted volume fraction per leaf (cell-center sampling)."""
    dim = root.F.shape[0]
    idx, table = leaf_assignment(root, cell_centers(m, dim), eps, level_ratio)
    counts = np.bincount(idx, minlength=len(table))
    return counts / counts.sum()


# -- periodic Q1 gradient projection ----------------------------------------

def _corner_offsets(dim):
    return list(itertools.product((0, 1), repeat=dim))


def _gauss_points_1d():
    g = 1.0 / np.sqrt(3.0)
    return np.array([0.5 - 0.5 * g, 0.5 + 0.5 * g])


def _shape_gradients(dim, xi):
    """Reference-cell Q1 shape gradients at point xi, shape (2^dim, dim)."""
    corners = _corner_offsets(dim)
    grads = np.empty((len(corners), dim))
    for a, off in enumerate(corners):
        for k in range(dim):
            g = 1.0 if off[k] else -1.0
            for j in range(dim):
                if j == k:
                    continue
                g *= xi[j] if off[j] else 1.0 - xi[j]
            grads[a, k] = g
    return grads


def _quadrature(dim):
    pts_1d = _gauss_points_1d()
    pts = [np.array(p) for p in itertools.product(pts_1d, repeat=dim)]
    weight = 1.0 / len(pts)
    return pts, weight


def _element_stiffness(dim):
    """Reference-cell integral of grad(phi_a) . grad(phi_b)."""
    pts, weight = _quadrature(dim)
    n = 2**dim
    K = np.zeros((n, n))
    for xi in pts:
        G = _shape_gradients(dim, xi)
        K += weight * G @ G.T
    return K


class PeriodicStiffness:
    """Matrix-free periodic Q1 Laplacian on a structured grid (stencil form)."""

    def __init__(self, m, dim, h):
        self.m, self.dim = m, dim
        self.scale = h ** (dim - 2)
        Ke = _element_stiffness(dim)
        offsets = np.array(_corner_offsets(dim))
        stencil = {}
        for a, oa in enumerate(offsets):
            for b, ob in enumerate(offsets):
                s = tuple(oa - ob)
                stencil[s] = stencil.get(s, 0.0) + Ke[a, b]
        self.stencil = stencil

    def apply(self, v):
        out = np.zeros_like(v)
        for shift, coeff in self.stencil.items():
            out += coeff * np.roll(v, shift, axis=tuple(range(self.dim)))
        return self.scale * out


def _conjugate_gradient(op, b, tol, max_iter):
    x = np.zeros_like(b)
    r = b.copy()
    p = r.copy()
    rr = float((r * r).sum())
    b_norm = np.sqrt(float((b * b).sum()))
    if b_norm == 0.0:
        return x, 0.0, 0
    for it in range(1, max_iter + 1):
        Ap = op.apply(p)
        alpha = rr / float((p * Ap).sum())
        x += alpha * p
        r -= alpha * Ap
        rr_new = float((r * r).sum())
        if np.sqrt(rr_new) <= tol * b_norm:
            return x, np.sqrt(rr_new) / b_norm, it
        p = r + (rr_new / rr) * p
        rr = rr_new
    raise RuntimeError(
        f"projection CG did not converge in {max_iter} iterations "
        f"(relative residual {np.sqrt(rr) / b_norm:.3e})")


@dataclass
class ProjectionResult:
    u: np.ndarray  # nodal displacements, shape (m,)*dim + (dim,)
    mean_gradient: np.ndarray  # cell-average of the lamination gradient
    residual: float
    iterations: int
    grid_m: int


def project(root, m, eps, level_ratio=8.0, tol=1e-8, max_iter=None):
    """Periodic L2 gradient projection of the lamination coefficient field.

    Minimizes 0.5 ||grad(u) - G||^2 over zero-mean periodic fields, where G
    is the coefficient field minus its cell average (the affine part cannot
    be periodic and is returned in ``mean_gradient``).
    """
    dim = root.F.shape[0]
    if m < 4:
        raise ValueError("grid resolution m must be >= 4")
    if eps <= 0.0:
        raise ValueError("eps must be positive")
    h = 1.0 / m
    pts, weight = _quadrature(dim)
    offsets = _corner_offsets(dim)
    base = node_coordinates(m, dim)  # element origin corners

    # Coefficient at all quadrature points: (n_quad, m^dim, dim, dim).
    gvals = []
    for xi in pts:
        idx, table = leaf_assignment(root, base + h * xi, eps, level_ratio)
        gvals.append(table[idx])
    gvals = np.stack(gvals)
    mean_g = gvals.mean(axis=(0, 1))
    gvals -= mean_g

    op = PeriodicStiffness(m, dim, h)
    grid_shape = (m,) * dim
    if max_iter is None:
        max_iter = 40 * m * dim + 200

    u = np.zeros(grid_shape + (dim,))
    residual = 0.0
    iterations = 0
    rhs_scale = weight * h ** (dim - 1)
    for comp in range(dim):
        b = np.zeros(grid_shape)
        for q, xi in enumerate(pts):
            G = _shape_gradients(dim, xi)
            g_row = gvals[q, :, comp, :]  # (m^dim, dim) per-element data
            for a, oa in enumerate(offsets):
                contrib = (g_row @ G[a]).reshape(grid_shape)
                b += rhs_scale * np.roll(contrib, oa, axis=tuple(range(dim)))
        b -= b.mean()
        x, res, it = _conjugate_gradient(op, b, tol, max_iter)
        u[..., comp] = x
        residual = max(residual, res)
        iterations = max(iterations, it)

    return ProjectionResult(u=u, mean_gradient=mean_g, residual=residual,
                            iterations=iterations, grid_m=m)


def nodal_gradient(u):
    """Central-difference gradient of the periodic nodal field, for checks."""
    dim = u.shape[-1]
    m = u.shape[0]
    out = np.empty(u.shape[:-1] + (dim, dim))
    for c in range(dim):
        for k in range(dim):
            fwd = np.roll(u[..., c], -1, axis=k)
            bwd = np.roll(u[..., c], 1, axis=k)
            out[..., c, k] = 0.5 * m * (fwd - bwd)
    return out
