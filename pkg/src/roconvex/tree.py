"""Binary lamination trees and hierarchical rank-one sequence checks.

A tree node carries a deformation gradient F; an internal node splits into a
``minus`` and a ``plus`` child along a rank-one jump, with ``lam`` the volume
fraction of the minus phase:

    F == lam * F_minus + (1 - lam) * F_plus,   rank(F_minus - F_plus) == 1.

The leaves, weighted by the products of branch fractions along their paths,
form the hierarchically rank-one connected sequence realizing the relaxed
energy value at the root.
"""

from __future__ import annotations

import json

import numpy as np

from roconvex import tensor


class LaminateNode:
    """Tree node owning its children; leaves have ``minus is None``."""

    __slots__ = ("F", "depth", "fraction", "energy", "lam", "normal",
                 "direction_index", "minus", "plus")

    def __init__(self, F, depth=0, fraction=1.0, energy=None):
        self.F = np.asarray(F, dtype=float)
        self.depth = depth
        self.fraction = fraction
        self.energy = energy  # W(F), cached by the engine
        self.lam = None
        self.normal = None
        self.direction_index = None
        self.minus = None
        self.plus = None

    @property
    def is_leaf(self):
        return self.minus is None

    @property
    def jump(self):
        """Rank-one jump F_minus - F_plus of the split (None for leaves)."""
        if self.is_leaf:
            return None
        return self.minus.F - self.plus.F

    def split(self, f_minus, f_plus, lam, normal=None, direction_index=None,
              energy_minus=None, energy_plus=None):
        if not 0.0 < lam < 1.0:
            raise ValueError("lam must lie in (0, 1) for a genuine split")
        self.lam = lam
        self.normal = None if normal is None else np.asarray(normal, dtype=float)
        self.direction_index = direction_index
        self.minus = LaminateNode(f_minus, self.depth + 1, self.fraction * lam,
                                  energy_minus)
        self.plus = LaminateNode(f_plus, self.depth + 1,
                                 self.fraction * (1.0 - lam), energy_plus)
        return self.minus, self.plus


def leaf_nodes(root):
    """Depth-first leaves, minus child before plus child."""
    out = []
    stack = [root]
    while stack:
        node = stack.pop()
        if node.is_leaf:
            out.append(node)
        else:
            stack.append(node.plus)
            stack.append(node.minus)
    return out


def leaves(root):
    """H-sequence of the tree: list of (fraction, F) pairs over the leaves."""
    return [(n.fraction, n.F) for n in leaf_nodes(root)]


def depth(root):
    if root.is_leaf:
        return root.depth
    return max(depth(root.minus), depth(root.plus))


def evaluate(root, energy):
    """Convex-combination value sum_i xi * W(F_i) over the leaves."""
    nodes = leaf_nodes(root)
    fs = np.stack([n.F for n in nodes])
    ws = energy.values(fs)
    return float(sum(n.fraction * w for n, w in zip(nodes, ws)))


def derivatives(root, energy, want_hessian=True):
    """Leaf-averaged first and second derivatives of the relaxed density.

    Returns ``(P, A)`` with ``P = sum_i xi * dW/dF(F_i)`` and ``A`` the
    matching fourth-order tangent (or None if not requested).
    """
    nodes = leaf_nodes(root)
    d = root.F.shape[0]
    P = np.zeros((d, d))
    A = np.zeros((d, d, d, d)) if want_hessian else None
    for n in nodes:
        P += n.fraction * energy.gradient(n.F)
        if want_hessian:
            A += n.fraction * energy.hessian(n.F)
    return P, A


def validate_tree(root, rank_tol=1e-8):
    """Assert the structural invariants of every split; raises on violation."""
    scale = max(1.0, tensor.frobenius_norm(root.F))
    stack = [root]
    while stack:
        node = stack.pop()
        if node.is_leaf:
            continue
        recon = node.lam * node.minus.F + (1.0 - node.lam) * node.plus.F
        if np.abs(recon - node.F).max() > 1e-10 * scale:
            raise AssertionError("split does not reconstruct its parent")
        if not tensor.is_rank_one(node.jump, rank_tol):
            raise AssertionError("split jump is not rank one")
        stack.extend((node.minus, node.plus))
    fracs = [n.fraction for n in leaf_nodes(root)]
    if abs(sum(fracs) - 1.0) > 1e-12:
        raise AssertionError("leaf fractions do not sum to one")
    return True


def check_hm(pairs, tol=1e-8, witness=None, max_exhaustive=4):
    """Hierarchical rank-one connectivity of weighted matrices.

    ``pairs`` is a sequence of (xi, F). A single pair always satisfies the
    condition. With a ``witness`` tree, the check verifies the tree structure
    (splits are rank-one, fractions multiply out, the leaf multiset matches).
    Without one, an exhaustive search over contraction orders is run, which
    is only feasible for a handful of matrices (``max_exhaustive``).
    """
    pairs = [(float(xi), np.asarray(F, float)) for xi, F in pairs]
    if not pairs:
        raise ValueError("empty sequence")
    if abs(sum(xi for xi, _ in pairs) - 1.0) > 1e-10:
        return False
    if len(pairs) == 1:
        return True

    if witness is not None:
        try:
            validate_tree(witness, rank_tol=tol)
        except AssertionError:
            return False
        tree_pairs = leaves(witness)
        if len(tree_pairs) != len(pairs):
            return False
        used = [False] * len(pairs)
        for xi, F in tree_pairs:
            for k, (xj, G) in enumerate(pairs):
                if used[k]:
                    continue
                scale = max(1.0, tensor.frobenius_norm(G))
                if abs(xi - xj) <= 1e-10 and np.abs(F - G).max() <= 1e-8 * scale:
                    used[k] = True
                    break
            else:
                return False
        return True

    if len(pairs) > max_exhaustive:
        raise ValueError(
            f"exhaustive search limited to {max_exhaustive} matrices; "
            "pass the lamination tree as witness for longer sequences")
    return _check_hm_exhaustive(pairs, tol)


def _check_hm_exhaustive(pairs, tol):
    if len(pairs) == 1:
        return True
    for i in range(len(pairs)):
        for j in range(i + 1, len(pairs)):
            xi, Fi = pairs[i]
            xj, Fj = pairs[j]
            if not tensor.is_rank_one(Fi - Fj, tol):
                continue
            zeta = xi + xj
            merged = (zeta, (xi * Fi + xj * Fj) / zeta)
            rest = [p for k, p in enumerate(pairs) if k not in (i, j)]
            if _check_hm_exhaustive([merged] + rest, tol):
                return True
    return False


def to_dict(node):
    """JSON-ready nested dict {F, lambda, R, normal, minus, plus}."""
    d = {"F": node.F.tolist()}
    if not node.is_leaf:
        d["lambda"] = node.lam
        d["R"] = node.jump.tolist()
        if node.normal is not None:
            d["normal"] = node.normal.tolist()
        d["minus"] = to_dict(node.minus)
        d["plus"] = to_dict(node.plus)
    return d


def from_dict(d, depth=0, fraction=1.0):
    node = LaminateNode(np.asarray(d["F"], float), depth, fraction)
    if "minus" in d:
        lam = float(d["lambda"])
        node.lam = lam
        node.normal = (np.asarray(d["normal"], float)
                       if "normal" in d else None)
        node.minus = from_dict(d["minus"], depth + 1, fraction * lam)
        node.plus = from_dict(d["plus"], depth + 1, fraction * (1.0 - lam))
    return node


def to_json(node, **kwargs):
    return json.dumps(to_dict(node), **kwargs)


def from_json(s):
    return from_dict(json.loads(s))
