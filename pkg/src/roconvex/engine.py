"""Pointwise relaxation engine.

For an evaluation point F, the engine builds a binary lamination tree: each
leaf is checked along every discretised rank-one direction by sampling the
energy on the admissible segment inside the bounding box, convexifying the
samples, and reading off the envelope value at the leaf. The direction whose
tentative split lowers the whole-tree convex combination the most is
accepted; the two support points become children and are enqueued for
further splitting (breadth first) until no direction improves or the depth
cap is reached.

The result is an upper bound for the rank-one convex envelope that is exact
whenever level-wise optimal laminates are globally optimal.
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass

import numpy as np

from roconvex.backend import lower_hull_sweep
from roconvex.directions import scale_directions_batch
from roconvex.hull import PENALTY, sanitize_samples
from roconvex.tree import LaminateNode, derivatives, leaf_nodes, leaves

#: A split must lower the tree value by more than this (relative) threshold.
SPLIT_RTOL = 1e-10
#: A cached direction is replaced only when beaten by more than this margin.
CONTINUITY_RTOL = 1e-8
#: Directions are evaluated in blocks of roughly this many samples: large
#: enough to amortize per-call overhead at small N, small enough that a
#: block's line data stays cache resident (one direction per block at large
#: N, where streaming dominates).
BLOCK_SAMPLES = 8192


@dataclass(frozen=True)
class SplitCandidate:
    """Tentative laminate split of one leaf."""

    f_minus: np.ndarray
    f_plus: np.ndarray
    direction_index: int
    lam: float  # volume fraction of the minus phase
    value: float  # whole-tree convex combination if the split is applied
    w_minus: float
    w_plus: float


@dataclass
class RelaxResult:
    value: float  # relaxed energy at F
    unrelaxed: float  # W(F)
    tree: LaminateNode
    pairs: list  # (fraction, F) leaf sequence
    stress: np.ndarray
    tangent: np.ndarray | None
    kernel_calls: int

    @property
    def n_leaves(self):
        return len(self.pairs)

    @property
    def depth(self):
        return max(n.depth for n in leaf_nodes(self.tree))


class DirectionMemory:
    """Per-point store of the last accepted split direction per tree level.

    Re-evaluating a point (e.g. along a loading path) prefers the cached
    direction; a competing direction must win by a hysteresis margin. This
    keeps laminate orientations, and hence the leaf-averaged stresses,
    continuous across successive calls.
    """

    def __init__(self):
        self._store = {}

    def get(self, point_id, level):
        return self._store.get(point_id, {}).get(level)

    def put(self, point_id, level, direction_index):
        self._store.setdefault(point_id, {})[level] = direction_index

    def known_points(self):
        return list(self._store)


def find_best_split(root, leaf, energy, params, dirs, preferred=None):
    """Best lamination candidate for ``leaf``, or None if nothing improves.

    Samples every direction's admissible segment (N points, leaf on the
    grid), convexifies, and forms the whole-tree value with the tentative
    split. ``preferred`` is a direction index favoured with hysteresis.
    """
    current = leaf_nodes(root)
    w_ref = sum(n.fraction * n.energy for n in current)
    xi = leaf.fraction
    w_leaf = leaf.energy
    d = leaf.F.shape[0]
    N = params.N

    delta, i_lo = scale_directions_batch(dirs.matrix_stack, params,
                                         root.F, leaf.F)
    active = np.flatnonzero(delta > 0.0)
    if not len(active):
        return None

    base = np.arange(N, dtype=float)
    eps_split = SPLIT_RTOL * (1.0 + abs(w_ref))
    scan_nonfinite = not getattr(energy, "finite_everywhere", False)
    block = max(BLOCK_SAMPLES // N, 1)
    candidates = []
    best_pref = None
    for start in range(0, len(active), block):
        blk = active[start:start + block]
        ts = (base[None, :] + i_lo[blk][:, None]) * delta[blk][:, None]
        ws = energy.values_on_lines(leaf.F, dirs.matrix_stack[blk], ts)
        if scan_nonfinite:
            bad = ~np.isfinite(ws)
            if bad.any():
                ws[bad] = PENALTY
        for row, k in enumerate(blk):
            t = np.ascontiguousarray(ts[row])
            w = np.ascontiguousarray(ws[row])
            support = lower_hull_sweep(t, w)
            pos0 = -i_lo[k]  # index of the t = 0 sample (the leaf itself)
            j = int(np.searchsorted(support, pos0))
            if support[j] == pos0:
                continue  # leaf is a hull support: convex along this line
            left, right = support[j - 1], support[j]
            w_l, w_r = w[left], w[right]
            if w_l >= 0.5 * PENALTY or w_r >= 0.5 * PENALTY:
                continue  # bracketing support outside the admissible domain
            t_l, t_r = t[left], t[right]
            lam_left = t_r / (t_r - t_l)
            env = lam_left * w_l + (1.0 - lam_left) * w_r
            value = w_ref + xi * (env - w_leaf)
            if value >= w_ref - eps_split:
                continue
            k = int(k)
            R = dirs[k].matrix
            cand = SplitCandidate(
                f_minus=leaf.F + t_r * R,
                f_plus=leaf.F + t_l * R,
                direction_index=k,
                lam=1.0 - lam_left,
                value=value,
                w_minus=w_r,
                w_plus=w_l,
            )
            if k == preferred:
                best_pref = cand
            else:
                candidates.append(cand)

    best = _select_candidate(candidates)
    if best_pref is not None:
        eps_cont = CONTINUITY_RTOL * (1.0 + abs(w_ref))
        if best is None or best.value >= best_pref.value - eps_cont:
            return best_pref
    return best


def _select_candidate(candidates):
    """Lowest candidate value; equal values keep the lowest direction index
    (the candidate list is already in direction order)."""
    best = None
    for cand in candidates:
        if best is None or cand.value < best.value:
            best = cand
    return best


def relax(energy, F, params, memory=None, point_id=None, want_tangent=True):
    """Relaxed energy, lamination tree and derivatives at the point F.

    ``memory``/``point_id`` enable direction continuity across repeated
    calls for the same material point.
    """
    F = np.asarray(F, dtype=float)
    d = F.shape[0]
    dirs = params.direction_set(d)
    use_memory = memory is not None and point_id is not None

    w0 = float(sanitize_samples(energy.values(F[None, :, :]))[0])
    root = LaminateNode(F, depth=0, fraction=1.0, energy=w0)
    kernel_calls = 0

    def kernel(leaf):
        nonlocal kernel_calls
        kernel_calls += 1
        preferred = memory.get(point_id, leaf.depth) if use_memory else None
        return find_best_split(root, leaf, energy, params, dirs, preferred)

    queue = deque([(root, kernel(root))])
    while queue:
        node, cand = queue.popleft()
        if cand is None or node.depth >= params.k_max:
            continue
        minus, plus = node.split(
            cand.f_minus, cand.f_plus, cand.lam,
            normal=dirs[cand.direction_index].normal,
            direction_index=cand.direction_index,
            energy_minus=cand.w_minus, energy_plus=cand.w_plus)
        if use_memory:
            memory.put(point_id, node.depth, cand.direction_index)
        for child in (minus, plus):
            child_cand = kernel(child) if child.depth < params.k_max else None
            queue.append((child, child_cand))

    value = sum(n.fraction * n.energy for n in leaf_nodes(root))
    stress, tangent = derivatives(root, energy, want_hessian=want_tangent)
    return RelaxResult(value=float(value), unrelaxed=w0, tree=root,
                       pairs=leaves(root), stress=stress, tangent=tangent,
                       kernel_calls=kernel_calls)


def rotation_angles(n_rot):
    """Uniform sampling of [0, pi/2): the direction set has square symmetry."""
    return [j * math.pi / (2.0 * n_rot) for j in range(n_rot)]


def rotational_average(energy, F, params, n_rot=16, memory=None, point_id=None):
    """Orientation-averaged relaxed stress and energy (two-dimensional only).

    Averages the pulled-back stress over microstructure orientations: for
    each rotation Q sampling a quarter turn (the direction set has square
    symmetry) the evaluation at Q F contributes Q^T P(Q F), and its mirror
    image, realized by conjugating the load with the axis swap
    S = [[0, 1], [1, 0]], contributes S Q^T P(Q S F S) S. Mirrored laminates
    are energetically equivalent admissible microstructures of an isotropic
    density, and including them makes the sampled orientation family exactly
    closed under the swap, so the average is componentwise symmetric on
    equibiaxial loads regardless of how ties between gauge-equivalent
    laminates were broken. With ``n_rot == 1`` the average degenerates to
    the plain evaluation at F.

    Returns ``(P_rot, W_avg)``.
    """
    F = np.asarray(F, dtype=float)
    if F.shape[0] != 2:
        raise ValueError("rotational averaging is implemented for d = 2 only")
    if not energy.isotropic:
        raise ValueError("rotational averaging requires an isotropic energy")
    if n_rot < 1:
        raise ValueError("n_rot must be >= 1")
    if n_rot == 1:
        res = relax(energy, F, params, memory=memory,
                    point_id=None if point_id is None else (point_id, 0, 0),
                    want_tangent=False)
        return res.stress, res.value

    swap = np.array([[0.0, 1.0], [1.0, 0.0]])
    F_mirror = swap @ F @ swap
    p_sum = np.zeros((2, 2))
    w_sum = 0.0
    for j, theta in enumerate(rotation_angles(n_rot)):
        c, s = math.cos(theta), math.sin(theta)
        Q = np.array([[c, -s], [s, c]])
        pid = None if point_id is None else (point_id, j, 0)
        res = relax(energy, Q @ F, params, memory=memory, point_id=pid,
                    want_tangent=False)
        p_sum += Q.T @ res.stress
        w_sum += res.value
        pid_m = None if point_id is None else (point_id, j, 1)
        res_m = relax(energy, Q @ F_mirror, params, memory=memory,
                      point_id=pid_m, want_tangent=False)
        p_sum += swap @ (Q.T @ res_m.stress) @ swap
        w_sum += res_m.value
    return p_sum / (2 * n_rot), w_sum / (2 * n_rot)
