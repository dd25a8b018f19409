"""Energy densities: benchmark functions and the incremental damage potential.

Every model exposes

    value(F)     -> float          (raises InadmissibleDeformation outside the
                                    admissible domain)
    values(Fs)   -> (n,) array     (batch; inadmissible rows become +inf)
    gradient(F)  -> (d, d) array
    hessian(F)   -> (d, d, d, d) array
    admissible(F)-> bool

The batch path is the one the relaxation engine drives along its sampling
lines, so the benchmark models implement it with vectorized numpy.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from roconvex import tensor

SQRT2 = math.sqrt(2.0)


class InadmissibleDeformation(ValueError):
    """Raised when an energy is evaluated outside its admissible domain."""


def _fd_step(F):
    return 1e-6 * (1.0 + tensor.frobenius_norm(F))


def fd_gradient(fn, F, step=None):
    """Central finite-difference gradient of a scalar function of F."""
    F = np.asarray(F, float)
    h = _fd_step(F) if step is None else step
    g = np.zeros_like(F)
    for idx in np.ndindex(F.shape):
        Fp = F.copy()
        Fm = F.copy()
        Fp[idx] += h
        Fm[idx] -= h
        g[idx] = (fn(Fp) - fn(Fm)) / (2.0 * h)
    return g


def fd_hessian(grad_fn, F, step=None):
    """Central finite differences of a gradient function, symmetrized."""
    F = np.asarray(F, float)
    d = F.shape[0]
    h = _fd_step(F) if step is None else step
    A = np.zeros((d, d, d, d))
    for k in range(d):
        for l in range(d):
            Fp = F.copy()
            Fm = F.copy()
            Fp[k, l] += h
            Fm[k, l] -= h
            A[:, :, k, l] = (grad_fn(Fp) - grad_fn(Fm)) / (2.0 * h)
    return 0.5 * (A + A.transpose(2, 3, 0, 1))


def _identity4(d):
    """Fourth-order identity delta_ik delta_jl."""
    eye = np.eye(d)
    return np.einsum("ik,jl->ijkl", eye, eye)


def _det_poly_stack(F, R_stack):
    """Coefficients (low to high order, shape (n, d+1)) of the polynomials
    t -> det(F + t R_k) for a stack of flattened directions R_k, d <= 3."""
    d = F.shape[0]
    R = np.asarray(R_stack, float).reshape(-1, d, d)
    n = len(R)
    if d == 2:
        j1 = (F[0, 0] * R[:, 1, 1] + R[:, 0, 0] * F[1, 1]
              - F[0, 1] * R[:, 1, 0] - R[:, 0, 1] * F[1, 0])
        j2 = R[:, 0, 0] * R[:, 1, 1] - R[:, 0, 1] * R[:, 1, 0]
        return np.column_stack([np.full(n, tensor.det(F)), j1, j2])
    f_cols = [np.broadcast_to(F[:, j], (n, 3)) for j in range(3)]
    r_cols = [R[:, :, j] for j in range(3)]
    coeffs = np.zeros((n, 4))
    for mask in range(8):
        cols = [r_cols[j] if mask >> j & 1 else f_cols[j] for j in range(3)]
        dets = np.einsum("ni,ni->n", cols[0], np.cross(cols[1], cols[2]))
        coeffs[:, bin(mask).count("1")] += dets
    return coeffs


def _polyval_rows(ts, coeffs):
    """Row-wise Horner evaluation: coeffs (n, k+1) low-to-high, ts (n, N)."""
    out = np.full(ts.shape, coeffs[:, -1][:, None])
    for k in range(coeffs.shape[1] - 2, -1, -1):
        out *= ts
        out += coeffs[:, k][:, None]
    return out


def _line_invariants(F, R_stack, ts):
    """|F + t R|^2 as quadratics in t for a stack of directions."""
    f = np.asarray(F, float).ravel()
    R = np.asarray(R_stack, float)
    c0 = float(f @ f)
    c1 = R @ f
    c2 = np.einsum("nk,nk->n", R, R)
    return c0 + 2.0 * c1[:, None] * ts + c2[:, None] * ts * ts


class EnergyDensity:
    """Base class; subclasses override value/values and, where cheap,
    the analytic derivatives."""

    dim = None
    isotropic = False
    #: True when every evaluation is finite (no admissibility constraint),
    #: letting the sampling loop skip its non-finite scan.
    finite_everywhere = False

    def value(self, F):
        raise NotImplementedError

    def values(self, Fs):
        out = np.empty(len(Fs))
        for i, F in enumerate(Fs):
            try:
                out[i] = self.value(F)
            except InadmissibleDeformation:
                out[i] = np.inf
        return out

    def values_on_lines(self, F, R_stack, ts):
        """Batch evaluation along a stack of lines F + ts[k, i] * R_k.

        ``R_stack`` holds flattened directions, one per row of ``ts``. The
        default materializes the sample matrices; models whose invariants
        are polynomial in the line parameter override this, which is what
        keeps the per-direction cost of the sampling loop at the level of
        a few vectorized operations.
        """
        F = np.asarray(F, float)
        n, N = ts.shape
        lines = (F.ravel()[None, None, :]
                 + ts[:, :, None] * np.asarray(R_stack, float)[:, None, :])
        return self.values(lines.reshape(n * N, *F.shape)).reshape(n, N)

    def values_on_line(self, F, R, t):
        """Single-line convenience wrapper around :meth:`values_on_lines`."""
        t = np.asarray(t, float)
        stack = np.asarray(R, float).reshape(1, -1)
        return self.values_on_lines(F, stack, t[None, :])[0]

    def gradient(self, F):
        return fd_gradient(self.value, F)

    def hessian(self, F):
        return fd_hessian(self.gradient, F)

    def admissible(self, F):
        return True

    def envelope(self, F):
        """Analytic relaxed value where known, else None."""
        return None


class KSDEnergy(EnergyDensity):
    """Two-dimensional benchmark: quadratic growth outside a small ball,
    conical inside, with a known rank-one convex envelope."""

    dim = 2
    isotropic = True
    finite_everywhere = True

    def value(self, F):
        n = tensor.frobenius_norm(F)
        if n >= SQRT2 - 1.0:
            return 1.0 + n * n
        return 2.0 * SQRT2 * n

    def values(self, Fs):
        Fs = np.asarray(Fs, float)
        n2 = np.einsum("nij,nij->n", Fs, Fs)
        n = np.sqrt(n2)
        return np.where(n >= SQRT2 - 1.0, 1.0 + n2, 2.0 * SQRT2 * n)

    def values_on_lines(self, F, R_stack, ts):
        n2 = _line_invariants(F, R_stack, ts)
        np.maximum(n2, 0.0, out=n2)
        n = np.sqrt(n2)
        return np.where(n >= SQRT2 - 1.0, 1.0 + n2, 2.0 * SQRT2 * n)

    def gradient(self, F):
        F = np.asarray(F, float)
        n = tensor.frobenius_norm(F)
        if n >= SQRT2 - 1.0:
            return 2.0 * F
        if n == 0.0:
            return np.zeros_like(F)
        return 2.0 * SQRT2 * F / n

    def hessian(self, F):
        F = np.asarray(F, float)
        n = tensor.frobenius_norm(F)
        if n >= SQRT2 - 1.0:
            return 2.0 * _identity4(2)
        if n == 0.0:
            return np.zeros((2, 2, 2, 2))
        return 2.0 * SQRT2 * (_identity4(2) / n
                              - np.einsum("ij,kl->ijkl", F, F) / n**3)

    def envelope(self, F):
        F = np.asarray(F, float)
        n2 = float((F * F).sum())
        dt = abs(tensor.det(F))
        rho = math.sqrt(n2 + 2.0 * dt)
        if rho >= 1.0:
            return 1.0 + n2
        return 2.0 * (rho - dt)


class MultiwellEnergy(EnergyDensity):
    """(|F|^2 - 1)^2: wells on the unit sphere in matrix space."""

    isotropic = True
    finite_everywhere = True

    def __init__(self, dim=3):
        if dim not in (2, 3):
            raise ValueError("dim must be 2 or 3")
        self.dim = dim

    def value(self, F):
        n2 = float((np.asarray(F, float) ** 2).sum())
        return (n2 - 1.0) ** 2

    def values(self, Fs):
        Fs = np.asarray(Fs, float)
        n2 = np.einsum("nij,nij->n", Fs, Fs)
        return (n2 - 1.0) ** 2

    def values_on_lines(self, F, R_stack, ts):
        n2 = _line_invariants(F, R_stack, ts)
        return (n2 - 1.0) ** 2

    def gradient(self, F):
        F = np.asarray(F, float)
        n2 = float((F * F).sum())
        return 4.0 * (n2 - 1.0) * F

    def hessian(self, F):
        F = np.asarray(F, float)
        n2 = float((F * F).sum())
        return (4.0 * (n2 - 1.0) * _identity4(self.dim)
                + 8.0 * np.einsum("ij,kl->ijkl", F, F))

    def envelope(self, F):
        n2 = float((np.asarray(F, float) ** 2).sum())
        return (n2 - 1.0) ** 2 if n2 >= 1.0 else 0.0


class RingWellEnergy(EnergyDensity):
    """2-D nested-minima benchmark in the signed singular values.

    Outer zero-valued wells at nu = (+-3, +-3) surround an inner ring of
    local minima at |nu| = 1; reaching the outer wells from inside requires
    energetically non-optimal intermediate laminates, which a level-wise
    optimal search never selects. Derivatives are finite differences (the
    model is only used for envelope values).
    """

    dim = 2
    isotropic = True
    finite_everywhere = True

    @staticmethod
    def _from_signed(nu1, nu2):
        ring = (np.sqrt(nu1**2 + nu2**2) - 1.0) ** 2 + 1.0
        wells = (nu1 - 3.0) ** 2 * (nu1 + 3.0) ** 2 + \
                (nu2 - 3.0) ** 2 * (nu2 + 3.0) ** 2
        return wells * ring

    def value(self, F):
        nu1, nu2 = tensor.signed_singular_values(F)
        return float(self._from_signed(nu1, nu2))

    def values(self, Fs):
        Fs = np.asarray(Fs, float)
        s = np.linalg.svd(Fs, compute_uv=False)
        dets = Fs[:, 0, 0] * Fs[:, 1, 1] - Fs[:, 0, 1] * Fs[:, 1, 0]
        nu2 = np.where(dets < 0.0, -s[:, 1], s[:, 1])
        return self._from_signed(s[:, 0], nu2)

    def envelope(self, F):
        # Exact relaxed value is 0 inside the ball of radius 3 (reached by
        # combining the outer wells); unknown in closed form outside.
        nu1, nu2 = tensor.signed_singular_values(F)
        if math.hypot(nu1, nu2) <= 3.0:
            return 0.0
        return None


class NeoHookean1(EnergyDensity):
    """Compressible Neo-Hookean strain energy
    mu/2 (I1 - 3) - mu ln J + lam/2 ln(J)^2.

    In two dimensions a plane-strain embedding diag(F, 1) is used, so
    I1 = tr(F^T F) + 1 and the reference state F = I stays stress free.
    """

    isotropic = True

    def __init__(self, mu, lam, dim=3):
        if dim not in (2, 3):
            raise ValueError("dim must be 2 or 3")
        self.mu = mu
        self.lam = lam
        self.dim = dim

    def _i1_offset(self):
        return 1.0 if self.dim == 2 else 0.0

    def admissible(self, F):
        return tensor.det(F) > 0.0

    def value(self, F):
        F = np.asarray(F, float)
        J = tensor.det(F)
        if J <= 0.0:
            raise InadmissibleDeformation("det F must be positive")
        i1 = float((F * F).sum()) + self._i1_offset()
        lnJ = math.log(J)
        return 0.5 * self.mu * (i1 - 3.0) - self.mu * lnJ + 0.5 * self.lam * lnJ**2

    def values(self, Fs):
        Fs = np.asarray(Fs, float)
        if self.dim == 2:
            J = Fs[:, 0, 0] * Fs[:, 1, 1] - Fs[:, 0, 1] * Fs[:, 1, 0]
        else:
            J = np.linalg.det(Fs)
        i1 = np.einsum("nij,nij->n", Fs, Fs) + self._i1_offset()
        out = np.full(len(Fs), np.inf)
        ok = J > 0.0
        lnJ = np.log(J[ok])
        out[ok] = (0.5 * self.mu * (i1[ok] - 3.0) - self.mu * lnJ
                   + 0.5 * self.lam * lnJ**2)
        return out

    def values_on_lines(self, F, R_stack, ts):
        F = np.asarray(F, float)
        i1 = _line_invariants(F, R_stack, ts) + self._i1_offset()
        J = _polyval_rows(ts, _det_poly_stack(F, R_stack))
        out = np.full(ts.shape, np.inf)
        ok = J > 0.0
        lnJ = np.log(J[ok])
        out[ok] = (0.5 * self.mu * (i1[ok] - 3.0) - self.mu * lnJ
                   + 0.5 * self.lam * lnJ**2)
        return out

    def gradient(self, F):
        F = np.asarray(F, float)
        J = tensor.det(F)
        if J <= 0.0:
            raise InadmissibleDeformation("det F must be positive")
        Fit = np.linalg.inv(F).T
        return self.mu * F + (self.lam * math.log(J) - self.mu) * Fit

    def hessian(self, F):
        F = np.asarray(F, float)
        J = tensor.det(F)
        if J <= 0.0:
            raise InadmissibleDeformation("det F must be positive")
        d = self.dim
        Fit = np.linalg.inv(F).T
        A = self.mu * _identity4(d)
        A += self.lam * np.einsum("ij,kl->ijkl", Fit, Fit)
        A -= (self.lam * math.log(J) - self.mu) * np.einsum(
            "il,kj->ijkl", Fit, Fit)
        return A


class NeoHookean2(EnergyDensity):
    """Three-dimensional Neo-Hookean variant with isochoric/volumetric split:
    C1 (Ibar - 3) + (C1/6 + D1/4)(J^2 + 1/J^2 - 2), Ibar = J^(-2/3) I1,
    C1 = mu/2, D1 = lam/2.
    """

    dim = 3
    isotropic = True

    def __init__(self, mu, lam):
        self.c1 = 0.5 * mu
        self.kappa = self.c1 / 6.0 + 0.5 * lam / 4.0

    def admissible(self, F):
        return tensor.det(F) > 0.0

    def value(self, F):
        F = np.asarray(F, float)
        J = tensor.det(F)
        if J <= 0.0:
            raise InadmissibleDeformation("det F must be positive")
        i1 = float((F * F).sum())
        ibar = J ** (-2.0 / 3.0) * i1
        return self.c1 * (ibar - 3.0) + self.kappa * (J**2 + J**-2 - 2.0)

    def values(self, Fs):
        Fs = np.asarray(Fs, float)
        J = np.linalg.det(Fs)
        i1 = np.einsum("nij,nij->n", Fs, Fs)
        return self._from_invariants(i1, J)

    def values_on_lines(self, F, R_stack, ts):
        F = np.asarray(F, float)
        i1 = _line_invariants(F, R_stack, ts)
        J = _polyval_rows(ts, _det_poly_stack(F, R_stack))
        return self._from_invariants(i1, J)

    def _from_invariants(self, i1, J):
        out = np.full(np.shape(J), np.inf)
        ok = J > 0.0
        Jo = J[ok]
        ibar = Jo ** (-2.0 / 3.0) * i1[ok]
        out[ok] = (self.c1 * (ibar - 3.0)
                   + self.kappa * (Jo**2 + Jo**-2 - 2.0))
        return out

    def gradient(self, F):
        F = np.asarray(F, float)
        J = tensor.det(F)
        if J <= 0.0:
            raise InadmissibleDeformation("det F must be positive")
        Fit = np.linalg.inv(F).T
        g = J ** (-2.0 / 3.0)
        ibar = g * float((F * F).sum())
        P = 2.0 * self.c1 * g * F - (2.0 / 3.0) * self.c1 * ibar * Fit
        P += 2.0 * self.kappa * (J**2 - J**-2) * Fit
        return P

    def hessian(self, F):
        F = np.asarray(F, float)
        J = tensor.det(F)
        if J <= 0.0:
            raise InadmissibleDeformation("det F must be positive")
        Fit = np.linalg.inv(F).T
        g = J ** (-2.0 / 3.0)
        ibar = g * float((F * F).sum())
        c1, kap = self.c1, self.kappa
        A = 2.0 * c1 * g * _identity4(3)
        A -= (4.0 / 3.0) * c1 * g * np.einsum("ij,kl->ijkl", F, Fit)
        A -= (4.0 / 3.0) * c1 * g * np.einsum("ij,kl->ijkl", Fit, F)
        A += (4.0 / 9.0) * c1 * ibar * np.einsum("ij,kl->ijkl", Fit, Fit)
        A += (2.0 / 3.0) * c1 * ibar * np.einsum("il,kj->ijkl", Fit, Fit)
        A += 4.0 * kap * (J**2 + J**-2) * np.einsum("ij,kl->ijkl", Fit, Fit)
        A -= 2.0 * kap * (J**2 - J**-2) * np.einsum("il,kj->ijkl", Fit, Fit)
        return A


# -- scalar continuum damage ------------------------------------------------

@dataclass(frozen=True)
class DamageParams:
    """Exponential damage law parameters and Lame constants of the
    effective strain energy."""

    D0: float
    Dinf: float
    mu: float
    lam: float

    def __post_init__(self):
        if not 0.0 < self.Dinf < 1.0:
            raise ValueError("Dinf must lie in (0, 1)")
        if self.D0 <= 0.0:
            raise ValueError("D0 must be positive")


@dataclass
class DamageState:
    """Converged state of the previous increment."""

    alpha_k: float
    F_k: np.ndarray

    def __post_init__(self):
        if self.alpha_k < 0.0:
            raise ValueError("alpha_k must be nonnegative")
        self.F_k = np.asarray(self.F_k, float)


def damage_D(alpha, params):
    """Damage function D(alpha) = Dinf (1 - exp(-alpha / D0))."""
    return params.Dinf * (1.0 - np.exp(-np.asarray(alpha) / params.D0))


def damage_D_prime(alpha, params):
    return params.Dinf / params.D0 * np.exp(-np.asarray(alpha) / params.D0)


def damage_Dbar(alpha, params):
    """Antiderivative of D with Dbar(0) = 0."""
    a = np.asarray(alpha)
    return params.Dinf * (a + params.D0 * np.exp(-a / params.D0) - params.D0)


def condensed_update(F, state, params, psi0):
    """Internal-variable update and incremental potential value at F.

    Stationarity of the increment in alpha reads D'(alpha) (alpha - psi0(F))
    = 0, so with irreversibility alpha_new = max(alpha_k, psi0(F)). Returns
    (alpha_new, W_inc) with W_inc the incremental potential at alpha_new.
    """
    psi0_F = psi0.value(F)
    alpha_new = max(state.alpha_k, psi0_F)
    W_inc = _increment_value(psi0_F, psi0.value(state.F_k), alpha_new,
                             state.alpha_k, params)
    return alpha_new, W_inc


def _increment_value(psi0_F, psi0_Fk, alpha, alpha_k, params):
    Da, Dk = damage_D(alpha, params), damage_D(alpha_k, params)
    return ((1.0 - Da) * psi0_F - (1.0 - Dk) * psi0_Fk
            + alpha * Da - alpha_k * Dk
            - damage_Dbar(alpha, params) + damage_Dbar(alpha_k, params))


class DamagePotential(EnergyDensity):
    """Incremental stress potential of the scalar damage model, condensed
    over the internal variable. This is the (generally nonconvex) density
    handed to the relaxation engine for one fixed increment."""

    isotropic = True

    def __init__(self, psi0, params, state):
        self.psi0 = psi0
        self.params = params
        self.state = state
        self.dim = psi0.dim
        self._psi0_Fk = psi0.value(state.F_k)

    def admissible(self, F):
        return self.psi0.admissible(F)

    def update(self, F):
        return condensed_update(F, self.state, self.params, self.psi0)

    def value(self, F):
        psi0_F = self.psi0.value(F)
        alpha = max(self.state.alpha_k, psi0_F)
        return _increment_value(psi0_F, self._psi0_Fk, alpha,
                                self.state.alpha_k, self.params)

    def values(self, Fs):
        return self._condense(self.psi0.values(Fs))

    def values_on_lines(self, F, R_stack, ts):
        return self._condense(self.psi0.values_on_lines(F, R_stack, ts))

    def _condense(self, psi0_vals):
        out = np.full(psi0_vals.shape, np.inf)
        ok = np.isfinite(psi0_vals)
        pv = psi0_vals[ok]
        alpha = np.maximum(self.state.alpha_k, pv)
        out[ok] = _increment_value(pv, self._psi0_Fk, alpha,
                                   self.state.alpha_k, self.params)
        return out

    def gradient(self, F):
        # Envelope theorem: the alpha-derivative vanishes at the minimizer.
        psi0_F = self.psi0.value(F)
        alpha = max(self.state.alpha_k, psi0_F)
        return (1.0 - damage_D(alpha, self.params)) * self.psi0.gradient(F)

    def hessian(self, F):
        psi0_F = self.psi0.value(F)
        alpha = max(self.state.alpha_k, psi0_F)
        H = (1.0 - damage_D(alpha, self.params)) * self.psi0.hessian(F)
        if psi0_F > self.state.alpha_k:
            g = self.psi0.gradient(F)
            H -= damage_D_prime(alpha, self.params) * np.einsum(
                "ij,kl->ijkl", g, g)
        return H


# -- registry ---------------------------------------------------------------

def _make_damage(psi0_cls, p):
    dim = int(p.get("dim", 2))
    params = DamageParams(D0=float(p.get("D0", 0.3)),
                          Dinf=float(p.get("Dinf", 0.9)),
                          mu=float(p.get("mu", 1.0)),
                          lam=float(p.get("lambda", 0.5)))
    if psi0_cls is NeoHookean1:
        psi0 = NeoHookean1(params.mu, params.lam, dim=dim)
    else:
        if dim != 3:
            raise ValueError("damage-nh2 is three-dimensional")
        psi0 = NeoHookean2(params.mu, params.lam)
    F_k = np.asarray(p["F_k"], float) if "F_k" in p else np.eye(dim)
    state = DamageState(alpha_k=float(p.get("alpha_k", 0.0)), F_k=F_k)
    return DamagePotential(psi0, params, state)


_REGISTRY = {
    "ksd": lambda p: KSDEnergy(),
    "multiwell": lambda p: MultiwellEnergy(dim=int(p.get("dim", 3))),
    "fail": lambda p: RingWellEnergy(),
    "damage-nh1": lambda p: _make_damage(NeoHookean1, p),
    "damage-nh2": lambda p: _make_damage(NeoHookean2, p),
}


def model_names():
    return sorted(_REGISTRY)


def make_energy(name, params=None):
    """Instantiate a registered energy density from a JSON parameter block."""
    try:
        factory = _REGISTRY[name]
    except KeyError:
        raise ValueError(f"unknown model {name!r}; known: {model_names()}") from None
    return factory(params or {})
