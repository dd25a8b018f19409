import math

import numpy as np
import pytest

from roconvex import tensor
from roconvex.energies import (DamageParams, DamagePotential, DamageState,
                               EnergyDensity, InadmissibleDeformation,
                               KSDEnergy, MultiwellEnergy, NeoHookean1,
                               NeoHookean2, RingWellEnergy, condensed_update,
                               damage_D, damage_Dbar, make_energy,
                               model_names)

FHAT = np.array([[0.2, 0.1], [0.1, 0.3]])


def fd_gradient_local(fn, F, h):
    g = np.zeros_like(F)
    for idx in np.ndindex(F.shape):
        Fp = F.copy()
        Fm = F.copy()
        Fp[idx] += h
        Fm[idx] -= h
        g[idx] = (fn(Fp) - fn(Fm)) / (2 * h)
    return g


def minimize_scalar(fn, lo, hi, tol=1e-12):
    """1-D minimizer over [lo, hi] from function values only.

    Bisects the central-difference slope, which locates a flat quadratic
    minimum far more accurately than value comparison (whose resolution is
    limited to sqrt(machine eps) by the flatness).
    """
    h = 1e-7 * (1.0 + abs(hi - lo))

    def slope(x):
        return (fn(x + h) - fn(x - h)) / (2 * h)

    a, b = lo + h, hi - h
    if slope(a) >= 0.0:
        return lo  # constrained minimum at the left end
    if slope(b) <= 0.0:
        return hi
    for _ in range(200):
        mid = 0.5 * (a + b)
        if b - a < tol:
            return mid
        if slope(mid) < 0.0:
            a = mid
        else:
            b = mid
    return 0.5 * (a + b)


# -- KSD ---------------------------------------------------------------

def test_ksd_values_and_envelope():
    m = KSDEnergy()
    assert m.value(np.zeros((2, 2))) == 0.0
    assert m.envelope(np.zeros((2, 2))) == 0.0
    assert m.value(np.eye(2)) == pytest.approx(3.0)
    assert m.envelope(np.eye(2)) == pytest.approx(3.0)  # rho(I) = 2 >= 1
    assert m.envelope(FHAT) == pytest.approx(0.9, rel=1e-14)


def test_ksd_envelope_below_and_coincidence_region():
    m = KSDEnergy()
    rng = np.random.default_rng(0)
    for _ in range(300):
        F = rng.uniform(-1.5, 1.5, (2, 2))
        w = m.value(F)
        wrc = m.envelope(F)
        assert wrc <= w + 1e-12
        rho = math.sqrt((F * F).sum() + 2 * abs(tensor.det(F)))
        if rho >= 1.0:
            assert wrc == pytest.approx(w, rel=1e-14)


# -- multiwell ----------------------------------------------------------

def test_multiwell_values():
    m3 = MultiwellEnergy(dim=3)
    assert m3.value(np.zeros((3, 3))) == 1.0
    assert m3.envelope(np.zeros((3, 3))) == 0.0
    F = np.eye(3)
    assert m3.value(F) == pytest.approx(4.0)  # (3 - 1)^2
    assert m3.envelope(F) == pytest.approx(4.0)
    m2 = MultiwellEnergy(dim=2)
    w = np.outer([1.0, 0.0], [1.0, 0.0])
    assert m2.value(w) == pytest.approx(0.0)


def test_multiwell_envelope_below():
    m = MultiwellEnergy(dim=3)
    rng = np.random.default_rng(1)
    for _ in range(200):
        F = rng.uniform(-1.0, 1.0, (3, 3))
        assert m.envelope(F) <= m.value(F) + 1e-12
        if (F * F).sum() >= 1.0:
            assert m.envelope(F) == pytest.approx(m.value(F))


# -- ring-well counterexample --------------------------------------------

def test_ringwell_values():
    m = RingWellEnergy()
    # at zero both well terms contribute 81, the ring factor is 2
    assert m.value(np.zeros((2, 2))) == pytest.approx(324.0)
    assert m.value(np.diag([3.0, 3.0])) == pytest.approx(0.0, abs=1e-10)
    F = np.diag([1 / math.sqrt(2.0)] * 2)
    nu1, nu2 = tensor.signed_singular_values(F)
    assert math.hypot(nu1, nu2) == pytest.approx(1.0)
    wells = (nu1 - 3) ** 2 * (nu1 + 3) ** 2 + (nu2 - 3) ** 2 * (nu2 + 3) ** 2
    assert m.value(F) == pytest.approx(wells)  # ring factor is exactly 1
    assert m.envelope(np.zeros((2, 2))) == 0.0
    assert m.envelope(np.diag([5.0, 5.0])) is None


def test_ringwell_isotropy():
    m = RingWellEnergy()
    rng = np.random.default_rng(2)
    for _ in range(100):
        F = rng.uniform(-2.0, 2.0, (2, 2))
        th1, th2 = rng.uniform(0, 2 * np.pi, 2)
        Q1 = np.array([[np.cos(th1), -np.sin(th1)], [np.sin(th1), np.cos(th1)]])
        Q2 = np.array([[np.cos(th2), -np.sin(th2)], [np.sin(th2), np.cos(th2)]])
        assert m.value(Q1 @ F @ Q2) == pytest.approx(m.value(F), rel=1e-10,
                                                     abs=1e-10)


# -- Neo-Hookean --------------------------------------------------------

def test_nh1_reference_state_stress_free():
    for dim in (2, 3):
        m = NeoHookean1(1.0, 0.5, dim=dim)
        F = np.eye(dim)
        assert m.value(F) == pytest.approx(0.0, abs=1e-15)
        assert np.allclose(m.gradient(F), 0.0, atol=1e-14)


def test_nh1_hand_evaluated_value():
    # independent scalar evaluation of the formula at diag(2, 1, 1)
    mu, lam = 0.4, 0.1
    m = NeoHookean1(mu, lam, dim=3)
    F = np.diag([2.0, 1.0, 1.0])
    i1 = 4.0 + 1.0 + 1.0
    J = 2.0
    expected = mu / 2 * (i1 - 3.0) - mu * math.log(J) + lam / 2 * math.log(J) ** 2
    assert m.value(F) == pytest.approx(expected, rel=1e-15)
    assert expected == pytest.approx(0.34676377847193207, rel=1e-12)


def test_nh2_reference_state():
    m = NeoHookean2(0.4, 0.1)
    assert m.value(np.eye(3)) == pytest.approx(0.0, abs=1e-15)
    assert np.allclose(m.gradient(np.eye(3)), 0.0, atol=1e-13)


def test_neo_hookean_inadmissible():
    m2 = NeoHookean1(1.0, 0.5, dim=2)
    bad = np.diag([1.0, -1.0])
    assert not m2.admissible(bad)
    with pytest.raises(InadmissibleDeformation):
        m2.value(bad)
    vals = m2.values(np.stack([np.eye(2), bad]))
    assert np.isfinite(vals[0]) and np.isinf(vals[1])


def random_admissible(rng, dim, spread=0.4):
    while True:
        F = np.eye(dim) + rng.uniform(-spread, spread, (dim, dim))
        if tensor.det(F) > 0.05:
            return F


@pytest.mark.parametrize("model", [
    NeoHookean1(1.0, 0.5, dim=2),
    NeoHookean1(0.4, 0.1, dim=3),
    NeoHookean2(0.4, 0.1),
    MultiwellEnergy(dim=2),
    MultiwellEnergy(dim=3),
])
def test_gradients_match_finite_differences(model):
    rng = np.random.default_rng(4)
    for _ in range(20):
        F = random_admissible(rng, model.dim)
        h = 1e-6 * (1.0 + tensor.frobenius_norm(F))
        fd = fd_gradient_local(model.value, F, h)
        g = model.gradient(F)
        assert np.abs(g - fd).max() <= 1e-5 * (1.0 + np.abs(fd).max())


@pytest.mark.parametrize("model", [
    NeoHookean1(1.0, 0.5, dim=2),
    NeoHookean1(0.4, 0.1, dim=3),
    NeoHookean2(0.4, 0.1),
    MultiwellEnergy(dim=3),
])
def test_hessians_match_fd_of_gradient_and_are_symmetric(model):
    rng = np.random.default_rng(5)
    for _ in range(5):
        F = random_admissible(rng, model.dim)
        H = model.hessian(F)
        assert np.allclose(H, H.transpose(2, 3, 0, 1), atol=1e-8)
        h = 1e-6 * (1.0 + tensor.frobenius_norm(F))
        d = model.dim
        fd = np.zeros_like(H)
        for k in range(d):
            for l in range(d):
                Fp = F.copy()
                Fm = F.copy()
                Fp[k, l] += h
                Fm[k, l] -= h
                fd[:, :, k, l] = (model.gradient(Fp) - model.gradient(Fm)) / (2 * h)
        assert np.abs(H - fd).max() <= 1e-4 * (1.0 + np.abs(fd).max())


def test_values_batch_matches_scalar_loop():
    rng = np.random.default_rng(6)
    for model in (KSDEnergy(), MultiwellEnergy(3), RingWellEnergy(),
                  NeoHookean1(1.0, 0.5, dim=2), NeoHookean2(0.4, 0.1)):
        Fs = np.stack([np.eye(model.dim)
                       + rng.uniform(-0.5, 0.5, (model.dim, model.dim))
                       for _ in range(40)])
        batch = model.values(Fs)
        for F, v in zip(Fs, batch):
            try:
                assert v == pytest.approx(model.value(F), rel=1e-12,
                                          abs=1e-12)
            except InadmissibleDeformation:
                assert np.isinf(v)


def test_values_on_line_matches_matrix_route():
    rng = np.random.default_rng(7)
    models = (KSDEnergy(), MultiwellEnergy(2), MultiwellEnergy(3),
              NeoHookean1(1.0, 0.5, dim=2), NeoHookean1(0.4, 0.1, dim=3),
              NeoHookean2(0.4, 0.1), RingWellEnergy())
    for model in models:
        d = model.dim
        F = np.eye(d) + 0.1 * rng.standard_normal((d, d))
        stack = rng.standard_normal((5, d * d))
        ts = np.linspace(-0.5, 0.5, 21)[None, :] * np.ones((5, 1))
        fast = model.values_on_lines(F, stack, ts)
        ref = EnergyDensity.values_on_lines(model, F, stack, ts)
        finite = np.isfinite(ref)
        assert np.array_equal(np.isfinite(fast), finite)
        assert np.allclose(fast[finite], ref[finite], rtol=1e-10, atol=1e-12)
        # the single-line wrapper agrees with row extraction
        single = model.values_on_line(F, stack[2].reshape(d, d), ts[2])
        both_finite = np.isfinite(single) & finite[2]
        assert np.allclose(single[both_finite], fast[2][both_finite],
                           rtol=1e-12, atol=1e-14)


# -- damage --------------------------------------------------------------

PARAMS = DamageParams(D0=0.3, Dinf=0.9, mu=1.0, lam=0.5)


def test_damage_function_examples():
    assert damage_D(0.0, PARAMS) == 0.0
    assert damage_Dbar(0.0, PARAMS) == pytest.approx(0.0, abs=1e-15)
    assert damage_D(PARAMS.D0, PARAMS) == pytest.approx(
        PARAMS.Dinf * (1.0 - math.exp(-1.0)))
    assert damage_D(80.0 * PARAMS.D0, PARAMS) == pytest.approx(PARAMS.Dinf)


def test_damage_dbar_is_antiderivative():
    alphas = np.linspace(0.0, 2.0, 30)
    h = 1e-6
    for a in alphas[1:]:
        fd = (damage_Dbar(a + h, PARAMS) - damage_Dbar(a - h, PARAMS)) / (2 * h)
        assert fd == pytest.approx(damage_D(a, PARAMS), rel=1e-8)


def make_damage_model(alpha_k=0.0625, dim=2):
    psi0 = NeoHookean1(PARAMS.mu, PARAMS.lam, dim=dim)
    state = DamageState(alpha_k=alpha_k, F_k=np.eye(dim))
    return DamagePotential(psi0, PARAMS, state)


def test_condensed_update_examples():
    model = make_damage_model()
    # reference state: no evolution
    alpha, w = condensed_update(np.eye(2), model.state, PARAMS, model.psi0)
    assert alpha == 0.0625
    assert w == pytest.approx(0.0, abs=1e-15)
    # driving energy above the threshold moves alpha onto psi0
    F = np.diag([1.6, 1.6])
    psi0_F = model.psi0.value(F)
    assert psi0_F > 0.0625
    alpha, _ = condensed_update(F, model.state, PARAMS, model.psi0)
    assert alpha == pytest.approx(psi0_F, rel=1e-15)


def test_condensed_update_matches_numeric_minimization():
    model = make_damage_model()
    rng = np.random.default_rng(8)
    for _ in range(30):
        F = random_admissible(rng, 2, spread=0.6)
        psi0_F = model.psi0.value(F)
        alpha_closed, _ = condensed_update(F, model.state, PARAMS, model.psi0)

        def increment(alpha):
            Da = damage_D(alpha, PARAMS)
            Dk = damage_D(0.0625, PARAMS)
            return ((1 - Da) * psi0_F - (1 - Dk) * model.psi0.value(np.eye(2))
                    + alpha * Da - 0.0625 * Dk
                    - damage_Dbar(alpha, PARAMS) + damage_Dbar(0.0625, PARAMS))

        alpha_num = minimize_scalar(increment, 0.0625, 0.0625 + 5.0)
        assert alpha_closed >= 0.0625  # irreversibility
        assert abs(alpha_closed - alpha_num) <= 1e-8


def test_damage_potential_gradient_and_values():
    model = make_damage_model()
    rng = np.random.default_rng(9)
    for _ in range(20):
        F = random_admissible(rng, 2, spread=0.5)
        h = 1e-6 * (1.0 + tensor.frobenius_norm(F))
        fd = fd_gradient_local(model.value, F, h)
        assert np.abs(model.gradient(F) - fd).max() <= 1e-5 * (1 + np.abs(fd).max())
    Fs = np.stack([random_admissible(rng, 2) for _ in range(20)])
    batch = model.values(Fs)
    for F, v in zip(Fs, batch):
        assert v == pytest.approx(model.value(F), rel=1e-12, abs=1e-12)


def test_damage_zero_increment_at_previous_state():
    model = make_damage_model()
    assert model.value(model.state.F_k) == pytest.approx(0.0, abs=1e-15)


# -- registry ------------------------------------------------------------

def test_registry():
    assert model_names() == ["damage-nh1", "damage-nh2", "fail", "ksd",
                             "multiwell"]
    assert isinstance(make_energy("ksd"), KSDEnergy)
    assert make_energy("multiwell", {"dim": 2}).dim == 2
    dm = make_energy("damage-nh1", {"dim": 2, "mu": 1.0, "lambda": 0.5,
                                    "D0": 0.3, "Dinf": 0.9,
                                    "alpha_k": 0.0625})
    assert isinstance(dm, DamagePotential)
    assert dm.state.alpha_k == 0.0625
    with pytest.raises(ValueError):
        make_energy("nope")
    with pytest.raises(ValueError):
        make_energy("damage-nh2", {"dim": 2})
    with pytest.raises(ValueError):
        DamageParams(D0=0.3, Dinf=1.5, mu=1.0, lam=0.5)
