import math

import numpy as np
import pytest

from bicoptersim.controller import (
    ControllerConfig,
    EstimatorState,
    control_u,
    error_e1,
    phi,
    psi_term,
    sigma_term,
    xi2,
    xi3,
    xi4,
)
from bicoptersim.model import (
    G2,
    PhysicalParams,
    PlantState,
    SingularInputMap,
    f2,
    g2,
)
from bicoptersim.trajectory import EllipseConfig, ellipse_ref

RNG = np.random.default_rng(7)

CFG_SLOW = ControllerConfig()
CFG_FAST = ControllerConfig(gamma1=1.0, gamma2=1.0, alpha1=1.0, alpha2=1.0)


def rand_state(f_lo=0.2, f_hi=50.0) -> PlantState:
    sgn = 1.0 if RNG.random() < 0.5 else -1.0
    return PlantState(
        x1=RNG.uniform(-5, 5, 2), x2=RNG.uniform(-3, 3, 2),
        x3=np.array([sgn * RNG.uniform(f_lo, f_hi),
                     RNG.uniform(-math.pi, math.pi)]),
        x4=RNG.uniform(-3, 3, 2))


# ---------------------------------------------------------------------------
# elementary stages
# ---------------------------------------------------------------------------

def test_error_e1():
    assert np.array_equal(error_e1(np.zeros(2), np.zeros(2)), [0.0, 0.0])
    assert np.array_equal(error_e1(np.array([1.0, 2.0]),
                                   np.array([1.0, 0.0])), [0.0, 2.0])
    # the ellipse reference starts at the origin, so starting on it
    # zeroes the tracking error
    ref0 = ellipse_ref(0.0, EllipseConfig())
    assert np.abs(error_e1(np.zeros(2), ref0)).max() < 1e-12


def test_xi2():
    assert np.array_equal(xi2(np.array([1.0, 0.0]), CFG_SLOW), [-1.0, 0.0])
    assert np.array_equal(xi2(np.zeros(2), CFG_SLOW), [0.0, 0.0])
    assert np.array_equal(xi2(np.array([0.5, -0.5]), CFG_SLOW), [-0.5, 0.5])


def test_phi():
    assert np.array_equal(phi(np.zeros(2), np.zeros(2), CFG_SLOW),
                          [0.0, -9.81])
    got = phi(np.array([1.0, 0.0]), np.array([0.0, 1.0]), CFG_SLOW)
    assert np.allclose(got, [1.0, -8.81])
    # phi is exactly the regressor recurring inside xi3
    e1, x2 = RNG.uniform(-2, 2, 2), RNG.uniform(-2, 2, 2)
    est = EstimatorState(p1_hat=0.7)
    e2 = x2 + CFG_SLOW.k1 * e1
    expect = -0.7 * phi(e1, x2, CFG_SLOW) - CFG_SLOW.k2 * e2
    assert np.allclose(xi3(e1, x2, est, CFG_SLOW), expect)


def test_xi3_values():
    z = np.zeros(2)
    assert np.array_equal(xi3(z, z, EstimatorState(), CFG_SLOW)
                          - xi3(z, z, EstimatorState(), CFG_SLOW), z)
    # p1_hat = 0: reduces to -k2 e2
    e1 = np.array([1.0, 0.0])
    got = xi3(e1, -CFG_SLOW.k1 * e1 + np.array([1.0, 0.0]),
              EstimatorState(), CFG_SLOW)
    # e2 = x2 + k1 e1 = (1, 0)
    assert np.allclose(got + 0.0,
                       -EstimatorState().p1_hat * phi(e1, -e1 + np.array([1.0, 0.0]), CFG_SLOW)
                       - 5.0 * np.array([1.0, 0.0]))
    # gravity cancellation: e1 = (0, g), x2 = 0, p1_hat = 1 makes the
    # regressor Phi vanish, leaving the pure -k2 e2 term
    g = CFG_SLOW.gravity
    e1 = np.array([0.0, g])
    got = xi3(e1, np.zeros(2), EstimatorState(p1_hat=1.0), CFG_SLOW)
    assert np.allclose(got, -5.0 * e1)


# ---------------------------------------------------------------------------
# fourth-stage algebra
# ---------------------------------------------------------------------------

def test_xi4_solves_the_stage_system():
    """G2 xi4 must exactly negate the assembled stage bracket."""
    for _ in range(300):
        s = rand_state()
        est = EstimatorState(*RNG.uniform(-2, 2, 4))
        ref = RNG.uniform(-5, 5, 2)
        u, diag = control_u(s, est, ref, CFG_SLOW)
        kk = CFG_SLOW.k1 * est.p1_hat + CFG_SLOW.k2
        bracket = (diag.p1_hat_dot * diag.phi
                   + est.p1_hat * (s.x2 + f2(CFG_SLOW.gravity))
                   + CFG_SLOW.k2 * (f2(CFG_SLOW.gravity) + s.x2)
                   + est.theta1_hat * (diag.e2 + kk * g2(s.x3))
                   + CFG_SLOW.k3 * diag.e3)
        resid = G2(s.x3) @ diag.xi4 + bracket
        assert np.abs(resid).max() <= 1e-10 * (1 + np.abs(bracket).max())


def test_xi4_guard():
    s = rand_state()
    s.x3[0] = 0.0
    with pytest.raises(SingularInputMap):
        xi4(s, EstimatorState(), np.zeros(2), CFG_SLOW)


def test_psi_zero_phi_closed_form():
    """With Phi = 0 and zero estimates only the two gain terms survive."""
    g = CFG_SLOW.gravity
    s = PlantState(x1=np.array([0.0, g]), x2=np.zeros(2),
                   x3=np.array([3.0, 0.4]), x4=RNG.uniform(-1, 1, 2))
    ref = np.zeros(2)   # e1 = (0, g) cancels f2 inside Phi
    est = EstimatorState()
    _, diag = control_u(s, est, ref, CFG_SLOW)
    assert np.abs(diag.phi).max() < 1e-12
    assert diag.p1_hat_dot == 0.0
    from bicoptersim.model import G2_inv
    expect = G2_inv(s.x3) @ ((CFG_SLOW.k1 * CFG_SLOW.k2
                              + CFG_SLOW.k2 * CFG_SLOW.k3) * g2(s.x3))
    assert np.allclose(diag.psi, expect, rtol=1e-12, atol=1e-12)


def test_psi_inner_bracket_linear_in_thrust():
    """Scaling F scales the pre-inverse regressor bracket exactly."""
    s = rand_state(f_lo=0.5, f_hi=5.0)
    est = EstimatorState(*RNG.uniform(-1, 1, 4))
    ref = RNG.uniform(-3, 3, 2)
    s2 = PlantState(x1=s.x1, x2=s.x2,
                    x3=np.array([2.0 * s.x3[0], s.x3[1]]), x4=s.x4)
    inner1 = G2(s.x3) @ psi_term(s, est, ref, CFG_SLOW)
    inner2 = G2(s2.x3) @ psi_term(s2, est, ref, CFG_SLOW)
    assert np.allclose(inner2, 2.0 * inner1, rtol=1e-9)


def test_sigma_and_psi_finite_on_guarded_domain():
    for _ in range(100):
        s = rand_state(f_lo=0.1, f_hi=100.0)
        est = EstimatorState(*RNG.uniform(-2, 2, 4))
        ref = RNG.uniform(-5, 5, 2)
        assert np.isfinite(sigma_term(s, est, ref, CFG_SLOW)).all()
        assert np.isfinite(psi_term(s, est, ref, CFG_SLOW)).all()


def test_control_u_assembly():
    """u is exactly the selector-matrix combination of (sigma+psi*vt1, e4)."""
    for cfg in (CFG_SLOW, CFG_FAST):
        s = rand_state()
        est = EstimatorState(*RNG.uniform(-2, 2, 4))
        ref = RNG.uniform(-5, 5, 2)
        u, diag = control_u(s, est, ref, cfg)
        sp = diag.sigma + diag.psi * est.vartheta1_hat
        expect = -(np.array([[0.0, 1.0], [est.p2_hat, 0.0]]) @ sp
                   + cfg.k4 * np.array([[0.0, 1.0],
                                        [cfg.sign_theta2, 0.0]]) @ diag.e4)
        assert np.allclose(u, expect, rtol=0, atol=1e-9 * (1 + np.abs(expect).max()))


def test_parameter_firewall_bit_identical():
    """The control evaluation never touches the plant parameters."""
    s = rand_state()
    est = EstimatorState(*RNG.uniform(-2, 2, 4))
    ref = RNG.uniform(-5, 5, 2)
    PhysicalParams(m=1.0, J=0.2)
    u_a, diag_a = control_u(s, est, ref, CFG_SLOW)
    PhysicalParams(m=3.0, J=0.7)
    u_b, diag_b = control_u(s, est, ref, CFG_SLOW)
    assert np.array_equal(u_a, u_b)
    assert np.array_equal(diag_a.sigma, diag_b.sigma)


def test_outputs_lipschitz_in_state():
    for _ in range(10):
        s = rand_state(f_lo=0.5, f_hi=20.0)
        est = EstimatorState(*RNG.uniform(-1, 1, 4))
        ref = RNG.uniform(-3, 3, 2)
        u0, _ = control_u(s, est, ref, CFG_SLOW)
        d = RNG.normal(size=8)
        d /= np.linalg.norm(d)
        deltas = []
        for eps in (1e-4, 1e-5):
            sp = PlantState.from_vector(s.as_vector() + eps * d)
            up, _ = control_u(sp, est, ref, CFG_SLOW)
            deltas.append(np.linalg.norm(up - u0))
        assert 3.0 <= deltas[0] / deltas[1] <= 30.0


def test_config_validation():
    with pytest.raises(ValueError):
        ControllerConfig(k1=0.0)
    with pytest.raises(ValueError):
        ControllerConfig(sign_theta1=2)
    with pytest.raises(ValueError):
        ControllerConfig(eps_f=0.0)


# ---------------------------------------------------------------------------
# frozen chain oracles (computed with an exact symbolic evaluation of the
# stage algebra, independent of this implementation)
# ---------------------------------------------------------------------------

POINT_A = dict(
    state=PlantState(x1=np.array([0.3, -0.2]), x2=np.array([0.5, -0.7]),
                     x3=np.array([7.3, 0.35]), x4=np.array([0.45, -1.2])),
    est=EstimatorState(0.6, 0.15, 0.8, -0.3),
    ref=np.array([1.1, 0.4]),
    cfg=CFG_SLOW,
    expect=dict(
        e1=(-0.8, -0.6000000000000001),
        e2=(-0.3000000000000001, -1.3),
        e3=(-4.183153994424795, -6.308579196214134),
        e4=(12.09477271732545, -85.57337952834037),
        phi=(-0.3000000000000001, -11.110000000000001),
        xi2=(0.8, 0.6000000000000001),
        xi3=(1.6800000000000006, 13.166),
        xi4=(-11.64477271732545, 84.37337952834037),
        sigma=(100.025789535327, -1603.5983435422754),
        psi=(-4.685428217483057, 552.5163205270201),
        p1_hat_dot=1.4533,
        theta1_hat_dot=-17.416512096185613,
        u=(3480.8208302671887, -257.11016704659477),
    ),
)

POINT_B = dict(
    state=PlantState(x1=np.array([-1.4, 2.25]), x2=np.array([-0.15, 1.05]),
                     x3=np.array([12.4, -0.8]), x4=np.array([-2.1, 3.3])),
    est=EstimatorState(-0.35, 0.55, 1.6, 0.9),
    ref=np.array([-0.5, 1.75]),
    cfg=CFG_FAST,
    expect=dict(
        e1=(-0.8999999999999999, 0.5),
        e2=(-1.0499999999999998, 1.55),
        e3=(4.012715527154083, 19.28016319590485),
        e4=(9.620607204734748, 306.45742063006935),
        phi=(-1.0499999999999998, -8.26),
        xi2=(0.8999999999999999, -0.5),
        xi3=(4.882499999999999, -10.641),
        xi4=(-11.720607204734748, -303.15742063006934),
        sigma=(301.3770227486985, 55753.35949922113),
        psi=(32.10481373631979, 1007.8454183774315),
        p1_hat_dot=-11.700500000000002,
        theta1_hat_dot=966.1726744169066,
        u=(-62789.5687883622, -374.0613894059574),
    ),
)


@pytest.mark.parametrize("point", [POINT_A, POINT_B], ids=["slow", "fast"])
def test_frozen_chain_oracle(point):
    u, diag = control_u(point["state"], point["est"], point["ref"],
                        point["cfg"])
    exp = point["expect"]
    for name in ("e1", "e2", "e3", "e4", "phi", "xi2", "xi3", "xi4",
                 "sigma", "psi"):
        got = getattr(diag, name)
        assert got == pytest.approx(exp[name], rel=1e-9, abs=1e-9), name
    assert diag.p1_hat_dot == pytest.approx(exp["p1_hat_dot"], rel=1e-9)
    assert diag.theta1_hat_dot == pytest.approx(exp["theta1_hat_dot"],
                                                rel=1e-9)
    assert u == pytest.approx(exp["u"], rel=1e-9)
