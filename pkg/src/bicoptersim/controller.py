"""Singularity-free adaptive backstepping control law.

The controller stabilizes the error cascade e1..e4 built on the extended
bicopter states, treating each next state block as a virtual control.  It
never reads the plant's mass or inertia: the only parameter knowledge it
holds is the *sign* of the two inverse-inertial parameters, plus the four
scalar estimates it is handed.  Division happens only through the thrust
Jacobian G2 (guarded by eps_f), never through a parameter estimate.

Error chain (one pass, each stage consuming only upstream values):

    e1  = x1 - xi1                      xi1: reference position
    xi2 = -k1 e1                        (no reference feedforward: a moving
    e2  = x2 - xi2                       reference incurs a bounded lag)
    Phi = e1 + k1 x2 + f2
    p1_hat_dot = gamma1 s1 e2.Phi       (tuning function, evaluated inline)
    xi3 = -p1_hat Phi - k2 s1 e2
    e3  = g2(x3) - xi3
    theta1_hat_dot = alpha1 e3.(e2 + (k1 p1_hat + k2 s1) g2)
    xi4 = -G2^{-1} [ p1_hat_dot Phi + p1_hat (x2 + k1 f2)
                     + k2 s1 (f2 + k1 x2)
                     + theta1_hat (e2 + (k1 p1_hat + k2 s1) g2) + k3 e3 ]
    e4  = x4 - xi4

The final stage splits the required rate of xi4 (plus the G2^T e3 coupling
from the third stage) into a measurable drift term `sigma` and the
regressor `psi` multiplying the unknown inverse mass:

    sigma + psi * theta1  ==  G2^T e3 - d/dt xi4     (exactly, along the
                                                      constant-reference flow)

and the control is

    u = -[[0, 1], [p2_hat, 0]] (sigma + psi * vartheta1_hat)
        - k4 [[0, 1], [s2, 0]] e4.

With the four update laws in :mod:`bicoptersim.estimator` this makes the
quadratic storage function of the cascade decrease exactly as
-k1|e1|^2 - k2|th1||e2|^2 - k3|e3|^2 - k4 e4.diag(|th2|,1).e4 for a constant
reference (see the Lyapunov monitor in :mod:`bicoptersim.sim`).
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .model import (
    DEFAULT_EPS_F,
    G2,
    G2_inv,
    G2_inv_dot,
    PlantState,
    Vec2,
    f2,
    g2,
)


@dataclass(frozen=True)
class ControllerConfig:
    """Gains, adaptation gains, parameter signs, and the singularity guard.

    This is the *only* parameter knowledge the control law holds.
    """

    k1: float = 1.0
    k2: float = 5.0
    k3: float = 10.0
    k4: float = 20.0
    gamma1: float = 0.1
    gamma2: float = 0.1
    alpha1: float = 0.1
    alpha2: float = 0.1
    sign_theta1: int = 1
    sign_theta2: int = 1
    gravity: float = 9.81
    eps_f: float = DEFAULT_EPS_F

    def __post_init__(self):
        for name in ("k1", "k2", "k3", "k4", "gamma1", "gamma2",
                     "alpha1", "alpha2"):
            if not getattr(self, name) > 0:
                raise ValueError(f"gain {name} must be positive")
        if self.sign_theta1 not in (-1, 1) or self.sign_theta2 not in (-1, 1):
            raise ValueError("parameter signs must be +1 or -1")
        if not (self.eps_f > 0 and self.gravity >= 0):
            raise ValueError("require eps_f > 0 and gravity >= 0")


@dataclass
class EstimatorState:
    """The four adapted scalars."""

    p1_hat: float = 0.0
    p2_hat: float = 0.0
    theta1_hat: float = 0.0
    vartheta1_hat: float = 0.0

    def as_tuple(self):
        return (self.p1_hat, self.p2_hat, self.theta1_hat,
                self.vartheta1_hat)


@dataclass
class ControllerDiagnostics:
    """Every intermediate of one control evaluation (monitor/oracle food)."""

    e1: Vec2 = field(default_factory=lambda: np.zeros(2))
    e2: Vec2 = field(default_factory=lambda: np.zeros(2))
    e3: Vec2 = field(default_factory=lambda: np.zeros(2))
    e4: Vec2 = field(default_factory=lambda: np.zeros(2))
    xi2: Vec2 = field(default_factory=lambda: np.zeros(2))
    xi3: Vec2 = field(default_factory=lambda: np.zeros(2))
    xi4: Vec2 = field(default_factory=lambda: np.zeros(2))
    sigma: Vec2 = field(default_factory=lambda: np.zeros(2))
    psi: Vec2 = field(default_factory=lambda: np.zeros(2))
    phi: Vec2 = field(default_factory=lambda: np.zeros(2))
    p1_hat_dot: float = 0.0
    theta1_hat_dot: float = 0.0


def error_e1(x1: Vec2, xi1: Vec2) -> Vec2:
    """Tracking error of the position block."""
    return np.asarray(x1, dtype=float) - np.asarray(xi1, dtype=float)


def xi2(e1: Vec2, cfg: ControllerConfig) -> Vec2:
    """First virtual control: desired velocity -k1 e1."""
    return -cfg.k1 * np.asarray(e1, dtype=float)


def phi(e1: Vec2, x2: Vec2, cfg: ControllerConfig) -> Vec2:
    """The recurring regressor direction e1 + k1 x2 + f2."""
    return np.asarray(e1, float) + cfg.k1 * np.asarray(x2, float) \
        + f2(cfg.gravity)


def xi3(e1: Vec2, x2: Vec2, est: EstimatorState,
        cfg: ControllerConfig) -> Vec2:
    """Second virtual control: desired thrust-map value."""
    e2 = np.asarray(x2, float) - xi2(e1, cfg)
    return -est.p1_hat * phi(e1, x2, cfg) - cfg.k2 * cfg.sign_theta1 * e2


def control_u(state: PlantState, est: EstimatorState, xi1: Vec2,
              cfg: ControllerConfig):
    """Full one-pass evaluation; returns (u, ControllerDiagnostics).

    Raises SingularInputMap (via the G2 inversion) when |F| < eps_f; the
    guard fires before any Jacobian inverse is formed.
    """
    k1, k2, k3, k4 = cfg.k1, cfg.k2, cfg.k3, cfg.k4
    s1, s2 = float(cfg.sign_theta1), float(cfg.sign_theta2)
    f2g = f2(cfg.gravity)

    x2 = np.asarray(state.x2, float)
    x4 = np.asarray(state.x4, float)
    e1 = error_e1(state.x1, xi1)
    xi2v = -k1 * e1
    e2 = x2 - xi2v
    phiv = e1 + k1 * x2 + f2g
    p1hd = cfg.gamma1 * s1 * float(e2 @ phiv)
    g2v = g2(state.x3)
    xi3v = -est.p1_hat * phiv - k2 * s1 * e2
    e3 = g2v - xi3v
    kk = k1 * est.p1_hat + k2 * s1
    reg3 = e2 + kk * g2v
    t1hd = cfg.alpha1 * float(e3 @ reg3)

    bracket = (p1hd * phiv + est.p1_hat * (x2 + k1 * f2g)
               + k2 * s1 * (f2g + k1 * x2)
               + est.theta1_hat * reg3 + k3 * e3)
    gi = G2_inv(state.x3, cfg.eps_f)
    xi4v = -gi @ bracket
    e4 = x4 - xi4v

    x3_rate = x4[::-1]                     # (dF, dphi) from input-map order
    gidot = G2_inv_dot(state.x3, x3_rate, cfg.eps_f)
    Gm = G2(state.x3)
    gx4 = Gm @ x4                          # d/dt g2 along the flow

    p1hdd0 = cfg.gamma1 * s1 * (float((f2g + k1 * x2) @ phiv)
                                + float(e2 @ (x2 + k1 * f2g)))
    bracket_dot0 = (
        p1hdd0 * phiv + 2.0 * p1hd * (x2 + k1 * f2g)
        + est.p1_hat * f2g + k1 * k2 * s1 * f2g
        + t1hd * reg3
        + est.theta1_hat * (f2g + k1 * x2 + k1 * p1hd * g2v + kk * gx4)
        + k3 * (gx4 + p1hd * phiv + est.p1_hat * (x2 + k1 * f2g)
                + k2 * s1 * (f2g + k1 * x2)))
    sigma = Gm.T @ e3 + gidot @ bracket + gi @ bracket_dot0

    coef = cfg.gamma1 * s1 * (float(g2v @ phiv) + k1 * float(e2 @ g2v))
    lin = k1 * p1hd + est.p1_hat + k1 * k2 * s1 + est.theta1_hat + k3 * kk
    psi = gi @ (coef * phiv + lin * g2v)

    sp = sigma + psi * est.vartheta1_hat
    u = -np.array([sp[1] + k4 * e4[1],
                   est.p2_hat * sp[0] + k4 * s2 * e4[0]])

    diag = ControllerDiagnostics(
        e1=e1, e2=e2, e3=e3, e4=e4, xi2=xi2v, xi3=xi3v, xi4=xi4v,
        sigma=sigma, psi=psi, phi=phiv,
        p1_hat_dot=p1hd, theta1_hat_dot=t1hd)
    return u, diag


def xi4(state: PlantState, est: EstimatorState, xi1: Vec2,
        cfg: ControllerConfig) -> Vec2:
    """Third virtual control: desired x4 (rate pair), -G2^{-1} bracket."""
    return control_u(state, est, xi1, cfg)[1].xi4


def sigma_term(state: PlantState, est: EstimatorState, xi1: Vec2,
               cfg: ControllerConfig) -> Vec2:
    """Measurable drift of the final stage (the theta1-free part)."""
    return control_u(state, est, xi1, cfg)[1].sigma


def psi_term(state: PlantState, est: EstimatorState, xi1: Vec2,
             cfg: ControllerConfig) -> Vec2:
    """Regressor of the unknown inverse mass in the final stage."""
    return control_u(state, est, xi1, cfg)[1].psi
