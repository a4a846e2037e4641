"""Scalar parameter adaptation laws.

Four pure right-hand-side evaluations, integrated by the simulation engine
alongside the plant.  The laws are chosen to cancel the estimate-mismatch
terms in the cascade's storage function, not to identify the parameters:
estimates converge to whatever values cancel the running errors, which is
generally not the true parameters.  No projection or leakage is applied;
boundedness follows from the storage function and is monitored, not
enforced.

Each law is bilinear in its error and regressor arguments, so all four
freeze exactly when the tracking errors vanish.
"""
from __future__ import annotations

import numpy as np

from .controller import ControllerConfig, EstimatorState
from .model import Vec2, f2, g2


def p1_hat_dot(e1: Vec2, e2: Vec2, x2: Vec2, cfg: ControllerConfig) -> float:
    """Mass-estimate rate (p1 = 1/theta1): gamma1 s1 <e2, e1 + f2 + k1 x2>."""
    reg = np.asarray(e1, float) + f2(cfg.gravity) + cfg.k1 * np.asarray(x2, float)
    return cfg.gamma1 * cfg.sign_theta1 * float(np.asarray(e2, float) @ reg)


def p2_hat_dot(e4: Vec2, sigma: Vec2, psi: Vec2, vartheta1_hat: float,
               cfg: ControllerConfig) -> float:
    """Inertia-estimate rate (p2 = 1/theta2).

    Uses only the first components: gamma2 s2 * e4[0] * (sigma + psi*vt1)[0];
    the second channel of the final stage needs no such correction.
    """
    drive = float(sigma[0]) + float(psi[0]) * vartheta1_hat
    return cfg.gamma2 * cfg.sign_theta2 * float(e4[0]) * drive


def theta1_hat_dot(e2: Vec2, e3: Vec2, x3: Vec2,
                   est: EstimatorState, cfg: ControllerConfig) -> float:
    """Inverse-mass estimate rate for the third stage."""
    g2v = g2(x3)
    reg = (np.asarray(e2, float)
           + (cfg.k1 * est.p1_hat + cfg.k2 * cfg.sign_theta1) * g2v)
    return cfg.alpha1 * float(np.asarray(e3, float) @ reg)


def vartheta1_hat_dot(e4: Vec2, psi: Vec2, cfg: ControllerConfig) -> float:
    """Inverse-mass estimate rate for the final stage: alpha2 <psi, e4>.

    The regressor is the final-stage psi vector (the coefficient of the
    unknown inverse mass in the e4 dynamics); pairing the law with any other
    vector leaves an uncancelled cross term in the storage-function rate.
    """
    return cfg.alpha2 * float(np.asarray(psi, float) @ np.asarray(e4, float))
