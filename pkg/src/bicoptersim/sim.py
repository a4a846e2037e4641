"""Fixed-step closed-loop integration and the Lyapunov monitor.

The augmented state is 12-dimensional: 8 plant states plus the 4 adapted
scalars.  Integration is classical RK4 at a fixed step, with the reference
evaluated at each stage time so the order is preserved for moving
references.

Two implementations of the closed-loop vector field exist on purpose:

* :func:`closed_loop_deriv` composes the public controller / estimator /
  plant operations (readable, used by contracts and oracles), and
* a fused scalar core used by :func:`simulate` (same algebra flattened to
  float arithmetic; a 120 s run at dt=1e-3 completes in a few seconds).

The test suite pins the two against each other to 1e-12 relative.

The monitor computes the storage function V4 and its closed-form rate using
the *true* plant parameters; these values are diagnostics only and never
reach the controller.  For a moving reference the closed form acquires an
exact correction term, linear in the tracking errors and the reference
velocity, exposed as :func:`v4_dot_reference_correction`: the centered
difference of the recorded V4 matches closed form + correction to O(dt^2),
while the closed form alone is only exact for a constant reference.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, fields

import numpy as np

from . import estimator as est_laws
from .controller import ControllerConfig, ControllerDiagnostics, EstimatorState, control_u
from .model import PhysicalParams, PlantState, SingularInputMap, plant_deriv
from .presets import Preset

_STATE_FIELDS = ("r1", "r2", "dr1", "dr2", "F", "phi", "dphi", "dF",
                 "p1_hat", "p2_hat", "theta1_hat", "vartheta1_hat")

# test-only hook: flips the sign of the final-stage regressor inside the
# fused core so the descent oracle can demonstrate mutation sensitivity
_PSI_SIGN = 1.0


class SingularGuardTripped(Exception):
    """Simulation halted: thrust magnitude fell below the guard threshold."""

    def __init__(self, time: float, thrust: float, records=None):
        self.time = float(time)
        self.thrust = float(thrust)
        self.records = records or []
        super().__init__(f"singularity guard tripped at t={time:.6f} s "
                         f"(F={thrust:.3e} N)")


class NonFiniteState(Exception):
    """Simulation halted: a state component left the finite floats."""

    def __init__(self, field: str, time: float, records=None):
        self.field = field
        self.time = float(time)
        self.records = records or []
        super().__init__(f"non-finite state component {field!r} at "
                         f"t={time:.6f} s")


@dataclass
class AugmentedState:
    plant: PlantState
    est: EstimatorState
    t: float = 0.0

    def as_vector(self) -> np.ndarray:
        return np.concatenate([self.plant.as_vector(),
                               np.array(self.est.as_tuple())])

    @classmethod
    def from_vector(cls, y, t: float = 0.0) -> "AugmentedState":
        y = np.asarray(y, dtype=float)
        return cls(plant=PlantState.from_vector(y[:8]),
                   est=EstimatorState(*[float(v) for v in y[8:12]]), t=t)


@dataclass
class SimRecord:
    """One telemetry row; the CSV schema is exactly these fields in order."""

    t: float
    r1: float
    r2: float
    dr1: float
    dr2: float
    F: float
    phi: float
    dphi: float
    dF: float
    u1: float
    u2: float
    ref1: float
    ref2: float
    e1_norm: float
    e2_norm: float
    e3_norm: float
    e4_norm: float
    p1_hat: float
    p2_hat: float
    theta1_hat: float
    vartheta1_hat: float
    V4: float
    V4_dot_analytic: float
    V4_dot_findiff: float


RECORD_COLUMNS = tuple(f.name for f in fields(SimRecord))


@dataclass
class LyapunovBreakdown:
    """Stage storage functions and the four negative terms of the rate."""

    V1: float
    V2: float
    V3: float
    V4: float
    term_e1: float
    term_e2: float
    term_e3: float
    term_e4: float

    @property
    def v4_dot(self) -> float:
        return self.term_e1 + self.term_e2 + self.term_e3 + self.term_e4


def rk4_step(y, t: float, dt: float, deriv):
    """One classical 4th-order Runge-Kutta step of y' = deriv(t, y)."""
    y = np.asarray(y, dtype=float)
    k1 = np.asarray(deriv(t, y))
    k2 = np.asarray(deriv(t + 0.5 * dt, y + 0.5 * dt * k1))
    k3 = np.asarray(deriv(t + 0.5 * dt, y + 0.5 * dt * k2))
    k4 = np.asarray(deriv(t + dt, y + dt * k3))
    return y + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def closed_loop_deriv(s: AugmentedState, refgen, cfg: ControllerConfig,
                      params: PhysicalParams):
    """Derivative of the augmented state under the closed loop.

    Returns (plant_derivative, estimate_rates, diagnostics) where
    estimate_rates is the 4-tuple of adaptation-law values computed from the
    same diagnostics snapshot that produced u.
    """
    xi1 = refgen.position(s.t)
    u, diag = control_u(s.plant, s.est, xi1, cfg)
    pd = plant_deriv(s.plant, u, params)
    rates = (
        est_laws.p1_hat_dot(diag.e1, diag.e2, s.plant.x2, cfg),
        est_laws.p2_hat_dot(diag.e4, diag.sigma, diag.psi,
                            s.est.vartheta1_hat, cfg),
        est_laws.theta1_hat_dot(diag.e2, diag.e3, s.plant.x3, s.est, cfg),
        est_laws.vartheta1_hat_dot(diag.e4, diag.psi, cfg),
    )
    return pd, rates, diag


def closed_loop_vector_field(refgen, cfg: ControllerConfig,
                             params: PhysicalParams):
    """12-vector field f(t, y) over the packed augmented state."""

    def f(t, y):
        s = AugmentedState.from_vector(y, t)
        pd, rates, _ = closed_loop_deriv(s, refgen, cfg, params)
        return np.concatenate([pd.as_vector(), np.array(rates)])
    return f


# ---------------------------------------------------------------------------
# fused scalar core
# ---------------------------------------------------------------------------

def _cfg_tuple(cfg: ControllerConfig):
    return (cfg.k1, cfg.k2, cfg.k3, cfg.k4, cfg.gamma1, cfg.gamma2,
            cfg.alpha1, cfg.alpha2, float(cfg.sign_theta1),
            float(cfg.sign_theta2), cfg.gravity, cfg.eps_f)


def _eval_core(y, xr1, xr2, c):
    """One controller evaluation over plain floats.

    Returns (u1, u2, rates..., errors..., sigma, psi, Phi, xi4) as a flat
    tuple; raises SingularInputMap below the thrust guard.
    """
    (k1, k2, k3, k4, g1, g2g, a1, a2, s1, s2, grav, epsF) = c
    r1, r2, v1, v2, F, ph, q1, q2, p1h, p2h, t1h, v1h = y
    if abs(F) < epsF:
        raise SingularInputMap(F, epsF)
    sph = math.sin(ph)
    cph = math.cos(ph)

    e11 = r1 - xr1; e12 = r2 - xr2
    e21 = v1 + k1 * e11; e22 = v2 + k1 * e12
    Phi1 = e11 + k1 * v1; Phi2 = e12 + k1 * v2 - grav
    p1hd = g1 * s1 * (e21 * Phi1 + e22 * Phi2)
    g21 = -sph * F; g22 = cph * F
    e31 = g21 + p1h * Phi1 + k2 * s1 * e21
    e32 = g22 + p1h * Phi2 + k2 * s1 * e22
    kk = k1 * p1h + k2 * s1
    reg31 = e21 + kk * g21; reg32 = e22 + kk * g22
    t1hd = a1 * (e31 * reg31 + e32 * reg32)
    B1 = p1hd * Phi1 + p1h * v1 + k2 * s1 * k1 * v1 + t1h * reg31 + k3 * e31
    B2 = (p1hd * Phi2 + p1h * (v2 - k1 * grav)
          + k2 * s1 * (-grav + k1 * v2) + t1h * reg32 + k3 * e32)

    a_ = -cph * F; b_ = -sph; c_ = -sph * F; d_ = cph
    det = -F
    gi11 = d_ / det; gi12 = -b_ / det
    gi21 = -c_ / det; gi22 = a_ / det
    xi41 = -(gi11 * B1 + gi12 * B2)
    xi42 = -(gi21 * B1 + gi22 * B2)
    e41 = q1 - xi41; e42 = q2 - xi42

    # d/dt of the Jacobian along (dF, dphi) = (q2, q1)
    da = sph * q1 * F - cph * q2
    db = -cph * q1
    dc = -cph * q1 * F - sph * q2
    dd = -sph * q1
    m11 = da * gi11 + db * gi21; m12 = da * gi12 + db * gi22
    m21 = dc * gi11 + dd * gi21; m22 = dc * gi12 + dd * gi22
    gid11 = -(gi11 * m11 + gi12 * m21); gid12 = -(gi11 * m12 + gi12 * m22)
    gid21 = -(gi21 * m11 + gi22 * m21); gid22 = -(gi21 * m12 + gi22 * m22)

    p1hdd0 = g1 * s1 * ((k1 * v1) * Phi1 + (-grav + k1 * v2) * Phi2
                        + e21 * v1 + e22 * (v2 - k1 * grav))
    Gx41 = a_ * q1 + b_ * q2; Gx42 = c_ * q1 + d_ * q2
    Bd1 = (p1hdd0 * Phi1 + 2.0 * p1hd * v1 + t1hd * reg31
           + t1h * (k1 * v1 + k1 * p1hd * g21 + kk * Gx41)
           + k3 * (Gx41 + p1hd * Phi1 + p1h * v1 + k2 * s1 * k1 * v1))
    Bd2 = (p1hdd0 * Phi2 + 2.0 * p1hd * (v2 - k1 * grav)
           - p1h * grav - k1 * k2 * s1 * grav + t1hd * reg32
           + t1h * (-grav + k1 * v2 + k1 * p1hd * g22 + kk * Gx42)
           + k3 * (Gx42 + p1hd * Phi2 + p1h * (v2 - k1 * grav)
                   + k2 * s1 * (-grav + k1 * v2)))

    S1 = (a_ * e31 + c_ * e32 + gid11 * B1 + gid12 * B2
          + gi11 * Bd1 + gi12 * Bd2)
    S2 = (b_ * e31 + d_ * e32 + gid21 * B1 + gid22 * B2
          + gi21 * Bd1 + gi22 * Bd2)

    coef = g1 * s1 * (g21 * Phi1 + g22 * Phi2 + k1 * (e21 * g21 + e22 * g22))
    lin = k1 * p1hd + p1h + k1 * k2 * s1 + t1h + k3 * kk
    Pin1 = coef * Phi1 + lin * g21
    Pin2 = coef * Phi2 + lin * g22
    P1 = _PSI_SIGN * (gi11 * Pin1 + gi12 * Pin2)
    P2 = _PSI_SIGN * (gi21 * Pin1 + gi22 * Pin2)

    su1 = S1 + P1 * v1h; su2 = S2 + P2 * v1h
    u1 = -(su2 + k4 * e42)
    u2 = -(p2h * su1 + k4 * s2 * e41)
    p2hd = g2g * s2 * e41 * su1
    v1hd = a2 * (P1 * e41 + P2 * e42)

    return (u1, u2, p1hd, p2hd, t1hd, v1hd,
            e11, e12, e21, e22, e31, e32, e41, e42,
            S1, S2, P1, P2, Phi1, Phi2, xi41, xi42)


def _flow_from_core(y, core, c, th1, th2):
    u1, u2, p1hd, p2hd, t1hd, v1hd = core[:6]
    v1, v2, F, ph, q1, q2 = y[2], y[3], y[4], y[5], y[6], y[7]
    grav = c[10]
    return (v1, v2,
            -math.sin(ph) * F * th1, -grav + math.cos(ph) * F * th1,
            q2, q1,
            th2 * u2, u1,
            p1hd, p2hd, t1hd, v1hd)


def _flow(t, y, ref_xy, c, th1, th2):
    xr1, xr2 = ref_xy(t)
    return _flow_from_core(y, _eval_core(y, xr1, xr2, c), c, th1, th2)


def _rk4_fused(t, y, dt, ref_xy, c, th1, th2, flow1=None):
    a = flow1 if flow1 is not None else _flow(t, y, ref_xy, c, th1, th2)
    y2 = tuple(yi + 0.5 * dt * ki for yi, ki in zip(y, a))
    b = _flow(t + 0.5 * dt, y2, ref_xy, c, th1, th2)
    y3 = tuple(yi + 0.5 * dt * ki for yi, ki in zip(y, b))
    d = _flow(t + 0.5 * dt, y3, ref_xy, c, th1, th2)
    y4 = tuple(yi + dt * ki for yi, ki in zip(y, d))
    e = _flow(t + dt, y4, ref_xy, c, th1, th2)
    return tuple(yi + dt / 6.0 * (ka + 2.0 * kb + 2.0 * kd + ke)
                 for yi, ka, kb, kd, ke in zip(y, a, b, d, e))


def _v4_scalar(y, core, c, th1, th2):
    (k1, k2, k3, k4, g1, g2g, a1, a2, s1, s2, grav, epsF) = c
    e11, e12, e21, e22, e31, e32, e41, e42 = core[6:14]
    p1h, p2h, t1h, v1h = y[8:]
    p1 = 1.0 / th1; p2 = 1.0 / th2
    V4 = 0.5 * (e11 * e11 + e12 * e12 + e21 * e21 + e22 * e22
                + e31 * e31 + e32 * e32 + e41 * e41 + e42 * e42) \
        + 0.5 / g1 * abs(th1) * (p1h - p1) ** 2 \
        + 0.5 / g2g * abs(th2) * (p2h - p2) ** 2 \
        + 0.5 / a1 * (th1 - t1h) ** 2 \
        + 0.5 / a2 * (th1 - v1h) ** 2
    vdot = (-k1 * (e11 * e11 + e12 * e12)
            - k2 * abs(th1) * (e21 * e21 + e22 * e22)
            - k3 * (e31 * e31 + e32 * e32)
            - k4 * (abs(th2) * e41 * e41 + e42 * e42))
    return V4, vdot


# ---------------------------------------------------------------------------
# monitor (uses true parameters; controller never sees these values)
# ---------------------------------------------------------------------------

def lyapunov_v4(s: AugmentedState, params: PhysicalParams,
                diag: ControllerDiagnostics,
                cfg: ControllerConfig) -> LyapunovBreakdown:
    """Stage storage functions V1..V4 evaluated with the true parameters."""
    th1, th2 = params.theta1, params.theta2
    p1, p2 = 1.0 / th1, 1.0 / th2
    e1sq = float(diag.e1 @ diag.e1)
    e2sq = float(diag.e2 @ diag.e2)
    e3sq = float(diag.e3 @ diag.e3)
    e4sq = float(diag.e4 @ diag.e4)
    V1 = 0.5 * e1sq
    V2 = V1 + 0.5 * e2sq \
        + 0.5 / cfg.gamma1 * abs(th1) * (s.est.p1_hat - p1) ** 2
    V3 = V2 + 0.5 * e3sq
    V4 = V3 + 0.5 * e4sq \
        + 0.5 / cfg.gamma2 * abs(th2) * (s.est.p2_hat - p2) ** 2 \
        + 0.5 / cfg.alpha1 * (th1 - s.est.theta1_hat) ** 2 \
        + 0.5 / cfg.alpha2 * (th1 - s.est.vartheta1_hat) ** 2
    return LyapunovBreakdown(
        V1=V1, V2=V2, V3=V3, V4=V4,
        term_e1=-cfg.k1 * e1sq,
        term_e2=-cfg.k2 * abs(th1) * e2sq,
        term_e3=-cfg.k3 * e3sq,
        term_e4=-cfg.k4 * (abs(th2) * float(diag.e4[0]) ** 2
                           + float(diag.e4[1]) ** 2),
    )


def v4_dot_analytic(diag: ControllerDiagnostics, params: PhysicalParams,
                    cfg: ControllerConfig) -> float:
    """Closed-form V4 rate; identically <= 0, exact for a constant reference."""
    th1, th2 = params.theta1, params.theta2
    return (-cfg.k1 * float(diag.e1 @ diag.e1)
            - cfg.k2 * abs(th1) * float(diag.e2 @ diag.e2)
            - cfg.k3 * float(diag.e3 @ diag.e3)
            - cfg.k4 * (abs(th2) * float(diag.e4[0]) ** 2
                        + float(diag.e4[1]) ** 2))


def v4_dot_reference_correction(state: PlantState, est: EstimatorState,
                                diag: ControllerDiagnostics, ref_rate,
                                cfg: ControllerConfig) -> float:
    """Exact extra term in dV4/dt produced by a moving reference.

    Zero for a constant reference.  Together with the closed form this
    reproduces the true time derivative of V4 along the closed loop:
    the control law carries no reference feedforward, so reference motion
    enters every error derivative and shows up in the monitor as this
    error-linear correction.
    """
    d = np.asarray(ref_rate, dtype=float)
    if not d.any():
        return 0.0
    from .model import G2_inv  # local import to keep module init light
    k1, k2, k3 = cfg.k1, cfg.k2, cfg.k3
    s1 = float(cfg.sign_theta1)
    gi = G2_inv(state.x3, cfg.eps_f)
    w = cfg.gamma1 * s1 * float((k1 * diag.phi + diag.e2) @ d)
    lin = diag.p1_hat_dot + k1 * est.theta1_hat + k3 * est.p1_hat \
        + k1 * k2 * k3 * s1
    inner = w * diag.phi + lin * d
    corr = -float((diag.e1 + k1 * diag.e2
                   + (est.p1_hat + k1 * k2 * s1) * diag.e3) @ d)
    corr -= float(diag.e4 @ (gi @ inner))
    return corr


# ---------------------------------------------------------------------------
# simulation driver
# ---------------------------------------------------------------------------

def initial_augmented_state(preset: Preset) -> AugmentedState:
    """Start on the reference (or the preset's explicit start position)
    with level attitude and the preset's thrust."""
    ref = preset.reference()
    x1 = (ref.position(0.0) if preset.start_position is None
          else np.asarray(preset.start_position, dtype=float))
    plant = PlantState(x1=np.array(x1, dtype=float), x2=np.zeros(2),
                       x3=np.array([preset.f0, 0.0]), x4=np.zeros(2))
    return AugmentedState(plant=plant,
                          est=EstimatorState(*preset.initial_estimates),
                          t=0.0)


def simulate(preset: Preset) -> list:
    """Integrate a preset from t=0 to its duration; returns SimRecords.

    Records are taken every ``output_stride`` steps (and at the final time).
    Raises SingularGuardTripped / NonFiniteState carrying the halt time and
    the partial record list (the guarded state itself cannot be evaluated,
    so the last record predates the halt).
    """
    cfg = preset.controller_config()
    params = preset.physical_params()
    refgen = preset.reference()
    c = _cfg_tuple(cfg)
    th1, th2 = params.theta1, params.theta2
    dt = preset.dt
    stride = max(1, int(preset.output_stride))
    n = round(preset.resolved_duration() / dt)

    def ref_xy(t):
        p = refgen.position(t)
        return float(p[0]), float(p[1])

    s0 = initial_augmented_state(preset)
    y = tuple(float(v) for v in s0.as_vector())
    records: list[SimRecord] = []

    def push_record(t, y, core, xr1, xr2):
        V4, vdot = _v4_scalar(y, core, c, th1, th2)
        records.append(SimRecord(
            t=t, r1=y[0], r2=y[1], dr1=y[2], dr2=y[3], F=y[4], phi=y[5],
            dphi=y[6], dF=y[7], u1=core[0], u2=core[1],
            ref1=xr1, ref2=xr2,
            e1_norm=math.hypot(core[6], core[7]),
            e2_norm=math.hypot(core[8], core[9]),
            e3_norm=math.hypot(core[10], core[11]),
            e4_norm=math.hypot(core[12], core[13]),
            p1_hat=y[8], p2_hat=y[9], theta1_hat=y[10],
            vartheta1_hat=y[11],
            V4=V4, V4_dot_analytic=vdot, V4_dot_findiff=math.nan))

    t = 0.0
    for i in range(n + 1):
        xr1, xr2 = ref_xy(t)
        try:
            core = _eval_core(y, xr1, xr2, c)
        except SingularInputMap as exc:
            raise SingularGuardTripped(t, exc.thrust, records) from exc
        if i % stride == 0 or i == n:
            push_record(t, y, core, xr1, xr2)
        if i == n:
            break
        try:
            y_next = _rk4_fused(t, y, dt, ref_xy, c, th1, th2,
                                flow1=_flow_from_core(y, core, c, th1, th2))
        except SingularInputMap as exc:
            raise SingularGuardTripped(t, exc.thrust, records) from exc
        except (ValueError, OverflowError) as exc:
            # a stage state already overflowed (e.g. sin() of an infinite
            # roll angle); report it as the non-finite halt it is
            raise NonFiniteState("stage state", t, records) from exc
        for name, v in zip(_STATE_FIELDS, y_next):
            if not math.isfinite(v):
                raise NonFiniteState(name, t + dt, records)
        y = y_next
        t = (i + 1) * dt

    # centered finite difference of the recorded V4 over the record grid
    for j in range(1, len(records) - 1):
        span = records[j + 1].t - records[j - 1].t
        if span > 0:
            records[j].V4_dot_findiff = \
                (records[j + 1].V4 - records[j - 1].V4) / span
    return records
