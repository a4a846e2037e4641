"""Extended planar bicopter dynamics and the thrust-Jacobian algebra.

The plant is the dynamically extended bicopter: the total thrust F gets two
integrators appended (F, F_dot as states, F_ddot as input) so the input
channel pair u = (F_ddot, M) enters through a square, invertible map.

State blocks (all 2-vectors):

    x1 = (r1, r2)          inertial position [m]
    x2 = (dr1, dr2)        velocity [m/s]
    x3 = (F, phi)          total thrust [N], roll angle [rad]
    x4 = (dphi, dF)        rate pair in *input-map order* [rad/s, N/s]

x4 keeps the roll rate first so that the input map

    g4(theta) = [[0, theta2], [1, 0]],   x4_dot = g4 @ (F_ddot, M)

feeds the moment into the roll-rate channel (dphi_dot = M/J) and the thrust
snap into the thrust-rate channel, and so that the thrust map's Jacobian

    G2 = [[-cos(phi) F, -sin(phi)], [-sin(phi) F, cos(phi)]]

(columns ordered d/dphi, d/dF) satisfies d/dt g2(x3) = G2 @ x4 along the
flow.  The one consequence of this ordering is that x3's time derivative is
x4 reversed: x3_dot = (dF, dphi) = (x4[1], x4[0]).

G2 is singular exactly on the F = 0 line (det G2 = -F); every inversion is
guarded by an explicit threshold ``eps_f`` and raises SingularInputMap
below it.

All functions are pure and operate on float scalars / small numpy arrays;
there is no shared mutable state.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

Vec2 = np.ndarray
Mat2 = np.ndarray

DEFAULT_EPS_F = 1e-6


class SingularInputMap(Exception):
    """Raised when the thrust Jacobian is (numerically) singular, |F| < eps_f."""

    def __init__(self, thrust: float, eps_f: float):
        self.thrust = float(thrust)
        self.eps_f = float(eps_f)
        super().__init__(
            f"thrust Jacobian singular: |F|={abs(thrust):.3e} < eps_f={eps_f:.3e}")


@dataclass(frozen=True)
class PhysicalParams:
    """True inertial parameters of the simulated plant.

    Visible only to the plant dynamics and the Lyapunov monitor; the
    controller sees nothing of these beyond the two signs it is configured
    with.
    """

    m: float = 1.0      # mass [kg]
    J: float = 0.2      # moment of inertia [kg m^2]
    g: float = 9.81     # gravitational acceleration [m/s^2]

    def __post_init__(self):
        if not (self.m > 0 and self.J > 0 and self.g >= 0):
            raise ValueError("require m > 0, J > 0, g >= 0")

    @property
    def theta1(self) -> float:
        """Inverse mass 1/m."""
        return 1.0 / self.m

    @property
    def theta2(self) -> float:
        """Inverse inertia 1/J."""
        return 1.0 / self.J


@dataclass
class PlantState:
    """The 8 extended plant states, stored as four 2-vectors."""

    x1: Vec2
    x2: Vec2
    x3: Vec2
    x4: Vec2

    @classmethod
    def from_vector(cls, y) -> "PlantState":
        y = np.asarray(y, dtype=float)
        return cls(x1=y[0:2].copy(), x2=y[2:4].copy(),
                   x3=y[4:6].copy(), x4=y[6:8].copy())

    def as_vector(self) -> np.ndarray:
        return np.concatenate([self.x1, self.x2, self.x3, self.x4])

    @property
    def thrust(self) -> float:
        return float(self.x3[0])

    @property
    def roll(self) -> float:
        return float(self.x3[1])


def f2(g: float) -> Vec2:
    """Gravity drift of the velocity block: (0, -g)."""
    return np.array([0.0, -g])


def g2(x3: Vec2) -> Vec2:
    """Thrust map (-sin(phi) F, cos(phi) F): body thrust resolved in the plane."""
    F, phi = float(x3[0]), float(x3[1])
    return np.array([-math.sin(phi) * F, math.cos(phi) * F])


def G2(x3: Vec2) -> Mat2:
    """Jacobian of g2, columns (d/dphi, d/dF); det = -F."""
    F, phi = float(x3[0]), float(x3[1])
    s, c = math.sin(phi), math.cos(phi)
    return np.array([[-c * F, -s],
                     [-s * F, c]])


def G2_inv(x3: Vec2, eps_f: float = DEFAULT_EPS_F) -> Mat2:
    """Exact 2x2 inverse of G2; raises SingularInputMap when |F| < eps_f."""
    F, phi = float(x3[0]), float(x3[1])
    if abs(F) < eps_f:
        raise SingularInputMap(F, eps_f)
    s, c = math.sin(phi), math.cos(phi)
    det = -F
    return np.array([[c / det, s / det],
                     [s * F / det, -c * F / det]])


def G2_dot(x3: Vec2, x3_rate: Vec2) -> Mat2:
    """Entrywise time derivative of G2 along x3_rate = (dF, dphi).

    Note the argument is the rate of x3 itself (component-aligned with x3),
    not the input-map-ordered x4 block; callers holding x4 pass it reversed.
    """
    F, phi = float(x3[0]), float(x3[1])
    dF, dphi = float(x3_rate[0]), float(x3_rate[1])
    s, c = math.sin(phi), math.cos(phi)
    return np.array([[s * dphi * F - c * dF, -c * dphi],
                     [-c * dphi * F - s * dF, -s * dphi]])


def G2_inv_dot(x3: Vec2, x3_rate: Vec2, eps_f: float = DEFAULT_EPS_F) -> Mat2:
    """Time derivative of G2^{-1}: -G2^{-1} G2_dot G2^{-1}."""
    gi = G2_inv(x3, eps_f)
    return -gi @ G2_dot(x3, x3_rate) @ gi


def plant_deriv(s: PlantState, u: Vec2, p: PhysicalParams) -> PlantState:
    """Open-loop state derivative for input u = (F_ddot, M).

    Returns a PlantState carrying (x1_dot, x2_dot, x3_dot, x4_dot):

        x1_dot = x2
        x2_dot = f2 + g2(x3) * theta1
        x3_dot = (dF, dphi) = x4 reversed   (input-map ordering of x4)
        x4_dot = g4(theta) u = (theta2 * M, F_ddot)
    """
    x2d = f2(p.g) + g2(s.x3) * p.theta1
    x3d = np.array([s.x4[1], s.x4[0]])
    x4d = np.array([p.theta2 * float(u[1]), float(u[0])])
    return PlantState(x1=s.x2.copy(), x2=x2d, x3=x3d, x4=x4d)


def hover_state(p: PhysicalParams, position=(0.0, 0.0)) -> PlantState:
    """Level hover equilibrium: thrust m*g, zero roll, zero rates."""
    return PlantState(
        x1=np.array(position, dtype=float),
        x2=np.zeros(2),
        x3=np.array([p.m * p.g, 0.0]),
        x4=np.zeros(2),
    )
