"""Rigid-body dynamics of a tilt-rotor quadcopter in plus configuration.

Four rotors sit on arms along the body x/y axes; each rotor can tilt about
its arm axis, redirecting thrust in a body plane. The conventional
quadcopter is the special case with all tilt angles pinned at zero. Motors
respond to thrust commands through a first-order lag; tilt joints are ideal
velocity servos clamped at their angle limits.

State is integrated with classical RK4 on a flat 21-vector:
position (3), velocity (3), unit quaternion body->world (4),
body rates (3), tilt angles (4), actual thrusts (4).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np


class NonFiniteError(RuntimeError):
    """Raised when integration produces NaN/Inf state components."""


# Signs of each rotor's axial drag moment along its thrust axis.
# Pattern chosen so equal thrusts at zero tilt produce zero net yaw moment.
DEFAULT_SPIN_SIGNS = (-1.0, 1.0, 1.0, -1.0)


@dataclass(frozen=True)
class SimParams:
    """Physical constants of the vehicle and simulation (SI units)."""

    mass_kg: float = 1.5
    arm_length_m: float = 0.13
    inertia_diag: tuple[float, float, float] = (0.0082, 0.0082, 0.0164)
    gravity_mps2: float = 9.81
    moment_ratio_m: float = 0.016
    motor_lag_s: float = 0.05
    dt_s: float = 0.01
    thrust_range_n: tuple[float, float] = (0.0, 15.0)
    tilt_angle_range_rad: tuple[float, float] = (-math.pi / 3, math.pi / 3)
    tilt_rate_range_radps: tuple[float, float] = (-3.0, 3.0)
    rotor_spin_signs: tuple[float, float, float, float] = DEFAULT_SPIN_SIGNS

    def __post_init__(self):
        if self.mass_kg <= 0:
            raise ValueError("mass_kg must be > 0")
        if self.arm_length_m <= 0:
            raise ValueError("arm_length_m must be > 0")
        if any(i <= 0 for i in self.inertia_diag):
            raise ValueError("inertia_diag components must be > 0")
        if self.dt_s <= 0:
            raise ValueError("dt_s must be > 0")
        if self.motor_lag_s < self.dt_s:
            raise ValueError("motor_lag_s must be >= dt_s")
        if self.thrust_range_n[0] < 0 or self.thrust_range_n[1] <= self.thrust_range_n[0]:
            raise ValueError("thrust_range_n must satisfy 0 <= min < max")
        lo, hi = self.tilt_angle_range_rad
        if abs(lo + hi) > 1e-12:
            raise ValueError("tilt_angle_range_rad must be symmetric about 0")
        if abs(sum(self.rotor_spin_signs)) > 1e-12:
            raise ValueError("rotor_spin_signs must sum to 0")

    @property
    def hover_thrust_n(self) -> float:
        """Per-rotor thrust balancing gravity at level attitude."""
        return self.mass_kg * self.gravity_mps2 / 4.0


@dataclass
class RigidState:
    """Full simulator state. Arrays are owned copies, world frame unless noted."""

    position_m: np.ndarray          # (3,)
    velocity_mps: np.ndarray        # (3,)
    orientation: np.ndarray         # (4,) unit quaternion (w, x, y, z), body->world
    body_rates_radps: np.ndarray    # (3,) p, q, r in body frame
    tilt_angles_rad: np.ndarray     # (4,)
    thrusts_n: np.ndarray           # (4,) actual lagged thrusts

    @classmethod
    def hover(cls, params: SimParams, position=(0.0, 0.0, 0.0)) -> "RigidState":
        """Level equilibrium at rest with hover thrusts."""
        return cls(
            position_m=np.asarray(position, dtype=float).copy(),
            velocity_mps=np.zeros(3),
            orientation=np.array([1.0, 0.0, 0.0, 0.0]),
            body_rates_radps=np.zeros(3),
            tilt_angles_rad=np.zeros(4),
            thrusts_n=np.full(4, params.hover_thrust_n),
        )

    def to_flat(self) -> np.ndarray:
        return np.concatenate([
            self.position_m, self.velocity_mps, self.orientation,
            self.body_rates_radps, self.tilt_angles_rad, self.thrusts_n,
        ])

    @classmethod
    def from_flat(cls, y: np.ndarray) -> "RigidState":
        y = np.asarray(y, dtype=float)
        return cls(y[0:3].copy(), y[3:6].copy(), y[6:10].copy(),
                   y[10:13].copy(), y[13:17].copy(), y[17:21].copy())

    def is_finite(self) -> bool:
        return bool(np.isfinite(self.to_flat()).all())


@dataclass
class ActuatorCommand:
    """Commanded thrusts and tilt rates, already in physical units."""

    thrust_cmd_n: np.ndarray        # (4,)
    tilt_rate_cmd_radps: np.ndarray  # (4,)

    @classmethod
    def hover(cls, params: SimParams) -> "ActuatorCommand":
        return cls(np.full(4, params.hover_thrust_n), np.zeros(4))


@dataclass
class RigidStateDot:
    """Time derivative of RigidState, same field layout."""

    position_m: np.ndarray
    velocity_mps: np.ndarray
    orientation: np.ndarray
    body_rates_radps: np.ndarray
    tilt_angles_rad: np.ndarray
    thrusts_n: np.ndarray


def quat_to_rot(q: np.ndarray) -> np.ndarray:
    """Rotation matrix (body->world) from unit quaternion (w, x, y, z)."""
    w, x, y, z = q
    return np.array([
        [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
        [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
        [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
    ])


def quat_from_euler_zyx(roll: float, pitch: float, yaw: float) -> np.ndarray:
    """Quaternion for R = Rz(yaw) Ry(pitch) Rx(roll)."""
    cr, sr = math.cos(roll / 2), math.sin(roll / 2)
    cp, sp = math.cos(pitch / 2), math.sin(pitch / 2)
    cy, sy = math.cos(yaw / 2), math.sin(yaw / 2)
    return np.array([
        cy * cp * cr + sy * sp * sr,
        cy * cp * sr - sy * sp * cr,
        cy * sp * cr + sy * cp * sr,
        sy * cp * cr - cy * sp * sr,
    ])


def euler_zyx(orientation: np.ndarray) -> tuple[float, float, float]:
    """Z-Y-X Euler angles (roll, pitch, yaw) of a unit quaternion.

    Pitch lies in [-pi/2, pi/2]. Near the gimbal-lock singularity
    (|pitch| within 1e-6 of pi/2) yaw is defined as 0 and roll absorbs
    the remaining rotation about the vertical.
    """
    return _euler_from_rot(quat_to_rot(orientation))


def _euler_from_rot(r: np.ndarray) -> tuple[float, float, float]:
    s = -r[2, 0]
    s = min(1.0, max(-1.0, s))
    pitch = math.asin(s)
    if abs(abs(pitch) - math.pi / 2) < 1e-6:
        if pitch > 0:
            roll = math.atan2(r[0, 1], r[0, 2])
        else:
            roll = math.atan2(-r[0, 1], -r[0, 2])
        return roll, pitch, 0.0
    roll = math.atan2(r[2, 1], r[2, 2])
    yaw = math.atan2(r[1, 0], r[0, 0])
    return roll, pitch, yaw


def body_wrench(state: RigidState, params: SimParams) -> tuple[np.ndarray, np.ndarray]:
    """Body-frame force and torque from rotor thrusts and tilt angles.

    The force excludes gravity (applied in world frame) and the torque
    excludes the gyroscopic -omega x I omega term (applied in `derivative`).
    Rotor drag moments are M_i = moment_ratio_m * F_i, directed along each
    rotor's thrust axis with sign rotor_spin_signs[i].
    """
    th = state.tilt_angles_rad
    f = state.thrusts_n
    s1, s2, s3, s4 = np.sin(th)
    c1, c2, c3, c4 = np.cos(th)
    f1, f2, f3, f4 = f
    l = params.arm_length_m
    k = params.moment_ratio_m
    g1, g2, g3, g4 = params.rotor_spin_signs
    m1, m2, m3, m4 = k * f1, k * f2, k * f3, k * f4

    force = np.array([
        f2 * s2 + f4 * s4,
        -f1 * s1 - f3 * s3,
        f1 * c1 + f2 * c2 + f3 * c3 + f4 * c4,
    ])
    # Thrust lever arms plus axial rotor moments resolved on body axes.
    torque = np.array([
        l * (f2 * c2 - f4 * c4) + g2 * m2 * s2 + g4 * m4 * s4,
        l * (f3 * c3 - f1 * c1) - g1 * m1 * s1 - g3 * m3 * s3,
        l * (-f1 * s1 - f2 * s2 + f3 * s3 + f4 * s4)
        + g1 * m1 * c1 + g2 * m2 * c2 + g3 * m3 * c3 + g4 * m4 * c4,
    ])
    return force, torque


def _deriv_list(y, thrust_cmd, tilt_cmd, p: SimParams) -> list:
    """State derivative on a flat 21-sequence. Hot path: scalar math only."""
    vx, vy, vz = y[3], y[4], y[5]
    qw, qx, qy, qz = y[6], y[7], y[8], y[9]
    wx, wy, wz = y[10], y[11], y[12]
    t1, t2, t3, t4 = y[13], y[14], y[15], y[16]
    f1, f2, f3, f4 = y[17], y[18], y[19], y[20]

    s1, c1 = math.sin(t1), math.cos(t1)
    s2, c2 = math.sin(t2), math.cos(t2)
    s3, c3 = math.sin(t3), math.cos(t3)
    s4, c4 = math.sin(t4), math.cos(t4)

    l = p.arm_length_m
    k = p.moment_ratio_m
    g1, g2, g3, g4 = p.rotor_spin_signs
    m1, m2, m3, m4 = k * f1, k * f2, k * f3, k * f4

    fx = f2 * s2 + f4 * s4
    fy = -f1 * s1 - f3 * s3
    fz = f1 * c1 + f2 * c2 + f3 * c3 + f4 * c4

    tx = l * (f2 * c2 - f4 * c4) + g2 * m2 * s2 + g4 * m4 * s4
    ty = l * (f3 * c3 - f1 * c1) - g1 * m1 * s1 - g3 * m3 * s3
    tz = (l * (-f1 * s1 - f2 * s2 + f3 * s3 + f4 * s4)
          + g1 * m1 * c1 + g2 * m2 * c2 + g3 * m3 * c3 + g4 * m4 * c4)

    # World-frame acceleration: rotate body force, subtract gravity.
    inv_m = 1.0 / p.mass_kg
    r00 = 1 - 2 * (qy * qy + qz * qz)
    r01 = 2 * (qx * qy - qw * qz)
    r02 = 2 * (qx * qz + qw * qy)
    r10 = 2 * (qx * qy + qw * qz)
    r11 = 1 - 2 * (qx * qx + qz * qz)
    r12 = 2 * (qy * qz - qw * qx)
    r20 = 2 * (qx * qz - qw * qy)
    r21 = 2 * (qy * qz + qw * qx)
    r22 = 1 - 2 * (qx * qx + qy * qy)
    ax = (r00 * fx + r01 * fy + r02 * fz) * inv_m
    ay = (r10 * fx + r11 * fy + r12 * fz) * inv_m
    az = (r20 * fx + r21 * fy + r22 * fz) * inv_m - p.gravity_mps2

    # Euler's equations with diagonal inertia.
    ix, iy, iz = p.inertia_diag
    wxd = (tx - (iz - iy) * wy * wz) / ix
    wyd = (ty - (ix - iz) * wz * wx) / iy
    wzd = (tz - (iy - ix) * wx * wy) / iz

    # Quaternion kinematics: q' = 0.5 * q (x) (0, omega).
    qwd = 0.5 * (-qx * wx - qy * wy - qz * wz)
    qxd = 0.5 * (qw * wx + qy * wz - qz * wy)
    qyd = 0.5 * (qw * wy + qz * wx - qx * wz)
    qzd = 0.5 * (qw * wz + qx * wy - qy * wx)

    # Tilt servos: ideal velocity servo, rate zeroed when pushing past a limit.
    tlo, thi = p.tilt_angle_range_rad
    td1, td2, td3, td4 = tilt_cmd[0], tilt_cmd[1], tilt_cmd[2], tilt_cmd[3]
    if (t1 >= thi and td1 > 0) or (t1 <= tlo and td1 < 0):
        td1 = 0.0
    if (t2 >= thi and td2 > 0) or (t2 <= tlo and td2 < 0):
        td2 = 0.0
    if (t3 >= thi and td3 > 0) or (t3 <= tlo and td3 < 0):
        td3 = 0.0
    if (t4 >= thi and td4 > 0) or (t4 <= tlo and td4 < 0):
        td4 = 0.0

    inv_tau = 1.0 / p.motor_lag_s
    return [
        vx, vy, vz,
        ax, ay, az,
        qwd, qxd, qyd, qzd,
        wxd, wyd, wzd,
        td1, td2, td3, td4,
        (thrust_cmd[0] - f1) * inv_tau,
        (thrust_cmd[1] - f2) * inv_tau,
        (thrust_cmd[2] - f3) * inv_tau,
        (thrust_cmd[3] - f4) * inv_tau,
    ]


def _deriv_flat(y, thrust_cmd, tilt_cmd, p: SimParams) -> np.ndarray:
    return np.array(_deriv_list(y, thrust_cmd, tilt_cmd, p))


def derivative(state: RigidState, cmd: ActuatorCommand, params: SimParams) -> RigidStateDot:
    """Time derivative of the full state under a held actuator command."""
    d = _deriv_flat(state.to_flat(), cmd.thrust_cmd_n, cmd.tilt_rate_cmd_radps, params)
    return RigidStateDot(d[0:3], d[3:6], d[6:10], d[10:13], d[13:17], d[17:21])


def step_flat(y: np.ndarray, thrust_cmd, tilt_cmd, params: SimParams) -> np.ndarray:
    """One RK4 step on the flat state vector with zero-order-hold commands."""
    dt = params.dt_s
    yl = y.tolist() if isinstance(y, np.ndarray) else list(y)
    tc = thrust_cmd.tolist() if isinstance(thrust_cmd, np.ndarray) else thrust_cmd
    rc = tilt_cmd.tolist() if isinstance(tilt_cmd, np.ndarray) else tilt_cmd
    h = 0.5 * dt
    k1 = _deriv_list(yl, tc, rc, params)
    k2 = _deriv_list([a + h * b for a, b in zip(yl, k1)], tc, rc, params)
    k3 = _deriv_list([a + h * b for a, b in zip(yl, k2)], tc, rc, params)
    k4 = _deriv_list([a + dt * b for a, b in zip(yl, k3)], tc, rc, params)
    w = dt / 6.0
    out = [a + w * (b + 2.0 * (c + d) + e)
           for a, b, c, d, e in zip(yl, k1, k2, k3, k4)]

    nsq = out[6] * out[6] + out[7] * out[7] + out[8] * out[8] + out[9] * out[9]
    if not (nsq > 0 and all(map(math.isfinite, out))):
        raise NonFiniteError("integrator produced non-finite state")
    n = math.sqrt(nsq)
    out[6] /= n
    out[7] /= n
    out[8] /= n
    out[9] /= n
    tlo, thi = params.tilt_angle_range_rad
    flo, fhi = params.thrust_range_n
    for i in range(13, 17):
        out[i] = min(thi, max(tlo, out[i]))
    for i in range(17, 21):
        out[i] = min(fhi, max(flo, out[i]))
    return np.array(out)


def step(state: RigidState, cmd: ActuatorCommand, params: SimParams) -> RigidState:
    """Advance the state by one dt_s using RK4.

    The quaternion is renormalized and tilt angles / thrusts clamped to
    their ranges after the step. Raises NonFiniteError on blow-up.
    """
    y = step_flat(state.to_flat(), cmd.thrust_cmd_n, cmd.tilt_rate_cmd_radps, params)
    return RigidState.from_flat(y)
