"""Hover MDP around the rigid-body simulator.

Observations are error vectors (current minus desired) plus the flattened
body->world rotation matrix: 18 components for the quadcopter, 22 for the
tilt-rotor (extra tilt-angle errors). Actions live in [-1, 1] per actuator
and are scaled linearly to thrusts (centered at hover) and tilt rates.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np

from .dynamics import (
    ActuatorCommand,
    RigidState,
    SimParams,
    _euler_from_rot,
    euler_zyx,
    quat_from_euler_zyx,
    quat_to_rot,
    step_flat,
    NonFiniteError,
)


_ZERO4 = np.zeros(4)


class Platform(enum.Enum):
    QUAD = "quad"
    TILT_ROTOR = "tilt_rotor"

    @property
    def obs_dim(self) -> int:
        return 18 if self is Platform.QUAD else 22

    @property
    def act_dim(self) -> int:
        return 4 if self is Platform.QUAD else 8


class TermStatus(enum.Enum):
    RUNNING = "running"
    MAX_STEPS = "max_steps"
    OUT_OF_BOUNDS = "out_of_bounds"
    DIVERGED = "diverged"


@dataclass
class Observation:
    """Error observation fed to the networks."""

    e_p: np.ndarray                  # (3,) position error, m
    e_v: np.ndarray                  # (3,) velocity error, m/s
    r_flat: np.ndarray               # (9,) row-major body->world rotation
    e_omega: np.ndarray              # (3,) body-rate error, rad/s
    e_tilt: np.ndarray | None = None  # (4,) tilt-angle error, tilt-rotor only

    @property
    def vector(self) -> np.ndarray:
        parts = [self.e_p, self.e_v, self.r_flat, self.e_omega]
        if self.e_tilt is not None:
            parts.append(self.e_tilt)
        return np.concatenate(parts)


@dataclass(frozen=True)
class EpisodeConfig:
    target_position_m: tuple[float, float, float] = (0.0, 0.0, 5.0)
    max_steps: int = 1500
    bound_halfwidth_m: float = 1.5
    init_pos_halfwidth_m: float = 1.0
    init_speed_max_mps: float = 1.0
    init_rate_max_radps: float = 1.0
    so3_warmup_episodes: int = 500
    euler_init_range_rad: float = math.pi / 3

    def __post_init__(self):
        if self.max_steps <= 0:
            raise ValueError("max_steps must be > 0")
        if not (self.bound_halfwidth_m > self.init_pos_halfwidth_m > 0):
            raise ValueError("need bound_halfwidth_m > init_pos_halfwidth_m > 0")


@dataclass(frozen=True)
class RewardWeights:
    beta: float = 5.0
    alpha_a: float = 0.25
    alpha_p: float = 1.0
    alpha_v: float = 0.05
    alpha_omega: float = 0.25
    alpha_roll: float = 0.1
    alpha_pitch: float = 0.1
    alpha_tilt: float = 0.5

    def __post_init__(self):
        for name in ("beta", "alpha_a", "alpha_p", "alpha_v", "alpha_omega",
                     "alpha_roll", "alpha_pitch", "alpha_tilt"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be >= 0")


def observe(state: RigidState, target, platform: Platform) -> Observation:
    """Error observation; desired velocity/rates/tilts are all zero."""
    e_p = state.position_m - np.asarray(target, dtype=float)
    r_flat = quat_to_rot(state.orientation).reshape(9)
    e_tilt = state.tilt_angles_rad.copy() if platform is Platform.TILT_ROTOR else None
    return Observation(e_p, state.velocity_mps.copy(), r_flat,
                       state.body_rates_radps.copy(), e_tilt)


def scale_thrust(a: float, params: SimParams) -> float:
    """Policy output in [-1, 1] -> rotor thrust in N, centered at hover."""
    lo, hi = params.thrust_range_n
    f = params.hover_thrust_n + a * (hi - lo) / 2.0
    return min(hi, max(lo, f))


def scale_tilt_rate(a: float, params: SimParams) -> float:
    """Policy output in [-1, 1] -> tilt servo rate in rad/s."""
    lo, hi = params.tilt_rate_range_radps
    return a * (hi - lo) / 2.0


def reward(obs: Observation, action: np.ndarray, weights: RewardWeights,
           euler: tuple[float, float, float], platform: Platform) -> float:
    """Alive bonus minus weighted error/action norms. Yaw is never penalized."""
    w = weights
    r = (w.beta
         - w.alpha_a * float(np.linalg.norm(action))
         - w.alpha_p * float(np.linalg.norm(obs.e_p))
         - w.alpha_v * float(np.linalg.norm(obs.e_v))
         - w.alpha_omega * float(np.linalg.norm(obs.e_omega))
         - w.alpha_roll * abs(euler[0])
         - w.alpha_pitch * abs(euler[1]))
    if platform is Platform.TILT_ROTOR:
        r -= w.alpha_tilt * float(np.linalg.norm(obs.e_tilt))
    return r


def random_unit_quat(rng: np.random.Generator) -> np.ndarray:
    """Uniform sample on SO(3) via a normalized 4-dim Gaussian."""
    q = rng.standard_normal(4)
    return q / np.linalg.norm(q)


def reset_state(rng: np.random.Generator, cfg: EpisodeConfig,
                episode_index: int, params: SimParams) -> RigidState:
    """Sample an initial state for one episode.

    Position is uniform in a cube around the target; speed and body-rate
    magnitudes are uniform with uniformly random directions. Orientation is
    uniform on SO(3) during the warmup episodes, afterwards Euler angles are
    drawn from the shrunk range. Tilt angles start at zero, thrusts at hover.
    """
    w = cfg.init_pos_halfwidth_m
    pos = np.asarray(cfg.target_position_m) + rng.uniform(-w, w, 3)

    def _random_dir():
        v = rng.standard_normal(3)
        n = np.linalg.norm(v)
        return v / n if n > 0 else np.array([1.0, 0.0, 0.0])

    vel = rng.uniform(0.0, cfg.init_speed_max_mps) * _random_dir()
    omega = rng.uniform(0.0, cfg.init_rate_max_radps) * _random_dir()

    if episode_index < cfg.so3_warmup_episodes:
        q = random_unit_quat(rng)
    else:
        e = cfg.euler_init_range_rad
        q = quat_from_euler_zyx(*rng.uniform(-e, e, 3))

    return RigidState(
        position_m=pos,
        velocity_mps=vel,
        orientation=q,
        body_rates_radps=omega,
        tilt_angles_rad=np.zeros(4),
        thrusts_n=np.full(4, params.hover_thrust_n),
    )


def terminated(state: RigidState, t: int, cfg: EpisodeConfig) -> TermStatus:
    """Episode status after step t."""
    if not state.is_finite():
        return TermStatus.DIVERGED
    if t >= cfg.max_steps:
        return TermStatus.MAX_STEPS
    err = np.abs(state.position_m - np.asarray(cfg.target_position_m))
    if np.any(err > cfg.bound_halfwidth_m):
        return TermStatus.OUT_OF_BOUNDS
    return TermStatus.RUNNING


class EpisodeCounter:
    """Global episode index shared by a pool of environments."""

    def __init__(self, start: int = 0):
        self.value = start

    def next(self) -> int:
        idx = self.value
        self.value += 1
        return idx


class HoverEnv:
    """Gym-style wrapper: reset() -> obs, step(action) -> (obs, reward, status).

    Each instance owns its RNG and state; instances are independent.
    """

    def __init__(self, platform: Platform, params: SimParams, cfg: EpisodeConfig,
                 weights: RewardWeights, rng: np.random.Generator,
                 counter: EpisodeCounter | None = None):
        self.platform = platform
        self.params = params
        self.cfg = cfg
        self.weights = weights
        self.rng = rng
        self.counter = counter if counter is not None else EpisodeCounter()
        self._y: np.ndarray | None = None   # flat state, see dynamics layout
        self.t = 0
        self._target = np.asarray(cfg.target_position_m, dtype=float)

    @property
    def state(self) -> RigidState | None:
        return RigidState.from_flat(self._y) if self._y is not None else None

    @state.setter
    def state(self, value: RigidState | None):
        self._y = value.to_flat() if value is not None else None

    @property
    def obs_dim(self) -> int:
        return self.platform.obs_dim

    @property
    def act_dim(self) -> int:
        return self.platform.act_dim

    def observe(self) -> np.ndarray:
        return observe(self.state, self.cfg.target_position_m, self.platform).vector

    def reset(self) -> np.ndarray:
        self.state = reset_state(self.rng, self.cfg, self.counter.next(), self.params)
        self.t = 0
        return self.observe()

    def command_from_action(self, action: np.ndarray) -> ActuatorCommand:
        """Clamp to [-1, 1] and scale to physical actuator commands."""
        a = np.clip(action, -1.0, 1.0)
        thrust = np.array([scale_thrust(x, self.params) for x in a[:4]])
        if self.platform is Platform.TILT_ROTOR:
            rates = np.array([scale_tilt_rate(x, self.params) for x in a[4:8]])
        else:
            rates = np.zeros(4)
        return ActuatorCommand(thrust, rates)

    def step(self, action: np.ndarray) -> tuple[np.ndarray, float, TermStatus]:
        """Apply one clamped/scaled action; reward is on the post-step state."""
        p = self.params
        a = np.clip(action, -1.0, 1.0)
        flo, fhi = p.thrust_range_n
        thrust = np.clip(p.hover_thrust_n + a[:4] * (fhi - flo) / 2.0, flo, fhi)
        if self.platform is Platform.TILT_ROTOR:
            rlo, rhi = p.tilt_rate_range_radps
            rates = a[4:8] * (rhi - rlo) / 2.0
        else:
            rates = _ZERO4
        try:
            y = step_flat(self._y, thrust, rates, p)
        except NonFiniteError:
            self.t += 1
            return np.zeros(self.obs_dim), 0.0, TermStatus.DIVERGED
        self._y = y
        self.t += 1

        cfg = self.cfg
        e_p = y[0:3] - self._target
        vel = y[3:6]
        omega = y[10:13]
        r_mat = quat_to_rot(y[6:10])
        obs_vec = np.empty(self.obs_dim)
        obs_vec[0:3] = e_p
        obs_vec[3:6] = vel
        obs_vec[6:15] = r_mat.reshape(9)
        obs_vec[15:18] = omega
        tilt = self.platform is Platform.TILT_ROTOR
        if tilt:
            obs_vec[18:22] = y[13:17]

        roll, pitch, _ = _euler_from_rot(r_mat)
        w = self.weights
        rew = (w.beta
               - w.alpha_a * math.sqrt(float(a @ a))
               - w.alpha_p * math.sqrt(float(e_p @ e_p))
               - w.alpha_v * math.sqrt(float(vel @ vel))
               - w.alpha_omega * math.sqrt(float(omega @ omega))
               - w.alpha_roll * abs(roll) - w.alpha_pitch * abs(pitch))
        if tilt:
            ta = y[13:17]
            rew -= w.alpha_tilt * math.sqrt(float(ta @ ta))

        if self.t >= cfg.max_steps:
            status = TermStatus.MAX_STEPS
        elif (abs(e_p[0]) > cfg.bound_halfwidth_m
              or abs(e_p[1]) > cfg.bound_halfwidth_m
              or abs(e_p[2]) > cfg.bound_halfwidth_m):
            status = TermStatus.OUT_OF_BOUNDS
        else:
            status = TermStatus.RUNNING
        return obs_vec, rew, status


TRACE_HEADER = ("t,x,y,z,vx,vy,vz,roll,pitch,yaw,p,q,r,"
                "tilt1,tilt2,tilt3,tilt4,F1,F2,F3,F4,"
                "a1,a2,a3,a4,a5,a6,a7,a8,reward")


def trace_row(t: int, state: RigidState, action: np.ndarray, rew: float) -> str:
    """One CSV row of the episode trace schema (actions padded to 8)."""
    roll, pitch, yaw = euler_zyx(state.orientation)
    a = np.zeros(8)
    a[:len(action)] = action
    vals = ([t] + list(state.position_m) + list(state.velocity_mps)
            + [roll, pitch, yaw] + list(state.body_rates_radps)
            + list(state.tilt_angles_rad) + list(state.thrusts_n)
            + list(a) + [rew])
    return ",".join(f"{v:.9g}" if isinstance(v, float) else str(v) for v in vals)


def write_trace(path, rows: list[str]) -> None:
    with open(path, "w") as fh:
        fh.write(TRACE_HEADER + "\n")
        for row in rows:
            fh.write(row + "\n")
