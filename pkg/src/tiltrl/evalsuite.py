"""Evaluation protocols: hover recovery from random initial states, tilt
servo fault ablations, and waypoint missions against a cascaded PID baseline.

Evaluation is deterministic: actions are the policy mean, never sampled.
Fault/initialization randomness comes from per-trial seeds so compared
policies see identical conditions.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import neuralnet as nn
from .dynamics import (ActuatorCommand, NonFiniteError, RigidState, SimParams,
                       euler_zyx, quat_to_rot, step_flat)
from .env import (EpisodeConfig, Platform, observe, reset_state, scale_thrust,
                  scale_tilt_rate, trace_row)

HOVER_TARGET = (0.0, 0.0, 3.0)
SUCCESS_TOLERANCE_M = 0.2
MAX_EVAL_STEPS = 1500


@dataclass(frozen=True)
class FaultModel:
    """Tilt servos that obey the commanded rate only with some probability."""

    faulty_servo_indices: tuple[int, ...] = ()
    response_probability: float = 0.4

    def __post_init__(self):
        if not (0.0 <= self.response_probability <= 1.0):
            raise ValueError("response_probability must be in [0, 1]")
        if len(set(self.faulty_servo_indices)) != len(self.faulty_servo_indices):
            raise ValueError("faulty servo indices must be distinct")
        if any(i not in (0, 1, 2, 3) for i in self.faulty_servo_indices):
            raise ValueError("servo indices must be in 0..3")


@dataclass(frozen=True)
class MissionSpec:
    waypoints: tuple[tuple[float, float, float], ...]
    reach_tolerance_m: float = 0.2
    steps_per_waypoint: int = 1500

    def __post_init__(self):
        if not self.waypoints:
            raise ValueError("mission needs at least one waypoint")
        if self.reach_tolerance_m <= 0:
            raise ValueError("reach_tolerance_m must be > 0")


def default_square_mission(z: float = 3.0, side: float = 2.0) -> MissionSpec:
    """Square circuit of four waypoints at constant altitude."""
    h = side / 2.0
    return MissionSpec(waypoints=((h, h, z), (-h, h, z), (-h, -h, z), (h, -h, z)))


@dataclass
class TrialResult:
    trial: int
    seed: int
    success: bool
    steps_to_reach: int          # -1 when the goal was never reached
    final_error_m: float
    final_euler_rad: tuple[float, float, float]
    final_tilt_rad: tuple[float, float, float, float]
    servo_ids: tuple[int, ...] = ()
    trace: list[str] | None = None


def policy_command(actor: nn.Mlp, state: RigidState, target,
                   platform: Platform, params: SimParams) -> tuple[ActuatorCommand, np.ndarray]:
    """Deterministic actuator command from the policy mean."""
    obs = observe(state, target, platform).vector
    a = np.clip(nn.forward(actor, obs), -1.0, 1.0)
    thrust = np.array([scale_thrust(x, params) for x in a[:4]])
    if platform is Platform.TILT_ROTOR:
        rates = np.array([scale_tilt_rate(x, params) for x in a[4:8]])
    else:
        rates = np.zeros(4)
    return ActuatorCommand(thrust, rates), a


def _run_to_goal(command_fn, state: RigidState, target, params: SimParams,
                 max_steps: int = MAX_EVAL_STEPS, tolerance: float = SUCCESS_TOLERANCE_M,
                 record_trace: bool = False):
    """Step the simulator until the target is reached or the budget runs out.

    command_fn(state, t) -> (ActuatorCommand, action_vector). Returns
    (state, success, steps_to_reach, rows)."""
    target = np.asarray(target, dtype=float)
    rows: list[str] = []
    y = state.to_flat()
    success = False
    steps_to_reach = -1
    if np.linalg.norm(state.position_m - target) <= tolerance:
        return state, True, 0, rows
    for t in range(max_steps):
        st = RigidState.from_flat(y)
        cmd, action = command_fn(st, t)
        try:
            y = step_flat(y, cmd.thrust_cmd_n, cmd.tilt_rate_cmd_radps, params)
        except NonFiniteError:
            return st, False, -1, rows
        if record_trace:
            rows.append(trace_row(t + 1, RigidState.from_flat(y), action, 0.0))
        if np.linalg.norm(y[0:3] - target) <= tolerance:
            success = True
            steps_to_reach = t + 1
            break
    return RigidState.from_flat(y), success, steps_to_reach, rows


def run_hover_eval(actor: nn.Mlp, platform: Platform, params: SimParams,
                   n_trials: int, seed: int, target=HOVER_TARGET,
                   record_traces: bool = False) -> list[TrialResult]:
    """Hover recovery from random initial states around the target.

    Initialization follows the training distribution with the shrunk Euler
    range (no SO(3) warmup at evaluation). Success: within 0.2 m of the
    target at any step within the budget."""
    cfg = EpisodeConfig(target_position_m=tuple(target))
    results = []
    for trial in range(n_trials):
        trial_seed = np.random.SeedSequence([seed, trial])
        rng = np.random.default_rng(trial_seed)
        state = reset_state(rng, cfg, cfg.so3_warmup_episodes, params)

        def cmd_fn(st, t):
            return policy_command(actor, st, target, platform, params)

        final, success, steps, rows = _run_to_goal(
            cmd_fn, state, target, params, record_trace=record_traces)
        results.append(TrialResult(
            trial=trial, seed=seed, success=success, steps_to_reach=steps,
            final_error_m=float(np.linalg.norm(final.position_m - np.asarray(target))),
            final_euler_rad=euler_zyx(final.orientation),
            final_tilt_rad=tuple(final.tilt_angles_rad),
            trace=rows if record_traces else None))
    return results


def fault_draws(trial_seed: np.random.SeedSequence):
    """Dedicated Bernoulli stream for servo responses, independent of the
    initial-state stream so paired policies consume identical draws."""
    return np.random.default_rng(trial_seed.spawn(1)[0])


def run_fault_ablation(actor: nn.Mlp, n_faulty: int, trials: int,
                       params: SimParams, seed: int,
                       response_probability: float = 0.4,
                       target=HOVER_TARGET) -> tuple[int, list[TrialResult]]:
    """Servo-fault ablation on the tilt-rotor: per timestep each faulty
    servo obeys the commanded rate with probability 0.4, otherwise rate 0.

    Per-trial seeds drive initialization, faulty-servo choice, and fault
    draws, so two policies evaluated with the same seed are exactly paired.
    """
    if actor.in_dim != Platform.TILT_ROTOR.obs_dim:
        raise nn.ShapeMismatchError("fault ablation requires a tilt-rotor actor")
    cfg = EpisodeConfig(target_position_m=tuple(target))
    results = []
    successes = 0
    for trial in range(trials):
        trial_seed = np.random.SeedSequence([seed, trial])
        init_rng = np.random.default_rng(trial_seed)
        faulty = tuple(init_rng.choice(4, size=n_faulty, replace=False))
        state = reset_state(init_rng, cfg, cfg.so3_warmup_episodes, params)
        frng = fault_draws(trial_seed)

        def cmd_fn(st, t):
            cmd, a = policy_command(actor, st, target, Platform.TILT_ROTOR, params)
            for s in faulty:
                if frng.random() >= response_probability:
                    cmd.tilt_rate_cmd_radps[s] = 0.0
            return cmd, a

        final, success, steps, _ = _run_to_goal(cmd_fn, state, target, params)
        successes += int(success)
        results.append(TrialResult(
            trial=trial, seed=seed, success=success, steps_to_reach=steps,
            final_error_m=float(np.linalg.norm(final.position_m - np.asarray(target))),
            final_euler_rad=euler_zyx(final.orientation),
            final_tilt_rad=tuple(final.tilt_angles_rad),
            servo_ids=tuple(int(s) for s in faulty)))
    return successes, results


# --- PID baseline -------------------------------------------------------------

@dataclass(frozen=True)
class PidGains:
    """Cascaded controller gains; defaults from a manual tuning run.

    Yaw uses its own soft gains: the drag-moment ratio is small, so yaw
    torque costs a large differential thrust and must not be allowed to
    drown out roll/pitch authority in the mixer."""

    kp_pos: float = 2.0
    kd_pos: float = 2.8
    kp_att: float = 100.0
    kd_att: float = 20.0
    kp_yaw: float = 5.0
    kd_yaw: float = 2.0
    k_tilt: float = 4.0
    max_tilt_accel: float = 5.0   # m/s^2 cap on horizontal acceleration demand


def pid_controller(state: RigidState, target, gains: PidGains,
                   params: SimParams) -> ActuatorCommand:
    """Cascaded PID: position error -> desired acceleration -> desired
    attitude + collective thrust; attitude PD -> torques -> plus-config
    mixing; tilt rates regulate tilt angles to zero."""
    target = np.asarray(target, dtype=float)
    g = params.gravity_mps2
    m = params.mass_kg
    l = params.arm_length_m
    k = params.moment_ratio_m

    a_des = gains.kp_pos * (target - state.position_m) - gains.kd_pos * state.velocity_mps
    a_norm = np.linalg.norm(a_des[:2])
    if a_norm > gains.max_tilt_accel:
        a_des[:2] *= gains.max_tilt_accel / a_norm
    a_des[2] += g

    r = quat_to_rot(state.orientation)
    # Desired body z aligned with the acceleration demand; yaw kept current.
    z_des = a_des / max(np.linalg.norm(a_des), 1e-9)
    yaw = math.atan2(r[1, 0], r[0, 0])
    x_c = np.array([math.cos(yaw), math.sin(yaw), 0.0])
    y_des = np.cross(z_des, x_c)
    y_des /= max(np.linalg.norm(y_des), 1e-9)
    x_des = np.cross(y_des, z_des)
    r_des = np.column_stack([x_des, y_des, z_des])

    # Geometric attitude error 0.5*(Rd^T R - R^T Rd)^vee.
    e_mat = 0.5 * (r_des.T @ r - r.T @ r_des)
    e_att = np.array([e_mat[2, 1], e_mat[0, 2], e_mat[1, 0]])
    omega = state.body_rates_radps
    ix, iy, iz = params.inertia_diag
    tau = np.array([
        ix * (-gains.kp_att * e_att[0] - gains.kd_att * omega[0]),
        iy * (-gains.kp_att * e_att[1] - gains.kd_att * omega[1]),
        iz * (-gains.kp_yaw * e_att[2] - gains.kd_yaw * omega[2]),
    ])

    collective = m * float(a_des @ r[:, 2])
    collective = max(collective, 0.0)

    # Plus-configuration mixing at zero tilt (yaw via rotor drag moments,
    # signs matching the dynamics' spin-sign pattern).
    fc = collective / 4.0
    tx, ty, tz = tau
    g1, g2, g3, g4 = params.rotor_spin_signs
    f1 = fc - ty / (2 * l) + g1 * tz / (4 * k)
    f2 = fc + tx / (2 * l) + g2 * tz / (4 * k)
    f3 = fc + ty / (2 * l) + g3 * tz / (4 * k)
    f4 = fc - tx / (2 * l) + g4 * tz / (4 * k)
    thrust = np.clip([f1, f2, f3, f4], *params.thrust_range_n)

    rates = np.clip(-gains.k_tilt * state.tilt_angles_rad,
                    *params.tilt_rate_range_radps)
    return ActuatorCommand(np.asarray(thrust, dtype=float), rates)


@dataclass
class MissionResult:
    hits: list[bool]
    all_visited: bool
    trace: list[str]


def run_waypoint_mission(controller, mission: MissionSpec, params: SimParams,
                         start: RigidState | None = None,
                         platform: Platform = Platform.TILT_ROTOR,
                         gains: PidGains | None = None) -> MissionResult:
    """Fly the mission; the target switches to the next waypoint on reach.

    controller is either "pid" or a trained actor Mlp. Returns per-waypoint
    hit flags and the full trace."""
    if start is None:
        state = RigidState.hover(params, (0.0, 0.0, mission.waypoints[0][2]))
    else:
        state = start
    gains = gains if gains is not None else PidGains()
    rows: list[str] = []
    hits: list[bool] = []
    t_global = 0
    for wp in mission.waypoints:
        wp_arr = np.asarray(wp, dtype=float)

        if controller == "pid":
            def cmd_fn(st, t, _wp=wp_arr):
                return pid_controller(st, _wp, gains, params), np.zeros(4)
        else:
            def cmd_fn(st, t, _wp=wp_arr):
                return policy_command(controller, st, _wp, platform, params)

        state, reached, steps, trace = _run_to_goal(
            cmd_fn, state, wp_arr, params, max_steps=mission.steps_per_waypoint,
            tolerance=mission.reach_tolerance_m, record_trace=True)
        rows.extend(trace)
        t_global += len(trace)
        hits.append(reached)
        if not reached:
            break
    return MissionResult(hits=hits, all_visited=len(hits) == len(mission.waypoints)
                         and all(hits), trace=rows)


SUMMARY_HEADER = "trial,seed,n_faulty,servo_ids,success,steps_to_reach,final_error_m"


def summary_rows(results: list[TrialResult], n_faulty: int = 0) -> list[str]:
    rows = []
    for r in results:
        ids = ";".join(str(s) for s in r.servo_ids)
        rows.append(f"{r.trial},{r.seed},{n_faulty},{ids},{int(r.success)},"
                    f"{r.steps_to_reach},{r.final_error_m:.6g}")
    return rows
