import numpy as np
import pytest

import tiltrl.neuralnet as nn
from tiltrl import evalsuite as ev
from tiltrl.dynamics import RigidState, SimParams, quat_from_euler_zyx
from tiltrl.env import TRACE_HEADER, Platform


def zero_actor(platform=Platform.TILT_ROTOR):
    """Actor whose mean action is exactly zero everywhere (hover command)."""
    net = nn.make_mlp([platform.obs_dim, 8, platform.act_dim],
                      np.random.default_rng(0), output_tanh=True)
    net.weights[-1][:] = 0.0
    net.biases[-1][:] = 0.0
    return net


class TestPidController:
    def test_hover_equilibrium(self):
        p = SimParams()
        st = RigidState.hover(p, (0.0, 0.0, 3.0))
        cmd = ev.pid_controller(st, (0.0, 0.0, 3.0), ev.PidGains(), p)
        np.testing.assert_allclose(cmd.thrust_cmd_n, p.hover_thrust_n, atol=1e-12)
        np.testing.assert_allclose(cmd.tilt_rate_cmd_radps, 0.0, atol=1e-12)

    def test_below_target_commands_more_thrust(self):
        p = SimParams()
        st = RigidState.hover(p, (0.0, 0.0, 2.0))
        cmd = ev.pid_controller(st, (0.0, 0.0, 3.0), ev.PidGains(), p)
        assert np.all(cmd.thrust_cmd_n > p.hover_thrust_n)
        # Symmetric demand: all four rotors equal.
        np.testing.assert_allclose(cmd.thrust_cmd_n, cmd.thrust_cmd_n[0])

    def test_tilt_rates_oppose_tilt(self):
        p = SimParams()
        st = RigidState.hover(p, (0.0, 0.0, 3.0))
        st.tilt_angles_rad[:] = [0.2, -0.1, 0.0, 0.3]
        cmd = ev.pid_controller(st, (0.0, 0.0, 3.0), ev.PidGains(), p)
        assert cmd.tilt_rate_cmd_radps[0] < 0
        assert cmd.tilt_rate_cmd_radps[1] > 0
        assert cmd.tilt_rate_cmd_radps[2] == 0
        assert cmd.tilt_rate_cmd_radps[3] < 0

    def test_thrust_clamped_to_range(self):
        p = SimParams()
        st = RigidState.hover(p, (0.0, 0.0, 0.0))
        st.velocity_mps[:] = [0.0, 0.0, -20.0]
        cmd = ev.pid_controller(st, (0.0, 0.0, 50.0), ev.PidGains(), p)
        lo, hi = p.thrust_range_n
        assert np.all(cmd.thrust_cmd_n >= lo) and np.all(cmd.thrust_cmd_n <= hi)

    def test_x_step_response_settles(self):
        p = SimParams()
        st = RigidState.hover(p, (0.0, 0.0, 3.0))
        final, ok, steps, _ = ev._run_to_goal(
            lambda s, t: (ev.pid_controller(s, (1.0, 0.0, 3.0), ev.PidGains(), p),
                          np.zeros(4)),
            st, (1.0, 0.0, 3.0), p, max_steps=1500, tolerance=0.1)
        assert ok and 0 < steps < 1500

    def test_attitude_recovery_from_roll(self):
        p = SimParams()
        st = RigidState.hover(p, (0.0, 0.0, 3.0))
        st.orientation[:] = quat_from_euler_zyx(0.3, 0.0, 0.0)
        final, ok, steps, _ = ev._run_to_goal(
            lambda s, t: (ev.pid_controller(s, (0.0, 0.0, 3.0), ev.PidGains(), p),
                          np.zeros(4)),
            st, (0.0, 0.0, 3.0), p)
        assert ok


class TestRunToGoal:
    def test_immediate_success_at_target(self):
        p = SimParams()
        st = RigidState.hover(p, (0.0, 0.0, 3.0))
        _, ok, steps, _ = ev._run_to_goal(
            lambda s, t: (ev.pid_controller(s, (0.0, 0.0, 3.0), ev.PidGains(), p),
                          np.zeros(4)),
            st, (0.0, 0.0, 3.0), p)
        assert ok and steps == 0

    def test_stops_at_reach(self):
        p = SimParams()
        st = RigidState.hover(p, (0.0, 0.0, 3.0))
        _, ok, steps, rows = ev._run_to_goal(
            lambda s, t: (ev.pid_controller(s, (1.0, 0.0, 3.0), ev.PidGains(), p),
                          np.zeros(4)),
            st, (1.0, 0.0, 3.0), p, record_trace=True)
        assert ok
        assert len(rows) == steps

    def test_budget_exhaustion_fails(self):
        p = SimParams()
        st = RigidState.hover(p, (0.0, 0.0, 3.0))
        _, ok, steps, _ = ev._run_to_goal(
            lambda s, t: (ev.pid_controller(s, (100.0, 0.0, 3.0), ev.PidGains(), p),
                          np.zeros(4)),
            st, (100.0, 0.0, 3.0), p, max_steps=50)
        assert not ok and steps == -1


class TestHoverEval:
    def test_deterministic_and_seeded(self):
        actor = zero_actor(Platform.QUAD)
        p = SimParams()
        a = ev.run_hover_eval(actor, Platform.QUAD, p, 5, seed=9)
        b = ev.run_hover_eval(actor, Platform.QUAD, p, 5, seed=9)
        assert [r.final_error_m for r in a] == [r.final_error_m for r in b]
        c = ev.run_hover_eval(actor, Platform.QUAD, p, 5, seed=10)
        assert [r.final_error_m for r in a] != [r.final_error_m for r in c]

    def test_trial_fields(self):
        actor = zero_actor(Platform.QUAD)
        results = ev.run_hover_eval(actor, Platform.QUAD, SimParams(), 3, seed=1)
        assert [r.trial for r in results] == [0, 1, 2]
        for r in results:
            assert r.final_error_m >= 0.0
            assert isinstance(r.success, bool)
            assert len(r.final_euler_rad) == 3
            assert len(r.final_tilt_rad) == 4

    def test_traces_recorded_on_request(self):
        actor = zero_actor(Platform.QUAD)
        results = ev.run_hover_eval(actor, Platform.QUAD, SimParams(), 2,
                                    seed=1, record_traces=True)
        assert all(r.trace for r in results)
        n_cols = len(TRACE_HEADER.split(","))
        assert all(len(row.split(",")) == n_cols
                   for r in results for row in r.trace)


class TestFaultAblation:
    def test_requires_tilt_actor(self):
        with pytest.raises(nn.ShapeMismatchError):
            ev.run_fault_ablation(zero_actor(Platform.QUAD), 1, 2,
                                  SimParams(), seed=0)

    def test_pairing_identical_across_policies(self):
        # Two different actors with the same seed must see identical faulty
        # servos and identical initial states.
        p = SimParams()
        a1 = zero_actor()
        a2 = nn.make_mlp([22, 8, 8], np.random.default_rng(5), output_tanh=True)
        _, r1 = ev.run_fault_ablation(a1, 2, 4, p, seed=3)
        _, r2 = ev.run_fault_ablation(a2, 2, 4, p, seed=3)
        assert [r.servo_ids for r in r1] == [r.servo_ids for r in r2]

    def test_faulty_servo_count(self):
        p = SimParams()
        for n in (1, 2, 3, 4):
            _, results = ev.run_fault_ablation(zero_actor(), n, 2, p, seed=0)
            assert all(len(r.servo_ids) == n for r in results)
            assert all(len(set(r.servo_ids)) == n for r in results)

    def test_response_probability_zero_freezes_tilt(self):
        # A dead servo (response probability 0) never moves: with all four
        # servos faulty and a constant tilt command, tilt angles stay at the
        # zero initialization.
        p = SimParams()
        actor = zero_actor()
        actor.biases[-1][4:] = 0.5
        _, dead = ev.run_fault_ablation(actor, 4, 2, p, seed=2,
                                        response_probability=0.0)
        for r in dead:
            np.testing.assert_array_equal(r.final_tilt_rad, 0.0)
        _, live = ev.run_fault_ablation(actor, 4, 2, p, seed=2,
                                        response_probability=1.0)
        for r in live:
            assert np.any(np.asarray(r.final_tilt_rad) != 0.0)

    def test_success_count_matches_results(self):
        p = SimParams()
        succ, results = ev.run_fault_ablation(zero_actor(), 1, 5, p, seed=0)
        assert succ == sum(r.success for r in results)


class TestWaypointMission:
    def test_default_square(self):
        m = ev.default_square_mission()
        assert len(m.waypoints) == 4
        assert all(w[2] == 3.0 for w in m.waypoints)

    def test_mission_spec_validation(self):
        with pytest.raises(ValueError):
            ev.MissionSpec(waypoints=())
        with pytest.raises(ValueError):
            ev.MissionSpec(waypoints=((0, 0, 3),), reach_tolerance_m=0.0)

    def test_pid_flies_default_mission(self):
        res = ev.run_waypoint_mission("pid", ev.default_square_mission(),
                                      SimParams())
        assert res.all_visited
        assert res.hits == [True, True, True, True]
        assert res.trace  # full trace recorded

    def test_trivial_single_waypoint_at_start(self):
        m = ev.MissionSpec(waypoints=((0.0, 0.0, 3.0),))
        res = ev.run_waypoint_mission("pid", m, SimParams())
        assert res.all_visited

    def test_mission_deterministic(self):
        a = ev.run_waypoint_mission("pid", ev.default_square_mission(), SimParams())
        b = ev.run_waypoint_mission("pid", ev.default_square_mission(), SimParams())
        assert a.trace == b.trace


class TestSummaryRows:
    def test_schema(self):
        p = SimParams()
        _, results = ev.run_fault_ablation(zero_actor(), 2, 3, p, seed=0)
        rows = ev.summary_rows(results, n_faulty=2)
        n_cols = len(ev.SUMMARY_HEADER.split(","))
        assert len(rows) == 3
        for row in rows:
            assert len(row.split(",")) == n_cols
        # servo ids are ;-separated inside one field
        assert all(len(row.split(",")[3].split(";")) == 2 for row in rows)
