import math

import numpy as np
import pytest

from conetrack.dynamics import (
    ControlCommand,
    NonFiniteStateError,
    SpeedControllerConfig,
    VehicleParams,
    VehicleState,
    advance,
    apply_steer_rate_limit,
    denormalize_steering,
    normalize_angle,
    pacejka_lateral_force,
    speed_control,
    step_dynamics,
)

RATE_112_5 = math.radians(112.5)


def test_denormalize_steering_paper_point():
    params = VehicleParams()
    assert denormalize_steering(0.4, params) == pytest.approx(math.radians(18.0))
    assert denormalize_steering(0.0, params) == 0.0


def test_denormalize_steering_limit_disabled():
    params = VehicleParams(steer_limit=math.radians(45.0))
    assert denormalize_steering(1.0, params) == pytest.approx(math.radians(45.0))


def test_denormalize_steering_saturates_past_limit():
    params = VehicleParams()
    assert denormalize_steering(0.9, params) == pytest.approx(math.radians(18.0))
    assert denormalize_steering(-0.9, params) == pytest.approx(-math.radians(18.0))


def test_steer_rate_limit_clamps():
    prev, desired = 0.0, math.radians(20.0)
    out = apply_steer_rate_limit(prev, desired, 0.1, RATE_112_5)
    assert out == pytest.approx(math.radians(11.25))


def test_steer_rate_limit_within_envelope():
    out = apply_steer_rate_limit(0.0, math.radians(5.0), 0.1, RATE_112_5)
    assert out == pytest.approx(math.radians(5.0))


def test_steer_rate_limit_absent_is_identity():
    assert apply_steer_rate_limit(0.0, math.radians(30.0), 0.1, None) == math.radians(30.0)


def test_speed_control_points():
    cfg = SpeedControllerConfig(target_speed=4.0, kp=1.0)
    assert speed_control(4.0, cfg) == 0.0
    assert speed_control(0.0, cfg) == 1.0
    cfg = SpeedControllerConfig(target_speed=4.0, kp=0.5)
    assert speed_control(4.5, cfg) == pytest.approx(-0.25)


def test_pacejka_zero_and_odd():
    params = VehicleParams()
    assert pacejka_lateral_force(0.0, params) == 0.0
    a = 0.05
    assert pacejka_lateral_force(-a, params) == pytest.approx(
        -pacejka_lateral_force(a, params), abs=1e-12)


def test_pacejka_peak_matches_stationarity():
    # Scan oracle for the peak, then the stationarity condition
    # C * atan(g(a)) = pi/2 solved by bisection on g(a) = tan(pi/(2C)).
    params = VehicleParams()
    alphas = np.arange(0.0, 0.5, 1e-4)
    forces = np.array([pacejka_lateral_force(a, params) for a in alphas])
    scan_peak = alphas[int(np.argmax(forces))]

    target_g = math.tan(math.pi / (2.0 * params.pacejka_C))

    def g(a):
        ba = params.pacejka_B * a
        return ba - params.pacejka_E * (ba - math.atan(ba))

    lo, hi = 0.0, 0.5
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if g(mid) < target_g:
            lo = mid
        else:
            hi = mid
    assert abs(scan_peak - 0.5 * (lo + hi)) < 1e-3


def test_step_dynamics_straight_line():
    state = VehicleState(vel_long=4.0)
    cmd = ControlCommand(steer_normalized=0.0, throttle_normalized=0.0)
    params = VehicleParams(drag_coeff=1e-9)
    out = step_dynamics(state, cmd, params, 0.1)
    assert out.pos_x == pytest.approx(0.4, abs=1e-12)
    assert out.pos_y == 0.0
    assert out.yaw == 0.0


def test_steady_state_yaw_rate_matches_kinematic_oracle():
    # Low speed (kinematic branch) is exact; moderate speed with a small
    # substep converges to the no-slip value within 5%.
    params = VehicleParams()
    for speed, tol in [(1.2, 1e-12), (3.0, 0.05)]:
        cfg = SpeedControllerConfig(target_speed=speed, kp=0.5)
        state = VehicleState(vel_long=speed)
        for _ in range(60):
            state = advance(state, 0.08, params, 0.1, cfg, max_substep=0.005)
        expected = state.vel_long * math.tan(state.steer_angle) / params.wheelbase
        assert state.yaw_rate == pytest.approx(expected, rel=tol if tol > 1e-9 else None,
                                               abs=1e-12 if tol <= 1e-9 else None)


def test_two_step_rate_limit_composition():
    params = VehicleParams(steer_rate_limit=RATE_112_5)
    state = VehicleState()
    cmd = ControlCommand(steer_normalized=0.4, throttle_normalized=0.0)
    state = step_dynamics(state, cmd, params, 0.1)
    assert state.steer_angle == pytest.approx(math.radians(11.25))
    state = step_dynamics(state, cmd, params, 0.1)
    assert state.steer_angle == pytest.approx(math.radians(18.0))


def test_rate_limit_bound_over_random_commands():
    params = VehicleParams(steer_rate_limit=RATE_112_5)
    cfg = SpeedControllerConfig()
    rng = np.random.default_rng(7)
    state = VehicleState(vel_long=4.0)
    dt = 0.1
    for _ in range(200):
        prev_angle = state.steer_angle
        state = advance(state, float(rng.uniform(-1, 1)), params, dt, cfg)
        assert abs(state.steer_angle - prev_angle) <= RATE_112_5 * dt + 1e-12


def test_straight_line_exact_over_many_steps():
    params = VehicleParams()
    cfg = SpeedControllerConfig()
    state = VehicleState()
    for _ in range(100):
        state = advance(state, 0.0, params, 0.1, cfg)
    assert state.pos_y == 0.0
    assert state.yaw == 0.0
    assert state.vel_long == pytest.approx(4.0, abs=0.05)


def test_coastdown_speed_non_increasing():
    params = VehicleParams()
    state = VehicleState(vel_long=4.0)
    cmd = ControlCommand(steer_normalized=0.0, throttle_normalized=0.0)
    for _ in range(100):
        nxt = step_dynamics(state, cmd, params, 0.01)
        assert nxt.vel_long <= state.vel_long
        state = nxt


def test_step_dynamics_is_pure():
    params = VehicleParams(steer_rate_limit=RATE_112_5)
    state = VehicleState(pos_x=1.0, pos_y=-2.0, yaw=0.3, vel_long=3.7,
                         vel_lat=0.12, yaw_rate=-0.2, steer_angle=0.05)
    cmd = ControlCommand(steer_normalized=0.31, throttle_normalized=0.4)
    a = step_dynamics(state, cmd, params, 0.05)
    b = step_dynamics(state, cmd, params, 0.05)
    assert a == b


def mirror(state: VehicleState) -> VehicleState:
    return VehicleState(pos_x=state.pos_x, pos_y=-state.pos_y, yaw=-state.yaw,
                        vel_long=state.vel_long, vel_lat=-state.vel_lat,
                        yaw_rate=-state.yaw_rate, steer_angle=-state.steer_angle)


def test_mirror_symmetry():
    params = VehicleParams(steer_rate_limit=RATE_112_5)
    rng = np.random.default_rng(11)
    for _ in range(50):
        state = VehicleState(
            pos_x=float(rng.uniform(-10, 10)), pos_y=float(rng.uniform(-10, 10)),
            yaw=float(rng.uniform(-2.5, 2.5)), vel_long=float(rng.uniform(0.0, 6.0)),
            vel_lat=float(rng.uniform(-1, 1)), yaw_rate=float(rng.uniform(-1, 1)),
            steer_angle=float(rng.uniform(-0.3, 0.3)))
        u = float(rng.uniform(-1, 1))
        thr = float(rng.uniform(-1, 1))
        out = step_dynamics(state, ControlCommand(u, thr), params, 0.05)
        out_m = step_dynamics(mirror(state), ControlCommand(-u, thr), params, 0.05)
        expected = mirror(out)
        for field in ("pos_x", "pos_y", "yaw", "vel_long", "vel_lat",
                      "yaw_rate", "steer_angle"):
            assert getattr(out_m, field) == pytest.approx(
                getattr(expected, field), abs=1e-9)


def test_non_finite_state_raises():
    params = VehicleParams()
    state = VehicleState(vel_long=1e200)
    cmd = ControlCommand(0.0, 0.0)
    with pytest.raises(NonFiniteStateError):
        step_dynamics(state, cmd, params, 0.1)


def test_control_command_clamps_on_construction():
    cmd = ControlCommand(steer_normalized=2.0, throttle_normalized=-3.0)
    assert cmd.steer_normalized == 1.0
    assert cmd.throttle_normalized == -1.0


def test_vehicle_params_validation():
    with pytest.raises(ValueError):
        VehicleParams(mass=-1.0)
    with pytest.raises(ValueError):
        VehicleParams(dist_cg_front=0.9)  # breaks wheelbase consistency
    with pytest.raises(ValueError):
        VehicleParams(steer_limit=math.radians(50.0))


def test_normalize_angle_range():
    for a in [0.0, 3.2, -3.2, math.pi, -math.pi, 7.0, -7.0]:
        w = normalize_angle(a)
        assert -math.pi < w <= math.pi
        assert math.isclose(math.sin(w), math.sin(a), abs_tol=1e-12)
        assert math.isclose(math.cos(w), math.cos(a), abs_tol=1e-12)
