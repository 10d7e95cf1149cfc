"""Single-track vehicle dynamics: Pacejka tires, forward-Euler stepping, steering actuator."""

import math
from dataclasses import dataclass, replace

GRAVITY = 9.81

KINEMATIC_SPEED_LIMIT = 1.5  # below this the slip-free kinematic step is used


class NonFiniteStateError(RuntimeError):
    """Raised when an integration step produces NaN/Inf (parameter blow-up)."""


def normalize_angle(angle: float) -> float:
    """Wrap an angle to (-pi, pi]."""
    wrapped = (angle + math.pi) % (2.0 * math.pi) - math.pi
    if wrapped == -math.pi:
        return math.pi
    return wrapped


@dataclass(frozen=True)
class VehicleParams:
    """Physical and actuator parameters of the single-track vehicle model."""

    mass: float = 190.0               # kg
    yaw_inertia: float = 110.0        # kg m^2
    wheelbase: float = 1.55           # m
    dist_cg_front: float = 0.775      # m, CG to front axle
    dist_cg_rear: float = 0.775       # m, CG to rear axle
    track_width: float = 1.2          # m, lateral wheel separation
    pacejka_B: float = 10.0
    pacejka_C: float = 1.9
    pacejka_D: float = 1.0            # peak force coefficient, x axle normal load
    pacejka_E: float = 0.97
    drag_coeff: float = 0.5           # N/(m/s)^2
    max_drive_force: float = 2000.0   # N at throttle 1.0
    steer_limit: float = math.radians(18.0)       # rad
    steer_rate_limit: float | None = None         # rad/s, None = unlimited
    steer_full_scale: float = math.radians(45.0)  # rad at normalized input 1.0

    def __post_init__(self):
        positive = {
            "mass": self.mass, "yaw_inertia": self.yaw_inertia,
            "wheelbase": self.wheelbase, "dist_cg_front": self.dist_cg_front,
            "dist_cg_rear": self.dist_cg_rear, "track_width": self.track_width,
            "pacejka_B": self.pacejka_B, "pacejka_C": self.pacejka_C,
            "pacejka_D": self.pacejka_D, "drag_coeff": self.drag_coeff,
            "max_drive_force": self.max_drive_force, "steer_limit": self.steer_limit,
            "steer_full_scale": self.steer_full_scale,
        }
        for name, value in positive.items():
            if not value > 0.0:
                raise ValueError(f"{name} must be strictly positive, got {value}")
        if abs(self.wheelbase - (self.dist_cg_front + self.dist_cg_rear)) > 1e-9:
            raise ValueError("wheelbase must equal dist_cg_front + dist_cg_rear")
        if self.steer_limit > self.steer_full_scale + 1e-12:
            raise ValueError("steer_limit must not exceed steer_full_scale")
        if self.steer_rate_limit is not None and not self.steer_rate_limit > 0.0:
            raise ValueError("steer_rate_limit must be positive or None")

    @property
    def steer_limit_normalized(self) -> float:
        """Normalized input magnitude at which the angle limit saturates."""
        return self.steer_limit / self.steer_full_scale

    def axle_loads(self) -> tuple[float, float]:
        """Static (front, rear) axle normal loads in newtons."""
        weight = self.mass * GRAVITY
        front = weight * self.dist_cg_rear / self.wheelbase
        return front, weight - front

    def scaled(self, factor: float) -> "VehicleParams":
        """Geometrically scaled copy (lengths x factor, mass x factor^3, inertia x factor^5)."""
        if not factor > 0.0:
            raise ValueError("scale factor must be positive")
        return replace(
            self,
            mass=self.mass * factor**3,
            yaw_inertia=self.yaw_inertia * factor**5,
            wheelbase=self.wheelbase * factor,
            dist_cg_front=self.dist_cg_front * factor,
            dist_cg_rear=self.dist_cg_rear * factor,
            track_width=self.track_width * factor,
            max_drive_force=self.max_drive_force * factor**3,
            drag_coeff=self.drag_coeff * factor**2,
        )


@dataclass(frozen=True)
class VehicleState:
    """Vehicle state: global pose plus body-frame velocities and steering angle."""

    pos_x: float = 0.0      # m, global
    pos_y: float = 0.0      # m, global
    yaw: float = 0.0        # rad, heading vs global x, in (-pi, pi]
    vel_long: float = 0.0   # m/s, body-frame longitudinal
    vel_lat: float = 0.0    # m/s, body-frame lateral
    yaw_rate: float = 0.0   # rad/s
    steer_angle: float = 0.0  # rad, current front-wheel angle

    def speed(self) -> float:
        return math.hypot(self.vel_long, self.vel_lat)


@dataclass(frozen=True)
class ControlCommand:
    """Normalized steering and throttle, clamped to [-1, 1] on construction."""

    steer_normalized: float = 0.0
    throttle_normalized: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "steer_normalized",
                           min(1.0, max(-1.0, self.steer_normalized)))
        object.__setattr__(self, "throttle_normalized",
                           min(1.0, max(-1.0, self.throttle_normalized)))


@dataclass(frozen=True)
class SpeedControllerConfig:
    """P controller holding a constant target speed via the throttle channel."""

    target_speed: float = 4.0  # m/s
    kp: float = 0.5            # throttle units per (m/s) of speed error

    def __post_init__(self):
        if not self.target_speed > 0.0:
            raise ValueError("target_speed must be positive")
        if not self.kp > 0.0:
            raise ValueError("kp must be positive")


def denormalize_steering(u: float, params: VehicleParams) -> float:
    """Map normalized steering in [-1, 1] to a wheel angle in radians.

    Linear through the origin (1.0 -> steer_full_scale) with saturation at
    +-steer_limit.
    """
    u = min(1.0, max(-1.0, u))
    u_lim = params.steer_limit_normalized
    return min(u_lim, max(-u_lim, u)) * params.steer_full_scale


def normalize_steering(angle: float, params: VehicleParams) -> float:
    """Inverse of denormalize_steering (angle clamped to the limit first)."""
    angle = min(params.steer_limit, max(-params.steer_limit, angle))
    return angle / params.steer_full_scale


def apply_steer_rate_limit(prev: float, desired: float, dt: float,
                           rate: float | None) -> float:
    """Clamp the desired angle to the slew envelope around the previous angle."""
    if rate is None:
        return desired
    max_step = rate * dt
    return min(prev + max_step, max(prev - max_step, desired))


def speed_control(current_speed: float, cfg: SpeedControllerConfig) -> float:
    """Normalized throttle from the proportional speed law, clamped to [-1, 1]."""
    return min(1.0, max(-1.0, cfg.kp * (cfg.target_speed - current_speed)))


def pacejka_lateral_force(slip_angle: float, params: VehicleParams,
                          normal_load: float | None = None) -> float:
    """Lateral tire force for one axle from the magic formula.

    F = D * sin(C * arctan(B*a - E*(B*a - arctan(B*a)))) with D scaled by the
    axle normal load (default: half of the total weight).
    """
    if normal_load is None:
        normal_load = 0.5 * params.mass * GRAVITY
    ba = params.pacejka_B * slip_angle
    inner = ba - params.pacejka_E * (ba - math.atan(ba))
    return params.pacejka_D * normal_load * math.sin(
        params.pacejka_C * math.atan(inner))


def step_dynamics(state: VehicleState, cmd: ControlCommand,
                  params: VehicleParams, dt: float) -> VehicleState:
    """One forward-Euler step of the single-track model.

    The steering command passes through the linear map, the angle limit and
    the slew-rate limit before acting. Above KINEMATIC_SPEED_LIMIT the
    dynamic bicycle model with Pacejka axle forces is integrated; below it a
    slip-free kinematic step is taken (the tire dynamics are too stiff to
    Euler-integrate near standstill).
    """
    if not dt > 0.0:
        raise ValueError("dt must be positive")
    desired = denormalize_steering(cmd.steer_normalized, params)
    steer = apply_steer_rate_limit(state.steer_angle, desired, dt,
                                   params.steer_rate_limit)

    drive = cmd.throttle_normalized * params.max_drive_force
    drag = params.drag_coeff * state.vel_long * abs(state.vel_long)

    if state.speed() < KINEMATIC_SPEED_LIMIT:
        # Kinematic single track: lateral states follow algebraically.
        acc_long = (drive - drag) / params.mass
        yaw_rate = state.vel_long * math.tan(steer) / params.wheelbase
        vel_lat = yaw_rate * params.dist_cg_rear
        new_vel_long = state.vel_long + dt * acc_long
        new_vel_lat = vel_lat
        new_yaw_rate = yaw_rate
    else:
        load_front, load_rear = params.axle_loads()
        # Slip angles, positive when the axle demands a leftward force.
        slip_front = steer - math.atan2(
            state.vel_lat + params.dist_cg_front * state.yaw_rate, state.vel_long)
        slip_rear = -math.atan2(
            state.vel_lat - params.dist_cg_rear * state.yaw_rate, state.vel_long)
        force_front = pacejka_lateral_force(slip_front, params, load_front)
        force_rear = pacejka_lateral_force(slip_rear, params, load_rear)

        acc_long = ((drive - drag - force_front * math.sin(steer)) / params.mass
                    + state.yaw_rate * state.vel_lat)
        acc_lat = ((force_front * math.cos(steer) + force_rear) / params.mass
                   - state.yaw_rate * state.vel_long)
        yaw_acc = (params.dist_cg_front * force_front * math.cos(steer)
                   - params.dist_cg_rear * force_rear) / params.yaw_inertia

        new_vel_long = state.vel_long + dt * acc_long
        new_vel_lat = state.vel_lat + dt * acc_lat
        new_yaw_rate = state.yaw_rate + dt * yaw_acc
        yaw_rate = state.yaw_rate

    cos_yaw = math.cos(state.yaw)
    sin_yaw = math.sin(state.yaw)
    # Pose integrates the velocities held at the start of the step; in the
    # kinematic branch the algebraic lateral velocity is used directly.
    vel_lat_pose = new_vel_lat if state.speed() < KINEMATIC_SPEED_LIMIT else state.vel_lat
    new = VehicleState(
        pos_x=state.pos_x + dt * (state.vel_long * cos_yaw - vel_lat_pose * sin_yaw),
        pos_y=state.pos_y + dt * (state.vel_long * sin_yaw + vel_lat_pose * cos_yaw),
        yaw=normalize_angle(state.yaw + dt * yaw_rate),
        vel_long=new_vel_long,
        vel_lat=new_vel_lat,
        yaw_rate=new_yaw_rate,
        steer_angle=steer,
    )
    values = (new.pos_x, new.pos_y, new.yaw, new.vel_long, new.vel_lat,
              new.yaw_rate, new.steer_angle)
    if not all(math.isfinite(v) for v in values):
        raise NonFiniteStateError(f"non-finite vehicle state after step: {new}")
    return new


def advance(state: VehicleState, steer_normalized: float, params: VehicleParams,
            dt: float, speed_cfg: SpeedControllerConfig,
            max_substep: float = 0.01) -> VehicleState:
    """Advance one decision interval, substepping the physics.

    The steering command is held for the whole interval while the actuator
    slews toward it; the speed P controller reruns every substep, matching a
    simulator-side controller that is faster than the decision rate.
    """
    n_sub = max(1, math.ceil(dt / max_substep))
    h = dt / n_sub
    for _ in range(n_sub):
        cmd = ControlCommand(
            steer_normalized=steer_normalized,
            throttle_normalized=speed_control(state.vel_long, speed_cfg),
        )
        state = step_dynamics(state, cmd, params, h)
    return state
