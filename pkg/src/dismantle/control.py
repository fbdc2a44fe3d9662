"""Switching Cartesian velocity controllers and the simulated plant.

Three controllers produce velocity commands: a position controller, an
admittance controller for force tracking (a second-order filter mapping force
error to velocity, run at 50 Hz) and an image-based visual-servoing controller
(P-control on pixel feature error through the interaction-matrix pseudo
inverse, run at 20 Hz; the lower rate models feature-extraction cost).

The plant is a velocity-integrating Cartesian robot over a contact-spring
environment observed by the flange camera.  Time is simulated, not measured:
the clock advances in integer units of 10 ms, so 50 Hz and 20 Hz ticks are
exact (2 and 5 units) and per-bucket time sums are exact integer arithmetic.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .camera import DEFAULT_CAMERA, CameraModel
from .errors import SingularJacobian, SkillTimeout
from .geometry import Pose, pose_step
from .skills import (GRIP_ACTION_S, TOOL_SWAP_S, ControlMode, SkillName,
                     SkillPrimitive, StopKind)

CLOCK_UNIT_S = 0.01          # one clock unit = 10 ms
UNITS_PER_POS_TICK = 2       # 50 Hz position / force loop
UNITS_PER_VSC_TICK = 5       # 20 Hz visual-servoing loop

RATE_POS_HZ = 50.0
RATE_VSC_HZ = 20.0

V_MAX_LIN = 0.1              # m/s
V_MAX_ANG = 0.5              # rad/s
KP_POS = 4.0                 # 1/s proportional approach gain

ENV_STIFFNESS = 10_000.0     # N/m default contact spring
RELEASE_DIST = 0.02          # m of travel that frees a retained part
RETENTION_N = 8.0            # N resisting a retained part's extraction

BUCKET_PATH = "path"
BUCKET_VSC = "vsc"
BUCKET_FTC = "ftc"
BUCKET_N = "n"


def units(seconds: float) -> int:
    return int(round(seconds / CLOCK_UNIT_S))


@dataclass(frozen=True)
class AdmittanceParams:
    """Diagonal mass/damping/stiffness of the force-to-velocity filter."""

    mass: np.ndarray = field(default_factory=lambda: np.full(6, 5.0))
    damping: np.ndarray = field(default_factory=lambda: np.full(6, 250.0))
    stiffness: np.ndarray = field(default_factory=lambda: np.full(6, 500.0))
    rate_hz: float = RATE_POS_HZ

    def __post_init__(self):
        for name in ("mass", "damping", "stiffness"):
            v = np.asarray(getattr(self, name), dtype=float)
            if v.shape != (6,) or np.any(v <= 0.0):
                raise ValueError(f"{name} must be 6 positive diagonal entries")
            v.flags.writeable = False
            object.__setattr__(self, name, v)
        if self.rate_hz <= 0.0:
            raise ValueError("rate_hz must be positive")


@dataclass(frozen=True)
class Wrench:
    force: np.ndarray = field(default_factory=lambda: np.zeros(3))
    torque: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        f = np.asarray(self.force, dtype=float)
        t = np.asarray(self.torque, dtype=float)
        if not (np.all(np.isfinite(f)) and np.all(np.isfinite(t))):
            raise ValueError("wrench entries must be finite")
        f.flags.writeable = False
        t.flags.writeable = False
        object.__setattr__(self, "force", f)
        object.__setattr__(self, "torque", t)

    def as_vector(self) -> np.ndarray:
        return np.concatenate([self.force, self.torque])


ZERO_WRENCH = Wrench()


@dataclass(frozen=True)
class IbvsParams:
    gain: float = 0.125
    rate_hz: float = RATE_VSC_HZ
    camera: CameraModel = DEFAULT_CAMERA

    def __post_init__(self):
        if self.gain <= 0.0 or self.rate_hz <= 0.0:
            raise ValueError("gain and rate_hz must be positive")


@dataclass(frozen=True)
class FeatureVector:
    pixels: np.ndarray  # (2k,) u,v per feature
    depths: np.ndarray  # (k,) meters

    def __post_init__(self):
        px = np.asarray(self.pixels, dtype=float)
        z = np.asarray(self.depths, dtype=float)
        if px.size != 2 * z.size or z.size < 3:
            raise ValueError("need at least 3 features with matching pixel pairs")
        if np.any(z <= 0.0):
            raise ValueError("feature depths must be positive")
        px.flags.writeable = False
        z.flags.writeable = False
        object.__setattr__(self, "pixels", px)
        object.__setattr__(self, "depths", z)


@dataclass(frozen=True)
class ContactPlane:
    """One-sided linear spring: pushes along ``normal`` when penetrated."""

    point: np.ndarray
    normal: np.ndarray
    stiffness: float = ENV_STIFFNESS


@dataclass(frozen=True)
class Retention:
    """Insertion retention: a constant force resists extraction along ``axis``
    until the part has traveled ``release_dist`` from ``anchor``."""

    anchor: np.ndarray
    axis: np.ndarray
    force_n: float = RETENTION_N
    release_dist: float = RELEASE_DIST


@dataclass(frozen=True)
class PlantState:
    pose: Pose
    velocity: np.ndarray = field(default_factory=lambda: np.zeros(6))
    filter_state: tuple[np.ndarray, np.ndarray] = field(
        default_factory=lambda: (np.zeros(6), np.zeros(6)))
    contacts: tuple[ContactPlane, ...] = ()
    retentions: tuple[Retention, ...] = ()
    tracked_points: np.ndarray | None = None  # world points seen by the camera


# ------------------------------------------------------------- controllers

def admittance_step(params: AdmittanceParams, f_des: Wrench, f_act: Wrench,
                    filter_state: tuple[np.ndarray, np.ndarray],
                    ) -> tuple[np.ndarray, tuple[np.ndarray, np.ndarray]]:
    """One explicit-Euler step of the admittance filter.

    The velocity command u obeys M u'' + D u' + C u = F_des - F_act per axis,
    so a constant force error e settles at u = e / c_i (DC gain 1/c_i) and
    contact buildup drives u back to zero.
    """
    dt = 1.0 / params.rate_hz
    u, ud = filter_state
    e = f_des.as_vector() - f_act.as_vector()
    udd = (e - params.damping * ud - params.stiffness * u) / params.mass
    u_new = u + dt * ud
    ud_new = ud + dt * udd
    return u_new, (u_new, ud_new)


def feature_jacobian(features: FeatureVector,
                     camera: CameraModel = DEFAULT_CAMERA) -> np.ndarray:
    """Stacked 2x6 point-feature interaction matrices in pixel units.

    Rows follow the standard convention for a point at pixel offset (u, v)
    from the principal point and depth Z with focal length f:

        [-f/Z   0    u/Z   u*v/f     -(f^2+u^2)/f   v ]
        [ 0   -f/Z   v/Z   (f^2+v^2)/f   -u*v/f    -u ]
    """
    f = camera.focal
    px = features.pixels.reshape(-1, 2)
    rows = []
    for (u, v), z in zip(px, features.depths):
        du = u - camera.cx
        dv = v - camera.cy
        rows.append([-f / z, 0.0, du / z, du * dv / f,
                     -(f * f + du * du) / f, dv])
        rows.append([0.0, -f / z, dv / z, (f * f + dv * dv) / f,
                     -du * dv / f, -du])
    return np.asarray(rows)


def ibvs_step(params: IbvsParams, f_des: FeatureVector,
              f_act: FeatureVector) -> np.ndarray:
    """P-control on the feature error through the left pseudo-inverse.

    u = gain * (J^T J)^-1 J^T (f_des - f_act), expressed in the camera frame.
    """
    jac = feature_jacobian(f_act, params.camera)
    jtj = jac.T @ jac
    eigvals = np.linalg.eigvalsh(jtj)
    if eigvals[0] <= 1e-9 * max(eigvals[-1], 1.0):
        raise SingularJacobian("feature set is degenerate for servoing")
    err = f_des.pixels - f_act.pixels
    return params.gain * np.linalg.solve(jtj, jac.T @ err)


def position_step(goal: Pose, current: Pose, v_max: float = V_MAX_LIN,
                  w_max: float = V_MAX_ANG, kp: float = KP_POS,
                  tol: float = 1e-12) -> np.ndarray:
    """Saturated proportional velocity toward the goal pose (world frame)."""
    dp = current.translation_to(goal)
    dr = current.rotation_to(goal)
    u = np.zeros(6)
    dist = np.linalg.norm(dp)
    if dist > tol:
        u[:3] = dp / dist * min(v_max, kp * dist)
    ang = np.linalg.norm(dr)
    if ang > tol:
        u[3:] = dr / ang * min(w_max, kp * ang)
    return u


# ------------------------------------------------------------- plant

def contact_wrench(pose: Pose, contacts: tuple[ContactPlane, ...],
                   retentions: tuple[Retention, ...]) -> Wrench:
    force = np.zeros(3)
    p = pose.position
    for c in contacts:
        pen = -(p - c.point) @ c.normal
        if pen > 0.0:
            force += c.stiffness * pen * c.normal
    for r in retentions:
        travel = (p - r.anchor) @ r.axis
        if 0.0 < travel < r.release_dist:
            force -= r.force_n * r.axis
    return Wrench(force, np.zeros(3))


def plant_step(state: PlantState, u: np.ndarray, dt: float,
               camera: CameraModel = DEFAULT_CAMERA,
               ) -> tuple[PlantState, tuple[Wrench, FeatureVector | None]]:
    """Integrate the commanded twist and report contact wrench and features."""
    if dt <= 0.0:
        raise ValueError("dt must be positive")
    u = np.asarray(u, dtype=float)
    pose = pose_step(state.pose, u[:3], u[3:], dt)
    wrench = contact_wrench(pose, state.contacts, state.retentions)
    feats = None
    if state.tracked_points is not None:
        px, z = camera.project(state.tracked_points, pose)
        if np.all(z > 0.0):
            feats = FeatureVector(px, z)
    new_state = replace(state, pose=pose, velocity=u.copy())
    return new_state, (wrench, feats)


# ------------------------------------------------------------- skill loop

@dataclass
class TickRow:
    t_units: int
    controller: str
    u: np.ndarray
    wrench: np.ndarray
    feat_err_px: float


@dataclass
class StepLog:
    controller: str
    buckets: dict[str, int] = field(default_factory=dict)
    rows: list[TickRow] = field(default_factory=list)
    stopped_by: str = "stop"
    final_wrench: np.ndarray = field(default_factory=lambda: np.zeros(6))
    final_feat_err: float = 0.0

    def total_units(self) -> int:
        return sum(self.buckets.values())


@dataclass
class FaultHook:
    """Per-skill executor-side disturbances used by the fault harness."""

    force_noise_sigma: float = 0.0
    feature_dropout: bool = False
    rng: np.random.Generator | None = None

    def disturb_wrench(self, wrench: Wrench) -> Wrench:
        if self.force_noise_sigma <= 0.0 or self.rng is None:
            return wrench
        noise = self.rng.normal(0.0, self.force_noise_sigma, size=3)
        return Wrench(wrench.force + noise, wrench.torque)


def _primary_controller(ap: SkillPrimitive) -> str:
    if ControlMode.VSC in ap.hm.control:
        return BUCKET_VSC
    if ControlMode.FTC in ap.hm.control:
        return BUCKET_FTC
    return BUCKET_PATH


def _pose_err(goal_vec: np.ndarray, pose: Pose) -> float:
    goal = Pose.from_rotvec(goal_vec[:3], goal_vec[3:])
    d, ang = pose.distance(goal)
    return max(d, 0.1 * ang)


def _tool_units(ap: SkillPrimitive) -> int:
    """Non-motion actuation time booked for the tool command, if any."""
    if ap.stop.kind is StopKind.TOOL_DONE and ControlMode.FTC not in ap.hm.control:
        return units(float(ap.stop.target[0]))
    if ap.tool.cmd.value in ("open", "close"):
        if ap.name in (SkillName.GET_TOOL, SkillName.PUT_TOOL):
            return units(TOOL_SWAP_S)
        return units(GRIP_ACTION_S)
    return 0


def run_skill(ap: SkillPrimitive, state: PlantState,
              start_units: int = 0,
              admittance: AdmittanceParams | None = None,
              ibvs: IbvsParams | None = None,
              camera: CameraModel = DEFAULT_CAMERA,
              fault: FaultHook | None = None) -> tuple[PlantState, StepLog]:
    """Drive one skill primitive to its stop condition on the simulated plant.

    The controller is selected per the hybrid move's per-axis modes; position
    and force loops run at 50 Hz, visual servoing at 20 Hz.  Tool actuation
    consumes fixed non-motion time booked as non-productive.  Raises
    SkillTimeout (with the partial log attached) if the stop condition never
    fires within the skill's time budget.
    """
    admittance = admittance or AdmittanceParams()
    ibvs = ibvs or IbvsParams(camera=camera)
    fault = fault or FaultHook()
    controller = _primary_controller(ap)
    log = StepLog(controller=controller)
    log.buckets = {BUCKET_PATH: 0, BUCKET_VSC: 0, BUCKET_FTC: 0, BUCKET_N: 0}

    tick_units = (UNITS_PER_VSC_TICK if controller == BUCKET_VSC
                  else UNITS_PER_POS_TICK)
    dt = tick_units * CLOCK_UNIT_S
    budget = units(ap.stop.timeout_s)
    state = replace(state, filter_state=(np.zeros(6), np.zeros(6)))

    elapsed = 0
    stop_armed = False
    spin_ticks_left = None
    if ap.stop.kind is StopKind.TOOL_DONE and ControlMode.FTC in ap.hm.control:
        spin_ticks_left = int(round(float(ap.stop.target[0]) / dt))

    # stationary tool actions skip the motion loop entirely
    motion_needed = not (ap.stop.kind is StopKind.TOOL_DONE
                         and ControlMode.FTC not in ap.hm.control)

    wrench = contact_wrench(state.pose, state.contacts, state.retentions)
    feat_err = 0.0
    while motion_needed:
        # stop-condition check against the latest observations
        if ap.stop.kind is StopKind.POSE_REACHED:
            if _pose_err(ap.stop.target, state.pose) <= ap.stop.tolerance:
                break
        elif ap.stop.kind is StopKind.FEATURE_REACHED:
            if state.tracked_points is not None and not fault.feature_dropout:
                px, z = camera.project(state.tracked_points, state.pose)
                feat_err = float(np.max(np.abs(px - ap.stop.target)))
                if feat_err <= ap.stop.tolerance:
                    break
        elif ap.stop.kind is StopKind.FORCE_REACHED:
            assert ap.hm.contact_axis is not None
            measured = -wrench.force @ ap.hm.contact_axis
            err = abs(measured - float(ap.stop.target[0]))
            if err > 2.0 * ap.stop.tolerance:
                stop_armed = True
            elif stop_armed and err <= ap.stop.tolerance:
                break
        elif ap.stop.kind is StopKind.TOOL_DONE:
            if spin_ticks_left is not None and spin_ticks_left <= 0:
                break

        if elapsed >= budget:
            log.stopped_by = "timeout"
            log.final_wrench = wrench.as_vector()
            log.final_feat_err = feat_err
            exc = SkillTimeout(
                f"{ap.name.value} stop condition {ap.stop.kind.value} "
                f"not met within {ap.stop.timeout_s:.0f} s")
            exc.state = state  # partial plant state and accounting for the caller
            exc.log = log
            raise exc from None

        # controller command
        if controller == BUCKET_VSC:
            if state.tracked_points is None or fault.feature_dropout:
                u = np.zeros(6)
            else:
                px, z = camera.project(state.tracked_points, state.pose)
                feats = FeatureVector(px, z)
                target = FeatureVector(ap.stop.target, z)
                u_cam = ibvs_step(ibvs, target, feats)
                rot = camera.camera_pose(state.pose).rotation
                u = np.concatenate([rot.apply(u_cam[:3]), rot.apply(u_cam[3:])])
        elif controller == BUCKET_FTC:
            axis = ap.hm.contact_axis
            measured = -wrench.force @ axis
            f_des = Wrench(np.array([float(ap.hm.setpoint[0]), 0.0, 0.0]))
            f_act = Wrench(np.array([measured, 0.0, 0.0]))
            u_f, filt = admittance_step(admittance, f_des, f_act,
                                        state.filter_state)
            state = replace(state, filter_state=filt)
            hold = Pose.from_rotvec(state.pose.position, ap.hm.setpoint[3:])
            u_ang = position_step(hold, state.pose)
            u = np.concatenate([axis * u_f[0], u_ang[3:]])
        else:
            goal = Pose.from_rotvec(ap.hm.setpoint[:3], ap.hm.setpoint[3:])
            u = position_step(goal, state.pose)

        state, (wrench, feats) = plant_step(state, u, dt, camera=camera)
        wrench = fault.disturb_wrench(wrench)
        elapsed += tick_units
        log.buckets[controller] += tick_units
        log.rows.append(TickRow(start_units + elapsed, controller, u,
                                wrench.as_vector(), feat_err))
        if spin_ticks_left is not None:
            spin_ticks_left -= 1

    # tool actuation: fixed non-motion time
    action = _tool_units(ap)
    if action > 0:
        log.buckets[BUCKET_N] += action
        elapsed += action
        log.rows.append(TickRow(start_units + elapsed, BUCKET_N,
                                np.zeros(6), wrench.as_vector(), feat_err))

    log.final_wrench = wrench.as_vector()
    log.final_feat_err = feat_err
    state = replace(state, velocity=np.zeros(6))
    return state, log
