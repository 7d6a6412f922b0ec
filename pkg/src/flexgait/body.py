"""Reduced-order quadruped physics, joint-angle mapping and tilt feedback.

The trunk is a single rigid box; legs are massless two-segment chains servoed
toward commanded angles with first-order lag.  Feet, knees and trunk corners
generate penalty-spring ground forces with viscous damping and Coulomb-capped
tangential friction, all applied to the trunk.  Axes: +x right, +y forward,
+z up; gravity acts along -z.

Everything is written batch-first so that many independent trials can be
advanced in lockstep (leading axis = trial).  The public single-trial
operations wrap batch size 1.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Sequence

import numpy as np

from . import neuro
from .errors import ConfigurationError, SimulationDivergedError

DT_PHYSICS = 0.02  # s
DT_DECISION = 0.1  # s

# per-limb geometry signs, limb order LF RF LH RH
_SIDE_X = np.array([-1.0, 1.0, -1.0, 1.0])  # left limbs at -x
_FRONT_Y = np.array([1.0, 1.0, -1.0, -1.0])
_ABDUCT_SIGN = -_SIDE_X  # positive hip angle abducts outward on either side
_FB_SIDE_SIGN = np.array([1.0, -1.0, 1.0, -1.0])  # sideways tilt: +left, -right
_FB_FRONT_SIGN = np.array([1.0, 1.0, -1.0, -1.0])  # front-back tilt: +front, -hind


def logistic(x):
    """Rising logistic 1 / (1 + exp(-x))."""
    return 1.0 / (1.0 + np.exp(-x))


@dataclass(frozen=True)
class MorphologyParams:
    """Trunk and leg geometry plus contact model constants."""

    name: str = "normal"
    trunk_length: float = 0.4  # m, along +y
    trunk_width: float = 0.3  # m, along x
    trunk_height: float = 0.1  # m
    mass: float = 2.0  # kg
    upper_leg: float = 0.16  # m
    lower_leg: float = 0.16  # m
    contact_stiffness: float = 3000.0  # N/m
    contact_damping: float = 80.0  # N s/m
    tangential_damping: float = 30.0  # N s/m, viscous coefficient under the Coulomb cap
    friction: float = 0.8
    max_contact_force: float = 100.0  # N, per-point normal force cap
    inertia_scale: float = 3.0  # accounts for leg/motor mass absent from the box trunk
    gravity: float = 9.81
    servo_tau: float = 0.05  # s, first-order joint lag
    substeps: int = 4

    def __post_init__(self):
        for name in ("trunk_length", "trunk_width", "trunk_height", "mass", "upper_leg", "lower_leg"):
            if getattr(self, name) <= 0:
                raise ConfigurationError(f"{name} must be positive")

    def short_variant(self) -> "MorphologyParams":
        """Upper leg shortened by 40%, lower leg by 33%."""
        return replace(self, name="short", upper_leg=self.upper_leg * 0.6, lower_leg=self.lower_leg * 0.67)

    def inertia(self) -> np.ndarray:
        lx, ly, lz = self.trunk_width, self.trunk_length, self.trunk_height
        box = self.mass / 12.0 * np.array([ly * ly + lz * lz, lx * lx + lz * lz, lx * lx + ly * ly])
        return self.inertia_scale * box

    def hip_anchors(self) -> np.ndarray:
        """(4, 3) hip attachment points in the trunk frame, limb order LF RF LH RH."""
        return np.stack(
            [
                _SIDE_X * self.trunk_width / 2.0,
                _FRONT_Y * self.trunk_length / 2.0,
                np.full(4, -self.trunk_height / 2.0),
            ],
            axis=-1,
        )

    def trunk_corners(self) -> np.ndarray:
        sx = np.array([-1, 1, -1, 1, -1, 1, -1, 1]) * self.trunk_width / 2.0
        sy = np.array([-1, -1, 1, 1, -1, -1, 1, 1]) * self.trunk_length / 2.0
        sz = np.array([-1, -1, -1, -1, 1, 1, 1, 1]) * self.trunk_height / 2.0
        return np.stack([sx, sy, sz], axis=-1)


def normal_morphology() -> MorphologyParams:
    return MorphologyParams()


def short_morphology() -> MorphologyParams:
    return MorphologyParams().short_variant()


def get_morphology(name: str) -> MorphologyParams:
    try:
        return {"normal": normal_morphology, "short": short_morphology}[name]()
    except KeyError:
        raise ConfigurationError(f"unknown morphology {name!r}") from None


@dataclass(frozen=True)
class JointCommandParams:
    """Joint activation and feedback parameters.  All angles in radians;
    theta0_leg > 0 and theta0_knee < 0 (full-elbow standing pose)."""

    theta0_hip: float = 0.2
    theta0_leg: float = 0.4
    theta0_knee: float = -0.8
    gain_a: float = 0.02  # output gain A (leg)
    gain_b: float = 0.02  # output gain B (knee)
    q_a_front: float = 0.0
    q_b_front: float = 0.0
    q_a_side: float = 0.0
    q_b_side: float = 0.0
    theta_lim_leg: float = math.pi / 2.0
    theta_lim_knee: float = math.pi / 2.0

    def standing_joints(self) -> np.ndarray:
        """(8,) joint angles [leg, knee] per limb at rest."""
        out = np.empty(8)
        out[0::2] = self.theta0_leg
        out[1::2] = self.theta0_knee
        return out

    def to_dict(self) -> dict:
        return {
            "theta0_hip": self.theta0_hip,
            "theta0_leg": self.theta0_leg,
            "theta0_knee": self.theta0_knee,
            "gain_a": self.gain_a,
            "gain_b": self.gain_b,
            "q_a_front": self.q_a_front,
            "q_b_front": self.q_b_front,
            "q_a_side": self.q_a_side,
            "q_b_side": self.q_b_side,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "JointCommandParams":
        return cls(**data)


@dataclass
class BodyState:
    """Trunk pose and velocity, servoed joint angles and foot contact flags."""

    pos: np.ndarray
    quat: np.ndarray  # (w, x, y, z), unit
    vel: np.ndarray
    omega: np.ndarray  # world frame
    joints: np.ndarray  # (8,) [leg, knee] per limb, limb order LF RF LH RH
    contacts: np.ndarray  # (4,) bool, per foot

    def copy(self) -> "BodyState":
        return BodyState(*(a.copy() for a in (self.pos, self.quat, self.vel, self.omega, self.joints, self.contacts)))


# ---------------------------------------------------------------------------
# quaternion helpers, batched over the leading axis


def quat_to_rot(q):
    w, x, y, z = q[..., 0], q[..., 1], q[..., 2], q[..., 3]
    R = np.empty(q.shape[:-1] + (3, 3))
    R[..., 0, 0] = 1 - 2 * (y * y + z * z)
    R[..., 0, 1] = 2 * (x * y - w * z)
    R[..., 0, 2] = 2 * (x * z + w * y)
    R[..., 1, 0] = 2 * (x * y + w * z)
    R[..., 1, 1] = 1 - 2 * (x * x + z * z)
    R[..., 1, 2] = 2 * (y * z - w * x)
    R[..., 2, 0] = 2 * (x * z - w * y)
    R[..., 2, 1] = 2 * (y * z + w * x)
    R[..., 2, 2] = 1 - 2 * (x * x + y * y)
    return R


def quat_multiply(q1, q2):
    w1, x1, y1, z1 = q1[..., 0], q1[..., 1], q1[..., 2], q1[..., 3]
    w2, x2, y2, z2 = q2[..., 0], q2[..., 1], q2[..., 2], q2[..., 3]
    return np.stack(
        [
            w1 * w2 - x1 * x2 - y1 * y2 - z1 * z2,
            w1 * x2 + x1 * w2 + y1 * z2 - z1 * y2,
            w1 * y2 - x1 * z2 + y1 * w2 + z1 * x2,
            w1 * z2 + x1 * y2 - y1 * x2 + z1 * w2,
        ],
        axis=-1,
    )


def quat_from_rotvec(v):
    half = 0.5 * v
    angle = np.linalg.norm(half, axis=-1)
    w = np.cos(angle)
    xyz = half * np.sinc(angle / np.pi)[..., None]
    return np.concatenate([w[..., None], xyz], axis=-1)


def _normalize_quat(q):
    return q / np.linalg.norm(q, axis=-1, keepdims=True)


# ---------------------------------------------------------------------------
# leg kinematics


def _leg_points(joints, hip_abduction, morph):
    """Knee and foot positions in the trunk frame.

    joints: (..., 8); hip_abduction: (...,) constant hip angle.
    Returns (knees, feet), each (..., 4, 3).
    """
    theta_leg = joints[..., 0::2]
    theta_knee = joints[..., 1::2]
    alpha = hip_abduction[..., None] * _ABDUCT_SIGN
    knee_y = morph.upper_leg * np.sin(theta_leg)
    knee_z = -morph.upper_leg * np.cos(theta_leg)
    foot_y = knee_y + morph.lower_leg * np.sin(theta_leg + theta_knee)
    foot_z = knee_z - morph.lower_leg * np.cos(theta_leg + theta_knee)
    sin_a, cos_a = np.sin(alpha), np.cos(alpha)
    anchors = morph.hip_anchors()

    def assemble(y, z):
        return np.stack([anchors[..., 0] + z * sin_a, anchors[..., 1] + y, anchors[..., 2] + z * cos_a], axis=-1)

    return assemble(knee_y, knee_z), assemble(foot_y, foot_z)


def standing_height(cmd: JointCommandParams, morph: MorphologyParams) -> float:
    """Trunk-center height when standing with feet on the ground."""
    joints = cmd.standing_joints()[None, :]
    _, feet = _leg_points(joints, np.array([cmd.theta0_hip]), morph)
    return float(-feet[0, :, 2].min())


def initial_body_state(cmd: JointCommandParams, morph: MorphologyParams) -> BodyState:
    """Level trunk at standing height, zero velocity, joints at standing pose."""
    return BodyState(
        pos=np.array([0.0, 0.0, standing_height(cmd, morph)]),
        quat=np.array([1.0, 0.0, 0.0, 0.0]),
        vel=np.zeros(3),
        omega=np.zeros(3),
        joints=cmd.standing_joints(),
        contacts=np.zeros(4, dtype=bool),
    )


# ---------------------------------------------------------------------------
# joint-angle mapping and tilt feedback


def joint_targets(
    delta_h_a: np.ndarray,
    delta_h_b: np.ndarray,
    dt_decision: float,
    cmd: JointCommandParams,
    theta_c: float = 0.0,
) -> np.ndarray:
    """Map per-limb changes of the rectified motor outputs to 8 joint angles.

    leg  = theta0_leg  + lim * (2 sigma(2A/lim * dh_A/dt) - 1) + theta_C
    knee = theta0_knee + lim * (2 sigma(2B/lim * dh_B/dt) - 1)
    """
    if dt_decision <= 0:
        raise ConfigurationError(f"dt_decision must be positive, got {dt_decision}")
    delta_h_a = np.asarray(delta_h_a, dtype=float)
    delta_h_b = np.asarray(delta_h_b, dtype=float)
    lim_l, lim_k = cmd.theta_lim_leg, cmd.theta_lim_knee
    leg = cmd.theta0_leg + lim_l * (2.0 * logistic(2.0 * cmd.gain_a / lim_l * delta_h_a / dt_decision) - 1.0) + theta_c
    knee = cmd.theta0_knee + lim_k * (2.0 * logistic(2.0 * cmd.gain_b / lim_k * delta_h_b / dt_decision) - 1.0)
    out = np.empty(delta_h_a.shape[:-1] + (8,))
    out[..., 0::2] = leg
    out[..., 1::2] = knee
    return out


def _tilt_components(R):
    """Sideways tilt s (x component of the trunk-top normal) and front-back
    tilt f (upward component of the trunk-front normal)."""
    return R[..., 0, 2], R[..., 2, 1]


def _tilt_feedback_from_R(R, cmd):
    s, f = _tilt_components(R)
    fb = np.empty(R.shape[:-2] + (8,))
    fb[..., 0::2] = cmd.q_a_side * s[..., None] * _FB_SIDE_SIGN + cmd.q_a_front * f[..., None] * _FB_FRONT_SIGN
    fb[..., 1::2] = cmd.q_b_side * s[..., None] * _FB_SIDE_SIGN + cmd.q_b_front * f[..., None] * _FB_FRONT_SIGN
    return fb


def _tilt_feedback_batch(R, cmd_arrays):
    s, f = _tilt_components(R)  # (B,)
    fb = np.empty((R.shape[0], 8))
    fb[:, 0::2] = (cmd_arrays["q_a_side"] * s)[:, None] * _FB_SIDE_SIGN + (cmd_arrays["q_a_front"] * f)[:, None] * _FB_FRONT_SIGN
    fb[:, 1::2] = (cmd_arrays["q_b_side"] * s)[:, None] * _FB_SIDE_SIGN + (cmd_arrays["q_b_front"] * f)[:, None] * _FB_FRONT_SIGN
    return fb


def tilt_feedback(state: BodyState, cmd: JointCommandParams) -> np.ndarray:
    """(8,) feedback currents for the motor neurons, [A, B] per limb.

    Sideways tilt enters left and right limbs with opposite signs; front-back
    tilt enters front and hind limbs with opposite signs.  Interneurons
    receive no feedback (see motor_feedback_to_network)."""
    norm = np.linalg.norm(state.quat)
    if abs(norm - 1.0) > 1e-9:
        raise ConfigurationError(f"orientation quaternion not normalized (|q| = {norm})")
    return _tilt_feedback_from_R(quat_to_rot(state.quat[None])[0], cmd)


def motor_feedback_to_network(fb8: np.ndarray, spec: neuro.NetworkSpec) -> np.ndarray:
    """Expand (..., 8) motor feedback into a per-neuron vector (zeros elsewhere)."""
    idx_a, idx_b = spec.motor_indices()
    out = np.zeros(fb8.shape[:-1] + (spec.n,))
    out[..., idx_a] = fb8[..., 0::2]
    out[..., idx_b] = fb8[..., 1::2]
    return out


# ---------------------------------------------------------------------------
# rigid-body step (batched)


class _BodyBatch:
    """Struct-of-arrays body state for B concurrent trials."""

    def __init__(self, B, cmd_arrays, morph):
        self.B = B
        self.pos = np.zeros((B, 3))
        self.quat = np.tile(np.array([1.0, 0.0, 0.0, 0.0]), (B, 1))
        self.vel = np.zeros((B, 3))
        self.omega = np.zeros((B, 3))
        self.joints = np.zeros((B, 8))
        self.contacts = np.zeros((B, 4), dtype=bool)
        self.alive = np.ones(B, dtype=bool)
        self.fall_time = np.full(B, np.nan)
        self.last_pos = np.zeros((B, 3))  # last finite position of each trial
        self.cmd = cmd_arrays
        self.morph = morph

    @classmethod
    def from_states(cls, states, cmd_arrays, morph):
        batch = cls(len(states), cmd_arrays, morph)
        for i, s in enumerate(states):
            batch.pos[i] = s.pos
            batch.quat[i] = s.quat
            batch.vel[i] = s.vel
            batch.omega[i] = s.omega
            batch.joints[i] = s.joints
            batch.contacts[i] = s.contacts
        batch.last_pos = batch.pos.copy()
        return batch

    def state(self, i) -> BodyState:
        return BodyState(
            self.pos[i].copy(), self.quat[i].copy(), self.vel[i].copy(),
            self.omega[i].copy(), self.joints[i].copy(), self.contacts[i].copy(),
        )


def _stack_cmds(cmds: Sequence[JointCommandParams]) -> dict:
    names = ("theta0_hip", "theta0_leg", "theta0_knee", "gain_a", "gain_b",
             "q_a_front", "q_b_front", "q_a_side", "q_b_side", "theta_lim_leg", "theta_lim_knee")
    return {name: np.array([getattr(c, name) for c in cmds], dtype=float) for name in names}


def _contact_points(batch, joints):
    knees, feet = _leg_points(joints, batch.cmd["theta0_hip"], batch.morph)
    corners = np.broadcast_to(batch.morph.trunk_corners(), (batch.B, 8, 3))
    return np.concatenate([feet, knees, corners], axis=1)


def _physics_step_batch(batch: _BodyBatch, targets, morph: MorphologyParams, dt: float):
    """Advance all trials by dt (internally substepped).  Returns the rotation
    matrices after the step for reuse by metric accumulation."""
    n_sub = morph.substeps
    dt_s = dt / n_sub
    servo = 1.0 - math.exp(-dt_s / morph.servo_tau)
    inv_inertia = 1.0 / morph.inertia()
    inertia = morph.inertia()
    m = morph.mass
    k, c_n, c_t, mu = morph.contact_stiffness, morph.contact_damping, morph.tangential_damping, morph.friction
    pts_body = _contact_points(batch, batch.joints)
    R = quat_to_rot(batch.quat)
    for _ in range(n_sub):
        joints_new = batch.joints + servo * (targets - batch.joints)
        pts_new = _contact_points(batch, joints_new)
        rel = np.einsum("bij,bpj->bpi", R, pts_new)
        pts_world = batch.pos[:, None, :] + rel
        v_pts = (
            batch.vel[:, None, :]
            + np.cross(batch.omega[:, None, :], rel)
            + np.einsum("bij,bpj->bpi", R, (pts_new - pts_body) / dt_s)
        )
        pen = -pts_world[..., 2]
        # the [0, cap] clamp keeps contacts adhesion-free and bounds stomp
        # forces so damping spikes cannot catapult the trunk
        fn = np.where(pen > 0.0, k * pen - c_n * v_pts[..., 2], 0.0)
        np.clip(fn, 0.0, morph.max_contact_force, out=fn)
        vt = v_pts[..., :2]
        vt_norm = np.sqrt(vt[..., 0] ** 2 + vt[..., 1] ** 2)
        ft_mag = np.minimum(mu * fn, c_t * vt_norm)
        ft = -(ft_mag / np.maximum(vt_norm, 1e-9))[..., None] * vt
        force = np.concatenate([ft, fn[..., None]], axis=-1)
        total_f = force.sum(axis=1)
        total_f[:, 2] -= m * morph.gravity
        torque = np.cross(rel, force).sum(axis=1)

        acc = total_f / m
        batch.pos += batch.vel * dt_s + 0.5 * acc * dt_s * dt_s
        batch.vel += acc * dt_s
        omega_b = np.einsum("bji,bj->bi", R, batch.omega)
        torque_b = np.einsum("bji,bj->bi", R, torque)
        domega_b = (torque_b - np.cross(omega_b, inertia * omega_b)) * inv_inertia
        batch.omega += np.einsum("bij,bj->bi", R, domega_b) * dt_s
        batch.quat = _normalize_quat(quat_multiply(quat_from_rotvec(batch.omega * dt_s), batch.quat))
        batch.joints = joints_new
        pts_body = pts_new
        R = quat_to_rot(batch.quat)
        batch.contacts = pen[:, :4] > 0.0
    return R


def _park_dead(batch: _BodyBatch, t: float):
    """Detect newly diverged trials, remember where they fell and park them in
    a harmless pose so the batch stays finite."""
    finite = (
        np.isfinite(batch.pos).all(axis=1)
        & np.isfinite(batch.vel).all(axis=1)
        & np.isfinite(batch.quat).all(axis=1)
        & np.isfinite(batch.omega).all(axis=1)
        & np.isfinite(batch.joints).all(axis=1)
    )
    sane = (
        (np.abs(batch.pos) < 1e3).all(axis=1)
        & (np.abs(batch.vel) < 1e3).all(axis=1)
        & (np.abs(batch.omega) < 2e3).all(axis=1)
    )
    ok = finite & sane
    newly_dead = batch.alive & ~ok
    if np.any(newly_dead):
        batch.fall_time[newly_dead] = t
        batch.alive &= ok
        batch.pos[newly_dead] = (0.0, 0.0, 1.0)
        batch.quat[newly_dead] = (1.0, 0.0, 0.0, 0.0)
        batch.vel[newly_dead] = 0.0
        batch.omega[newly_dead] = 0.0
        batch.joints[newly_dead] = 0.0
    batch.last_pos[batch.alive] = batch.pos[batch.alive]


def physics_step(
    state: BodyState,
    targets: np.ndarray,
    morph: MorphologyParams,
    dt: float = DT_PHYSICS,
    hip_abduction: float = 0.0,
) -> BodyState:
    """Advance a single body by dt toward the given joint targets."""
    cmd_arrays = _stack_cmds([JointCommandParams(theta0_hip=hip_abduction)])
    batch = _BodyBatch.from_states([state], cmd_arrays, morph)
    _physics_step_batch(batch, np.asarray(targets, dtype=float)[None, :], morph, dt)
    bad = ~(
        np.isfinite(batch.pos).all() and np.isfinite(batch.vel).all()
        and np.isfinite(batch.quat).all() and np.isfinite(batch.omega).all()
    )
    if bad:
        raise SimulationDivergedError("body state became non-finite", time=dt)
    return batch.state(0)


def mechanical_energy(state: BodyState, morph: MorphologyParams) -> float:
    """Kinetic plus gravitational potential energy of the trunk."""
    R = quat_to_rot(state.quat[None])[0]
    omega_b = R.T @ state.omega
    rot = 0.5 * float(omega_b @ (morph.inertia() * omega_b))
    lin = 0.5 * morph.mass * float(state.vel @ state.vel)
    return lin + rot + morph.mass * morph.gravity * float(state.pos[2])


# ---------------------------------------------------------------------------
# trial schedules


@dataclass(frozen=True)
class Stage:
    """One schedule stage.  i_dc and theta_c are constants or (start, end)
    pairs ramped linearly across the stage."""

    duration: float
    i_dc: float | tuple = 0.5
    theta_c: float | tuple = 0.0


@dataclass(frozen=True)
class Schedule:
    stages: tuple
    burn_in: float = 8.0
    ramp_duration: float = 2.0

    @property
    def duration(self) -> float:
        return sum(s.duration for s in self.stages)

    def stage_edges(self) -> np.ndarray:
        return np.cumsum([s.duration for s in self.stages])

    def _value_at(self, t, attr):
        t = np.asarray(t, dtype=float)
        out = np.empty(t.shape)
        start = 0.0
        last = 0.0
        for s in self.stages:
            v = getattr(s, attr)
            v0, v1 = (v, v) if np.isscalar(v) else v
            end = start + s.duration
            sel = (t >= start) & (t < end)
            frac = np.where(sel, (t - start) / max(s.duration, 1e-12), 0.0)
            out[sel] = (v0 + (v1 - v0) * frac)[sel]
            start = end
            last = v1
        out[t >= start] = last
        v_first = self.stages[0].i_dc if attr == "i_dc" else self.stages[0].theta_c
        v0 = v_first if np.isscalar(v_first) else v_first[0]
        out[t < 0] = v0
        return out

    def i_dc_at(self, t):
        return self._value_at(t, "i_dc")

    def theta_c_at(self, t):
        return self._value_at(t, "theta_c")

    def to_dict(self) -> dict:
        return {
            "burn_in": self.burn_in,
            "ramp_duration": self.ramp_duration,
            "stages": [
                {"duration": s.duration,
                 "i_dc": list(s.i_dc) if not np.isscalar(s.i_dc) else s.i_dc,
                 "theta_c": list(s.theta_c) if not np.isscalar(s.theta_c) else s.theta_c}
                for s in self.stages
            ],
        }

    @classmethod
    def from_dict(cls, data: dict) -> "Schedule":
        stages = tuple(
            Stage(
                duration=s["duration"],
                i_dc=tuple(s["i_dc"]) if isinstance(s["i_dc"], (list, tuple)) else s["i_dc"],
                theta_c=tuple(s["theta_c"]) if isinstance(s["theta_c"], (list, tuple)) else s["theta_c"],
            )
            for s in data["stages"]
        )
        return cls(stages=stages, burn_in=data.get("burn_in", 8.0), ramp_duration=data.get("ramp_duration", 2.0))


def standard_sweep_schedule(
    theta_c_mag: float = 0.016,
    i_dc_base: float = 0.5,
    i_dc_end: float = 1.0,
    stage_duration: float = 10.0,
) -> Schedule:
    """Backward stage, steady forward stage, accelerating forward stage."""
    return Schedule(
        stages=(
            Stage(stage_duration, i_dc=i_dc_base, theta_c=-theta_c_mag),
            Stage(stage_duration, i_dc=i_dc_base, theta_c=theta_c_mag),
            Stage(stage_duration, i_dc=(i_dc_base, i_dc_end), theta_c=theta_c_mag),
        )
    )


def constant_schedule(duration: float, i_dc: float = 0.5, theta_c: float = 0.0, burn_in: float = 8.0) -> Schedule:
    return Schedule(stages=(Stage(duration, i_dc=i_dc, theta_c=theta_c),), burn_in=burn_in)


# ---------------------------------------------------------------------------
# trial execution


@dataclass
class TrialMetrics:
    """Aggregates returned by run_trial."""

    stage_displacements: list  # [(dx, dy)] per stage, world frame
    h_tot: float  # mean trunk height / standing height
    t_tot: float  # rms of |n_top x z_hat|
    fallen: bool
    fall_time: float | None
    standing_height: float


@dataclass
class TrialResult:
    metrics: TrialMetrics
    cpg_steps: int
    physics_steps: int
    decisions: int
    neuron_t: np.ndarray | None = None
    neuron_u: np.ndarray | None = None
    neuron_out: np.ndarray | None = None
    neuron_channels: tuple = ()
    body_t: np.ndarray | None = None
    body_pos: np.ndarray | None = None
    body_quat: np.ndarray | None = None
    body_joints: np.ndarray | None = None
    body_contacts: np.ndarray | None = None


def _period_channels(spec: neuro.NetworkSpec) -> tuple:
    """Indices of the first limb's leg (A) and knee (B) neurons."""
    idx_a, idx_b = spec.motor_indices()
    return int(idx_a[0]), int(idx_b[0])


def run_trials(
    networks: Sequence[neuro.NetworkSpec],
    commands: Sequence[JointCommandParams],
    morphology: MorphologyParams,
    schedule: Schedule,
    seeds: Sequence[int],
    external_inputs: np.ndarray | None = None,
    model: str = "modified",
    record: str = "none",
    initial_states: Sequence[np.ndarray] | None = None,
    dt_cpg: float = neuro.DT_CPG,
    dt_physics: float = DT_PHYSICS,
    dt_decision: float = DT_DECISION,
) -> list[TrialResult]:
    """Run B independent trials in lockstep.

    Each trial: CPG burn-in, then interleaved network/physics stepping with a
    signal exchange every decision interval (joint targets out, tilt feedback
    in).  Joint deflections from the standing pose ramp linearly from zero
    over the schedule's ramp_duration.  `external_inputs`, if given, has shape
    (B, n_cpg_steps) and is the shared scalar input sampled at CPG steps from
    t = 0.  record: "none" | "period" (first limb's A/B fast variables) |
    "full" (all neuron and body series).
    """
    B = len(networks)
    if not (len(commands) == len(seeds) == B):
        raise ConfigurationError("networks, commands and seeds must have equal length")
    if schedule.duration <= 0:
        raise ConfigurationError("schedule must have positive total duration")
    n = networks[0].n
    roles = networks[0].roles
    for sp in networks:
        if sp.n != n or sp.roles != roles:
            raise ConfigurationError("all networks in a batch must share size and roles")
    classic = {"modified": False, "classic": True}[model]

    params = {name: np.stack([getattr(sp, name) for sp in networks]) for name in ("t0", "gamma", "a", "b", "kappa", "u0", "c", "d", "G")}
    w = np.stack([sp.w for sp in networks])
    tau = np.stack([sp.tau for sp in networks])
    tau_is_zero = not np.any(tau)

    idx_a, idx_b = networks[0].motor_indices()
    fb_expand_a, fb_expand_b = idx_a, idx_b

    cmd_arrays = _stack_cmds(commands)
    batch = _BodyBatch(B, cmd_arrays, morphology)
    standing = np.empty(B)
    for i, c in enumerate(commands):
        st = initial_body_state(c, morphology)
        batch.pos[i] = st.pos
        batch.joints[i] = st.joints
        standing[i] = st.pos[2]
    batch.last_pos = batch.pos.copy()
    standing_joints = batch.joints.copy()

    # initial network state: u ~ U[0,1), v = 0, seeded per trial (or given)
    if initial_states is None:
        u = np.stack([np.random.default_rng(s).uniform(0.0, 1.0, n) for s in seeds])
    else:
        u = np.array(initial_states, dtype=float)
        if u.shape != (B, n):
            raise ConfigurationError(f"initial_states shape {u.shape}, expected ({B}, {n})")
    v = np.zeros((B, n))

    duration = schedule.duration
    n_dec = int(round(duration / dt_decision))
    steps_per_dec = dt_decision / dt_cpg
    phys_per_dec = int(round(dt_decision / dt_physics))
    n_cpg_steps = int(math.ceil(n_dec * steps_per_dec - 1e-9))
    n_burn_dec = int(round(schedule.burn_in / dt_decision))

    if external_inputs is not None:
        external_inputs = np.asarray(external_inputs, dtype=float)
        if external_inputs.shape != (B, n_cpg_steps):
            raise ConfigurationError(
                f"external_inputs shape {external_inputs.shape}, expected ({B}, {n_cpg_steps})"
            )

    # i_dc per CPG step, evaluated at the pre-step clock
    step_times = np.arange(n_cpg_steps) * dt_cpg
    i_dc_steps = schedule.i_dc_at(step_times)
    i_dc_burn = float(schedule.i_dc_at(np.array([0.0]))[0])

    record_neuron = record in ("period", "full")
    if record == "period":
        channels = _period_channels(networks[0])
    elif record == "full":
        channels = tuple(range(n))
    else:
        channels = ()
    if record_neuron:
        neuron_u = np.empty((n_cpg_steps, B, len(channels)))
    n_phys_total = n_dec * phys_per_dec
    if record == "full":
        body_pos = np.empty((n_phys_total, B, 3))
        body_quat = np.empty((n_phys_total, B, 4))
        body_joints = np.empty((n_phys_total, B, 8))
        body_contacts = np.zeros((n_phys_total, B, 4), dtype=bool)

    # metric accumulators
    h_sum = np.zeros(B)
    tilt_sq_sum = np.zeros(B)
    edges = schedule.stage_edges()
    snap_pending = list(edges)
    snapshots = [batch.pos[:, :2].copy()]

    h_prev_a = np.zeros((B, 4))
    h_prev_b = np.zeros((B, 4))
    i_fb = np.zeros((B, n))
    targets = standing_joints.copy()
    R = quat_to_rot(batch.quat)
    phys_idx = 0

    def boundary_step(k):
        return int(math.ceil(k * steps_per_dec - 1e-9))

    with np.errstate(over="ignore", invalid="ignore", under="ignore"):
        # burn-in: network only, on the decision cadence so the first exchange
        # has a well-defined previous-output sample
        burn_bound = [boundary_step(k) for k in range(n_burn_dec + 1)]
        for k in range(n_burn_dec):
            if k == n_burn_dec - 1:
                # sample one window before t = 0 so the first exchange sees the
                # output change over the last burn-in window
                h_prev_a = neuro.rectify(u[:, idx_a])
                h_prev_b = neuro.rectify(u[:, idx_b])
            n_sub_steps = burn_bound[k + 1] - burn_bound[k]
            for _ in range(n_sub_steps):
                u, v = _step_trial(u, v, dt_cpg, params, w, tau, tau_is_zero, i_dc_burn, 0.0, None, classic)
        _mask_network(u, v, batch, 0.0)

        cpg_step = 0
        for k in range(n_dec):
            t_k = k * dt_decision
            # exchange at the boundary
            h_now_a = neuro.rectify(u[:, idx_a])
            h_now_b = neuro.rectify(u[:, idx_b])
            delta_a = h_now_a - h_prev_a
            delta_b = h_now_b - h_prev_b
            h_prev_a, h_prev_b = h_now_a, h_now_b
            theta_c = float(schedule.theta_c_at(np.array([t_k]))[0])
            raw_targets = _joint_targets_batch(delta_a, delta_b, dt_decision, cmd_arrays, theta_c)
            ramp = min(t_k / schedule.ramp_duration, 1.0) if schedule.ramp_duration > 0 else 1.0
            targets = standing_joints + ramp * (raw_targets - standing_joints)
            fb8 = _tilt_feedback_batch(R, cmd_arrays)
            i_fb.fill(0.0)
            i_fb[:, fb_expand_a] = fb8[:, 0::2]
            i_fb[:, fb_expand_b] = fb8[:, 1::2]
            i_fb[~batch.alive] = 0.0

            # physics for this window
            for j in range(phys_per_dec):
                R = _physics_step_batch(batch, targets, morphology, dt_physics)
                t_now = t_k + (j + 1) * dt_physics
                _park_dead(batch, t_now)
                if np.any(~batch.alive):
                    R = quat_to_rot(batch.quat)
                # height ratio capped so brief hops cannot push H_tot far past 1
                h_sum += np.where(batch.alive, np.minimum(batch.pos[:, 2] / standing, 1.25), 0.0)
                tilt_sq_sum += np.where(batch.alive, 1.0 - R[:, 2, 2] ** 2, 1.0)
                if record == "full":
                    body_pos[phys_idx] = batch.pos
                    body_quat[phys_idx] = batch.quat
                    body_joints[phys_idx] = batch.joints
                    body_contacts[phys_idx] = batch.contacts
                phys_idx += 1

            # network for this window
            next_bound = boundary_step(k + 1)
            while cpg_step < next_bound:
                ext = external_inputs[:, cpg_step] if external_inputs is not None else 0.0
                u, v = _step_trial(u, v, dt_cpg, params, w, tau, tau_is_zero, i_dc_steps[cpg_step], ext, i_fb, classic)
                if record_neuron:
                    neuron_u[cpg_step] = u[:, channels]
                cpg_step += 1
            _mask_network(u, v, batch, t_k + dt_decision)

            while snap_pending and t_k + dt_decision >= snap_pending[0] - 1e-9:
                snap_pending.pop(0)
                snapshots.append(batch.last_pos[:, :2].copy())

    while len(snapshots) < len(edges) + 1:
        snapshots.append(batch.last_pos[:, :2].copy())

    n_phys = n_dec * phys_per_dec
    results = []
    for i in range(B):
        disp = [tuple(snapshots[j + 1][i] - snapshots[j][i]) for j in range(len(edges))]
        fallen = not batch.alive[i]
        metrics = TrialMetrics(
            stage_displacements=disp,
            h_tot=float(h_sum[i] / n_phys),
            t_tot=float(np.sqrt(tilt_sq_sum[i] / n_phys)),
            fallen=fallen,
            fall_time=float(batch.fall_time[i]) if fallen else None,
            standing_height=float(standing[i]),
        )
        res = TrialResult(
            metrics=metrics,
            cpg_steps=n_cpg_steps,
            physics_steps=n_phys,
            decisions=n_dec,
            neuron_channels=channels,
        )
        if record_neuron:
            res.neuron_t = (np.arange(n_cpg_steps) + 1) * dt_cpg
            res.neuron_u = neuron_u[:, i, :].copy()
            res.neuron_out = neuro.rectify(res.neuron_u)
        if record == "full":
            res.body_t = (np.arange(n_phys) + 1) * dt_physics
            res.body_pos = body_pos[:, i, :].copy()
            res.body_quat = body_quat[:, i, :].copy()
            res.body_joints = body_joints[:, i, :].copy()
            res.body_contacts = body_contacts[:, i, :].copy()
        results.append(res)
    return results


def _joint_targets_batch(delta_a, delta_b, dt_decision, cmd_arrays, theta_c):
    lim_l = cmd_arrays["theta_lim_leg"][:, None]
    lim_k = cmd_arrays["theta_lim_knee"][:, None]
    gain_a = cmd_arrays["gain_a"][:, None]
    gain_b = cmd_arrays["gain_b"][:, None]
    leg = cmd_arrays["theta0_leg"][:, None] + lim_l * (2.0 * logistic(2.0 * gain_a / lim_l * delta_a / dt_decision) - 1.0) + theta_c
    knee = cmd_arrays["theta0_knee"][:, None] + lim_k * (2.0 * logistic(2.0 * gain_b / lim_k * delta_b / dt_decision) - 1.0)
    out = np.empty((delta_a.shape[0], 8))
    out[:, 0::2] = leg
    out[:, 1::2] = knee
    return out


def _step_trial(u, v, dt, params, w, tau, tau_is_zero, i_dc, i_ext, i_fb, classic):
    i_dc_arr = np.broadcast_to(np.asarray(i_dc, dtype=float), (u.shape[0],))
    i_ext_arr = np.broadcast_to(np.asarray(i_ext, dtype=float), (u.shape[0],))
    return neuro._step_batch(u, v, dt, params, w, tau, tau_is_zero, i_dc_arr, i_ext_arr, i_fb, classic)


def _mask_network(u, v, batch, t):
    """Freeze network state of diverged trials at zero to keep arrays finite."""
    bad = ~(np.isfinite(u).all(axis=1) & np.isfinite(v).all(axis=1))
    newly = bad & batch.alive
    if np.any(newly):
        batch.alive &= ~bad
        batch.fall_time[newly] = t
    if np.any(bad):
        u[bad] = 0.0
        v[bad] = 0.0


def run_trial(
    network: neuro.NetworkSpec,
    command: JointCommandParams,
    morphology: MorphologyParams,
    schedule: Schedule,
    seed: int,
    external_input: np.ndarray | None = None,
    model: str = "modified",
    record: str = "full",
) -> TrialResult:
    """Single-trial wrapper around run_trials (batch size 1)."""
    ext = None if external_input is None else np.asarray(external_input, dtype=float)[None, :]
    return run_trials([network], [command], morphology, schedule, [seed], external_inputs=ext, model=model, record=record)[0]


def export_trial_csv(result: TrialResult, prefix: str) -> list:
    """Write <prefix>_neurons.csv and <prefix>_body.csv; returns written paths."""
    paths = []
    if result.neuron_t is not None:
        path = f"{prefix}_neurons.csv"
        cols = ["time"] + [f"u_{c}" for c in result.neuron_channels] + [f"out_{c}" for c in result.neuron_channels]
        with open(path, "w") as f:
            f.write(",".join(cols) + "\n")
            for row_t, row_u, row_o in zip(result.neuron_t, result.neuron_u, result.neuron_out):
                f.write(",".join([repr(float(row_t))] + [repr(float(x)) for x in row_u] + [repr(float(x)) for x in row_o]) + "\n")
        paths.append(path)
    if result.body_t is not None:
        path = f"{prefix}_body.csv"
        cols = (
            ["time", "pos_x", "pos_y", "pos_z", "quat_w", "quat_x", "quat_y", "quat_z"]
            + [f"joint_{j}" for j in range(8)]
            + [f"contact_{limb}" for limb in neuro.LIMBS]
        )
        with open(path, "w") as f:
            f.write(",".join(cols) + "\n")
            for i in range(len(result.body_t)):
                vals = (
                    [repr(float(result.body_t[i]))]
                    + [repr(float(x)) for x in result.body_pos[i]]
                    + [repr(float(x)) for x in result.body_quat[i]]
                    + [repr(float(x)) for x in result.body_joints[i]]
                    + [str(int(x)) for x in result.body_contacts[i]]
                )
                f.write(",".join(vals) + "\n")
        paths.append(path)
    return paths
