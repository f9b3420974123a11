"""Particle-based rigid-body simulation with impulse contact resolution.

A rigid body is a set of equal spheres rigidly attached to a reference frame
anchored at the center of mass.  Forward dynamics uses explicit Euler time
integration under gravity; contact and friction are resolved instantaneously
by impulses on colliding particle pairs; near-stationary bodies are put to
sleep via a recency-weighted average of a squared speed bound.

Conventions: quaternions are (w, x, y, z) and kept unit length; positions
update from the pre-update velocity (a symplectic variant is available via
``SimConfig.symplectic_position``); the boundary is a fixed particle set with
zero velocity, infinite mass, and zero inverse inertia.
"""

from __future__ import annotations

import json
import warnings
from collections import defaultdict
from dataclasses import dataclass, field as dc_field, replace

import numpy as np

# Motion statistic assigned to fresh and freshly woken bodies.  The value
# saturates the sleep test long enough that a body dropped from rest is not
# sent to sleep while gravity is still building up its speed.
WAKE_RWA = 1000.0

COLLIDING = "colliding"
RESTING = "resting"
SEPARATION = "separation"

BOUNDARY_BODY = -1

# Relative eigenvalue threshold below which an inertia axis is degenerate.
_INERTIA_RANK_TOL = 1e-9
# Sliding speeds below this are treated as no sliding in the friction model.
_TANGENT_GUARD = 1e-12


@dataclass
class SimConfig:
    """Simulation constants; defaults follow the reference experiment setup."""

    dt: float = 0.01
    gravity: tuple = (0.0, 0.0, -9.81)
    restitution: float = 0.0
    friction: float = 0.4
    velocity_epsilon: float = 1e-5
    sleep_weight: float = 0.1
    max_steps: int = 100
    impulse_max_iterations: int = 10
    particle_radius: float = 0.005
    particle_mass: float = 0.01
    symplectic_position: bool = False
    support_margin: float = 0.05

    def __post_init__(self):
        if self.dt <= 0:
            raise ValueError("dt must be positive")
        if self.max_steps < 1:
            raise ValueError("max_steps must be at least 1")
        self.gravity = tuple(float(g) for g in self.gravity)

    @property
    def gravity_vec(self):
        return np.asarray(self.gravity, dtype=np.float64)

    def to_dict(self):
        return {
            "dt": self.dt,
            "gravity": list(self.gravity),
            "restitution": self.restitution,
            "friction": self.friction,
            "velocity_epsilon": self.velocity_epsilon,
            "sleep_weight": self.sleep_weight,
            "max_steps": self.max_steps,
            "impulse_max_iterations": self.impulse_max_iterations,
            "particle_radius": self.particle_radius,
            "particle_mass": self.particle_mass,
            "symplectic_position": self.symplectic_position,
            "support_margin": self.support_margin,
        }

    @classmethod
    def from_dict(cls, data):
        data = dict(data)
        if "gravity" in data:
            data["gravity"] = tuple(data["gravity"])
        return cls(**data)


@dataclass
class RigidBody:
    """Intrinsic properties of a particle body in its reference frame."""

    offsets: np.ndarray
    particle_mass: float
    particle_radius: float
    total_mass: float
    inertia_ref: np.ndarray
    u_max: float

    @property
    def n_particles(self):
        return len(self.offsets)

    def inv_inertia_ref(self):
        """Pseudo-inverse of the reference inertia; degenerate axes map to zero."""
        if not hasattr(self, "_inv_inertia_ref"):
            eigvals, eigvecs = np.linalg.eigh(self.inertia_ref)
            cutoff = _INERTIA_RANK_TOL * max(eigvals.max(), 0.0)
            inv = np.where(eigvals > cutoff, 1.0 / np.where(eigvals > cutoff, eigvals, 1.0), 0.0)
            self._inv_inertia_ref = (eigvecs * inv) @ eigvecs.T
            self._null_axes_ref = eigvecs[:, eigvals <= cutoff]
        return self._inv_inertia_ref

    def null_axes_ref(self):
        self.inv_inertia_ref()
        return self._null_axes_ref


@dataclass
class BodyState:
    """Time-varying state of one rigid body."""

    position: np.ndarray = dc_field(default_factory=lambda: np.zeros(3))
    quaternion: np.ndarray = dc_field(default_factory=lambda: np.array([1.0, 0.0, 0.0, 0.0]))
    velocity: np.ndarray = dc_field(default_factory=lambda: np.zeros(3))
    omega: np.ndarray = dc_field(default_factory=lambda: np.zeros(3))
    asleep: bool = False
    rwa: float = WAKE_RWA

    def __post_init__(self):
        self.position = np.asarray(self.position, dtype=np.float64).copy()
        self.quaternion = np.asarray(self.quaternion, dtype=np.float64).copy()
        self.velocity = np.asarray(self.velocity, dtype=np.float64).copy()
        self.omega = np.asarray(self.omega, dtype=np.float64).copy()
        norm = np.linalg.norm(self.quaternion)
        if abs(norm - 1.0) > 1e-9:
            raise ValueError(f"quaternion must be unit length, got norm {norm}")
        if self.asleep and (np.any(self.velocity) or np.any(self.omega)):
            raise ValueError("a sleeping body must have zero velocities")

    def copy(self):
        return BodyState(
            position=self.position,
            quaternion=self.quaternion,
            velocity=self.velocity,
            omega=self.omega,
            asleep=self.asleep,
            rwa=self.rwa,
        )


@dataclass
class ContactRecord:
    """Initial position and first boundary contact of one particle."""

    particle_index: int
    p0: np.ndarray
    p_first: np.ndarray
    contacted: bool = False
    step: int = -1

    def to_dict(self):
        return {
            "particle_index": self.particle_index,
            "p0": list(self.p0),
            "p_first": list(self.p_first),
            "contacted": self.contacted,
            "step": self.step,
        }


@dataclass
class ContactPair:
    """One particle pair within contact distance, with its classification."""

    body_a: int
    index_a: int
    body_b: int
    index_b: int
    normal: np.ndarray
    rel_velocity: np.ndarray
    normal_speed: float
    distance: float
    classification: str


@dataclass
class ImpulseResult:
    impulse: np.ndarray
    delta_v_a: np.ndarray
    delta_omega_a: np.ndarray
    delta_v_b: np.ndarray
    delta_omega_b: np.ndarray


# Adjoint tape: branch decisions recorded during a forward run so that a
# replay can differentiate the piecewise-smooth function the run selected.


@dataclass
class IterationTape:
    colliding: list
    alpha_zero: list
    tangent_zero: list


@dataclass
class StepTape:
    integrated: bool
    pairs: np.ndarray
    iterations: list
    slept: bool


@dataclass
class SimTape:
    steps: list
    min_classification_margin: float


@dataclass
class SimulationResult:
    trajectory: list
    contacts: list
    final_state: BodyState
    stable: bool
    slept: bool
    steps_run: int
    tape: SimTape | None = None


def quat_mul(a, b):
    """Hamilton product of two (w, x, y, z) quaternions."""
    aw, ax, ay, az = a
    bw, bx, by, bz = b
    return np.array(
        [
            aw * bw - ax * bx - ay * by - az * bz,
            aw * bx + ax * bw + ay * bz - az * by,
            aw * by - ax * bz + ay * bw + az * bx,
            aw * bz + ax * by - ay * bx + az * bw,
        ]
    )


def quat_normalize(q):
    return np.asarray(q, dtype=np.float64) / np.linalg.norm(q)


def quat_angle(qa, qb):
    """Geodesic angle in radians between two unit quaternions (double cover safe)."""
    dot = abs(float(np.dot(qa, qb)))
    return 2.0 * np.arccos(min(dot, 1.0))


def rotation_matrix(q):
    """Body-to-world rotation matrix of a unit quaternion."""
    q = np.asarray(q, dtype=np.float64)
    if abs(np.linalg.norm(q) - 1.0) > 1e-6:
        raise ValueError(f"rotation_matrix needs a unit quaternion, got norm {np.linalg.norm(q)}")
    q0, q1, q2, q3 = q
    return np.array(
        [
            [2 * (q0 * q0 + q1 * q1) - 1, 2 * (q1 * q2 - q0 * q3), 2 * (q1 * q3 + q0 * q2)],
            [2 * (q1 * q2 + q0 * q3), 2 * (q0 * q0 + q2 * q2) - 1, 2 * (q2 * q3 - q0 * q1)],
            [2 * (q1 * q3 - q0 * q2), 2 * (q2 * q3 + q0 * q1), 2 * (q0 * q0 + q3 * q3) - 1],
        ]
    )


def build_body(points, particle_mass=0.01, particle_radius=0.005):
    """Mass, center of mass, reference inertia, and offsets from particle positions."""
    pts = points.points if hasattr(points, "points") else np.asarray(points, dtype=np.float64)
    pts = pts.reshape(-1, 3)
    if len(pts) == 0:
        raise ValueError("cannot build a rigid body from an empty point cloud")
    m = float(particle_mass)
    total_mass = len(pts) * m
    com = pts.mean(axis=0)
    offsets = pts - com
    sq = np.sum(offsets * offsets, axis=1)
    inertia = m * (np.sum(sq) * np.eye(3) - offsets.T @ offsets)
    u_max = float(np.max(np.linalg.norm(offsets, axis=1)))
    return RigidBody(
        offsets=offsets,
        particle_mass=m,
        particle_radius=float(particle_radius),
        total_mass=total_mass,
        inertia_ref=inertia,
        u_max=u_max,
    )


def initial_state(body_points, velocity=None, omega=None):
    """Body state whose world particle positions equal ``body_points``."""
    pts = body_points.points if hasattr(body_points, "points") else np.asarray(body_points)
    state = BodyState(position=np.asarray(pts, dtype=np.float64).reshape(-1, 3).mean(axis=0))
    if velocity is not None:
        state.velocity = np.asarray(velocity, dtype=np.float64).copy()
    if omega is not None:
        state.omega = np.asarray(omega, dtype=np.float64).copy()
    return state


def world_positions(body, state):
    rot = rotation_matrix(state.quaternion)
    return state.position + body.offsets @ rot.T


def inv_inertia_world(body, rot):
    """World-frame inverse inertia, degenerate axes projected out."""
    return rot @ body.inv_inertia_ref() @ rot.T


def integrate(state, body, force, torque, cfg):
    """One explicit Euler step; sleeping bodies pass through unchanged."""
    if state.asleep:
        return state.copy()
    force = np.asarray(force, dtype=np.float64)
    torque = np.asarray(torque, dtype=np.float64)
    dt = cfg.dt

    new_v = state.velocity + dt * force / body.total_mass
    pos_v = new_v if cfg.symplectic_position else state.velocity
    new_r = state.position + dt * pos_v

    rot = rotation_matrix(state.quaternion)
    if np.any(torque):
        null = body.null_axes_ref()
        if null.size:
            null_world = rot @ null
            lost = null_world.T @ torque
            if np.linalg.norm(lost) > 1e-12 * max(np.linalg.norm(torque), 1.0):
                warnings.warn(
                    "torque component along degenerate inertia axis "
                    f"{null_world[:, 0].tolist()} projected out",
                    stacklevel=2,
                )
        new_w = state.omega + dt * inv_inertia_world(body, rot) @ torque
    else:
        new_w = state.omega.copy()

    spin_w = new_w if cfg.symplectic_position else state.omega
    dq = quat_mul(np.array([0.0, *spin_w]), state.quaternion)
    new_q = quat_normalize(state.quaternion + 0.5 * dt * dq)
    return BodyState(
        position=new_r,
        quaternion=new_q,
        velocity=new_v,
        omega=new_w,
        asleep=False,
        rwa=state.rwa,
    )


def wake_on_colliding_contact(state):
    """A colliding contact returns a sleeping body to the simulation."""
    if state.asleep:
        state.asleep = False
        state.rwa = WAKE_RWA
    return state


def update_sleep(state, body, cfg):
    """Advance the motion statistic and put near-stationary bodies to sleep."""
    if state.asleep:
        return state.copy()
    v2 = float(state.velocity @ state.velocity)
    w2 = float(state.omega @ state.omega)
    v_up_sq = 2.0 * (v2 + w2 * body.u_max * body.u_max)
    gamma = cfg.sleep_weight
    rwa = gamma * state.rwa + (1.0 - gamma) * v_up_sq
    new = state.copy()
    new.rwa = rwa
    if rwa < np.linalg.norm(cfg.gravity_vec) * cfg.dt:
        new.asleep = True
        new.velocity = np.zeros(3)
        new.omega = np.zeros(3)
    return new


class _StaticHash:
    """Uniform spatial hash over a fixed particle set, cell size 2r."""

    def __init__(self, points, cell_size):
        self.points = np.asarray(points, dtype=np.float64).reshape(-1, 3)
        self.cell_size = float(cell_size)
        self.cells = defaultdict(list)
        for idx, cell in enumerate(np.floor(self.points / self.cell_size).astype(np.int64)):
            self.cells[tuple(cell)].append(idx)
        self.cells = {k: np.array(v, dtype=np.int64) for k, v in self.cells.items()}

    def candidates(self, point):
        base = np.floor(np.asarray(point) / self.cell_size).astype(np.int64)
        found = []
        for dx in (-1, 0, 1):
            for dy in (-1, 0, 1):
                for dz in (-1, 0, 1):
                    hit = self.cells.get((base[0] + dx, base[1] + dy, base[2] + dz))
                    if hit is not None:
                        found.append(hit)
        if not found:
            return np.empty(0, dtype=np.int64)
        return np.concatenate(found)


def neighbor_pairs(points_a, hash_b, radius):
    """Index pairs (i, j, distance) with ``|a_i - b_j| < 2 * radius``, sorted."""
    pairs = []
    reach = 2.0 * radius
    for i, p in enumerate(np.asarray(points_a, dtype=np.float64).reshape(-1, 3)):
        cand = hash_b.candidates(p)
        if len(cand) == 0:
            continue
        delta = hash_b.points[cand] - p
        dist = np.linalg.norm(delta, axis=1)
        close = dist < reach
        for j, d in zip(cand[close], dist[close]):
            if d < 1e-9:
                raise ValueError(
                    f"coincident particle centers (distance {d:g}) leave the contact "
                    "normal undefined"
                )
            pairs.append((i, int(j), float(d)))
    pairs.sort(key=lambda t: (t[0], t[1]))
    return pairs


def _point_velocity(state, rot, offset):
    return state.velocity + np.cross(state.omega, rot @ offset)


def classify_speed(vn, eps):
    if vn < -eps:
        return COLLIDING
    if vn > eps:
        return SEPARATION
    return RESTING


def detect_contacts(bodies, boundary, cfg):
    """All particle pairs within contact distance, classified.

    ``bodies`` is a sequence of (RigidBody, BodyState); ``boundary`` is a
    fixed particle array contributing zero velocity.  Pairs are ordered by
    (body a, body b, particle i, particle j), with the boundary ordered last.
    """
    radius = cfg.particle_radius
    eps = cfg.velocity_epsilon
    entries = []
    for body, state in bodies:
        rot = rotation_matrix(state.quaternion)
        entries.append((body, state, rot, world_positions(body, state)))

    boundary = None if boundary is None else np.asarray(boundary, dtype=np.float64).reshape(-1, 3)
    pairs = []

    def add_pairs(a_idx, b_idx, pts_a, hash_b):
        for i, j, dist in neighbor_pairs(pts_a, hash_b, radius):
            pa = pts_a[i]
            pb = hash_b.points[j]
            normal = (pa - pb) / dist
            body_a, state_a, rot_a, _ = entries[a_idx]
            va = _point_velocity(state_a, rot_a, body_a.offsets[i])
            if b_idx == BOUNDARY_BODY:
                vb = np.zeros(3)
            else:
                body_b, state_b, rot_b, _ = entries[b_idx]
                vb = _point_velocity(state_b, rot_b, body_b.offsets[j])
            rel = va - vb
            vn = float(rel @ normal)
            pairs.append(
                ContactPair(
                    body_a=a_idx,
                    index_a=i,
                    body_b=b_idx,
                    index_b=j,
                    normal=normal,
                    rel_velocity=rel,
                    normal_speed=vn,
                    distance=dist,
                    classification=classify_speed(vn, eps),
                )
            )

    for a_idx in range(len(entries)):
        for b_idx in range(a_idx + 1, len(entries)):
            hash_b = _StaticHash(entries[b_idx][3], 2.0 * radius)
            add_pairs(a_idx, b_idx, entries[a_idx][3], hash_b)
        if boundary is not None and len(boundary):
            hash_b = _StaticHash(boundary, 2.0 * radius)
            add_pairs(a_idx, BOUNDARY_BODY, entries[a_idx][3], hash_b)
    return pairs


def desired_contact_velocity(rel_velocity, normal, cfg):
    """Post-contact relative velocity target under restitution and friction.

    Returns the target velocity along with the friction branch flags
    (attenuation clamped to zero, tangential speed below the guard).
    """
    mu = cfg.restitution
    eta = cfg.friction
    vn = float(rel_velocity @ normal)
    v_perp = vn * normal
    v_par = rel_velocity - v_perp
    par_speed = float(np.linalg.norm(v_par))
    target_perp = -mu * v_perp
    if par_speed < _TANGENT_GUARD:
        return target_perp, False, True
    alpha = 1.0 - eta * (1.0 + mu) * abs(vn) / par_speed
    if alpha <= 0.0:
        return target_perp, True, False
    return target_perp + alpha * v_par, False, False


def _contact_k_matrix(body_a, rot_a, offset_a, body_b, rot_b, offset_b):
    def one_side(body, rot, offset):
        if body is None:
            return np.zeros((3, 3)), np.zeros((3, 3))
        arm = rot @ offset
        skew = np.array(
            [
                [0.0, -arm[2], arm[1]],
                [arm[2], 0.0, -arm[0]],
                [-arm[1], arm[0], 0.0],
            ]
        )
        inv_mass = np.eye(3) / body.total_mass
        inv_inertia = inv_inertia_world(body, rot)
        return inv_mass - skew @ inv_inertia @ skew, skew
    ka, _ = one_side(body_a, rot_a, offset_a)
    kb, _ = one_side(body_b, rot_b, offset_b)
    return ka + kb


def resolve_impulse(pair, body_a, state_a, body_b=None, state_b=None, cfg=None):
    """Impulse and velocity deltas resolving one colliding contact.

    ``body_b=None`` treats side b as the fixed boundary (zero inverse mass
    and inertia).
    """
    if pair.classification != COLLIDING:
        raise ValueError("resolve_impulse expects a colliding contact pair")
    cfg = cfg or SimConfig()
    rot_a = rotation_matrix(state_a.quaternion)
    offset_a = body_a.offsets[pair.index_a]
    rot_b = offset_b = None
    if body_b is not None:
        rot_b = rotation_matrix(state_b.quaternion)
        offset_b = body_b.offsets[pair.index_b]

    target, _, _ = desired_contact_velocity(pair.rel_velocity, pair.normal, cfg)
    k = _contact_k_matrix(body_a, rot_a, offset_a, body_b, rot_b, offset_b)
    try:
        impulse = np.linalg.solve(k, target - pair.rel_velocity)
    except np.linalg.LinAlgError as err:
        raise ValueError("singular contact matrix") from err

    arm_a = rot_a @ offset_a
    dv_a = impulse / body_a.total_mass
    dw_a = inv_inertia_world(body_a, rot_a) @ np.cross(arm_a, impulse)
    if body_b is None:
        dv_b = np.zeros(3)
        dw_b = np.zeros(3)
    else:
        arm_b = rot_b @ offset_b
        dv_b = -impulse / body_b.total_mass
        dw_b = -inv_inertia_world(body_b, rot_b) @ np.cross(arm_b, impulse)
    return ImpulseResult(impulse, dv_a, dw_a, dv_b, dw_b)


def select_supporting_plane(boundary_points, object_points, margin=0.05):
    """Boundary particles under and near the object's footprint.

    Keeps points whose horizontal position falls inside the object's xy
    bounding box expanded by ``margin`` and whose height is at most the
    object's lowest particle plus ``margin``.
    """
    bnd = np.asarray(boundary_points, dtype=np.float64).reshape(-1, 3)
    obj = np.asarray(object_points, dtype=np.float64).reshape(-1, 3)
    lo = obj[:, :2].min(axis=0) - margin
    hi = obj[:, :2].max(axis=0) + margin
    zmax = obj[:, 2].min() + margin
    mask = (
        (bnd[:, 0] >= lo[0])
        & (bnd[:, 0] <= hi[0])
        & (bnd[:, 1] >= lo[1])
        & (bnd[:, 1] <= hi[1])
        & (bnd[:, 2] <= zmax)
    )
    return bnd[mask]


def _trajectory_row(step, cfg, state, n_colliding):
    return {
        "step": step,
        "t": step * cfg.dt,
        "position": [float(x) for x in state.position],
        "quaternion": [float(x) for x in state.quaternion],
        "v": [float(x) for x in state.velocity],
        "omega": [float(x) for x in state.omega],
        "asleep": bool(state.asleep),
        "n_colliding_pairs": int(n_colliding),
    }


def is_stable(initial, final, translation_threshold=0.05, rotation_threshold_deg=5.0):
    """Displacement and rotation of ``final`` relative to ``initial`` within bounds."""
    shift = float(np.linalg.norm(final.position - initial.position))
    angle = np.degrees(quat_angle(initial.quaternion, final.quaternion))
    return shift <= translation_threshold and angle <= rotation_threshold_deg


def simulate(body, initial, boundary, cfg=None, record_tape=False):
    """Drop simulation of one body against a fixed boundary particle set.

    Runs until the body sleeps or ``cfg.max_steps`` is reached, recording
    each particle's first contact with the boundary.  ``stable`` compares
    final to initial state under the 5 cm / 5 degree thresholds.
    """
    cfg = cfg or SimConfig()
    boundary = np.asarray(boundary, dtype=np.float64).reshape(-1, 3)
    if len(boundary) == 0:
        raise ValueError("simulate needs a nonempty boundary particle set")
    state = initial.copy()
    start = initial.copy()
    gravity = cfg.gravity_vec
    boundary_hash = _StaticHash(boundary, 2.0 * cfg.particle_radius)

    p0 = world_positions(body, state)
    contacts = [
        ContactRecord(particle_index=i, p0=p0[i].copy(), p_first=p0[i].copy())
        for i in range(body.n_particles)
    ]

    trajectory = [_trajectory_row(0, cfg, state, 0)]
    tape_steps = []
    min_margin = np.inf
    steps_run = 0

    for step in range(1, cfg.max_steps + 1):
        integrated = not state.asleep
        if integrated:
            state = integrate(state, body, body.total_mass * gravity, np.zeros(3), cfg)
        rot = rotation_matrix(state.quaternion)
        world = state.position + body.offsets @ rot.T

        geo = neighbor_pairs(world, boundary_hash, cfg.particle_radius)
        for i, _, _ in geo:
            rec = contacts[i]
            if not rec.contacted:
                rec.contacted = True
                rec.p_first = world[i].copy()
                rec.step = step

        n_colliding_first = 0
        iter_tapes = []
        for iteration in range(cfg.impulse_max_iterations):
            colliding = []
            alpha_zero = []
            tangent_zero = []
            for pair_idx, (i, j, dist) in enumerate(geo):
                normal = (world[i] - boundary[j]) / dist
                rel = _point_velocity(state, rot, body.offsets[i])
                vn = float(rel @ normal)
                margin = min(abs(vn + cfg.velocity_epsilon), abs(vn - cfg.velocity_epsilon))
                min_margin = min(min_margin, margin)
                if classify_speed(vn, cfg.velocity_epsilon) != COLLIDING:
                    continue
                if state.asleep:
                    # Woken before impulse resolution.
                    state = wake_on_colliding_contact(state)
                pair = ContactPair(
                    body_a=0,
                    index_a=i,
                    body_b=BOUNDARY_BODY,
                    index_b=j,
                    normal=normal,
                    rel_velocity=rel,
                    normal_speed=vn,
                    distance=dist,
                    classification=COLLIDING,
                )
                res = resolve_impulse(pair, body, state, cfg=cfg)
                _, a_zero, t_zero = desired_contact_velocity(rel, normal, cfg)
                colliding.append((pair_idx, res.delta_v_a, res.delta_omega_a))
                alpha_zero.append(a_zero)
                tangent_zero.append(t_zero)
            if iteration == 0:
                n_colliding_first = len(colliding)
            if not colliding:
                break
            dv = np.mean([c[1] for c in colliding], axis=0)
            dw = np.mean([c[2] for c in colliding], axis=0)
            state.velocity = state.velocity + dv
            state.omega = state.omega + dw
            if record_tape:
                iter_tapes.append(
                    IterationTape(
                        colliding=[c[0] for c in colliding],
                        alpha_zero=alpha_zero,
                        tangent_zero=tangent_zero,
                    )
                )

        was_awake = not state.asleep
        state = update_sleep(state, body, cfg)
        slept_now = was_awake and state.asleep

        trajectory.append(_trajectory_row(step, cfg, state, n_colliding_first))
        if record_tape:
            tape_steps.append(
                StepTape(
                    integrated=integrated,
                    pairs=np.array([(i, j) for i, j, _ in geo], dtype=np.int64).reshape(-1, 2),
                    iterations=iter_tapes,
                    slept=slept_now,
                )
            )
        steps_run = step
        if not np.all(np.isfinite(state.position)) or not np.all(np.isfinite(state.velocity)):
            raise ValueError(f"non-finite body state at step {step}")
        if state.asleep:
            break

    tape = SimTape(steps=tape_steps, min_classification_margin=float(min_margin)) if record_tape else None
    return SimulationResult(
        trajectory=trajectory,
        contacts=contacts,
        final_state=state,
        stable=is_stable(start, state),
        slept=state.asleep,
        steps_run=steps_run,
        tape=tape,
    )


def write_trajectory_jsonl(path, trajectory):
    with open(path, "w") as fh:
        for row in trajectory:
            fh.write(json.dumps(row, sort_keys=True) + "\n")


def read_trajectory_jsonl(path):
    with open(path) as fh:
        return [json.loads(line) for line in fh if line.strip()]


def write_contacts_json(path, contacts):
    with open(path, "w") as fh:
        json.dump([c.to_dict() for c in contacts], fh, sort_keys=True, indent=1)
        fh.write("\n")
