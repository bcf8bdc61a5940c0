"""World state, scene bodies, stepping and domain randomization.

One ``step`` advances ``SimConfig.dt`` (1/200 s).  Internally the step is
split into ``SimConfig.iterations`` semi-implicit Euler iterations so the
penalty springs stay well resolved; PD torques are re-evaluated every
iteration, as the motor drivers do between 200 Hz set-point updates.
"""
from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from armada.actuation import PdCommand
from armada.kinematics import FramePose, JointState
from armada.model import RobotModel, SceneModel
from armada.simcore import _kernels as K
from armada.simcore.dynamics import arm_energy, chain_arrays


class SimulationError(RuntimeError):
    """Raised when the integrator produces non-finite values."""

    def __init__(self, message: str, time: float):
        self.time = time
        super().__init__(f"{message} at t={time:.4f} s")


@dataclass(frozen=True)
class SimConfig:
    dt: float = 1.0 / 200.0
    substeps: int = 10  # physics steps per 20 Hz control tick
    iterations: int = 20  # minimum integrator iterations inside one dt
    max_joint_travel: float = 0.0002  # rad per iteration; fast swings get more iterations
    contact_stiffness: float = 2.0e4  # N/m per contact point
    damping_ratio: float = 0.5  # fraction of critical damping per contact
    v_reg: float = 0.01  # m/s, friction regularization
    gravity: float = 9.81
    contacts: bool = True
    ee_collision: bool = True
    ee_mass: float = 0.5  # effective arm mass at the EE for contact damping, kg
    joint_limits: bool = True

    def __post_init__(self):
        if not self.dt > 0:
            raise ValueError("dt must be > 0")
        if self.substeps < 1 or self.iterations < 1:
            raise ValueError("substeps and iterations must be >= 1")
        if not self.max_joint_travel > 0:
            raise ValueError("max_joint_travel must be > 0")
        if self.contact_stiffness <= 0 or self.damping_ratio < 0 or self.v_reg <= 0:
            raise ValueError("contact parameters must be positive")


@dataclass(frozen=True)
class DrConfig:
    enabled: bool = True
    table_height: float = 0.01  # m, additive U[-a, a]
    friction: tuple[float, float] = (0.7, 1.3)
    mass: tuple[float, float] = (0.7, 1.3)
    joint_position_std: float = 0.05  # rad
    joint_velocity_std: float = 0.05  # rad/s
    ee_position_std: float = 0.05  # m, observation noise
    torque_std: float = 0.1  # N*m, per physics step

    def __post_init__(self):
        for name in ("friction", "mass"):
            lo, hi = getattr(self, name)
            if not 0 < lo <= hi:
                raise ValueError(f"{name}: need 0 < low <= high")
        for name in ("table_height", "joint_position_std", "joint_velocity_std", "ee_position_std", "torque_std"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be >= 0")


@dataclass(frozen=True)
class DrSample:
    """Draws applied by :func:`randomize`; noise levels are used later."""

    table_offset: float
    friction_scale: tuple[float, ...]
    mass_scale: tuple[float, ...]
    ee_position_std: float
    torque_std: float


@dataclass(frozen=True, eq=False)
class RigidBodyState:
    name: str
    shape: str  # "box" or "sphere"
    size: np.ndarray  # box half extents, or (radius,)
    position: np.ndarray
    quaternion: np.ndarray  # w, x, y, z
    velocity: np.ndarray
    angular_velocity: np.ndarray
    mass: float
    inertia: np.ndarray  # body frame, about the COM
    friction: float
    restitution: float = 0.0
    dynamic: bool = True

    def __post_init__(self):
        if self.shape not in ("box", "sphere"):
            raise ValueError(f"{self.name}: unknown shape {self.shape!r}")
        for name in ("size", "position", "quaternion", "velocity", "angular_velocity", "inertia"):
            object.__setattr__(self, name, np.array(getattr(self, name), dtype=float))
        if self.dynamic and not self.mass > 0:
            raise ValueError(f"{self.name}: dynamic body needs mass > 0")
        if self.friction < 0 or not 0 <= self.restitution <= 1:
            raise ValueError(f"{self.name}: invalid friction or restitution")

    @property
    def rotation(self) -> np.ndarray:
        return K.quat_to_matrix(self.quaternion)

    @property
    def pose(self) -> FramePose:
        return FramePose(self.rotation, self.position.copy())

    def replace(self, **changes) -> "RigidBodyState":
        return replace(self, **changes)


def box_body(name, half, position, mass, friction, yaw=0.0, dynamic=True) -> RigidBodyState:
    half = np.asarray(half, dtype=float)
    a, b, c = 2 * half
    inertia = mass / 12.0 * np.diag([b * b + c * c, a * a + c * c, a * a + b * b])
    quat = np.array([np.cos(yaw / 2), 0.0, 0.0, np.sin(yaw / 2)])
    return RigidBodyState(name, "box", half, position, quat, np.zeros(3), np.zeros(3),
                          mass, inertia, friction, dynamic=dynamic)


def sphere_body(name, radius, position, mass, friction, velocity=(0, 0, 0), dynamic=True) -> RigidBodyState:
    inertia = 0.4 * mass * radius**2 * np.eye(3)
    return RigidBodyState(name, "sphere", [radius], position, [1, 0, 0, 0], velocity, np.zeros(3),
                          mass, inertia, friction, dynamic=dynamic)


def table_body(scene: SceneModel) -> RigidBodyState:
    sx, sy = scene.table_size
    h = scene.table_height
    return box_body("table", [sx / 2, sy / 2, h / 2], [scene.table_center[0], scene.table_center[1], h / 2],
                    1.0, scene.table_friction, dynamic=False)


def bump_body(scene: SceneModel) -> RigidBodyState:
    bx, by, bz = scene.bump_size
    pos = [scene.table_center[0], scene.table_center[1], scene.table_top + bz / 2]
    return box_body("bump", [bx / 2, by / 2, bz / 2], pos, 1.0, scene.table_friction, dynamic=False)


def cube_body(scene: SceneModel, xy, yaw=0.0) -> RigidBodyState:
    e = scene.cube_edge / 2
    return box_body("cube", [e, e, e], [xy[0], xy[1], scene.table_top + e], scene.cube_mass,
                    scene.cube_friction, yaw=yaw)


def card_body(scene: SceneModel, xy, yaw=0.0) -> RigidBodyState:
    half = np.asarray(scene.card_size) / 2
    return box_body("card", half, [xy[0], xy[1], scene.table_top + half[2]], scene.card_mass,
                    scene.card_friction, yaw=yaw)


@dataclass(frozen=True, eq=False)
class WorldState:
    arm: JointState
    bodies: tuple[RigidBodyState, ...]
    time: float = 0.0
    dr: DrSample | None = None
    stats: dict = field(default_factory=dict)

    def body(self, name: str) -> RigidBodyState:
        for b in self.bodies:
            if b.name == name:
                return b
        raise KeyError(name)

    def body_index(self, name: str) -> int:
        for i, b in enumerate(self.bodies):
            if b.name == name:
                return i
        raise KeyError(name)


def make_world(model: RobotModel, q=None, bodies: Sequence[RigidBodyState] = (), qdot=None) -> WorldState:
    n = len(model.joints)
    q = np.zeros(n) if q is None else np.asarray(q, dtype=float)
    qdot = np.zeros(n) if qdot is None else np.asarray(qdot, dtype=float)
    return WorldState(JointState(q, qdot), tuple(bodies))


# -- packing -------------------------------------------------------------------


def _pack_bodies(bodies: Sequence[RigidBodyState]) -> np.ndarray:
    table = np.zeros((max(len(bodies), 1), K.NCOL))
    if not bodies:
        # a far-away static sphere keeps array shapes uniform
        table[0, K.KIND] = K.SPHERE
        table[0, K.POS:K.POS + 3] = (0.0, 0.0, -1e3)
        table[0, K.QUAT] = 1.0
        return table
    for i, b in enumerate(bodies):
        row = table[i]
        row[K.KIND] = K.BOX if b.shape == "box" else K.SPHERE
        row[K.DYN] = 1.0 if b.dynamic else 0.0
        row[K.POS:K.POS + 3] = b.position
        row[K.QUAT:K.QUAT + 4] = b.quaternion
        row[K.VEL:K.VEL + 3] = b.velocity
        row[K.OMG:K.OMG + 3] = b.angular_velocity
        row[K.MASS] = b.mass
        row[K.MU] = b.friction
        if b.shape == "box":
            row[K.HALF:K.HALF + 3] = b.size
        else:
            row[K.RAD] = b.size[0]
        row[K.INERTIA:K.INERTIA + 9] = b.inertia.ravel()
    return table


def _unpack_bodies(bodies: Sequence[RigidBodyState], table: np.ndarray) -> tuple[RigidBodyState, ...]:
    out = []
    for i, b in enumerate(bodies):
        if not b.dynamic:
            out.append(b)
            continue
        row = table[i]
        out.append(replace(
            b,
            position=row[K.POS:K.POS + 3].copy(),
            quaternion=row[K.QUAT:K.QUAT + 4].copy(),
            velocity=row[K.VEL:K.VEL + 3].copy(),
            angular_velocity=row[K.OMG:K.OMG + 3].copy(),
        ))
    return tuple(out)


def _params(config: SimConfig, scene_ee_radius: float, ee_friction: float) -> np.ndarray:
    p = np.zeros(K.NPARAM)
    p[K.P_KN] = config.contact_stiffness
    p[K.P_ZETA] = config.damping_ratio
    p[K.P_VREG] = config.v_reg
    p[K.P_EE_RADIUS] = scene_ee_radius
    p[K.P_EE_MU] = ee_friction
    p[K.P_EE_MASS] = config.ee_mass
    p[K.P_CONTACTS] = float(config.contacts)
    p[K.P_ARM_COLLIDES] = float(config.ee_collision)
    p[K.P_LIMITS] = float(config.joint_limits)
    return p


class Simulator:
    """Mutable packed copy of a world for running many steps cheaply.

    ``command`` is either raw joint torques (6-vector, N*m) or a
    :class:`PdCommand`.  ``external`` maps body index to (force [N],
    body-frame application point [m]).
    """

    def __init__(self, world: WorldState, model: RobotModel, config: SimConfig = SimConfig(),
                 ee_radius: float = 0.02, ee_friction: float = 1.0, arm_active: bool = True):
        self.model = model
        self.config = config
        self.chain = chain_arrays(model)
        self.template = world
        self.q = np.array(world.arm.q, dtype=float)
        self.qd = np.array(world.arm.qdot, dtype=float)
        self.bodies = _pack_bodies(world.bodies)
        self.ext = np.zeros((self.bodies.shape[0], 6))
        self.params = _params(config, ee_radius, ee_friction)
        self.grav = np.array([0.0, 0.0, -config.gravity])
        self.time = world.time
        self.dr = world.dr
        self.arm_active = arm_active
        self.friction_excess = 0.0
        self.max_penetration = 0.0

    def set_external(self, external=None):
        self.ext[:] = 0.0
        for idx, (force, point) in (external or {}).items():
            self.ext[idx, :3] = force
            self.ext[idx, 3:] = point

    def step(self, command, rng: np.random.Generator | None = None, n_steps: int = 1):
        cfg = self.config
        ch = self.chain
        n = self.q.shape[0]
        if isinstance(command, PdCommand):
            q_des = np.asarray(command.q_des, dtype=float)
            kp = np.broadcast_to(np.asarray(command.gains.kp, dtype=float), (n,)).copy()
            kd = np.broadcast_to(np.asarray(command.gains.kd, dtype=float), (n,)).copy()
            lim = np.broadcast_to(np.asarray(command.limits, dtype=float), (n,)).copy()
            tau_ff = np.zeros(n)
        else:
            q_des = np.zeros(n)
            kp = np.zeros(n)
            kd = np.zeros(n)
            lim = np.zeros(n)
            tau_ff = np.zeros(n) if command is None else np.array(command, dtype=float)
        for _ in range(n_steps):
            speed = float(np.max(np.abs(self.qd))) if self.arm_active else 0.0
            n_iter = max(cfg.iterations, int(np.ceil(speed * cfg.dt / cfg.max_joint_travel)))
            h = cfg.dt / n_iter
            ff = tau_ff
            if self.dr is not None and self.dr.torque_std > 0:
                if rng is None:
                    raise ValueError("torque noise is enabled; pass an rng")
                ff = tau_ff + rng.normal(0.0, self.dr.torque_std, n)
            diag = np.zeros(K.NDIAG)
            K.advance(h, n_iter, ch.base_r, ch.base_p, ch.r0, ch.p0, ch.axis, ch.mass, ch.com,
                      ch.inertia, ch.ee_off, ch.armature, ch.lower, ch.upper, self.q, self.qd,
                      q_des, kp, kd, lim, ff, self.arm_active, self.bodies, self.ext, self.grav,
                      self.params, diag)
            self.time += cfg.dt
            if diag[K.D_SINGULAR] > 0:
                raise SimulationError(f"singular mass matrix at joint {int(diag[K.D_SINGULAR]) - 1}", self.time)
            if diag[K.D_NONFINITE] > 0:
                raise SimulationError("non-finite state", self.time)
            self.friction_excess = max(self.friction_excess, diag[K.D_FRICTION_EXCESS])
            self.max_penetration = max(self.max_penetration, diag[K.D_MAX_PENETRATION])

    def world(self) -> WorldState:
        t = self.template
        return WorldState(
            JointState(self.q.copy(), self.qd.copy()),
            _unpack_bodies(t.bodies, self.bodies),
            self.time,
            self.dr,
            {"friction_excess": self.friction_excess, "max_penetration": self.max_penetration},
        )

    def body_position(self, idx: int) -> np.ndarray:
        return self.bodies[idx, K.POS:K.POS + 3].copy()

    def body_quaternion(self, idx: int) -> np.ndarray:
        return self.bodies[idx, K.QUAT:K.QUAT + 4].copy()

    def body_velocity(self, idx: int) -> np.ndarray:
        return self.bodies[idx, K.VEL:K.VEL + 3].copy()


def step(world: WorldState, model: RobotModel, command, config: SimConfig = SimConfig(),
         rng: np.random.Generator | None = None, external=None, scene: SceneModel | None = None) -> WorldState:
    """Advance the world by one ``config.dt``; see :class:`Simulator`."""
    ee_radius = scene.ee_radius if scene else 0.02
    ee_friction = scene.ee_friction if scene else 1.0
    sim = Simulator(world, model, config, ee_radius, ee_friction)
    sim.set_external(external)
    sim.step(command, rng)
    return sim.world()


# -- domain randomization -------------------------------------------------------


def randomize(world: WorldState, scene: SceneModel, dr: DrConfig, rng: np.random.Generator
              ) -> tuple[WorldState, SceneModel]:
    """Apply one domain-randomization draw to a world and its scene.

    Static bodies follow the table height offset; dynamic bodies get
    friction and mass multipliers and are shifted with the table.  Joint
    state gets additive Gaussian noise.  Observation and torque noise
    levels are stored on the returned world.
    """
    if not dr.enabled:
        return world, scene
    offset = float(rng.uniform(-dr.table_height, dr.table_height))
    bodies = []
    fric, mass = [], []
    for b in world.bodies:
        pos = b.position.copy()
        if b.name == "table":
            size = b.size.copy()
            size[2] += offset / 2
            pos[2] += offset / 2
            bodies.append(b.replace(size=size, position=pos))
            continue
        pos[2] += offset
        if not b.dynamic:
            bodies.append(b.replace(position=pos))
            continue
        f = float(rng.uniform(*dr.friction))
        m = float(rng.uniform(*dr.mass))
        fric.append(f)
        mass.append(m)
        bodies.append(b.replace(position=pos, friction=b.friction * f, mass=b.mass * m, inertia=b.inertia * m))
    n = len(world.arm.q)
    q = world.arm.q + rng.normal(0.0, dr.joint_position_std, n)
    qd = world.arm.qdot + rng.normal(0.0, dr.joint_velocity_std, n)
    sample = DrSample(offset, tuple(fric), tuple(mass), dr.ee_position_std, dr.torque_std)
    new_scene = replace(scene, table_height=scene.table_height + offset)
    return WorldState(JointState(q, qd), tuple(bodies), world.time, sample), new_scene


# -- energy and output ----------------------------------------------------------


def world_energy(world: WorldState, model: RobotModel, gravity: float = 9.81) -> float:
    """Total mechanical energy of the arm and all dynamic bodies [J]."""
    kin, pot = arm_energy(model, world.arm.q, world.arm.qdot, gravity)
    total = kin + pot
    for b in world.bodies:
        if not b.dynamic:
            continue
        r = b.rotation
        i_world = r @ b.inertia @ r.T
        total += 0.5 * b.mass * b.velocity @ b.velocity
        total += 0.5 * b.angular_velocity @ i_world @ b.angular_velocity
        total += b.mass * gravity * b.position[2]
    return float(total)


TRAJECTORY_HEADER = (
    ["t"] + [f"q{i}" for i in range(1, 7)] + [f"qd{i}" for i in range(1, 7)]
    + ["obj_x", "obj_y", "obj_z", "obj_qw", "obj_qx", "obj_qy", "obj_qz"]
)


def trajectory_csv(worlds: Sequence[WorldState], object_name: str | None = None) -> str:
    """Per-step CSV rows; object columns are empty when there is no object."""
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(TRAJECTORY_HEADER)
    for w in worlds:
        row = [f"{w.time:.6f}"] + [repr(float(v)) for v in np.concatenate([w.arm.q, w.arm.qdot])]
        if object_name is not None:
            b = w.body(object_name)
            row += [repr(float(v)) for v in np.concatenate([b.position, b.quaternion])]
        else:
            row += [""] * 7
        writer.writerow(row)
    return buf.getvalue()
