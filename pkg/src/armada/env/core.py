"""Non-prehensile tabletop MDPs: push a cube over a bump, slide a card.

The policy acts at 20 Hz.  Each action sets a PD target ``q + dq`` and the
gains; the simulator then runs ``SimConfig.substeps`` physics steps of
1/200 s with the drivers closing the PD loop.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field, replace

import numpy as np

from armada.actuation import PdCommand, PdGains
from armada.kinematics import canonical_quaternion, forward_kinematics, keypoints
from armada.model import RobotModel, SceneModel, default_armada_model, default_scene
from armada.retarget import solve_ee_position
from armada.simcore.world import (
    DrConfig, SimConfig, SimulationError, Simulator, WorldState, bump_body, card_body, cube_body,
    make_world, randomize, table_body,
)

OBS_DIM = 69
ACTION_DIM = 18
TASKS = ("bump", "card", "card-lite")

# nominal arm pose: elbow in front of the table edge, hand pointing down over the table
HOME_Q = np.array([0.0, 0.0, 0.1, 1.9, 0.0, -1.2])


class EnvError(RuntimeError):
    pass


def make_rng(seed: int) -> np.random.Generator:
    """Counter-based generator for one episode or stream."""
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(int(seed))))


@dataclass(frozen=True)
class ActionBounds:
    dq_max: float = 0.2  # rad
    kp_max: float = 60.0  # N*m/rad
    kd_max: float = 4.0  # N*m*s/rad

    @property
    def low(self) -> np.ndarray:
        return np.concatenate([np.full(6, -self.dq_max), np.zeros(12)])

    @property
    def high(self) -> np.ndarray:
        return np.concatenate([np.full(6, self.dq_max), np.full(6, self.kp_max), np.full(6, self.kd_max)])


@dataclass(frozen=True)
class RewardWeights:
    keypoint: float = 1.0
    action: float = 0.001
    success: float = 10.0
    fell: float = 5.0


@dataclass(frozen=True)
class Region:
    """Axis-aligned rectangle on the table, world xy [m]."""

    center: tuple[float, float]
    size: tuple[float, float]

    def sample(self, rng: np.random.Generator) -> np.ndarray:
        c = np.asarray(self.center)
        return c + (rng.random(2) - 0.5) * np.asarray(self.size)

    def contains(self, xy) -> bool:
        d = np.abs(np.asarray(xy) - np.asarray(self.center))
        return bool(np.all(d <= np.asarray(self.size) / 2 + 1e-12))


@dataclass(frozen=True)
class EpisodeConfig:
    task: str = "bump"
    scenario: int = 1
    max_steps: int = 100
    eps_pos: float = 0.025  # m
    eps_yaw: float = 0.2  # rad
    check_yaw: bool = True
    init_region: Region | None = None
    goal_region: Region | None = None
    goal_distance: float | None = None  # if set, goal = init + this distance in a random direction
    random_yaw: bool = True
    arm_start: str = "random"  # "random" or "above_object"
    dr: DrConfig = field(default_factory=lambda: DrConfig(enabled=False))
    seed: int = 0
    bounds: ActionBounds = field(default_factory=ActionBounds)
    reward: RewardWeights = field(default_factory=RewardWeights)
    # slow tabletop motions: coarser adaptive stepping than the SimConfig default
    sim: SimConfig = field(default_factory=lambda: SimConfig(max_joint_travel=0.002))

    def __post_init__(self):
        if self.task not in TASKS:
            raise EnvError(f"unknown task {self.task!r}; valid: {', '.join(TASKS)}")
        if self.task == "bump" and self.scenario not in (1, 2):
            raise EnvError("bump scenario must be 1 or 2")
        if self.max_steps < 1:
            raise EnvError("max_steps must be >= 1")

    def replace(self, **changes) -> "EpisodeConfig":
        return replace(self, **changes)


def _table_half_regions(scene: SceneModel) -> tuple[Region, Region]:
    cx, cy = scene.table_center
    quarter = scene.table_size[0] / 4
    right = Region((cx + quarter, cy), (0.15, 0.20))
    left = Region((cx - quarter, cy), (0.15, 0.20))
    return right, left


def _table_interior(scene: SceneModel, margin: float = 0.05) -> Region:
    sx, sy = scene.table_size
    return Region(tuple(scene.table_center), (sx - 2 * margin, sy - 2 * margin))


def task_config(task: str, scene: SceneModel | None = None, **overrides) -> EpisodeConfig:
    """Registered task variants with their sampling regions filled in."""
    scene = scene or default_scene()
    if task == "bump":
        right, left = _table_half_regions(scene)
        scenario = overrides.get("scenario", 1)
        init, goal = (right, left) if scenario == 1 else (left, right)
        base = EpisodeConfig(task="bump", init_region=init, goal_region=goal, max_steps=100,
                             dr=DrConfig(enabled=True))
    elif task == "card":
        interior = _table_interior(scene)
        base = EpisodeConfig(task="card", init_region=interior, goal_region=interior, max_steps=100,
                             dr=DrConfig(enabled=True))
    elif task == "card-lite":
        # trivialized card task: short drag, no yaw requirement, no randomization
        base = EpisodeConfig(task="card-lite", init_region=Region((0.15, 0.25), (0.02, 0.02)),
                             goal_distance=0.05, check_yaw=False, random_yaw=False,
                             arm_start="above_object", max_steps=40, dr=DrConfig(enabled=False))
    else:
        raise EnvError(f"unknown task {task!r}; valid: {', '.join(TASKS)}")
    return base.replace(**overrides)


# -- observation -----------------------------------------------------------------


_CORNER_SIGNS = np.array(list(itertools.product((-1.0, 1.0), repeat=3)))


def project_keypoints(rotation, translation, dims) -> np.ndarray:
    """2x8 table-plane projection of a box's corners.

    Corner k uses signs ``itertools.product((-1, 1), repeat=3)[k]`` applied
    to the half extents in the body frame.
    """
    half = np.asarray(dims, dtype=float) / 2
    if np.any(half <= 0):
        raise EnvError("box dims must be > 0")
    corners = np.asarray(translation) + (_CORNER_SIGNS * half) @ np.asarray(rotation).T
    return corners[:, :2].T.copy()


@dataclass(frozen=True)
class Observation:
    q: np.ndarray
    qdot: np.ndarray
    object_keypoints: np.ndarray  # 2x8
    goal_keypoints: np.ndarray  # 2x8
    ee_pose: np.ndarray  # x, y, z, qw, qx, qy, qz
    prev_action: np.ndarray

    def flat(self) -> np.ndarray:
        return np.concatenate([
            self.q, self.qdot, self.object_keypoints.ravel(), self.goal_keypoints.ravel(),
            self.ee_pose, self.prev_action,
        ])

    @staticmethod
    def unflatten(v) -> "Observation":
        v = np.asarray(v, dtype=float)
        if v.shape != (OBS_DIM,):
            raise EnvError(f"expected {OBS_DIM} numbers, got {v.shape}")
        return Observation(v[0:6], v[6:12], v[12:28].reshape(2, 8), v[28:44].reshape(2, 8), v[44:51], v[51:69])


def yaw_of(rotation) -> float:
    return math.atan2(rotation[1, 0], rotation[0, 0])


def _wrap(angle: float, period: float) -> float:
    return (angle + period / 2) % period - period / 2


def _yaw_rotation(yaw: float) -> np.ndarray:
    c, s = math.cos(yaw), math.sin(yaw)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


@dataclass
class StepInfo:
    success: bool
    fell: bool
    reason: str | None
    clamped: bool
    steps: int
    time: float
    kp_error: float
    pos_error: float
    yaw_error: float
    diagnostic: str | None = None


class ArmadaEnv:
    """One arm, one object, one goal.  Not thread-safe; use one per thread."""

    def __init__(self, config: EpisodeConfig, model: RobotModel | None = None, scene: SceneModel | None = None):
        self.config = config
        self.model = model or default_armada_model("right")
        self.base_scene = scene or default_scene()
        self.object_name = "cube" if config.task == "bump" else "card"
        self._active = False
        self._done = True

    # -- sampling ---------------------------------------------------------------

    @property
    def object_dims(self) -> np.ndarray:
        if self.object_name == "cube":
            return np.full(3, self.base_scene.cube_edge)
        return np.asarray(self.base_scene.card_size, dtype=float)

    @property
    def symmetry(self) -> float:
        """Yaw period of the object's footprint."""
        return math.pi / 2 if self.object_name == "cube" else math.pi

    def _object_body(self, scene, xy, yaw):
        return cube_body(scene, xy, yaw) if self.object_name == "cube" else card_body(scene, xy, yaw)

    def _sample_object_and_goal(self, rng):
        cfg = self.config
        obj_xy = cfg.init_region.sample(rng)
        obj_yaw = float(rng.uniform(-math.pi, math.pi)) if cfg.random_yaw else 0.0
        if cfg.goal_distance is not None:
            phi = rng.uniform(-math.pi, math.pi)
            goal_xy = obj_xy + cfg.goal_distance * np.array([math.cos(phi), math.sin(phi)])
        else:
            goal_xy = cfg.goal_region.sample(rng)
        goal_yaw = float(rng.uniform(-math.pi, math.pi)) if (cfg.random_yaw and cfg.check_yaw) else obj_yaw
        return obj_xy, obj_yaw, goal_xy, goal_yaw

    def _arm_clear(self, q, scene, obj) -> bool:
        """Links clear of the table and the EE sphere clear of the object."""
        kp = keypoints(self.model, q)
        chain = [self.model.base_translation, kp["elbow"], kp["wrist"], kp["ee"]]
        s = np.linspace(0.0, 1.0, 11)[:, None]
        pts = np.concatenate([a + s * (b - a) for a, b in zip(chain[:-1], chain[1:])])
        cx, cy = scene.table_center
        hx, hy = scene.table_size[0] / 2 + 0.01, scene.table_size[1] / 2 + 0.01
        over = (np.abs(pts[:, 0] - cx) <= hx) & (np.abs(pts[:, 1] - cy) <= hy)
        if np.any(over & (pts[:, 2] < scene.table_top + 0.03)):
            return False
        ee = kp["ee"]
        if ee[2] < scene.table_top + scene.ee_radius + 0.005:
            return False
        local = obj.rotation.T @ (ee - obj.position)
        closest = np.clip(local, -obj.size, obj.size)
        return bool(np.linalg.norm(local - closest) > scene.ee_radius + 0.005)

    def _sample_arm(self, rng, scene, obj):
        cfg = self.config
        if cfg.arm_start == "above_object":
            target = obj.position.copy()
            target[2] = scene.table_top + 2 * obj.size[2] + scene.ee_radius + 0.01
            q = solve_ee_position(self.model, target, HOME_Q)
            if self._arm_clear(q, scene, obj):
                return q
            raise EnvError("no collision-free arm start above the object")
        for _ in range(100):
            q = np.clip(HOME_Q + rng.uniform(-0.3, 0.3, 6), self.model.lower, self.model.upper)
            if self._arm_clear(q, scene, obj):
                return q
        raise EnvError("no collision-free arm configuration after 100 samples")

    # -- episode -----------------------------------------------------------------

    def reset(self, seed: int | None = None) -> Observation:
        cfg = self.config
        seed = cfg.seed if seed is None else seed
        self.seed = int(seed)
        self.rng = make_rng(seed)
        scene = self.base_scene
        obj_xy, obj_yaw, goal_xy, goal_yaw = self._sample_object_and_goal(self.rng)
        bodies = [table_body(scene)]
        if cfg.task == "bump":
            bodies.append(bump_body(scene))
        obj = self._object_body(scene, obj_xy, obj_yaw)
        bodies.append(obj)
        q = self._sample_arm(self.rng, scene, obj)
        world = make_world(self.model, q, bodies)
        world, scene = randomize(world, scene, cfg.dr, self.rng)
        self.scene = scene
        self.goal_xy = np.asarray(goal_xy, dtype=float)
        self.goal_yaw = goal_yaw
        goal_z = scene.table_top + self.object_dims[2] / 2
        self.goal_keypoints = project_keypoints(_yaw_rotation(goal_yaw), [*goal_xy, goal_z], self.object_dims)
        self.sim = Simulator(world, self.model, cfg.sim, scene.ee_radius, scene.ee_friction)
        self.obj_index = world.body_index(self.object_name)
        self.prev_action = np.zeros(ACTION_DIM)
        self.steps = 0
        self._active = True
        self._done = False
        self._success_paid = False
        return self._observe()

    def world(self) -> WorldState:
        return self.sim.world()

    def object_pose(self) -> tuple[np.ndarray, np.ndarray]:
        from armada.simcore._kernels import quat_to_matrix

        return quat_to_matrix(self.sim.body_quaternion(self.obj_index)), self.sim.body_position(self.obj_index)

    def _observe(self) -> Observation:
        rot, pos = self.object_pose()
        fk = forward_kinematics(self.model, self.sim.q)
        ee = fk.ee.translation.copy()
        dr = self.sim.dr
        if dr is not None and dr.ee_position_std > 0:
            ee = ee + self.rng.normal(0.0, dr.ee_position_std, 3)
        return Observation(
            self.sim.q.copy(), self.sim.qd.copy(),
            project_keypoints(rot, pos, self.object_dims), self.goal_keypoints.copy(),
            np.concatenate([ee, canonical_quaternion(fk.ee.rotation)]),
            self.prev_action.copy(),
        )

    def errors(self) -> tuple[float, float, float]:
        """(mean keypoint distance, xy distance, yaw distance) to the goal."""
        rot, pos = self.object_pose()
        kp = project_keypoints(rot, pos, self.object_dims)
        kp_err = float(np.mean(np.linalg.norm(kp - self.goal_keypoints, axis=0)))
        pos_err = float(np.linalg.norm(pos[:2] - self.goal_xy))
        yaw_err = abs(_wrap(yaw_of(rot) - self.goal_yaw, self.symmetry))
        return kp_err, pos_err, yaw_err

    def clamp_action(self, action) -> tuple[np.ndarray, bool]:
        a = np.asarray(action, dtype=float).reshape(-1)
        if a.shape != (ACTION_DIM,):
            raise EnvError(f"action must have {ACTION_DIM} entries, got {a.size}")
        b = self.config.bounds
        a = np.where(np.isfinite(a), a, 0.0)
        clipped = np.clip(a, b.low, b.high)
        return clipped, bool(np.any(clipped != a))

    def step(self, action):
        if not self._active:
            raise EnvError("call reset() before step()")
        if self._done:
            raise EnvError("episode is done; call reset()")
        cfg = self.config
        a, clamped = self.clamp_action(action)
        dq, kp, kd = a[:6], a[6:12], a[12:]
        command = PdCommand(PdGains(kp, kd), self.sim.q + dq, self.model.torque_limits)
        diagnostic = None
        try:
            self.sim.step(command, self.rng, n_steps=cfg.sim.substeps)
        except SimulationError as exc:
            diagnostic = str(exc)
        self.steps += 1
        self.prev_action = a
        kp_err, pos_err, yaw_err = self.errors()
        obj_z = self.sim.body_position(self.obj_index)[2]
        fell = bool(obj_z < self.scene.table_top - 0.1) or diagnostic is not None
        success = (not fell) and pos_err <= cfg.eps_pos and (not cfg.check_yaw or yaw_err <= cfg.eps_yaw)
        w = cfg.reward
        reward = -w.keypoint * kp_err - w.action * float(dq @ dq)
        if success and not self._success_paid:
            reward += w.success
            self._success_paid = True
        if fell:
            reward -= w.fell
        reason = None
        if diagnostic is not None:
            reason = "nan"
        elif fell:
            reason = "fell"
        elif success:
            reason = "success"
        elif self.steps >= cfg.max_steps:
            reason = "timeout"
        self._done = reason is not None
        info = StepInfo(success, fell, reason, clamped, self.steps, self.sim.time, kp_err, pos_err, yaw_err, diagnostic)
        obs = self._observe() if diagnostic is None else self._safe_observe()
        return obs, float(reward), self._done, info

    def _safe_observe(self) -> Observation:
        try:
            return self._observe()
        except Exception:  # non-finite state: report zeros
            z = np.zeros(OBS_DIM)
            z[44 + 3] = 1.0
            z[51:] = self.prev_action
            return Observation.unflatten(z)
