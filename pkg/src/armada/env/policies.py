"""Policies mapping an :class:`Observation` to an 18-vector action."""
from __future__ import annotations

import numpy as np

from armada.actuation import gravity_torques
from armada.env.core import ACTION_DIM, ActionBounds, Observation, make_rng
from armada.kinematics import joint_axes
from armada.model import RobotModel, SceneModel, default_armada_model, default_scene
from armada.retarget import dls_solve


class Policy:
    """Base class; ``reset`` is called with the episode seed."""

    def reset(self, seed: int) -> None:
        pass

    def __call__(self, obs: Observation) -> np.ndarray:
        raise NotImplementedError


class ZeroPolicy(Policy):
    """All-zero action: no residual and zero gains."""

    def __call__(self, obs):
        return np.zeros(ACTION_DIM)


class RandomPolicy(Policy):
    def __init__(self, bounds: ActionBounds = ActionBounds()):
        self.bounds = bounds
        self.rng = make_rng(0)

    def reset(self, seed):
        self.rng = make_rng(seed + 0x5EED)

    def __call__(self, obs):
        return self.rng.uniform(self.bounds.low, self.bounds.high)


def object_center(obs: Observation) -> np.ndarray:
    return obs.object_keypoints.mean(axis=1)


def goal_center(obs: Observation) -> np.ndarray:
    return obs.goal_keypoints.mean(axis=1)


class ScriptedPushPolicy(Policy):
    """Hand-written baseline that moves the EE with Jacobian steps.

    Thin objects (the card) are pressed and dragged: the EE settles on the
    card and then moves along the straight line to the goal while pushing
    down.  Tall objects are pushed from behind at mid height with a longer
    step, since sliding them takes more force.  Gravity is
    cancelled by offsetting the PD target by tau_g / kp.
    """

    def __init__(self, model: RobotModel | None = None, scene: SceneModel | None = None,
                 object_height: float | None = None, kp: float = 60.0, kd: float = 2.0,
                 press: float = 0.006, step: float = 0.012, push_step: float = 0.03,
                 bounds: ActionBounds = ActionBounds()):
        self.model = model or default_armada_model("right")
        self.scene = scene or default_scene()
        self.object_height = self.scene.card_size[2] if object_height is None else object_height
        self.kp, self.kd = kp, kd
        self.press, self.step, self.push_step = press, step, push_step
        self.bounds = bounds
        self.engaged = False

    def reset(self, seed):
        self.engaged = False

    def _target(self, obs: Observation) -> np.ndarray:
        ee = obs.ee_pose[:3]
        c, g = object_center(obs), goal_center(obs)
        top = self.scene.table_top
        r = self.scene.ee_radius
        if self.object_height < 0.02:
            surface = top + self.object_height + r
            if not self.engaged:
                if np.linalg.norm(ee[:2] - c) > 0.008:
                    return np.array([c[0], c[1], surface + 0.01])
                if ee[2] > surface + 0.001:
                    return np.array([c[0], c[1], surface - self.press])
                self.engaged = True
            offset = ee[:2] - c
            move = g - c
            dist = np.linalg.norm(move)
            if dist > self.step:
                move = move * (self.step / dist)
            xy = c + move + offset
            return np.array([xy[0], xy[1], surface - self.press])
        # push from behind a tall object
        direction = g - c
        dist = np.linalg.norm(direction)
        u = direction / dist if dist > 1e-9 else np.array([1.0, 0.0])
        z = top + self.object_height / 2
        behind = c - u * (self.object_height / 2 + r + 0.02)
        to_lane = (ee[:2] - c) - np.dot(ee[:2] - c, u) * u
        if not self.engaged:
            if np.linalg.norm(ee[:2] - behind) > 0.01 or abs(ee[2] - z) > 0.02:
                height = z if np.linalg.norm(ee[:2] - behind) < 0.03 else z + self.object_height
                return np.array([behind[0], behind[1], height])
            self.engaged = True
        xy = ee[:2] + u * self.push_step - 0.5 * to_lane
        return np.array([xy[0], xy[1], z])

    def __call__(self, obs):
        q = obs.q
        ee = obs.ee_pose[:3]
        err = self._target(obs) - ee
        norm = np.linalg.norm(err)
        if norm > 0.03:
            err = err * (0.03 / norm)
        axes, origins = joint_axes(self.model, q)
        jac = np.cross(axes, ee - origins).T
        dq = dls_solve(jac, err, 1e-3)
        dq = dq + gravity_torques(self.model, q) / self.kp
        action = np.concatenate([dq, np.full(6, self.kp), np.full(6, self.kd)])
        return np.clip(action, self.bounds.low, self.bounds.high)


# -- linear policy ---------------------------------------------------------------------

N_FEATURES = 17


def linear_features(obs: Observation) -> np.ndarray:
    """Fixed linear feature map of the observation (plus a bias term).

    Joint state, object-to-EE and goal-to-object offsets in the table plane,
    and EE height, scaled to order one.
    """
    c, g = object_center(obs), goal_center(obs)
    ee = obs.ee_pose[:3]
    return np.concatenate([
        obs.q, 0.1 * obs.qdot, 10.0 * (c - ee[:2]), 10.0 * (g - c), [10.0 * (ee[2] - 0.45)],
    ])


class LinearPolicy(Policy):
    """a = clip(center + half * (W f(obs) + b)), with f = :func:`linear_features`."""

    def __init__(self, params, bounds: ActionBounds = ActionBounds()):
        params = np.asarray(params, dtype=float)
        if params.shape != (self.n_params(),):
            raise ValueError(f"expected {self.n_params()} parameters, got {params.shape}")
        self.weights = params[: ACTION_DIM * N_FEATURES].reshape(ACTION_DIM, N_FEATURES)
        self.bias = params[ACTION_DIM * N_FEATURES:]
        self.bounds = bounds
        self.center = (bounds.low + bounds.high) / 2
        self.half = (bounds.high - bounds.low) / 2

    @staticmethod
    def n_params() -> int:
        return ACTION_DIM * (N_FEATURES + 1)

    def __call__(self, obs):
        raw = self.weights @ linear_features(obs) + self.bias
        return np.clip(self.center + self.half * raw, self.bounds.low, self.bounds.high)


POLICIES = ("zero", "random", "scripted")


def make_policy(name: str, model: RobotModel | None = None, scene: SceneModel | None = None,
                task: str = "card") -> Policy:
    if name == "zero":
        return ZeroPolicy()
    if name == "random":
        return RandomPolicy()
    if name == "scripted":
        scene = scene or default_scene()
        height = scene.cube_edge if task == "bump" else scene.card_size[2]
        return ScriptedPushPolicy(model, scene, object_height=height)
    raise ValueError(f"unknown policy {name!r}; valid: {', '.join(POLICIES)}")
