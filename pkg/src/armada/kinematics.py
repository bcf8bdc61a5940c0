"""Forward kinematics, Jacobians and the actuator/joint coupling."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.spatial.transform import Rotation

from armada.model import ELBOW, WRIST_PITCH, RobotModel


@dataclass(frozen=True)
class JointState:
    q: np.ndarray
    qdot: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "q", np.array(self.q, dtype=float))
        object.__setattr__(self, "qdot", np.array(self.qdot, dtype=float))


@dataclass(frozen=True)
class FramePose:
    rotation: np.ndarray
    translation: np.ndarray

    @property
    def matrix(self) -> np.ndarray:
        t = np.eye(4)
        t[:3, :3] = self.rotation
        t[:3, 3] = self.translation
        return t

    def quaternion(self) -> np.ndarray:
        """Unit quaternion (w, x, y, z) with w >= 0."""
        return canonical_quaternion(self.rotation)


@dataclass(frozen=True)
class FkResult:
    links: list[FramePose]
    ee: FramePose


def canonical_quaternion(rotation: np.ndarray) -> np.ndarray:
    x, y, z, w = Rotation.from_matrix(rotation).as_quat()
    quat = np.array([w, x, y, z])
    return -quat if w < 0 else quat


def axis_rotation(axis: np.ndarray, angle: float) -> np.ndarray:
    """Rodrigues formula for a unit axis."""
    x, y, z = axis
    c, s = np.cos(angle), np.sin(angle)
    v = 1.0 - c
    return np.array(
        [
            [c + x * x * v, x * y * v - z * s, x * z * v + y * s],
            [y * x * v + z * s, c + y * y * v, y * z * v - x * s],
            [z * x * v - y * s, z * y * v + x * s, c + z * z * v],
        ]
    )


def _chain(model: RobotModel, q) -> tuple[np.ndarray, np.ndarray]:
    """World rotations (6,3,3) and origins (6,3) of every link frame."""
    q = np.asarray(q, dtype=float)
    rots = np.empty((6, 3, 3))
    origins = np.empty((6, 3))
    r, p = model.base_rotation, model.base_translation
    for i, link in enumerate(model.links):
        p = p + r @ link.origin_translation
        r = r @ link.origin_rotation @ axis_rotation(link.axis, q[i])
        rots[i] = r
        origins[i] = p
    return rots, origins


def forward_kinematics(model: RobotModel, q) -> FkResult:
    """Pose of every link frame and of the EE in the world frame.

    Joint limits are not enforced here.
    """
    rots, origins = _chain(model, q)
    links = [FramePose(rots[i], origins[i]) for i in range(6)]
    ee = FramePose(rots[-1], origins[-1] + rots[-1] @ model.ee_offset)
    return FkResult(links, ee)


def ee_position(model: RobotModel, q) -> np.ndarray:
    rots, origins = _chain(model, q)
    return origins[-1] + rots[-1] @ model.ee_offset


def joint_axes(model: RobotModel, q) -> tuple[np.ndarray, np.ndarray]:
    """World-frame joint axes (6,3) and joint origins (6,3)."""
    rots, origins = _chain(model, q)
    axes = np.einsum("nij,nj->ni", rots, np.array([link.axis for link in model.links]))
    return axes, origins


def point_jacobian(model: RobotModel, q, link: int, point: np.ndarray) -> np.ndarray:
    """3x6 linear Jacobian of a world point rigidly attached to ``link``."""
    axes, origins = joint_axes(model, q)
    jac = np.zeros((3, 6))
    for i in range(link + 1):
        jac[:, i] = np.cross(axes[i], point - origins[i])
    return jac


def geometric_jacobian(model: RobotModel, q) -> np.ndarray:
    """World-frame 6x6 Jacobian at the EE origin, rows (linear; angular)."""
    rots, origins = _chain(model, q)
    axes = np.einsum("nij,nj->ni", rots, np.array([link.axis for link in model.links]))
    p_ee = origins[-1] + rots[-1] @ model.ee_offset
    jac = np.empty((6, 6))
    jac[:3] = np.cross(axes, p_ee - origins).T
    jac[3:] = axes.T
    return jac


def ee_velocity(model: RobotModel, q, qdot) -> np.ndarray:
    return geometric_jacobian(model, q) @ np.asarray(qdot, dtype=float)


def actuator_to_joint(model: RobotModel, q_act) -> np.ndarray:
    return model.coupling @ np.asarray(q_act, dtype=float)


def joint_to_actuator(model: RobotModel, q_joint) -> np.ndarray:
    return model.coupling_inverse @ np.asarray(q_joint, dtype=float)


def joint_torque_to_actuator(model: RobotModel, tau_joint) -> np.ndarray:
    """Actuator torques delivering ``tau_joint``; C^T preserves power."""
    return model.coupling.T @ np.asarray(tau_joint, dtype=float)


def actuator_torque_to_joint(model: RobotModel, tau_act) -> np.ndarray:
    return model.coupling_inverse.T @ np.asarray(tau_act, dtype=float)


def keypoints(model: RobotModel, q) -> dict[str, np.ndarray]:
    """World positions of the elbow joint, wrist joint and EE origins."""
    rots, origins = _chain(model, q)
    return {
        "elbow": origins[ELBOW].copy(),
        "wrist": origins[WRIST_PITCH].copy(),
        "ee": origins[-1] + rots[-1] @ model.ee_offset,
    }
