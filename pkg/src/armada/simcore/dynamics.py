"""Rigid-body dynamics of one arm: RNEA, CRBA and forward dynamics."""
from __future__ import annotations

import weakref
from dataclasses import dataclass

import numpy as np

from armada.model import GRAVITY, JOINT_NAMES, RobotModel
from armada.simcore import _kernels as K


class SingularMassMatrixError(ArithmeticError):
    def __init__(self, joint: int):
        self.joint = joint
        super().__init__(f"singular mass matrix at joint {joint} ({JOINT_NAMES[joint]})")


@dataclass(frozen=True)
class ChainArrays:
    """Flat arrays of a model as consumed by the compiled kernels.

    The gripper mass is folded into the last link as a point mass at the EE.
    """

    base_r: np.ndarray
    base_p: np.ndarray
    r0: np.ndarray
    p0: np.ndarray
    axis: np.ndarray
    mass: np.ndarray
    com: np.ndarray
    inertia: np.ndarray
    ee_off: np.ndarray
    armature: np.ndarray
    lower: np.ndarray
    upper: np.ndarray


def _fold_point_mass(m, c, inertia, m_p, p):
    total = m + m_p
    if total <= 0.0:
        return m, c, inertia
    c_new = (m * c + m_p * p) / total
    out = inertia.copy()
    for mass, point in ((m, c), (m_p, p)):
        d = point - c_new
        out += mass * (d @ d * np.eye(3) - np.outer(d, d))
    return total, c_new, out


_CACHE: "weakref.WeakKeyDictionary[RobotModel, ChainArrays]" = weakref.WeakKeyDictionary()


def chain_arrays(model: RobotModel) -> ChainArrays:
    cached = _CACHE.get(model)
    if cached is not None:
        return cached
    links = model.links
    mass = np.array([lk.mass for lk in links])
    com = np.array([lk.com for lk in links])
    inertia = np.array([lk.inertia for lk in links])
    m, c, i = _fold_point_mass(mass[-1], com[-1], inertia[-1], model.gripper_mass, model.ee_offset)
    mass[-1], com[-1], inertia[-1] = m, c, i
    arrays = ChainArrays(
        base_r=np.ascontiguousarray(model.base_rotation, dtype=float),
        base_p=np.ascontiguousarray(model.base_translation, dtype=float),
        r0=np.ascontiguousarray([lk.origin_rotation for lk in links], dtype=float),
        p0=np.ascontiguousarray([lk.origin_translation for lk in links], dtype=float),
        axis=np.ascontiguousarray([lk.axis for lk in links], dtype=float),
        mass=mass,
        com=np.ascontiguousarray(com),
        inertia=np.ascontiguousarray(inertia),
        ee_off=np.ascontiguousarray(model.ee_offset, dtype=float),
        armature=np.ascontiguousarray(model.armature_matrix),
        lower=model.lower,
        upper=model.upper,
    )
    _CACHE[model] = arrays
    return arrays


def frames(ch: ChainArrays, q) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    n = ch.mass.shape[0]
    rots = np.empty((n, 3, 3))
    origins = np.empty((n, 3))
    axes = np.empty((n, 3))
    K.chain_frames(ch.base_r, ch.base_p, ch.r0, ch.p0, ch.axis, np.asarray(q, dtype=float), rots, origins, axes)
    return rots, origins, axes


def _gvec(gravity: float) -> np.ndarray:
    return np.array([0.0, 0.0, -gravity])


def inverse_dynamics(model: RobotModel, q, qdot, qddot, ee_wrench=None, gravity: float = GRAVITY) -> np.ndarray:
    """Joint torques realizing ``qddot`` at (q, qdot).

    ``ee_wrench`` is (force, moment) applied by the environment on the EE,
    world frame; the returned torques are what the joints must supply.
    Reflected rotor inertia is included.
    """
    ch = chain_arrays(model)
    rots, origins, axes = frames(ch, q)
    w = np.zeros(6) if ee_wrench is None else np.asarray(ee_wrench, dtype=float)
    return K.rnea(rots, origins, axes, ch.mass, ch.com, ch.inertia, ch.ee_off, ch.armature,
                  np.asarray(qdot, dtype=float), np.asarray(qddot, dtype=float), _gvec(gravity),
                  np.ascontiguousarray(w[:3]), np.ascontiguousarray(w[3:]))


def mass_matrix(model: RobotModel, q) -> np.ndarray:
    ch = chain_arrays(model)
    rots, origins, axes = frames(ch, q)
    return K.crba(rots, origins, axes, ch.mass, ch.com, ch.inertia, ch.armature)


def bias_forces(model: RobotModel, q, qdot, gravity: float = GRAVITY) -> np.ndarray:
    """Coriolis, centrifugal and gravity torques."""
    return inverse_dynamics(model, q, qdot, np.zeros(len(model.joints)), gravity=gravity)


def forward_dynamics(model: RobotModel, q, qdot, tau, contact_torques=None, gravity: float = GRAVITY) -> np.ndarray:
    """Solve M qddot = tau - bias + J^T f (contacts passed as joint torques)."""
    rhs = np.asarray(tau, dtype=float) - bias_forces(model, q, qdot, gravity)
    if contact_torques is not None:
        rhs = rhs + np.asarray(contact_torques, dtype=float)
    qdd, failed = K.cholesky_solve(mass_matrix(model, q), rhs)
    if failed >= 0:
        raise SingularMassMatrixError(int(failed))
    return qdd


def arm_energy(model: RobotModel, q, qdot, gravity: float = GRAVITY) -> tuple[float, float]:
    """(kinetic, potential) energy of the arm, potential referenced to z = 0."""
    ch = chain_arrays(model)
    rots, origins, _ = frames(ch, q)
    qdot = np.asarray(qdot, dtype=float)
    kinetic = 0.5 * qdot @ mass_matrix(model, q) @ qdot
    coms = origins + np.einsum("nij,nj->ni", rots, ch.com)
    potential = gravity * float(ch.mass @ coms[:, 2])
    return float(kinetic), potential
