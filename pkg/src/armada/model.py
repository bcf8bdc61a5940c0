"""Robot and scene descriptions.

Descriptions are YAML documents with a ``format_version`` key.  A robot file
describes one arm (a bimanual setup is two files differing in ``base``).
Every joint entry nests its link, limits and actuator::

    format_version: 1
    name: armada_right
    base: {translation: [0.15, 0.0, 0.72], rpy: [0, 0, 0]}
    gripper_mass: 0.29
    ee_offset: [0, 0, -0.04]
    payload_rating: 2.5
    coupling: [[1, 0, 0, 0, 0, 0], ...]       # q_joint = C @ q_actuator
    calibrations:                            # optional inline tables
      my_motor: [[0.5, 0.4], [2.0, 2.1]]     # (current A, torque N*m)
    joints:
      - name: shoulder_yaw
        type: revolute
        origin: {translation: [0, 0, 0], rpy: [0, 0, 0]}
        axis: [0, 0, 1]
        limits: {lower: -1.6, upper: 1.6, velocity: 15.0, torque: 24.8}
        link: {mass: 0.0, com: [0, 0, 0], inertia: [[0, 0, 0], [0, 0, 0], [0, 0, 0]]}
        actuator: {gear_ratio: 10, nominal_current: 10.0, calibration_id: ak70_10,
                   rotor_inertia: 6.0e-5}

Origins may be given as ``rpy`` (fixed-axis roll/pitch/yaw, rad) or as a
full ``rotation`` matrix; :func:`dump_model` always writes matrices so a
dump/load round trip is exact.

The built-in geometry is an estimate.  Only the moving mass (1.09 kg), the
payload (2.5 kg) and the gear ratio are known; link lengths were chosen for
a 0.60 m straight-arm reach and the wrist actuator frames are placed on the
forearm axis.
"""
from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
import yaml
from scipy.spatial.transform import Rotation

from armada.actuation import CalibrationError, CalibrationTable, builtin_calibrations

FORMAT_VERSION = 1
GRAVITY = 9.81
N_JOINTS = 6

SHOULDER_YAW, SHOULDER_ROLL, SHOULDER_PITCH, ELBOW, FOREARM_ROLL, WRIST_PITCH = range(6)
JOINT_NAMES = (
    "shoulder_yaw",
    "shoulder_roll",
    "shoulder_pitch",
    "elbow",
    "forearm_roll",
    "wrist_pitch",
)


class ModelError(ValueError):
    """Invalid robot or scene description; the message names the field."""


def _frozen(a) -> np.ndarray:
    arr = np.array(a, dtype=float)
    arr.flags.writeable = False
    return arr


def _arrays_equal(a, b) -> bool:
    for f in dataclasses.fields(a):
        x, y = getattr(a, f.name), getattr(b, f.name)
        if isinstance(x, np.ndarray) or isinstance(y, np.ndarray):
            if not np.array_equal(x, y):
                return False
        elif x != y:
            return False
    return True


@dataclass(frozen=True, eq=False)
class Link:
    name: str
    parent: int
    origin_rotation: np.ndarray
    origin_translation: np.ndarray
    axis: np.ndarray
    mass: float
    com: np.ndarray
    inertia: np.ndarray

    def __post_init__(self):
        for name in ("origin_rotation", "origin_translation", "axis", "com", "inertia"):
            object.__setattr__(self, name, _frozen(getattr(self, name)))
        object.__setattr__(self, "mass", float(self.mass))

    __eq__ = _arrays_equal


@dataclass(frozen=True)
class JointSpec:
    lower: float
    upper: float
    velocity: float
    torque: float


@dataclass(frozen=True)
class ActuatorSpec:
    nominal_current: float
    calibration_id: str
    gear_ratio: float = 10.0
    rotor_inertia: float = 0.0  # motor side [kg*m^2]; reflected as rotor_inertia * gear_ratio**2

    @property
    def armature(self) -> float:
        return self.rotor_inertia * self.gear_ratio**2


@dataclass(frozen=True, eq=False)
class RobotModel:
    name: str
    links: tuple[Link, ...]
    joints: tuple[JointSpec, ...]
    actuators: tuple[ActuatorSpec, ...]
    coupling: np.ndarray
    base_rotation: np.ndarray
    base_translation: np.ndarray
    gripper_mass: float
    ee_offset: np.ndarray
    payload_rating: float = 0.0
    calibrations: dict = field(default_factory=dict)

    def __post_init__(self):
        for name in ("coupling", "base_rotation", "base_translation", "ee_offset"):
            object.__setattr__(self, name, _frozen(getattr(self, name)))
        object.__setattr__(self, "links", tuple(self.links))
        object.__setattr__(self, "joints", tuple(self.joints))
        object.__setattr__(self, "actuators", tuple(self.actuators))
        validate_model(self)

    def __eq__(self, other):
        if not isinstance(other, RobotModel):
            return NotImplemented
        return (
            self.name == other.name
            and self.links == other.links
            and self.joints == other.joints
            and self.actuators == other.actuators
            and np.array_equal(self.coupling, other.coupling)
            and np.array_equal(self.base_rotation, other.base_rotation)
            and np.array_equal(self.base_translation, other.base_translation)
            and self.gripper_mass == other.gripper_mass
            and np.array_equal(self.ee_offset, other.ee_offset)
            and self.payload_rating == other.payload_rating
            and self.calibrations == other.calibrations
        )

    __hash__ = object.__hash__

    @property
    def lower(self) -> np.ndarray:
        return np.array([j.lower for j in self.joints])

    @property
    def upper(self) -> np.ndarray:
        return np.array([j.upper for j in self.joints])

    @property
    def velocity_limits(self) -> np.ndarray:
        return np.array([j.velocity for j in self.joints])

    @property
    def torque_limits(self) -> np.ndarray:
        return np.array([j.torque for j in self.joints])

    @property
    def moving_mass(self) -> float:
        return float(sum(link.mass for link in self.links))

    @cached_property
    def coupling_inverse(self) -> np.ndarray:
        return np.linalg.inv(self.coupling)

    @cached_property
    def armature_matrix(self) -> np.ndarray:
        """Reflected rotor inertia in joint coordinates, C^-T diag(J N^2) C^-1."""
        cinv = self.coupling_inverse
        return cinv.T @ np.diag([a.armature for a in self.actuators]) @ cinv

    def replace(self, **changes) -> "RobotModel":
        return dataclasses.replace(self, **changes)

    def with_velocity_scale(self, scale: float) -> "RobotModel":
        joints = tuple(dataclasses.replace(j, velocity=j.velocity * scale) for j in self.joints)
        return self.replace(joints=joints)


def validate_model(model: RobotModel) -> None:
    n = len(model.joints)
    if n != N_JOINTS:
        raise ModelError(f"joints: expected {N_JOINTS} joints, got {n}")
    if len(model.links) != N_JOINTS:
        raise ModelError(f"links: expected {N_JOINTS} links, got {len(model.links)}")
    if len(model.actuators) != N_JOINTS:
        raise ModelError(f"actuators: expected {N_JOINTS} actuators, got {len(model.actuators)}")
    for i, link in enumerate(model.links):
        where = f"joints[{i}]"
        if link.parent != i - 1:
            raise ModelError(f"{where}.parent: serial chain expects parent {i - 1}, got {link.parent}")
        if link.axis.shape != (3,) or abs(np.linalg.norm(link.axis) - 1.0) > 1e-9:
            raise ModelError(f"{where}.axis: must be a unit 3-vector, got {link.axis.tolist()}")
        if link.mass < 0:
            raise ModelError(f"{where}.link.mass: must be >= 0")
        if link.com.shape != (3,):
            raise ModelError(f"{where}.link.com: must be a 3-vector")
        inertia = link.inertia
        if inertia.shape != (3, 3) or not np.allclose(inertia, inertia.T, atol=1e-12):
            raise ModelError(f"{where}.link.inertia: must be a symmetric 3x3 matrix")
        if np.linalg.eigvalsh(inertia).min() < -1e-12:
            raise ModelError(f"{where}.link.inertia: must be positive semidefinite")
        _check_rotation(link.origin_rotation, f"{where}.origin.rotation")
        if link.origin_translation.shape != (3,):
            raise ModelError(f"{where}.origin.translation: must be a 3-vector")
    for i, j in enumerate(model.joints):
        where = f"joints[{i}].limits"
        if not (np.isfinite(j.lower) and np.isfinite(j.upper)):
            raise ModelError(f"{where}: position limits must be finite")
        if not j.lower < j.upper:
            raise ModelError(f"{where}: lower must be < upper")
        if not j.velocity > 0:
            raise ModelError(f"{where}.velocity: must be > 0")
        if not j.torque > 0:
            raise ModelError(f"{where}.torque: must be > 0")
    for i, a in enumerate(model.actuators):
        where = f"joints[{i}].actuator"
        if not a.gear_ratio > 0:
            raise ModelError(f"{where}.gear_ratio: must be > 0")
        if not a.nominal_current > 0:
            raise ModelError(f"{where}.nominal_current: must be > 0")
        if a.rotor_inertia < 0:
            raise ModelError(f"{where}.rotor_inertia: must be >= 0")
        if a.calibration_id not in model.calibrations:
            raise ModelError(f"{where}.calibration_id: unknown calibration {a.calibration_id!r}")
    if model.coupling.shape != (N_JOINTS, N_JOINTS):
        raise ModelError("coupling: must be 6x6")
    if abs(np.linalg.det(model.coupling)) < 1e-9:
        raise ModelError("coupling: matrix is not invertible")
    _check_rotation(model.base_rotation, "base.rotation")
    if model.gripper_mass < 0:
        raise ModelError("gripper_mass: must be >= 0")


def _check_rotation(r: np.ndarray, where: str) -> None:
    if r.shape != (3, 3):
        raise ModelError(f"{where}: must be 3x3")
    if not np.allclose(r.T @ r, np.eye(3), atol=1e-9) or abs(np.linalg.det(r) - 1) > 1e-9:
        raise ModelError(f"{where}: not a proper rotation")


# -- built-in arm -----------------------------------------------------------

UPPER_ARM = 0.28
FOREARM = 0.28
HAND = 0.04
SHOULDER_HEIGHT = 0.72
SHOULDER_HALF_WIDTH = 0.15


def _rod_inertia(mass, length, radius):
    side = mass * (3 * radius**2 + length**2) / 12.0
    return np.diag([side, side, 0.5 * mass * radius**2])


def default_coupling() -> np.ndarray:
    """Identity except the elbow row: q_elbow = a_elbow - a_shoulder_pitch."""
    c = np.eye(N_JOINTS)
    c[ELBOW, SHOULDER_PITCH] = -1.0
    return c


def default_armada_model(side: str = "right") -> RobotModel:
    """Built-in arm: shoulder yaw/roll/pitch, elbow, forearm roll, wrist pitch.

    Zero configuration hangs the arm straight down.  Masses of the two
    shoulder housings are body-mounted and excluded; the four distal links
    carry the 1.09 kg moving mass.  The gripper (0.29 kg) is lumped at the EE.
    """
    if side not in ("right", "left"):
        raise ValueError("side must be 'right' or 'left'")
    x = SHOULDER_HALF_WIDTH if side == "right" else -SHOULDER_HALF_WIDTH
    ex, ey, ez = np.eye(3)
    eye = np.eye(3)
    zero = np.zeros((3, 3))
    links = (
        Link("shoulder_yaw", -1, eye, [0, 0, 0], ez, 0.0, [0, 0, 0], zero),
        Link("shoulder_roll", 0, eye, [0, 0, 0], ey, 0.0, [0, 0, 0], zero),
        Link("upper_arm", 1, eye, [0, 0, 0], ex, 0.45, [0, 0, -0.14],
             _rod_inertia(0.45, UPPER_ARM, 0.03)),
        Link("elbow_housing", 2, eye, [0, 0, -UPPER_ARM], ex, 0.25, [0, 0, -0.03],
             np.diag([2.5e-4, 2.5e-4, 1.5e-4])),
        Link("forearm", 3, eye, [0, 0, -0.05], ez, 0.30, [0, 0, -0.12],
             _rod_inertia(0.30, FOREARM - 0.05, 0.025)),
        Link("hand", 4, eye, [0, 0, -(FOREARM - 0.05)], ex, 0.09, [0, 0, -0.02],
             np.diag([2.0e-5, 2.0e-5, 1.0e-5])),
    )
    big = dict(gear_ratio=10.0, nominal_current=10.0, calibration_id="ak70_10", rotor_inertia=6.0e-5)
    small = dict(gear_ratio=10.0, nominal_current=4.0, calibration_id="rmd_x4_v2", rotor_inertia=2.5e-5)
    actuators = tuple(ActuatorSpec(**(big if i < 4 else small)) for i in range(N_JOINTS))
    joints = (
        JointSpec(-1.6, 1.6, 15.0, 24.8),
        JointSpec(-1.6, 1.6, 15.0, 24.8),
        JointSpec(-1.0, 3.0, 15.0, 24.8),
        JointSpec(0.0, 2.6, 15.0, 24.8),
        JointSpec(-1.6, 1.6, 20.0, 5.0),
        JointSpec(-1.6, 1.6, 20.0, 5.0),
    )
    return RobotModel(
        name=f"armada_{side}",
        links=links,
        joints=joints,
        actuators=actuators,
        coupling=default_coupling(),
        base_rotation=np.eye(3),
        base_translation=[x, 0.0, SHOULDER_HEIGHT],
        gripper_mass=0.29,
        ee_offset=[0.0, 0.0, -HAND],
        payload_rating=2.5,
        calibrations=builtin_calibrations(),
    )


# -- scene ------------------------------------------------------------------


@dataclass(frozen=True)
class SceneModel:
    """Desk scene.  World frame: x to the robot's right, y forward, z up,
    origin on the floor below the midpoint between the shoulders."""

    table_size: tuple[float, float] = (0.84, 0.40)
    table_center: tuple[float, float] = (0.0, 0.25)
    table_height: float = 0.40
    table_friction: float = 0.5
    bump_size: tuple[float, float, float] = (0.05, 0.40, 0.025)
    cube_edge: float = 0.090
    cube_mass: float = 0.20
    cube_friction: float = 0.5
    card_size: tuple[float, float, float] = (0.0856, 0.0540, 0.001)
    card_mass: float = 0.03
    card_friction: float = 0.3
    ball_radius: float = 0.02
    ball_mass: float = 0.0027
    ee_radius: float = 0.02
    ee_friction: float = 1.0
    gravity: float = GRAVITY

    def __post_init__(self):
        for f in dataclasses.fields(self):
            value = getattr(self, f.name)
            values = value if isinstance(value, tuple) else (value,)
            if f.name == "table_center":
                continue
            if any(not v > 0 for v in values):
                raise ModelError(f"scene.{f.name}: all dims must be > 0")

    @property
    def table_top(self) -> float:
        return self.table_height

    def replace(self, **changes) -> "SceneModel":
        return dataclasses.replace(self, **changes)


def default_scene() -> SceneModel:
    return SceneModel()


# -- serialization ----------------------------------------------------------


def _parse_yaml(text: str) -> dict:
    try:
        doc = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        where = f"line {mark.line + 1}, column {mark.column + 1}: " if mark else ""
        raise ModelError(f"parse error: {where}{getattr(exc, 'problem', exc)}") from None
    if not isinstance(doc, dict):
        raise ModelError("parse error: top level must be a mapping")
    version = doc.get("format_version")
    if version != FORMAT_VERSION:
        raise ModelError(f"format_version: expected {FORMAT_VERSION}, got {version!r}")
    return doc


def _require(d: dict, key: str, where: str):
    if not isinstance(d, dict) or key not in d:
        raise ModelError(f"{where}.{key}: missing" if where else f"{key}: missing")
    return d[key]


def _vector(value, n: int, where: str) -> np.ndarray:
    try:
        arr = np.asarray(value, dtype=float)
    except (TypeError, ValueError):
        raise ModelError(f"{where}: expected {n} numbers") from None
    if arr.shape != (n,) or not np.all(np.isfinite(arr)):
        raise ModelError(f"{where}: expected {n} finite numbers")
    return arr


def _matrix(value, where: str, shape=(3, 3)) -> np.ndarray:
    try:
        arr = np.asarray(value, dtype=float)
    except (TypeError, ValueError):
        raise ModelError(f"{where}: expected a {shape[0]}x{shape[1]} matrix") from None
    if arr.shape != shape:
        raise ModelError(f"{where}: expected a {shape[0]}x{shape[1]} matrix")
    return arr


def _number(d: dict, key: str, where: str) -> float:
    value = _require(d, key, where)
    try:
        return float(value)
    except (TypeError, ValueError):
        raise ModelError(f"{where}.{key}: expected a number, got {value!r}") from None


def _pose(d, where: str) -> tuple[np.ndarray, np.ndarray]:
    if d is None:
        return np.eye(3), np.zeros(3)
    if not isinstance(d, dict):
        raise ModelError(f"{where}: expected a mapping")
    t = _vector(d.get("translation", [0, 0, 0]), 3, f"{where}.translation")
    if "rotation" in d and "rpy" in d:
        raise ModelError(f"{where}: give either rotation or rpy, not both")
    if "rotation" in d:
        r = _matrix(d["rotation"], f"{where}.rotation")
    else:
        rpy = _vector(d.get("rpy", [0, 0, 0]), 3, f"{where}.rpy")
        r = Rotation.from_euler("xyz", rpy).as_matrix()
    return r, t


def load_model(text: str) -> RobotModel:
    """Parse and validate a robot description."""
    doc = _parse_yaml(text)
    calibrations = builtin_calibrations()
    for cid, samples in (doc.get("calibrations") or {}).items():
        try:
            calibrations[str(cid)] = CalibrationTable.from_samples(samples)
        except CalibrationError as exc:
            raise ModelError(f"calibrations.{cid}: {exc}") from None
    joints_doc = _require(doc, "joints", "")
    if not isinstance(joints_doc, list):
        raise ModelError("joints: expected a list")
    if len(joints_doc) != N_JOINTS:
        raise ModelError(f"joints: expected {N_JOINTS} joints, got {len(joints_doc)}")
    links, joints, actuators = [], [], []
    for i, jd in enumerate(joints_doc):
        where = f"joints[{i}]"
        if not isinstance(jd, dict):
            raise ModelError(f"{where}: expected a mapping")
        jtype = jd.get("type", "revolute")
        if jtype != "revolute":
            raise ModelError(f"{where}.type: only revolute joints are supported, got {jtype!r}")
        rot, trans = _pose(jd.get("origin"), f"{where}.origin")
        axis = _vector(_require(jd, "axis", where), 3, f"{where}.axis")
        ld = _require(jd, "link", where)
        inertia = ld.get("inertia", [[0, 0, 0], [0, 0, 0], [0, 0, 0]])
        if isinstance(inertia, list) and len(inertia) == 6 and not isinstance(inertia[0], list):
            ixx, iyy, izz, ixy, ixz, iyz = inertia
            inertia = [[ixx, ixy, ixz], [ixy, iyy, iyz], [ixz, iyz, izz]]
        links.append(
            Link(
                name=str(jd.get("name", f"link{i}")),
                parent=int(jd.get("parent", i - 1)),
                origin_rotation=rot,
                origin_translation=trans,
                axis=axis,
                mass=_number(ld, "mass", f"{where}.link"),
                com=_vector(ld.get("com", [0, 0, 0]), 3, f"{where}.link.com"),
                inertia=_matrix(inertia, f"{where}.link.inertia"),
            )
        )
        lim = _require(jd, "limits", where)
        joints.append(
            JointSpec(
                lower=_number(lim, "lower", f"{where}.limits"),
                upper=_number(lim, "upper", f"{where}.limits"),
                velocity=_number(lim, "velocity", f"{where}.limits"),
                torque=_number(lim, "torque", f"{where}.limits"),
            )
        )
        ad = _require(jd, "actuator", where)
        actuators.append(
            ActuatorSpec(
                nominal_current=_number(ad, "nominal_current", f"{where}.actuator"),
                calibration_id=str(_require(ad, "calibration_id", f"{where}.actuator")),
                gear_ratio=float(ad.get("gear_ratio", 10.0)),
                rotor_inertia=float(ad.get("rotor_inertia", 0.0)),
            )
        )
    base_r, base_t = _pose(doc.get("base"), "base")
    coupling = doc.get("coupling")
    coupling = np.eye(N_JOINTS) if coupling is None else _matrix(coupling, "coupling", (6, 6))
    return RobotModel(
        name=str(doc.get("name", "robot")),
        links=tuple(links),
        joints=tuple(joints),
        actuators=tuple(actuators),
        coupling=coupling,
        base_rotation=base_r,
        base_translation=base_t,
        gripper_mass=float(doc.get("gripper_mass", 0.0)),
        ee_offset=_vector(doc.get("ee_offset", [0, 0, 0]), 3, "ee_offset"),
        payload_rating=float(doc.get("payload_rating", 0.0)),
        calibrations=calibrations,
    )


def _plain(a) -> list:
    return np.asarray(a, dtype=float).tolist()


def dump_model(model: RobotModel) -> str:
    builtin = builtin_calibrations()
    extra = {
        cid: [list(s) for s in table.samples]
        for cid, table in model.calibrations.items()
        if builtin.get(cid) != table
    }
    doc = {
        "format_version": FORMAT_VERSION,
        "name": model.name,
        "base": {"translation": _plain(model.base_translation), "rotation": _plain(model.base_rotation)},
        "gripper_mass": float(model.gripper_mass),
        "ee_offset": _plain(model.ee_offset),
        "payload_rating": float(model.payload_rating),
        "coupling": _plain(model.coupling),
    }
    if extra:
        doc["calibrations"] = extra
    doc["joints"] = [
        {
            "name": link.name,
            "type": "revolute",
            "parent": link.parent,
            "origin": {"translation": _plain(link.origin_translation), "rotation": _plain(link.origin_rotation)},
            "axis": _plain(link.axis),
            "limits": dataclasses.asdict(joint),
            "link": {"mass": link.mass, "com": _plain(link.com), "inertia": _plain(link.inertia)},
            "actuator": dataclasses.asdict(act),
        }
        for link, joint, act in zip(model.links, model.joints, model.actuators)
    ]
    return yaml.safe_dump(doc, sort_keys=False, default_flow_style=None)


def load_scene(text: str) -> SceneModel:
    doc = _parse_yaml(text)
    kwargs = {}
    names = {f.name: f for f in dataclasses.fields(SceneModel)}
    for key, value in doc.items():
        if key == "format_version":
            continue
        if key not in names:
            raise ModelError(f"scene.{key}: unknown field")
        try:
            kwargs[key] = tuple(float(v) for v in value) if isinstance(value, list) else float(value)
        except (TypeError, ValueError):
            raise ModelError(f"scene.{key}: expected numbers") from None
    return SceneModel(**kwargs)


def dump_scene(scene: SceneModel) -> str:
    doc = {"format_version": FORMAT_VERSION}
    for key, value in dataclasses.asdict(scene).items():
        doc[key] = list(value) if isinstance(value, tuple) else value
    return yaml.safe_dump(doc, sort_keys=False, default_flow_style=None)
