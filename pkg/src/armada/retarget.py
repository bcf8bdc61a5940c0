"""Shadowing human arm motion with differential IK.

Human elbow and wrist keypoints are mapped into the robot frame by one
similarity transform shared by both arms, then tracked per arm with a
damped least-squares velocity solve over the stacked elbow/wrist position
Jacobians.  Orientation is not tracked.
"""
from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field

import numpy as np

from armada.kinematics import joint_axes, keypoints
from armada.model import ELBOW, WRIST_PITCH, RobotModel

SIDES = ("left", "right")


class RetargetError(ValueError):
    pass


@dataclass(frozen=True)
class RetargetConfig:
    w_elbow: float = 1.0
    w_wrist: float = 1.0
    damping: float = 1e-4
    dt: float = 0.005  # s, integration step
    velocity_scale: float = 1.0  # fraction of the joint velocity limits
    tolerance: float = 1e-3  # m, wrist error ending the initial convergence
    max_iterations: int = 200

    def __post_init__(self):
        if self.w_elbow < 0 or self.w_wrist < 0:
            raise RetargetError("task weights must be >= 0")
        if not self.damping > 0:
            raise RetargetError("damping must be > 0")
        if not self.dt > 0:
            raise RetargetError("dt must be > 0")
        if not 0 < self.velocity_scale <= 1:
            raise RetargetError("velocity_scale must be in (0, 1]")


@dataclass(frozen=True)
class ArmTargets:
    elbow: np.ndarray
    wrist: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "elbow", np.array(self.elbow, dtype=float))
        object.__setattr__(self, "wrist", np.array(self.wrist, dtype=float))

    @staticmethod
    def lerp(a: "ArmTargets", b: "ArmTargets", s: float) -> "ArmTargets":
        return ArmTargets(a.elbow + s * (b.elbow - a.elbow), a.wrist + s * (b.wrist - a.wrist))


@dataclass(frozen=True)
class KeypointFrame:
    """Elbow/wrist targets per arm, robot world frame."""

    t: float
    arms: dict = field(default_factory=dict)  # side -> ArmTargets


def arm_length(model: RobotModel) -> float:
    """Shoulder-to-wrist length of the robot at the zero pose."""
    kp = keypoints(model, np.zeros(len(model.joints)))
    shoulder = model.base_translation
    return float(np.linalg.norm(kp["elbow"] - shoulder) + np.linalg.norm(kp["wrist"] - kp["elbow"]))


def human_arm_length(raw: dict) -> float:
    """Mean upper-arm + forearm length over the arms present in ``raw``."""
    lengths = []
    for side in SIDES:
        if side in raw:
            s, e, w = (np.asarray(raw[side][k], dtype=float) for k in ("shoulder", "elbow", "wrist"))
            lengths.append(np.linalg.norm(e - s) + np.linalg.norm(w - e))
    if not lengths:
        raise RetargetError("frame has no arms")
    return float(np.mean(lengths))


def map_human_to_robot(raw: dict, models: dict, human_length: float | None = None,
                       robot_length: float | None = None) -> KeypointFrame:
    """Map one raw human frame into robot targets.

    A single similarity transform is used for both arms: the midpoint of the
    human shoulders goes to the midpoint of the robot shoulders and all
    offsets are scaled by robot/human arm length.  Hand-to-hand vectors are
    therefore scaled rigidly.  With one arm the anchor is that shoulder.
    """
    sides = [s for s in SIDES if s in raw and s in models]
    if not sides:
        raise RetargetError("no arm present in both the frame and the model set")
    h_len = human_arm_length(raw) if human_length is None else float(human_length)
    if h_len < 0.01:
        raise RetargetError(f"degenerate human arm length {h_len:.4g} m (< 1 cm)")
    r_len = arm_length(models[sides[0]]) if robot_length is None else float(robot_length)
    scale = r_len / h_len
    h_anchor = np.mean([np.asarray(raw[s]["shoulder"], dtype=float) for s in sides], axis=0)
    r_anchor = np.mean([models[s].base_translation for s in sides], axis=0)
    arms = {
        s: ArmTargets(
            r_anchor + scale * (np.asarray(raw[s]["elbow"], dtype=float) - h_anchor),
            r_anchor + scale * (np.asarray(raw[s]["wrist"], dtype=float) - h_anchor),
        )
        for s in sides
    }
    return KeypointFrame(float(raw.get("t", 0.0)), arms)


def _task(model: RobotModel, q) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Elbow and wrist positions and their 3x6 Jacobians."""
    axes, origins = joint_axes(model, q)
    p_e, p_w = origins[ELBOW], origins[WRIST_PITCH]
    j_e = np.zeros((3, 6))
    j_w = np.zeros((3, 6))
    for i in range(ELBOW):
        j_e[:, i] = np.cross(axes[i], p_e - origins[i])
    for i in range(WRIST_PITCH):
        j_w[:, i] = np.cross(axes[i], p_w - origins[i])
    return np.concatenate([p_e, p_w]), j_e, j_w


def tracking_errors(model: RobotModel, q, targets: ArmTargets) -> tuple[float, float]:
    kp = keypoints(model, q)
    return float(np.linalg.norm(kp["elbow"] - targets.elbow)), float(np.linalg.norm(kp["wrist"] - targets.wrist))


def dls_solve(jac: np.ndarray, err: np.ndarray, damping: float) -> np.ndarray:
    """argmin ||J x - e||^2 + damping ||x||^2 via the normal equations."""
    n = jac.shape[1]
    return np.linalg.solve(jac.T @ jac + damping * np.eye(n), jac.T @ err)


def _limit(model: RobotModel, q, qdot, scale: float) -> np.ndarray:
    vmax = model.velocity_limits * scale
    peak = np.max(np.abs(qdot) / vmax)
    if peak > 1.0:
        qdot = qdot / peak  # keep the direction
    at_lower = (q <= model.lower) & (qdot < 0)
    at_upper = (q >= model.upper) & (qdot > 0)
    return np.where(at_lower | at_upper, 0.0, qdot)


def retarget_step(model: RobotModel, q, targets: ArmTargets, config: RetargetConfig = RetargetConfig(),
                  dt: float | None = None) -> np.ndarray:
    """Joint velocity reducing the weighted elbow/wrist error over ``dt``."""
    q = np.asarray(q, dtype=float)
    dt = config.dt if dt is None else dt
    p, j_e, j_w = _task(model, q)
    we, ww = np.sqrt(config.w_elbow), np.sqrt(config.w_wrist)
    jac = np.vstack([we * j_e, ww * j_w])
    err = np.concatenate([we * (targets.elbow - p[:3]), ww * (targets.wrist - p[3:])]) / dt
    if not np.any(err):
        return np.zeros_like(q)
    qdot = dls_solve(jac, err, config.damping)
    return _limit(model, q, qdot, config.velocity_scale)


def integrate(model: RobotModel, q, qdot, dt: float) -> np.ndarray:
    return np.clip(q + qdot * dt, model.lower, model.upper)


def converge(model: RobotModel, q0, targets: ArmTargets, config: RetargetConfig = RetargetConfig()
             ) -> tuple[np.ndarray, list[float]]:
    """Iterate on a static target; returns final q and the wrist error history."""
    q = np.clip(np.asarray(q0, dtype=float), model.lower, model.upper)
    history = [tracking_errors(model, q, targets)[1]]
    for _ in range(config.max_iterations):
        if history[-1] < config.tolerance:
            break
        q = integrate(model, q, retarget_step(model, q, targets, config), config.dt)
        history.append(tracking_errors(model, q, targets)[1])
    return q, history


def solve_ee_position(model: RobotModel, target, q0, damping: float = 1e-4, iterations: int = 200,
                      tol: float = 1e-6) -> np.ndarray:
    """Damped least-squares IK for the EE position (orientation free)."""
    from armada.kinematics import ee_position

    q = np.clip(np.asarray(q0, dtype=float), model.lower, model.upper)
    target = np.asarray(target, dtype=float)
    for _ in range(iterations):
        p = ee_position(model, q)
        err = target - p
        if np.linalg.norm(err) < tol:
            break
        axes, origins = joint_axes(model, q)
        jac = np.cross(axes, p - origins).T
        q = np.clip(q + dls_solve(jac, err, damping), model.lower, model.upper)
    return q


@dataclass
class ArmTrajectory:
    t: np.ndarray
    q: np.ndarray
    qdot: np.ndarray
    elbow_error: np.ndarray
    wrist_error: np.ndarray


def retarget_trajectory(models: dict, frames: list[KeypointFrame], q0: dict,
                        config: RetargetConfig = RetargetConfig()) -> dict[str, ArmTrajectory]:
    """Track a frame sequence with every arm present in ``frames[0]``.

    The first frame is reached by static convergence.  Between frames the
    targets are linearly interpolated on sub-steps no longer than
    ``config.dt``; one row is emitted per frame.
    """
    if not frames:
        raise RetargetError("no frames")
    times = np.array([f.t for f in frames])
    if np.any(np.diff(times) <= 0):
        raise RetargetError("frame timestamps must be strictly increasing")
    out = {}
    for side in frames[0].arms:
        model = models[side]
        q = np.asarray(q0[side], dtype=float)
        if np.any(q < model.lower) or np.any(q > model.upper):
            raise RetargetError(f"{side}: q0 outside joint limits")
        q, _ = converge(model, q, frames[0].arms[side], config)
        qs, qds, ee, ew = [q.copy()], [np.zeros_like(q)], [], []
        e, w = tracking_errors(model, q, frames[0].arms[side])
        ee.append(e)
        ew.append(w)
        for k in range(1, len(frames)):
            a, b = frames[k - 1].arms[side], frames[k].arms[side]
            span = times[k] - times[k - 1]
            n = max(1, int(np.ceil(span / config.dt - 1e-9)))
            h = span / n
            qdot = np.zeros_like(q)
            for i in range(1, n + 1):
                qdot = retarget_step(model, q, ArmTargets.lerp(a, b, i / n), config, dt=h)
                q = integrate(model, q, qdot, h)
            e, w = tracking_errors(model, q, b)
            qs.append(q.copy())
            qds.append(qdot)
            ee.append(e)
            ew.append(w)
        out[side] = ArmTrajectory(times.copy(), np.array(qs), np.array(qds), np.array(ee), np.array(ew))
    return out


# -- files ----------------------------------------------------------------------


def read_keypoints_jsonl(text: str) -> list[dict]:
    """Parse one raw human frame per line; errors carry the line number."""
    frames = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        try:
            rec = json.loads(line)
        except json.JSONDecodeError as exc:
            raise RetargetError(f"line {lineno}: {exc.msg}") from None
        if "t" not in rec:
            raise RetargetError(f"line {lineno}: missing 't'")
        for side in SIDES:
            if side in rec:
                for key in ("shoulder", "elbow", "wrist"):
                    v = rec[side].get(key) if isinstance(rec[side], dict) else None
                    if v is None or len(v) != 3:
                        raise RetargetError(f"line {lineno}: {side}.{key} must be a 3-vector")
        if not any(side in rec for side in SIDES):
            raise RetargetError(f"line {lineno}: no 'left' or 'right' arm")
        if frames and rec["t"] <= frames[-1]["t"]:
            raise RetargetError(f"line {lineno}: timestamps must be strictly increasing")
        frames.append(rec)
    if not frames:
        raise RetargetError("empty keypoint file")
    return frames


def keypoints_jsonl(frames: list[dict]) -> str:
    return "".join(json.dumps(f, sort_keys=True) + "\n" for f in frames)


def trajectory_csv(traj: ArmTrajectory) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["t"] + [f"q{i}" for i in range(1, 7)])
    for t, q in zip(traj.t, traj.q):
        w.writerow([f"{t:.6f}"] + [f"{v:.9f}" for v in q])
    return buf.getvalue()
