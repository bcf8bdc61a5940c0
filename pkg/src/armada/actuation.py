"""Sensor-free torque estimation, PD torque control and payload statics.

The current/torque map is a monotone piecewise-linear table.  Inside the
sampled range it interpolates; outside it continues the first or last
segment, so the estimate stays defined for currents the bench never saw.
"""
from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import TYPE_CHECKING

import numpy as np

if TYPE_CHECKING:
    from armada.model import RobotModel

#: joint configuration used for the payload check: upper arm hanging,
#: forearm horizontal (the hold phase of a curl)
LIFTING_POSTURE = np.array([0.0, 0.0, 0.0, np.pi / 2, 0.0, 0.0])


class CalibrationError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class CalibrationTable:
    """Monotone (current [A], torque [N*m]) samples for one actuator type."""

    currents: np.ndarray
    torques: np.ndarray

    def __post_init__(self):
        i = np.array(self.currents, dtype=float)
        t = np.array(self.torques, dtype=float)
        if i.ndim != 1 or i.shape != t.shape:
            raise CalibrationError("currents and torques must be 1-D and the same length")
        if i.size < 2:
            raise CalibrationError("calibration table needs at least 2 samples")
        if not (np.all(np.isfinite(i)) and np.all(np.isfinite(t))):
            raise CalibrationError("calibration samples must be finite")
        if np.any(np.diff(i) <= 0):
            raise CalibrationError("currents must be strictly increasing")
        if np.any(np.diff(t) <= 0):
            raise CalibrationError("torques must be strictly increasing")
        i.flags.writeable = False
        t.flags.writeable = False
        object.__setattr__(self, "currents", i)
        object.__setattr__(self, "torques", t)

    def __eq__(self, other):
        if not isinstance(other, CalibrationTable):
            return NotImplemented
        return np.array_equal(self.currents, other.currents) and np.array_equal(
            self.torques, other.torques
        )

    @property
    def samples(self) -> list[tuple[float, float]]:
        return [(float(a), float(b)) for a, b in zip(self.currents, self.torques)]

    @classmethod
    def from_samples(cls, samples) -> "CalibrationTable":
        arr = np.asarray(samples, dtype=float)
        if arr.ndim != 2 or arr.shape[1] != 2:
            raise CalibrationError("samples must be (current, torque) pairs")
        return cls(arr[:, 0], arr[:, 1])

    @classmethod
    def from_csv(cls, source: str | Path | io.TextIOBase) -> "CalibrationTable":
        """Read ``current_A,torque_Nm`` rows; ``#`` lines are comments."""
        if isinstance(source, (str, Path)) and Path(source).exists():
            text = Path(source).read_text(encoding="utf-8")
        elif isinstance(source, str):
            text = source
        else:
            text = source.read()
        lines = [ln for ln in text.splitlines() if ln.strip() and not ln.lstrip().startswith("#")]
        if not lines:
            raise CalibrationError("empty calibration CSV")
        reader = csv.reader(lines)
        header = [h.strip() for h in next(reader)]
        if header != ["current_A", "torque_Nm"]:
            raise CalibrationError(f"expected header current_A,torque_Nm, got {','.join(header)}")
        rows = []
        for lineno, row in enumerate(reader, start=2):
            if len(row) != 2:
                raise CalibrationError(f"row {lineno}: expected 2 columns, got {len(row)}")
            try:
                rows.append((float(row[0]), float(row[1])))
            except ValueError as exc:
                raise CalibrationError(f"row {lineno}: {exc}") from None
        return cls.from_samples(rows)

    def to_csv(self) -> str:
        out = ["current_A,torque_Nm"]
        out += [f"{a!r},{b!r}" for a, b in self.samples]
        return "\n".join(out) + "\n"


def _piecewise(x, xs: np.ndarray, ys: np.ndarray):
    x = np.asarray(x, dtype=float)
    y = np.interp(x, xs, ys)
    lo_slope = (ys[1] - ys[0]) / (xs[1] - xs[0])
    hi_slope = (ys[-1] - ys[-2]) / (xs[-1] - xs[-2])
    y = np.where(x < xs[0], ys[0] + lo_slope * (x - xs[0]), y)
    y = np.where(x > xs[-1], ys[-1] + hi_slope * (x - xs[-1]), y)
    return y if y.ndim else float(y)


def torque_from_current(table: CalibrationTable, current):
    """Estimated output torque [N*m] for motor current [A]."""
    return _piecewise(current, table.currents, table.torques)


def current_from_torque(table: CalibrationTable, torque):
    """Inverse of :func:`torque_from_current`."""
    return _piecewise(torque, table.torques, table.currents)


_BUILTIN_CALIBRATIONS = ("ak70_10", "rmd_x4_v2")


def builtin_calibration(calibration_id: str) -> CalibrationTable:
    if calibration_id not in _BUILTIN_CALIBRATIONS:
        raise KeyError(calibration_id)
    text = resources.files("armada.data").joinpath(f"{calibration_id}.csv").read_text("utf-8")
    return CalibrationTable.from_csv(text)


def builtin_calibrations() -> dict[str, CalibrationTable]:
    return {cid: builtin_calibration(cid) for cid in _BUILTIN_CALIBRATIONS}


@dataclass(frozen=True)
class PdGains:
    kp: np.ndarray
    kd: np.ndarray

    def __post_init__(self):
        kp = np.asarray(self.kp, dtype=float)
        kd = np.asarray(self.kd, dtype=float)
        if np.any(kp < 0) or np.any(kd < 0):
            raise ValueError("PD gains must be non-negative")
        object.__setattr__(self, "kp", kp)
        object.__setattr__(self, "kd", kd)


def pd_torque(gains: PdGains, q_des, q, qdot, limits) -> np.ndarray:
    """Joint torque ``clip(kp*(q_des - q) - kd*qdot, -limit, limit)``."""
    raw = gains.kp * (np.asarray(q_des) - np.asarray(q)) - gains.kd * np.asarray(qdot)
    limits = np.asarray(limits, dtype=float)
    return np.clip(raw, -limits, limits)


@dataclass(frozen=True)
class PdCommand:
    """A PD set-point for the simulator.

    The simulator re-evaluates :func:`pd_torque` at its internal physics
    rate, the way the motor drivers close the loop between 200 Hz updates.
    """

    gains: PdGains
    q_des: np.ndarray
    limits: np.ndarray

    def torque(self, q, qdot) -> np.ndarray:
        return pd_torque(self.gains, self.q_des, q, qdot, self.limits)


def gravity_torques(model: "RobotModel", q, payload_mass: float = 0.0) -> np.ndarray:
    """Joint torques holding ``q`` statically with a payload lumped at the EE."""
    if payload_mass < 0:
        raise ValueError("payload_mass must be >= 0")
    from armada.model import GRAVITY
    from armada.simcore.dynamics import inverse_dynamics

    wrench = np.zeros(6)
    wrench[2] = -payload_mass * GRAVITY
    zeros = np.zeros(6)
    return inverse_dynamics(model, q, zeros, zeros, ee_wrench=wrench)


def actuator_torques(model: "RobotModel", tau_joint) -> np.ndarray:
    return model.coupling.T @ np.asarray(tau_joint, dtype=float)


def current_ratios(model: "RobotModel", tau_joint) -> np.ndarray:
    """Per-actuator |current| / nominal current for the given joint torques.

    Calibration tables hold output-shaft torque, so the actuator torque is
    looked up directly.  Actuators are treated as symmetric: the table is
    applied to |torque|.
    """
    tau_act = actuator_torques(model, tau_joint)
    ratios = np.empty(len(model.actuators))
    for j, act in enumerate(model.actuators):
        table = model.calibrations[act.calibration_id]
        amps = current_from_torque(table, abs(tau_act[j]))
        ratios[j] = abs(amps) / act.nominal_current
    return ratios
