"""Mechanical analysis: pose repeatability, ballistics, impact force, EE speed."""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass

import numpy as np


class AnalysisError(ValueError):
    pass


# -- repeatability ----------------------------------------------------------------


@dataclass(frozen=True)
class Repeatability:
    mean: float  # mean distance to the barycenter
    std: float  # spread of those distances
    r: float  # mean + 3 std


def repeatability_index(mu: float, sigma: float) -> float:
    return mu + 3.0 * sigma


def repeatability(points) -> Repeatability:
    """Pose repeatability of repeated visits to one target.

    Distances are taken to the barycenter of the points; ``std`` is the
    sample standard deviation of those distances about their mean.
    """
    p = np.asarray(points, dtype=float)
    if p.ndim != 2 or p.shape[1] != 3:
        raise AnalysisError("points must be an (N, 3) array")
    if p.shape[0] < 2:
        raise AnalysisError(f"need at least 2 points, got {p.shape[0]}")
    d = np.linalg.norm(p - p.mean(axis=0), axis=1)
    mu = float(d.mean())
    sigma = float(np.sqrt(np.sum((d - mu) ** 2) / (len(d) - 1)))
    return Repeatability(mu, sigma, repeatability_index(mu, sigma))


@dataclass(frozen=True)
class RepeatabilityRow:
    target: str
    barycenter: np.ndarray
    n: int
    stats: Repeatability


@dataclass(frozen=True)
class RepeatabilityReport:
    rows: tuple[RepeatabilityRow, ...]
    average: Repeatability  # column means over targets

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["target", "n", "x_mm", "y_mm", "z_mm", "mu_mm", "sigma_mm", "R_mm"])
        for row in self.rows:
            x, y, z = row.barycenter
            s = row.stats
            w.writerow([row.target, row.n, f"{x:.4f}", f"{y:.4f}", f"{z:.4f}",
                        f"{s.mean:.4f}", f"{s.std:.4f}", f"{s.r:.4f}"])
        a = self.average
        w.writerow(["Average", sum(r.n for r in self.rows), "", "", "", f"{a.mean:.4f}", f"{a.std:.4f}", f"{a.r:.4f}"])
        return buf.getvalue()


def read_points_csv(text: str) -> dict[str, np.ndarray]:
    """Parse ``target_id,x_mm,y_mm,z_mm`` rows, grouped by target in file order."""
    lines = text.splitlines()
    if not lines or [h.strip() for h in lines[0].split(",")] != ["target_id", "x_mm", "y_mm", "z_mm"]:
        raise AnalysisError("line 1: expected header target_id,x_mm,y_mm,z_mm")
    groups: dict[str, list] = {}
    for lineno, row in enumerate(csv.reader(lines[1:]), start=2):
        if not row or not "".join(row).strip():
            continue
        if len(row) != 4:
            raise AnalysisError(f"line {lineno}: expected 4 columns, got {len(row)}")
        try:
            xyz = [float(v) for v in row[1:]]
        except ValueError:
            raise AnalysisError(f"line {lineno}: non-numeric coordinate") from None
        if not all(math.isfinite(v) for v in xyz):
            raise AnalysisError(f"line {lineno}: non-finite coordinate")
        groups.setdefault(row[0].strip(), []).append(xyz)
    if not groups:
        raise AnalysisError("no data rows")
    return {k: np.array(v) for k, v in groups.items()}


def repeatability_report(groups: dict[str, np.ndarray], expected_rows: int | None = None) -> RepeatabilityReport:
    rows = []
    for target, pts in groups.items():
        if expected_rows is not None and len(pts) != expected_rows:
            raise AnalysisError(f"target {target}: expected {expected_rows} rows, got {len(pts)}")
        rows.append(RepeatabilityRow(target, pts.mean(axis=0), len(pts), repeatability(pts)))
    mu = float(np.mean([r.stats.mean for r in rows]))
    sigma = float(np.mean([r.stats.std for r in rows]))
    return RepeatabilityReport(tuple(rows), Repeatability(mu, sigma, repeatability_index(mu, sigma)))


# -- ballistics ---------------------------------------------------------------------


def flight_time(v: float, angle: float, h0: float, g: float = 9.81) -> float:
    """Positive time at which a drag-free projectile returns to z = 0."""
    if h0 < 0:
        raise AnalysisError("h0 must be >= 0")
    if g <= 0:
        raise AnalysisError("g must be > 0")
    vz = v * math.sin(angle)
    if h0 == 0.0 and vz <= 0.0:
        return 0.0
    disc = vz * vz + 2.0 * g * h0
    # stable form of (vz + sqrt(disc)) / g
    root = math.sqrt(disc)
    if vz >= 0:
        return (vz + root) / g
    return 2.0 * h0 / (root - vz)


def ballistic_range(v: float, angle: float, h0: float, g: float = 9.81) -> tuple[float, float]:
    """(horizontal range [m], flight time [s]) for launch speed ``v`` [m/s]
    at ``angle`` [rad] above horizontal from height ``h0`` [m]."""
    t = flight_time(v, angle, h0, g)
    return v * math.cos(angle) * t, t


def required_launch_speed(distance: float, angle: float, h0: float, g: float = 9.81,
                          tol: float = 1e-9, v_max: float = 1e4) -> float:
    """Launch speed whose drag-free range equals ``distance`` (bisection)."""
    if not distance > 0:
        raise AnalysisError("range must be > 0")
    if math.cos(angle) <= 1e-12:
        raise AnalysisError("unreachable range: launch has no horizontal component")

    def reach(v):
        return ballistic_range(v, angle, h0, g)[0]

    lo, hi = 0.0, 1.0
    while reach(hi) < distance:
        hi *= 2.0
        if hi > v_max:
            raise AnalysisError(f"unreachable range {distance} m at angle {angle} rad")
    while hi - lo > tol * max(1.0, hi):
        mid = 0.5 * (lo + hi)
        if reach(mid) < distance:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def impact_force(m_eff: float, dv: float, dt: float) -> float:
    """Mean force [N] stopping effective mass ``m_eff`` [kg] from ``dv`` [m/s] in ``dt`` [s]."""
    if not dt > 0:
        raise AnalysisError("dt must be > 0")
    return m_eff * dv / dt


# -- speed ----------------------------------------------------------------------------


@dataclass(frozen=True)
class SpeedMetrics:
    max_speed: float
    mean_speed: float
    argmax_time: float
    speeds: np.ndarray


def speed_metrics(positions, dt: float) -> SpeedMetrics:
    """Central-difference speeds of a uniformly sampled position trace.

    End samples use one-sided second-order differences.
    """
    p = np.asarray(positions, dtype=float)
    if p.ndim != 2 or p.shape[0] < 3:
        raise AnalysisError("need at least 3 samples")
    if not dt > 0:
        raise AnalysisError("dt must be > 0")
    v = np.gradient(p, dt, axis=0, edge_order=2)
    s = np.linalg.norm(v, axis=1)
    k = int(np.argmax(s))
    return SpeedMetrics(float(s[k]), float(s.mean()), k * dt, s)
