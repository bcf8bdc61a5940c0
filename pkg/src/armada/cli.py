"""Command-line experiment runners.

Every subcommand writes a delimited table (CSV, or JSON lines with
``--format jsonl``) and a PNG figure into ``--out`` and prints a short
``key=value`` summary.  Without ``--out`` the table goes to stdout.
Failures print one JSON object on stderr and exit with status 2.
"""
from __future__ import annotations

import argparse
import csv
import dataclasses
import io
import json
import math
import sys
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import yaml

from armada import analysis, plotting
from armada.actuation import CalibrationTable, PdGains, current_from_torque, pd_torque, torque_from_current
from armada.env import POLICIES, TASKS, LinearPolicy, evaluate, make_policy, task_config, train_cem
from armada.env.train import TRAINABLE_TASKS
from armada.kinematics import ee_position, geometric_jacobian
from armada.model import RobotModel, default_armada_model, load_model
from armada.retarget import (RetargetConfig, human_arm_length, map_human_to_robot, read_keypoints_jsonl,
                             retarget_trajectory)
from armada.simcore.dynamics import inverse_dynamics
from armada.simcore.world import SimConfig, Simulator, make_world


class CliError(Exception):
    pass


# -- overrides and output ----------------------------------------------------------


def parse_overrides(items) -> dict:
    out = {}
    for item in items or ():
        key, sep, value = item.partition("=")
        if not sep or not key.strip():
            raise CliError(f"override {item!r} must look like key=value")
        out[key.strip()] = yaml.safe_load(value)
    return out


def apply_overrides(obj, overrides: dict, prefix: str = ""):
    """Return a copy of a (nested) dataclass with dotted-key fields replaced."""
    names = {f.name for f in dataclasses.fields(obj)}
    direct, nested = {}, {}
    for key, value in overrides.items():
        head, _, rest = key.partition(".")
        if head not in names:
            valid = ", ".join(sorted(names))
            raise CliError(f"unknown override {prefix}{head!r}; valid: {valid}")
        if rest:
            nested.setdefault(head, {})[rest] = value
        else:
            direct[head] = value
    for head, sub in nested.items():
        child = getattr(obj, head)
        if not dataclasses.is_dataclass(child):
            raise CliError(f"override {prefix}{head} has no sub-fields")
        direct[head] = apply_overrides(child, sub, f"{prefix}{head}.")
    for head, value in list(direct.items()):
        current = getattr(obj, head)
        if isinstance(current, tuple) and isinstance(value, list):
            direct[head] = tuple(value)
        elif isinstance(current, float) and isinstance(value, int) and not isinstance(value, bool):
            direct[head] = float(value)
    return dataclasses.replace(obj, **direct)


def fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return str(int(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return f"{float(v):.9g}"
    return str(v)


def render_table(header, rows, form: str) -> str:
    buf = io.StringIO()
    if form == "csv":
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([fmt(v) for v in row])
    else:
        for row in rows:
            rec = {}
            for k, v in zip(header, row):
                if isinstance(v, (np.floating, float)):
                    v = float(v)
                elif isinstance(v, (np.integer, np.bool_)):
                    v = v.item()
                rec[k] = v
            buf.write(json.dumps(rec) + "\n")
    return buf.getvalue()


class Report:
    """Collects the files a subcommand produces."""

    def __init__(self, out: str | None, form: str):
        self.out = Path(out) if out else None
        self.form = form
        if self.out is not None:
            self.out.mkdir(parents=True, exist_ok=True)
        self.summary: list[tuple[str, object]] = []

    def table(self, name: str, header, rows, primary: bool = False):
        text = render_table(header, rows, self.form)
        if self.out is not None:
            (self.out / f"{name}.{self.form}").write_text(text, encoding="utf-8")
        elif primary:
            sys.stdout.write(text)

    def text(self, filename: str, text: str):
        if self.out is not None:
            (self.out / filename).write_text(text, encoding="utf-8")

    def figure(self, name: str, fig):
        if self.out is not None:
            plotting.save(fig, self.out / f"{name}.png")
        else:
            plotting.plt.close(fig)

    def note(self, key: str, value):
        self.summary.append((key, value))

    def finish(self):
        stream = sys.stdout if self.out is not None else sys.stderr
        for key, value in self.summary:
            stream.write(f"{key}={fmt(value)}\n")


def read_text(path: str) -> str:
    try:
        return Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise CliError(f"cannot read {path}: {exc.strerror}") from None


def model_from(path: str | None, side: str = "right") -> RobotModel:
    return default_armada_model(side) if path is None else load_model(read_text(path))


# -- speed test -----------------------------------------------------------------------

FLEXED_Q = np.array([0.0, 0.0, -0.6, 2.4, 0.0, 1.2])
EXTENDED_Q = np.array([0.0, 0.0, 1.8, 0.0, 0.0, 0.0])


@dataclass
class SpeedTest:
    t: np.ndarray
    q: np.ndarray
    qdot: np.ndarray
    ee: np.ndarray
    metrics: analysis.SpeedMetrics
    jacobian_speed: np.ndarray  # |J(q) qdot| per sample
    duration: float


def min_jerk(s):
    return s**3 * (10 - 15 * s + 6 * s**2), s**2 * (30 - 60 * s + 30 * s**2), s * (60 - 180 * s + 120 * s**2)


def run_speedtest(model: RobotModel, velocity_scale: float = 1.0, dt: float = 0.0005,
                  kp: float = 300.0, kd: float = 8.0, q_start=FLEXED_Q, q_end=EXTENDED_Q) -> SpeedTest:
    """Swing from a flexed to an extended pose under joint PD control.

    The reference is a minimum-jerk interpolation whose duration puts the
    fastest joint at its (scaled) velocity limit.  PD feedback is added to
    inverse-dynamics feedforward of the reference and clipped to the torque
    limits.  Samples are logged every ``dt`` [s].
    """
    if not 0 < velocity_scale:
        raise CliError("velocity scale must be > 0")
    q_start = np.asarray(q_start, dtype=float)
    dq = np.asarray(q_end, dtype=float) - q_start
    vmax = model.velocity_limits * velocity_scale
    duration = float(np.max(1.875 * np.abs(dq) / vmax))
    n = int(math.ceil(duration / dt - 1e-9))
    duration = n * dt
    gains = PdGains(np.full(6, kp), np.full(6, kd))
    limits = model.torque_limits
    sim = Simulator(make_world(model, q_start), model, SimConfig(dt=dt, contacts=False, iterations=1))
    qs, qds = [sim.q.copy()], [sim.qd.copy()]
    for k in range(n):
        s, ds, dds = min_jerk(np.clip((k * dt) / duration, 0.0, 1.0))
        q_ref = q_start + s * dq
        qd_ref = ds * dq / duration
        qdd_ref = dds * dq / duration**2
        ff = inverse_dynamics(model, q_ref, qd_ref, qdd_ref)
        fb = pd_torque(gains, q_ref, sim.q, sim.qd - qd_ref, np.full(6, np.inf))
        sim.step(np.clip(ff + fb, -limits, limits))
        qs.append(sim.q.copy())
        qds.append(sim.qd.copy())
    q = np.array(qs)
    qdot = np.array(qds)
    ee = np.array([ee_position(model, qi) for qi in q])
    metrics = analysis.speed_metrics(ee, dt)
    jac = np.array([np.linalg.norm(geometric_jacobian(model, qi)[:3] @ qdi) for qi, qdi in zip(q, qdot)])
    t = np.arange(n + 1) * dt
    return SpeedTest(t, q, qdot, ee, metrics, jac, duration)


def cmd_speedtest(args, report: Report, overrides: dict):
    model = model_from(args.model)
    scale = float(overrides.pop("velocity_scale", args.velocity_scale))
    if overrides:
        raise CliError(f"unknown override {sorted(overrides)[0]!r}; valid: velocity_scale")
    res = run_speedtest(model, velocity_scale=scale, dt=args.dt)
    header = ["t"] + [f"q{i}" for i in range(1, 7)] + [f"qd{i}" for i in range(1, 7)] + \
        ["ee_x", "ee_y", "ee_z", "speed", "jacobian_speed"]
    rows = [[t, *q, *qd, *p, s, js] for t, q, qd, p, s, js in
            zip(res.t, res.q, res.qdot, res.ee, res.metrics.speeds, res.jacobian_speed)]
    report.table("speedtest", header, rows, primary=True)
    k = int(round(res.metrics.argmax_time / args.dt))
    report.figure("speedtest", plotting.speedtest_figure(res.t, res.metrics.speeds, res.jacobian_speed,
                                                         res.metrics.argmax_time))
    report.note("duration_s", res.duration)
    report.note("rows", len(res.t))
    report.note("max_ee_speed_mps", res.metrics.max_speed)
    report.note("mean_ee_speed_mps", res.metrics.mean_speed)
    report.note("argmax_time_s", res.metrics.argmax_time)
    report.note("jacobian_speed_at_max_mps", res.jacobian_speed[k])


# -- repeatability -----------------------------------------------------------------------


def cmd_repeatability(args, report: Report, overrides: dict):
    if overrides:
        raise CliError("repeatability takes no overrides")
    groups = analysis.read_points_csv(read_text(args.input))
    rep = analysis.repeatability_report(groups, args.expected_rows)
    header = ["target", "n", "x_mm", "y_mm", "z_mm", "mu_mm", "sigma_mm", "R_mm"]
    rows = [[r.target, r.n, *r.barycenter, r.stats.mean, r.stats.std, r.stats.r] for r in rep.rows]
    a = rep.average
    rows.append(["Average", sum(r.n for r in rep.rows), "", "", "", a.mean, a.std, a.r])
    report.table("repeatability", header, rows, primary=True)
    report.figure("repeatability", plotting.repeatability_figure(
        [r.target for r in rep.rows], [r.stats.mean for r in rep.rows],
        [r.stats.std for r in rep.rows], [r.stats.r for r in rep.rows]))
    report.note("targets", len(rep.rows))
    report.note("mu_mm", a.mean)
    report.note("sigma_mm", a.std)
    report.note("R_mm", a.r)


# -- env and training ---------------------------------------------------------------------


def check_name(kind: str, name: str, valid) -> None:
    if name not in valid:
        raise CliError(f"unknown {kind} {name!r}; valid: {', '.join(valid)}")


def cmd_env(args, report: Report, overrides: dict):
    check_name("task", args.task, TASKS)
    check_name("policy", args.policy, POLICIES)
    if args.episodes < 1:
        raise CliError("episodes must be >= 1")
    extra = {"scenario": args.scenario} if args.task == "bump" else {}
    config = apply_overrides(task_config(args.task, **extra), overrides)
    evaluation = evaluate(lambda: make_policy(args.policy, task=args.task), config, args.episodes,
                          base_seed=args.seed, record=args.traces)
    seeds = sorted(evaluation.traces)
    traces = [evaluation.traces[s] for s in seeds]
    rows = [[s, int(t.success), t.steps, f"{t.final_kp_error:.6f}"] for s, t in zip(seeds, traces)]
    report.table("env_summary", ["seed", "success", "steps", "final_kp_err"], rows, primary=True)
    if args.traces:
        report.text("env_traces.jsonl", "".join(t.to_jsonl() for t in traces))
    report.figure("env", plotting.episodes_figure(seeds, [t.final_kp_error for t in traces],
                                                  [t.success for t in traces]))
    report.note("task", args.task)
    report.note("policy", args.policy)
    report.note("episodes", len(traces))
    report.note("success_rate", evaluation.success_rate)
    report.note("mean_return", evaluation.mean_return)


def cmd_train(args, report: Report, overrides: dict):
    check_name("task", args.task, TRAINABLE_TASKS)
    config = apply_overrides(task_config(args.task), overrides)
    res = train_cem(args.task, iterations=args.iterations, population=args.population,
                    elite_frac=args.elite_frac, seed=args.seed,
                    episodes_per_candidate=args.episodes_per_candidate, config=config)
    rows = [[k, c, e] for k, (c, e) in enumerate(zip(res.curve, res.elite_curve))]
    report.table("train_curve", ["iteration", "mean_return", "elite_return"], rows, primary=True)
    report.table("train_params", ["index", "mean", "std"],
                 [[k, m, s] for k, (m, s) in enumerate(zip(res.mean, res.std))])
    report.figure("train_curve", plotting.learning_curve_figure(res.curve, res.elite_curve))
    report.note("task", args.task)
    report.note("iterations", len(res.curve))
    report.note("initial_mean_return", res.curve[0])
    report.note("final_mean_return", res.curve[-1])
    report.note("improvement", (res.curve[-1] - res.curve[0]) / max(abs(res.curve[0]), 1e-12))
    if args.eval_episodes > 0:
        params = res.mean
        ev = evaluate(lambda: LinearPolicy(params), config, args.eval_episodes, base_seed=args.eval_seed)
        report.note("eval_success_rate", ev.success_rate)
        report.note("eval_mean_return", ev.mean_return)


# -- retargeting ---------------------------------------------------------------------------


def cmd_retarget(args, report: Report, overrides: dict):
    config = apply_overrides(RetargetConfig(), overrides)
    raw = read_keypoints_jsonl(read_text(args.input))
    models = {"left": model_from(args.model_left, "left"), "right": model_from(args.model_right, "right")}
    human = human_arm_length(raw[0]) if args.human_arm_length is None else args.human_arm_length
    frames = [map_human_to_robot(r, models, human_length=human) for r in raw]
    q0 = {side: np.clip(np.zeros(6), m.lower, m.upper) for side, m in models.items()}
    trajs = retarget_trajectory(models, frames, q0, config)
    for side, traj in trajs.items():
        header = ["t"] + [f"q{i}" for i in range(1, 7)] + [f"qd{i}" for i in range(1, 7)] + \
            ["elbow_err", "wrist_err"]
        rows = [[t, *q, *qd, e, w] for t, q, qd, e, w in
                zip(traj.t, traj.q, traj.qdot, traj.elbow_error, traj.wrist_error)]
        report.table(f"retarget_{side}", header, rows, primary=True)
        report.note(f"{side}_max_wrist_err_m", float(np.max(traj.wrist_error)))
        report.note(f"{side}_max_elbow_err_m", float(np.max(traj.elbow_error)))
    report.figure("retarget", plotting.retarget_figure(trajs))
    report.note("frames", len(frames))


# -- ballistics -----------------------------------------------------------------------------


def cmd_ballistics(args, report: Report, overrides: dict):
    if overrides:
        raise CliError("ballistics takes no overrides")
    v = args.v
    if args.range is not None:
        v = analysis.required_launch_speed(args.range, args.angle, args.h0, args.g)
        report.note("required_speed_mps", v)
    if v is None:
        raise CliError("give --v or --range")
    if v < 0:
        raise CliError("--v must be >= 0")
    rng_m, t_f = analysis.ballistic_range(v, args.angle, args.h0, args.g)
    t = np.linspace(0.0, t_f, args.samples)
    x = v * math.cos(args.angle) * t
    z = args.h0 + v * math.sin(args.angle) * t - 0.5 * args.g * t**2
    report.table("ballistics", ["t", "x", "z"], [[a, b, c] for a, b, c in zip(t, x, z)], primary=True)
    report.figure("ballistics", plotting.ballistics_figure(x, z, args.h0))
    report.note("range_m", rng_m)
    report.note("flight_time_s", t_f)
    if args.mass is not None:
        report.note("impact_force_N", analysis.impact_force(args.mass, v, args.impact_time))


# -- calibration -----------------------------------------------------------------------------


def cmd_calibrate(args, report: Report, overrides: dict):
    if overrides:
        raise CliError("calibrate takes no overrides")
    table = CalibrationTable.from_csv(read_text(args.input))
    i0, i1 = table.currents[0], table.currents[-1]
    span = i1 - i0
    grid = np.linspace(i0 - span, i1 + span, args.points)
    tau = torque_from_current(table, grid)
    back = current_from_torque(table, tau)
    err = float(np.max(np.abs(back - grid)))
    slopes = np.diff(table.torques) / np.diff(table.currents)
    rows = [[a, b, c] for a, b, c in zip(grid, tau, back)]
    report.table("calibrate", ["current_A", "torque_Nm", "roundtrip_A"], rows, primary=True)
    report.figure("calibrate", plotting.calibration_figure(table.currents, table.torques, grid, tau))
    report.note("samples", len(table.currents))
    report.note("monotone", bool(np.all(np.diff(tau) > 0)))
    report.note("min_slope_Nm_per_A", float(slopes.min()))
    report.note("max_slope_Nm_per_A", float(slopes.max()))
    report.note("roundtrip_max_err_A", err)
    if args.nominal_current is not None:
        report.note("torque_at_nominal_Nm", float(torque_from_current(table, args.nominal_current)))


# -- parser -----------------------------------------------------------------------------------


class JsonArgumentParser(argparse.ArgumentParser):
    def error(self, message):
        raise CliError(message)


def build_parser() -> argparse.ArgumentParser:
    p = JsonArgumentParser(prog="armada", description="ARMADA arm simulation, control and analysis runners.")
    sub = p.add_subparsers(dest="command", required=True, parser_class=JsonArgumentParser)

    def common(sp, seed_help="random seed (integer); all randomness derives from it"):
        sp.add_argument("--out", help="output directory for tables and PNG figures (default: table to stdout)")
        sp.add_argument("--seed", type=int, default=0, help=seed_help)
        sp.add_argument("--format", choices=("csv", "jsonl"), default="csv", help="table format")
        sp.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                        help="override a configuration field (dotted keys for nested fields)")

    sp = sub.add_parser("speedtest", help="flexed-to-extended swing under PD control; EE speed metrics")
    common(sp, "accepted for uniformity; the speed test is deterministic")
    sp.add_argument("--model", help="robot description file (YAML); default: built-in right arm")
    sp.add_argument("--velocity-scale", type=float, default=1.0,
                    help="multiplier on joint velocity limits (dimensionless, > 0); sets the swing duration")
    sp.add_argument("--dt", type=float, default=0.0005, help="physics and logging step [s]")
    sp.set_defaults(func=cmd_speedtest)

    sp = sub.add_parser("repeatability", help="pose repeatability report from measured points")
    common(sp, "unused; the report is deterministic")
    sp.add_argument("input", help="CSV with header target_id,x_mm,y_mm,z_mm (coordinates in mm)")
    sp.add_argument("--expected-rows", type=int, default=None,
                    help="required number of rows per target (count); default: any >= 2")
    sp.set_defaults(func=cmd_repeatability)

    sp = sub.add_parser("env", help="evaluate a policy on a task over seeds")
    common(sp, "first episode seed (integer); episodes use seed .. seed+episodes-1")
    sp.add_argument("--task", default="card", help=f"task name: {', '.join(TASKS)}")
    sp.add_argument("--policy", default="random", help=f"policy name: {', '.join(POLICIES)}")
    sp.add_argument("--episodes", type=int, default=20, help="number of episodes (count)")
    sp.add_argument("--scenario", type=int, default=1, help="bump scenario, 1 or 2 (index)")
    sp.add_argument("--traces", action="store_true", help="also write per-tick traces as JSON lines")
    sp.set_defaults(func=cmd_env)

    sp = sub.add_parser("train", help="cross-entropy search over linear policies")
    common(sp)
    sp.add_argument("--task", default="card-lite", help=f"task name: {', '.join(TRAINABLE_TASKS)}")
    sp.add_argument("--iterations", type=int, default=30, help="CEM iterations (count)")
    sp.add_argument("--population", type=int, default=64, help="candidates per iteration (count)")
    sp.add_argument("--elite-frac", type=float, default=0.2, help="elite fraction (dimensionless, 0-1]")
    sp.add_argument("--episodes-per-candidate", type=int, default=2,
                    help="training episodes per candidate (count)")
    sp.add_argument("--eval-episodes", type=int, default=0,
                    help="held-out evaluation episodes for the final mean (count)")
    sp.add_argument("--eval-seed", type=int, default=1000, help="first held-out episode seed (integer)")
    sp.set_defaults(func=cmd_train)

    sp = sub.add_parser("retarget", help="differential-IK retargeting of human keypoints")
    common(sp, "unused; retargeting is deterministic")
    sp.add_argument("input", help="keypoint JSON lines (positions in m, time in s)")
    sp.add_argument("--model-left", help="left arm description (YAML)")
    sp.add_argument("--model-right", help="right arm description (YAML)")
    sp.add_argument("--human-arm-length", type=float, default=None,
                    help="human shoulder-to-wrist length [m]; default: measured from the first frame")
    sp.set_defaults(func=cmd_retarget)

    sp = sub.add_parser("ballistics", help="drag-free projectile range, inverse speed and impact force")
    common(sp, "unused; ballistics is deterministic")
    sp.add_argument("--v", type=float, default=None, help="launch speed [m/s]")
    sp.add_argument("--angle", type=float, default=0.0, help="launch angle above horizontal [rad]")
    sp.add_argument("--h0", type=float, default=0.0, help="launch height above the ground [m]")
    sp.add_argument("--g", type=float, default=9.81, help="gravity [m/s^2]")
    sp.add_argument("--range", type=float, default=None, help="target range [m]; solves for the launch speed")
    sp.add_argument("--mass", type=float, default=None, help="effective striking mass for impact force [kg]")
    sp.add_argument("--impact-time", type=float, default=0.013, help="impact duration [s]")
    sp.add_argument("--samples", type=int, default=101, help="trajectory samples in the table (count)")
    sp.set_defaults(func=cmd_ballistics)

    sp = sub.add_parser("calibrate", help="check a current-torque calibration table and tabulate it")
    common(sp, "unused; the check is deterministic")
    sp.add_argument("input", help="CSV with header current_A,torque_Nm (A, N m)")
    sp.add_argument("--points", type=int, default=61, help="grid points over the extended range (count)")
    sp.add_argument("--nominal-current", type=float, default=None, help="report torque at this current [A]")
    sp.set_defaults(func=cmd_calibrate)
    return p


def error_json(exc: BaseException) -> str:
    return json.dumps({"error": type(exc).__name__, "message": str(exc)})


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        report = Report(args.out, args.format)
        args.func(args, report, parse_overrides(args.set))
        report.finish()
    except (CliError, ValueError, RuntimeError, OSError, KeyError) as exc:
        sys.stderr.write(error_json(exc) + "\n")
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
