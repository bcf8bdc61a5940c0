import csv
import io
import json

import numpy as np
import pytest

from armada import cli
from armada.kinematics import geometric_jacobian
from armada.model import default_armada_model
from cli_inputs import SUBCOMMANDS, argv_for, files, write_inputs
from oracles import repeatability_brute


def run(argv, capsys):
    code = cli.main(argv)
    out, err = capsys.readouterr()
    return code, out, err


def summary(text):
    return dict(line.split("=", 1) for line in text.strip().splitlines())


@pytest.fixture(scope="module")
def inputs(tmp_path_factory):
    d = tmp_path_factory.mktemp("inputs")
    return d, write_inputs(d)


@pytest.mark.parametrize("name", SUBCOMMANDS)
@pytest.mark.parametrize("form", ["csv", "jsonl"])
def test_byte_identical_reruns(name, form, inputs, tmp_path, capsys):
    d, _ = inputs
    outs = []
    for k in range(2):
        out = tmp_path / f"run{k}"
        code, stdout, _ = run(argv_for(name, d) + ["--out", str(out), "--format", form], capsys)
        assert code == 0
        outs.append((files(out), stdout))
    assert outs[0] == outs[1]
    names = outs[0][0]
    assert any(n.endswith(".png") for n in names) and any(n.endswith("." + form) for n in names)
    assert all(names[n][:8] == b"\x89PNG\r\n\x1a\n" for n in names if n.endswith(".png"))


def test_stdout_mode_table_and_summary(inputs, capsys):
    d, _ = inputs
    code, out, err = run(argv_for("ballistics", d), capsys)
    assert code == 0
    assert out.splitlines()[0] == "t,x,z" and len(out.splitlines()) == 102
    assert abs(float(summary(err)["range_m"]) - 2.233) < 5e-4


def test_speedtest_rows_and_jacobian(tmp_path, capsys):
    code, out, _ = run(["speedtest", "--out", str(tmp_path)], capsys)
    s = summary(out)
    assert code == 0
    rows = list(csv.DictReader(io.StringIO((tmp_path / "speedtest.csv").read_text())))
    assert len(rows) == round(float(s["duration_s"]) / 0.0005) + 1 == int(s["rows"])
    top = max(rows, key=lambda r: float(r["speed"]))
    assert abs(float(top["speed"]) - float(s["max_ee_speed_mps"])) < 1e-6
    q = np.array([float(top[f"q{i}"]) for i in range(1, 7)])
    qd = np.array([float(top[f"qd{i}"]) for i in range(1, 7)])
    v = np.linalg.norm((geometric_jacobian(default_armada_model("right"), q) @ qd)[:3])
    assert abs(v - float(s["max_ee_speed_mps"])) / v < 1e-3


def test_speedtest_velocity_scale_lowers_speed(capsys):
    base = cli.run_speedtest(default_armada_model("right"))
    half = cli.run_speedtest(default_armada_model("right"), velocity_scale=0.5)
    assert half.metrics.max_speed < base.metrics.max_speed
    assert half.duration > base.duration


def test_speedtest_model_file(tmp_path, capsys):
    from armada.model import dump_model
    path = tmp_path / "arm.yaml"
    path.write_text(dump_model(default_armada_model("right")))
    _, a, _ = run(["speedtest"], capsys)
    _, b, _ = run(["speedtest", "--model", str(path)], capsys)
    assert a == b


def test_repeatability_matches_oracle(inputs, tmp_path, capsys):
    d, groups = inputs
    code, out, _ = run(["repeatability", str(d / "points.csv"), "--out", str(tmp_path)], capsys)
    assert code == 0
    rows = list(csv.DictReader(io.StringIO((tmp_path / "repeatability.csv").read_text())))
    assert [r["target"] for r in rows] == ["P1", "P2", "P3", "Average"]
    for r in rows[:3]:
        mu, sigma, rr = repeatability_brute(groups[r["target"]].tolist())
        # tables carry 9 significant digits
        assert float(r["mu_mm"]) == pytest.approx(mu, rel=1e-8)
        assert float(r["sigma_mm"]) == pytest.approx(sigma, rel=1e-8)
        assert float(r["R_mm"]) == pytest.approx(rr, rel=1e-8)
    assert float(rows[3]["R_mm"]) == pytest.approx(np.mean([float(r["R_mm"]) for r in rows[:3]]), rel=1e-8)


def test_repeatability_identical_rows_zero(tmp_path, capsys):
    path = tmp_path / "p.csv"
    path.write_text("target_id,x_mm,y_mm,z_mm\n" + "P1,1.5,2,3\n" * 10)
    code, _, err = run(["repeatability", str(path)], capsys)
    s = summary(err)
    assert code == 0 and float(s["mu_mm"]) == 0 and float(s["sigma_mm"]) == 0 and float(s["R_mm"]) == 0


def test_repeatability_bad_row_reports_line(tmp_path, capsys):
    path = tmp_path / "p.csv"
    path.write_text("target_id,x_mm,y_mm,z_mm\nP1,1,2,3\nP1,1,oops,3\n")
    code, out, err = run(["repeatability", str(path)], capsys)
    assert code == 2 and out == ""
    msg = json.loads(err)
    assert set(msg) == {"error", "message"} and "line 3" in msg["message"]


def test_env_summary_identical_on_stdout(capsys):
    argv = ["env", "--task", "card", "--policy", "random", "--episodes", "20", "--seed", "7"]
    _, a, _ = run(argv, capsys)
    _, b, _ = run(argv, capsys)
    assert a == b and len(a.splitlines()) == 21
    assert [int(r.split(",")[0]) for r in a.splitlines()[1:]] == list(range(7, 27))


def test_env_override(capsys):
    _, out, err = run(["env", "--task", "card", "--policy", "zero", "--episodes", "1", "--set", "max_steps=3"],
                      capsys)
    assert out.splitlines()[1].split(",")[2] == "3"


def test_ballistics_example(capsys):
    code, out, _ = run(["ballistics", "--v", "6.135", "--angle", "0", "--h0", "0.65", "--out", "/dev/null/x"],
                       capsys)
    assert code == 2
    code, _, err = run(["ballistics", "--v", "6.135", "--angle", "0", "--h0", "0.65"], capsys)
    assert code == 0 and abs(float(summary(err)["range_m"]) - 2.233) < 5e-4
    _, _, err = run(["ballistics", "--range", "3.484", "--h0", "0.65"], capsys)
    assert abs(float(summary(err)["required_speed_mps"]) - 9.57) < 0.01


def test_retarget_fixpoint_constant(inputs, tmp_path, capsys):
    d, _ = inputs
    code, out, _ = run(["retarget", str(d / "fixpoint.jsonl"), "--out", str(tmp_path)], capsys)
    assert code == 0
    for side in ("left", "right"):
        data = np.loadtxt(tmp_path / f"retarget_{side}.csv", delimiter=",", skiprows=1)
        assert data.shape[0] == 5
        assert np.max(np.abs(data[:, 1:7] - data[0, 1:7])) < 1e-10
        assert np.max(np.abs(data[:, 7:13])) < 1e-10
    assert float(summary(out)["right_max_wrist_err_m"]) < 1e-9


def test_calibrate_report(inputs, capsys):
    d, _ = inputs
    code, out, err = run(["calibrate", str(d / "calib.csv"), "--nominal-current", "2"], capsys)
    s = summary(err)
    assert code == 0 and s["monotone"] == "1" and abs(float(s["torque_at_nominal_Nm"]) - 1.9) < 1e-8
    assert float(s["roundtrip_max_err_A"]) < 1e-9


@pytest.mark.parametrize("argv, needle", [
    (["env", "--task", "nope"], "valid: bump, card, card-lite"),
    (["env", "--policy", "nope"], "valid: zero, random, scripted"),
    (["train", "--task", "card"], "valid: card-lite"),
    (["env", "--set", "bogus=1"], "bogus"),
    (["frobnicate"], "invalid choice"),
    (["ballistics"], "--v or --range"),
    (["repeatability", "/nonexistent/file.csv"], "cannot read"),
    (["speedtest", "--velocity-scale", "abc"], "invalid float"),
])
def test_errors_are_json(argv, needle, capsys):
    code, out, err = run(argv, capsys)
    assert code == 2 and out == ""
    msg = json.loads(err.strip())
    assert needle in msg["message"]


NUMERIC_HELP_MARKERS = ("[", "count", "index", "integer", "dimensionless", "seed", "unused", "uniformity")


def test_help_documents_units():
    parser = cli.build_parser()
    sub = next(a for a in parser._actions if a.choices and "speedtest" in a.choices)
    assert set(sub.choices) == set(SUBCOMMANDS)
    for name, sp in sub.choices.items():
        for action in sp._actions:
            if action.type in (int, float):
                assert action.help and any(m in action.help for m in NUMERIC_HELP_MARKERS), (name, action.dest)


def test_help_exits_cleanly(capsys):
    with pytest.raises(SystemExit) as exc:
        cli.main(["speedtest", "--help"])
    assert exc.value.code == 0
    assert "[s]" in capsys.readouterr().out
