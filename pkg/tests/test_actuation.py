import dataclasses

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from armada.actuation import (LIFTING_POSTURE, CalibrationError, CalibrationTable, PdGains, builtin_calibrations,
                              current_from_torque, current_ratios, gravity_torques, pd_torque, torque_from_current)
from armada.model import GRAVITY

TABLE = CalibrationTable.from_samples([(1.0, 0.8), (3.0, 2.6)])


def test_knots_exact():
    for i, t in TABLE.samples:
        assert torque_from_current(TABLE, i) == t
        assert current_from_torque(TABLE, t) == i


def test_interpolation_example():
    assert abs(torque_from_current(TABLE, 2.0) - 1.7) < 1e-12


def test_extrapolation_example():
    assert abs(torque_from_current(TABLE, 4.0) - 3.5) < 1e-12
    assert abs(torque_from_current(TABLE, 0.0) - (-0.1)) < 1e-12


def test_inverse_example():
    assert abs(current_from_torque(TABLE, 1.7) - 2.0) < 1e-12


tables = st.lists(st.tuples(st.floats(0.01, 5.0), st.floats(0.01, 5.0)), min_size=2, max_size=8).map(
    lambda steps: CalibrationTable.from_samples(
        np.column_stack([np.cumsum([s[0] for s in steps]) - 3.0, np.cumsum([s[1] for s in steps]) - 2.0])))


@settings(max_examples=50, deadline=None)
@given(tables, st.floats(0.0, 1.0))
def test_round_trip_and_monotone(table, u):
    lo, hi = table.currents[0], table.currents[-1]
    span = hi - lo
    i = lo - span + 3 * span * u
    assert abs(current_from_torque(table, torque_from_current(table, i)) - i) < 1e-12 * max(1.0, abs(i)) * 10
    grid = np.linspace(lo - span, hi + span, 200)
    assert np.all(np.diff(torque_from_current(table, grid)) >= 0)


def test_table_validation():
    with pytest.raises(CalibrationError, match="at least 2"):
        CalibrationTable.from_samples([(1.0, 1.0)])
    with pytest.raises(CalibrationError, match="currents"):
        CalibrationTable.from_samples([(1.0, 1.0), (1.0, 2.0)])
    with pytest.raises(CalibrationError, match="torques"):
        CalibrationTable.from_samples([(1.0, 1.0), (2.0, 0.5)])


def test_csv_round_trip_and_errors():
    assert CalibrationTable.from_csv(TABLE.to_csv()) == TABLE
    with pytest.raises(CalibrationError, match="header"):
        CalibrationTable.from_csv("a,b\n1,2\n2,3\n")
    with pytest.raises(CalibrationError, match="row 3"):
        CalibrationTable.from_csv("current_A,torque_Nm\n1,2\nx,3\n")


def test_builtin_calibrations_valid():
    for name, table in builtin_calibrations().items():
        assert len(table.currents) >= 2, name


def test_pd_equilibrium():
    g = PdGains(np.full(6, 20.0), np.full(6, 1.0))
    q = np.linspace(-1, 1, 6)
    assert np.array_equal(pd_torque(g, q, q, np.zeros(6), np.full(6, 5.0)), np.zeros(6))


def test_pd_arithmetic():
    g = PdGains(np.full(6, 10.0), np.zeros(6))
    tau = pd_torque(g, np.full(6, 0.1), np.zeros(6), np.zeros(6), np.full(6, 5.0))
    assert np.allclose(tau, 1.0, atol=1e-12)


def test_pd_clamp():
    g = PdGains(np.full(6, 1000.0), np.zeros(6))
    tau = pd_torque(g, np.full(6, 0.1), np.zeros(6), np.zeros(6), np.full(6, 8.0))
    assert np.array_equal(tau, np.full(6, 8.0))


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(-2, 2), min_size=6, max_size=6), st.floats(0, 100))
def test_pd_odd(err, kp):
    g = PdGains(np.full(6, kp), np.zeros(6))
    e = np.array(err)
    lim = np.full(6, 7.0)
    z = np.zeros(6)
    assert np.array_equal(pd_torque(g, e, z, z, lim), -pd_torque(g, -e, z, z, lim))


def test_negative_gains_rejected():
    with pytest.raises(ValueError):
        PdGains(np.full(6, -1.0), np.zeros(6))


def test_hanging_arm_needs_no_torque(model):
    assert np.max(np.abs(gravity_torques(model, np.zeros(6)))) < 1e-9


def test_horizontal_arm_moment_sum(model):
    # arm straight forward: every COM lies on the horizontal line through the pitch axis
    payload = 1.3
    q = np.array([0.0, 0.0, np.pi / 2, 0.0, 0.0, 0.0])
    depth, moment = 0.0, 0.0
    for link in model.links:
        depth += -link.origin_translation[2]
        moment += link.mass * (depth - link.com[2])
    reach = depth - model.ee_offset[2]
    moment += (model.gripper_mass + payload) * reach
    tau = gravity_torques(model, q, payload)
    assert abs(tau[2] - moment * GRAVITY) < 1e-9


def test_single_pendulum(model):
    links = [dataclasses.replace(l, mass=0.0, inertia=np.zeros((3, 3))) for l in model.links]
    links[2] = dataclasses.replace(model.links[2], mass=0.7, com=np.array([0.0, 0.0, -0.2]))
    m = model.replace(links=tuple(links), gripper_mass=0.0)
    for theta in np.linspace(-1.0, 3.0, 9):
        q = np.zeros(6)
        q[2] = theta
        assert abs(gravity_torques(m, q)[2] - 0.7 * GRAVITY * 0.2 * np.sin(theta)) < 1e-9


def test_payload_ratios_within_nominal(model):
    # reference values: holds 2.5 kg with all currents under nominal
    ratios = current_ratios(model, gravity_torques(model, LIFTING_POSTURE, 2.5))
    assert ratios.shape == (6,)
    assert np.all(ratios <= 1.0)
    assert ratios.max() > 0.5


def test_payload_must_be_non_negative(model):
    with pytest.raises(ValueError):
        gravity_torques(model, np.zeros(6), -1.0)
