import dataclasses

import numpy as np
import pytest

from armada.actuation import PdCommand, PdGains
from armada.model import GRAVITY
from armada.simcore import (DrConfig, SimConfig, SimulationError, Simulator, SingularMassMatrixError, bias_forces,
                            cube_body, forward_dynamics, inverse_dynamics, make_world, mass_matrix, randomize, step,
                            table_body, trajectory_csv)
from armada.simcore.world import TRAJECTORY_HEADER

import scenarios


def test_no_loads_no_torque(model, rng):
    q = rng.uniform(model.lower, model.upper)
    tau = inverse_dynamics(model, q, np.zeros(6), np.zeros(6), gravity=0.0)
    assert np.max(np.abs(tau)) < 1e-15


def test_pendulum_inverse_dynamics():
    m = scenarios.pendulum_model()
    for theta in np.linspace(-1.0, 3.0, 9):
        q = np.zeros(6)
        q[scenarios.PIVOT_LINK] = theta
        tau = inverse_dynamics(m, q, np.zeros(6), np.zeros(6))
        expected = (scenarios.PENDULUM_MASS * scenarios.PENDULUM_COM) * GRAVITY * np.sin(theta)
        # tiny spheres on the distal links add about 1e-6 of moment arm mass
        tiny = scenarios.TINY * GRAVITY * 0.6 * 4
        assert abs(tau[scenarios.PIVOT_LINK] - expected) < tiny + 1e-12


def test_mass_matrix_vs_rnea_columns(model, rng):
    for _ in range(20):
        q = rng.uniform(model.lower, model.upper)
        qd = rng.normal(0, 2, 6)
        qdd = rng.normal(0, 5, 6)
        bias = inverse_dynamics(model, q, qd, np.zeros(6))
        cols = np.column_stack([inverse_dynamics(model, q, np.zeros(6), e, gravity=0.0) for e in np.eye(6)])
        mm = mass_matrix(model, q)
        assert np.max(np.abs(mm - cols)) < 1e-10
        assert np.max(np.abs(mm - mm.T)) < 1e-12
        assert np.min(np.linalg.eigvalsh(mm)) > 0
        assert np.max(np.abs(inverse_dynamics(model, q, qd, qdd) - (mm @ qdd + bias))) < 1e-8


def test_forward_inverse_round_trip(model, rng):
    for _ in range(20):
        q = rng.uniform(model.lower, model.upper)
        qd = rng.normal(0, 2, 6)
        qdd = rng.normal(0, 5, 6)
        tau = inverse_dynamics(model, q, qd, qdd)
        assert np.max(np.abs(forward_dynamics(model, q, qd, tau) - qdd)) < 1e-8


def test_bias_forcing_is_equilibrium(model, rng):
    q = rng.uniform(model.lower, model.upper)
    qd = rng.normal(0, 2, 6)
    assert np.max(np.abs(forward_dynamics(model, q, qd, bias_forces(model, q, qd)))) < 1e-9


def test_ee_wrench_maps_through_jacobian(model, rng):
    from armada.kinematics import geometric_jacobian
    q = rng.uniform(model.lower, model.upper)
    f = np.array([1.0, -2.0, 0.5, 0.0, 0.0, 0.0])
    z = np.zeros(6)
    diff = inverse_dynamics(model, q, z, z) - inverse_dynamics(model, q, z, z, ee_wrench=f)
    assert np.allclose(diff, geometric_jacobian(model, q).T @ f, atol=1e-12)


def test_singular_mass_matrix_names_joint(model):
    links = tuple(dataclasses.replace(l, mass=0.0, inertia=np.zeros((3, 3))) for l in model.links)
    actuators = tuple(dataclasses.replace(a, rotor_inertia=0.0) for a in model.actuators)
    m = model.replace(links=links, actuators=actuators, gripper_mass=0.0)
    with pytest.raises(SingularMassMatrixError, match="joint 0"):
        forward_dynamics(m, np.zeros(6), np.zeros(6), np.zeros(6))


def test_pendulum_energy_closed_form():
    assert scenarios.pendulum_drift(1.0) < 1e-3


def test_free_swing_energy():
    assert scenarios.free_swing_drift(n_configs=10) < 5e-3


def test_resting_cube():
    drift, pen, analytic, excess = scenarios.rest_cube()
    assert drift < 1e-3
    assert 0 < pen < 1e-3
    assert abs(pen - analytic) / analytic < 0.1
    assert excess <= 1e-9


@pytest.mark.parametrize("height", [0.02, 0.05, 0.08])
def test_slide_tip_boundary(height):
    force, mode = scenarios.simulated_threshold(height)
    analytic = scenarios.analytic_threshold(height)
    assert abs(force / analytic - 1) < 0.1
    expected = "slide" if height < (scenarios.default_scene().cube_edge / 2) else "tip"
    assert mode == expected


def test_friction_cone_while_sliding():
    # short push so the sliding cube stays on the table
    tipped, slid, excess = scenarios.push_outcome(3.0, 0.02, push_time=0.3)
    assert slid and not tipped
    assert excess <= 1e-9


def test_ballistic_flight():
    assert scenarios.ballistic_error(0.4) < 1e-3


def _pushing_world(model, scene):
    return make_world(model, q=np.array([0.0, 0.0, 0.1, 1.9, 0.0, -1.2]),
                      bodies=[table_body(scene), cube_body(scene, (0.15, 0.25))])


def test_determinism_with_noise(model, scene):
    def run():
        rng = np.random.default_rng(5)
        w, _ = randomize(_pushing_world(model, scene), scene, DrConfig(), rng)
        sim = Simulator(w, model, SimConfig())
        cmd = PdCommand(PdGains(np.full(6, 30.0), np.full(6, 1.0)), w.arm.q + 0.2, model.torque_limits)
        sim.step(cmd, rng, n_steps=40)
        return sim.world()
    a, b = run(), run()
    assert np.array_equal(a.arm.q, b.arm.q) and np.array_equal(a.arm.qdot, b.arm.qdot)
    for x, y in zip(a.bodies, b.bodies):
        assert np.array_equal(x.position, y.position) and np.array_equal(x.quaternion, y.quaternion)


def test_step_function_matches_simulator(model, scene):
    w = _pushing_world(model, scene)
    tau = np.array([0.5, -0.2, 1.0, 0.3, 0.0, 0.1])
    w1 = step(w, model, tau, scene=scene)
    sim = Simulator(w, model, SimConfig(), scene.ee_radius, scene.ee_friction)
    sim.step(tau)
    assert np.array_equal(w1.arm.q, sim.q)
    assert abs(w1.time - 0.005) < 1e-15


def test_torque_noise_needs_rng(model, scene):
    w, _ = randomize(_pushing_world(model, scene), scene, DrConfig(), np.random.default_rng(0))
    with pytest.raises(ValueError, match="rng"):
        Simulator(w, model).step(np.zeros(6))


def test_nan_aborts(model):
    sim = Simulator(make_world(model), model, SimConfig(contacts=False))
    with pytest.raises(SimulationError, match="non-finite"):
        sim.step(np.full(6, np.nan))


def test_dr_bounds_and_means(model, scene):
    dr = DrConfig()
    rng = np.random.default_rng(2024)
    base = _pushing_world(model, scene)
    cube = base.body("cube")
    offsets, fric, mass, dq = [], [], [], []
    for _ in range(10_000):
        w, sc = randomize(base, scene, dr, rng)
        s = w.dr
        offsets.append(s.table_offset)
        fric.extend(s.friction_scale)
        mass.extend(s.mass_scale)
        dq.append(w.arm.q - base.arm.q)
        assert sc.table_height == scene.table_height + s.table_offset
        c = w.body("cube")
        assert c.friction == cube.friction * s.friction_scale[0]
        assert c.mass == cube.mass * s.mass_scale[0]
    offsets, fric, mass, dq = map(np.array, (offsets, fric, mass, dq))
    # reference values: table height +U[-0.01, 0.01], friction and mass xU[0.7, 1.3]
    assert offsets.min() >= -0.01 and offsets.max() <= 0.01
    assert fric.min() >= 0.7 and fric.max() <= 1.3
    assert mass.min() >= 0.7 and mass.max() <= 1.3
    assert abs(fric.mean() - 1) < 0.01 and abs(mass.mean() - 1) < 0.01
    # reference values: joint position noise N(0, 0.05)
    assert abs(dq.std() - 0.05) < 0.002 and abs(dq.mean()) < 0.002
    assert w.dr.torque_std == 0.1 and w.dr.ee_position_std == 0.05


def test_dr_disabled_is_identity(model, scene):
    w = _pushing_world(model, scene)
    w2, sc2 = randomize(w, scene, DrConfig(enabled=False), np.random.default_rng(0))
    assert w2 is w and sc2 is scene


def test_dr_fixed_seed_stream(model, scene):
    w = _pushing_world(model, scene)
    a, _ = randomize(w, scene, DrConfig(), np.random.default_rng(9))
    b, _ = randomize(w, scene, DrConfig(), np.random.default_rng(9))
    assert a.dr == b.dr and np.array_equal(a.arm.q, b.arm.q)


def test_trajectory_csv(model, scene):
    w = _pushing_world(model, scene)
    text = trajectory_csv([w, step(w, model, np.zeros(6))], "cube")
    lines = text.strip().split("\n")
    assert lines[0].split(",") == TRAJECTORY_HEADER
    assert len(lines) == 3 and all(len(l.split(",")) == 20 for l in lines)


def test_config_validation():
    with pytest.raises(ValueError):
        SimConfig(dt=0.0)
    with pytest.raises(ValueError):
        SimConfig(substeps=0)
    with pytest.raises(ValueError):
        DrConfig(friction=(1.3, 0.7))
