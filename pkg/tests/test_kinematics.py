import numpy as np
from hypothesis import given, settings
from hypothesis import strategies as st

from armada.kinematics import (actuator_to_joint, ee_position, ee_velocity, forward_kinematics, geometric_jacobian,
                               joint_to_actuator, joint_torque_to_actuator, keypoints)
from armada.model import ELBOW, WRIST_PITCH

from oracles import fk_oracle, jacobian_fd

angles = st.lists(st.floats(-3.0, 3.0), min_size=6, max_size=6).map(np.array)


def test_zero_config_is_translation_chain(model):
    fk = forward_kinematics(model, np.zeros(6))
    expected = model.base_translation + sum(l.origin_translation for l in model.links) + model.ee_offset
    assert np.allclose(fk.ee.translation, expected, atol=1e-15)


def test_yaw_pi_mirrors_through_base_axis(model):
    q = np.array([0.0, 0.3, 0.9, 1.1, 0.2, 0.4])
    p0 = ee_position(model, q) - model.base_translation
    q[0] = np.pi
    p1 = ee_position(model, q) - model.base_translation
    assert np.allclose(p1, [-p0[0], -p0[1], p0[2]], atol=1e-12)


@settings(max_examples=100, deadline=None)
@given(angles)
def test_fk_matches_oracle(q):
    from armada.model import default_armada_model
    model = default_armada_model()
    fk = forward_kinematics(model, q)
    frames, ee = fk_oracle(model, q)
    for pose, t in zip(fk.links, frames):
        assert np.max(np.abs(pose.translation - t[:3, 3])) < 1e-12
        assert np.max(np.abs(pose.rotation - t[:3, :3])) < 1e-12
    assert np.max(np.abs(fk.ee.translation - ee[:3, 3])) < 1e-12


@settings(max_examples=100, deadline=None)
@given(angles)
def test_rotations_orthonormal(q):
    from armada.model import default_armada_model
    for pose in forward_kinematics(default_armada_model(), q).links:
        r = pose.rotation
        assert np.max(np.abs(r.T @ r - np.eye(3))) < 1e-9
        assert abs(np.linalg.det(r) - 1) < 1e-9


def test_jacobian_joint6_finite_difference(model):
    eps = 1e-6
    q = np.zeros(6)
    d = np.zeros(6)
    d[5] = eps
    fd = (ee_position(model, q + d) - ee_position(model, q)) / eps
    assert np.allclose(geometric_jacobian(model, q)[:3, 5], fd, atol=1e-6)


def test_jacobian_vs_central_differences(model, rng):
    worst = 0.0
    for _ in range(200):
        q = rng.uniform(model.lower, model.upper)
        jac = geometric_jacobian(model, q)
        fd = jacobian_fd(model, q)
        worst = max(worst, np.linalg.norm(jac - fd) / np.linalg.norm(jac))
    assert worst < 1e-5


def test_angular_columns_unit(model, rng):
    for _ in range(20):
        jac = geometric_jacobian(model, rng.uniform(-3, 3, 6))
        assert np.allclose(np.linalg.norm(jac[3:], axis=0), 1.0, atol=1e-12)


def test_jacobian_velocity_consistency(model, rng):
    h = 1e-6
    for _ in range(50):
        q = rng.uniform(model.lower, model.upper)
        qd = rng.normal(0, 2, 6)
        fd = (ee_position(model, q + h * qd) - ee_position(model, q - h * qd)) / (2 * h)
        assert np.linalg.norm(ee_velocity(model, q, qd)[:3] - fd) < 1e-5


def test_identity_coupling(model, rng):
    m = model.replace(coupling=np.eye(6))
    v = rng.normal(size=6)
    assert np.array_equal(actuator_to_joint(m, v), v)
    assert np.array_equal(joint_torque_to_actuator(m, v), v)


def test_coupling_power_balance(model, rng):
    for _ in range(1000):
        qd_act = rng.normal(size=6)
        tau = rng.normal(size=6)
        qd_joint = actuator_to_joint(model, qd_act)
        tau_act = joint_torque_to_actuator(model, tau)
        assert abs(qd_act @ tau_act - qd_joint @ tau) < 1e-12


def test_coupling_round_trip(model, rng):
    q = rng.normal(size=6)
    assert np.allclose(actuator_to_joint(model, joint_to_actuator(model, q)), q, atol=1e-14)


def test_parallelogram_forearm_pitch_invariant(model, rng):
    for _ in range(50):
        act = rng.uniform(-1.0, 1.0, 6)
        r0 = forward_kinematics(model, actuator_to_joint(model, act)).links[ELBOW].rotation
        act[2] += rng.uniform(-1.0, 1.0)
        r1 = forward_kinematics(model, actuator_to_joint(model, act)).links[ELBOW].rotation
        assert np.max(np.abs(r1 - r0)) < 1e-9


def test_keypoints(model, rng):
    kp = keypoints(model, np.zeros(6))
    assert np.allclose(kp["elbow"], model.base_translation + [0, 0, -0.28], atol=1e-15)
    for _ in range(20):
        q = rng.uniform(-2, 2, 6)
        kp = keypoints(model, q)
        fk = forward_kinematics(model, q)
        frames, ee = fk_oracle(model, q)
        assert np.max(np.abs(kp["wrist"] - fk.links[WRIST_PITCH].translation)) < 1e-12
        assert np.max(np.abs(kp["elbow"] - frames[ELBOW][:3, 3])) < 1e-12
        assert np.max(np.abs(kp["ee"] - ee[:3, 3])) < 1e-12


def test_quaternion_canonical(model, rng):
    for _ in range(20):
        quat = forward_kinematics(model, rng.uniform(-3, 3, 6)).ee.quaternion()
        assert quat[0] >= 0 and abs(np.linalg.norm(quat) - 1) < 1e-12
