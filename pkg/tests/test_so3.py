import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from numpy.testing import assert_allclose, assert_array_equal

from axang.so3 import (
    CONVENTION_AXIS,
    THETA_MAX_REPR,
    error_quaternion,
    from_axis_angle,
    identity,
    quat_inv,
    quat_mul,
    quat_to_rotmat,
    rotate,
    sample_unit_sphere,
    skew,
    to_axis_angle,
    vee,
)
from oracles import hamilton, random_unit_quats, rodrigues, scipy_rotmat

finite = st.floats(-1.0, 1.0, allow_nan=False)


@st.composite
def unit_quats(draw):
    v = np.array([draw(finite) for _ in range(4)])
    n = np.linalg.norm(v)
    if n < 0.1:
        v = np.array([1.0, 0.0, 0.0, 0.0]) + v
        n = np.linalg.norm(v)
    return v / n


# --- products ---------------------------------------------------------------

def test_i_times_j_is_k():
    # i ⊗ j = k for the Hamilton convention
    assert_allclose(quat_mul([0, 1, 0, 0], [0, 0, 1, 0]), [0, 0, 0, 1], atol=1e-15)
    assert_allclose(quat_mul([0, 0, 1, 0], [0, 1, 0, 0]), [0, 0, 0, -1], atol=1e-15)


def test_identity_and_inverse(rng):
    for q in random_unit_quats(rng, 20):
        assert_allclose(quat_mul(identity(), q), q, atol=1e-15)
        assert_allclose(quat_mul(q, identity()), q, atol=1e-15)
        assert_allclose(quat_mul(q, quat_inv(q)), identity(), atol=1e-15)


def test_inverse_is_conjugate():
    assert_array_equal(quat_inv(identity()), identity())
    assert_array_equal(quat_inv([0.5, 0.5, -0.5, 0.5]), [0.5, -0.5, 0.5, -0.5])


def test_product_matches_matrix_oracle(rng):
    qa = random_unit_quats(rng, 100)
    qb = random_unit_quats(rng, 100)
    for a, b in zip(qa, qb):
        assert_allclose(quat_mul(a, b), hamilton(a, b), atol=1e-14)


@given(unit_quats(), unit_quats())
def test_product_stays_unit(a, b):
    assert abs(np.linalg.norm(quat_mul(a, b)) - 1.0) < 1e-9


def test_inverse_property_100_random(rng):
    for q in random_unit_quats(rng, 100):
        assert_allclose(quat_mul(q, quat_inv(q)), identity(), atol=1e-12)


# --- error quaternion --------------------------------------------------------

def test_error_quaternion_identity():
    q = from_axis_angle([1, 2, 3], 0.7)
    assert_allclose(error_quaternion(q, q), identity(), atol=1e-15)


def test_error_quaternion_reproduces_axis_angle():
    u = np.array([2.0, -1.0, 2.0]) / 3.0
    q_e = error_quaternion(identity(), from_axis_angle(u, 1.1))
    aa = to_axis_angle(q_e)
    assert_allclose(aa.u, u, atol=1e-12)
    assert aa.theta == pytest.approx(1.1, abs=1e-12)


@given(unit_quats(), unit_quats())
def test_error_quaternion_composition(q, q_d):
    assert_allclose(quat_mul(q, error_quaternion(q, q_d)), q_d, atol=1e-9)


def test_error_quaternion_keeps_sign():
    # q_d = -q describes the same attitude; the error must come out as -1, not +1
    q = from_axis_angle([0, 1, 0], 0.3)
    assert_allclose(error_quaternion(q, -q), [-1, 0, 0, 0], atol=1e-15)


# --- axis-angle -------------------------------------------------------------

def test_identity_axis_angle():
    aa = to_axis_angle(identity())
    assert_array_equal(aa.u, CONVENTION_AXIS)
    assert aa.theta == 0.0


def test_quarter_turn_extraction():
    s = math.sin(math.pi / 4)
    aa = to_axis_angle([math.cos(math.pi / 4), s, 0, 0])
    assert_allclose(aa.u, [1, 0, 0], atol=1e-15)
    assert aa.theta == pytest.approx(math.pi / 2, abs=1e-15)


def test_minus_identity_clamps_below_two_pi():
    aa = to_axis_angle([-1.0, 0.0, 0.0, 0.0])
    assert_array_equal(aa.u, CONVENTION_AXIS)
    assert aa.theta == THETA_MAX_REPR
    assert aa.theta < 2 * math.pi


def test_angle_range_covers_long_half():
    # m < 0 gives angles above pi
    aa = to_axis_angle(from_axis_angle([0, 0, 1], math.radians(224)))
    assert aa.theta == pytest.approx(math.radians(224), abs=1e-13)


def test_from_axis_angle_cases():
    assert_array_equal(from_axis_angle([0, 0, 1], 0.0), identity())
    assert_allclose(from_axis_angle([1, 0, 0], math.pi), [0, 1, 0, 0], atol=1e-16)


def test_round_trip_1000(rng):
    u = rng.standard_normal((1000, 3))
    u /= np.linalg.norm(u, axis=1, keepdims=True)
    th = rng.uniform(1e-6, 2 * math.pi - 1e-6, 1000)
    for ui, ti in zip(u, th):
        aa = to_axis_angle(from_axis_angle(ui, ti))
        assert abs(aa.theta - ti) < 1e-9
        assert_allclose(aa.u, ui, atol=1e-9)


@given(unit_quats())
def test_extracted_axis_is_unit(q):
    aa = to_axis_angle(q)
    assert abs(np.linalg.norm(aa.u) - 1.0) < 1e-9
    assert 0.0 <= aa.theta < 2 * math.pi


# --- rotation matrices ------------------------------------------------------

def test_rotmat_identity_and_quarter_turn():
    assert_array_equal(quat_to_rotmat(identity()), np.eye(3))
    S = quat_to_rotmat(from_axis_angle([0, 0, 1], math.pi / 2))
    assert_allclose(S @ [1, 0, 0], [0, 1, 0], atol=1e-15)


def test_rotmat_matches_scipy_and_rodrigues(rng):
    for q in random_unit_quats(rng, 50):
        assert_allclose(quat_to_rotmat(q), scipy_rotmat(q), atol=1e-14)
    u = np.array([1.0, -2.0, 0.5]) / np.linalg.norm([1.0, -2.0, 0.5])
    assert_allclose(quat_to_rotmat(from_axis_angle(u, 2.2)), rodrigues(u, 2.2), atol=1e-14)


@given(unit_quats(), unit_quats())
def test_rotmat_homomorphism(a, b):
    lhs = quat_to_rotmat(quat_mul(a, b))
    rhs = quat_to_rotmat(a) @ quat_to_rotmat(b)
    assert np.linalg.norm(lhs - rhs) < 1e-9


@given(unit_quats())
def test_rotmat_orthonormal(q):
    S = quat_to_rotmat(q)
    assert np.abs(S.T @ S - np.eye(3)).max() < 1e-9
    assert abs(np.linalg.det(S) - 1.0) < 1e-9


def test_rotmat_equals_conjugation(rng):
    for q in random_unit_quats(rng, 20):
        v = rng.standard_normal(3)
        assert_allclose(quat_to_rotmat(q) @ v, rotate(q, v), atol=1e-14)


def test_skew_vee_inverse():
    v = np.array([0.3, -1.2, 2.0])
    assert_array_equal(vee(skew(v)), v)
    assert_allclose(skew(v) @ [1.0, 2.0, 3.0], np.cross(v, [1.0, 2.0, 3.0]))


def test_inputs_validated():
    with pytest.raises(ValueError):
        quat_mul([1, 0, 0], [1, 0, 0, 0])
    with pytest.raises(ValueError):
        skew([1, 2])


# --- sphere sampling ---------------------------------------------------------

def test_sampler_deterministic():
    a = sample_unit_sphere(np.random.default_rng(7))
    b = sample_unit_sphere(np.random.default_rng(7))
    assert_array_equal(a, b)


def test_sampler_unit_and_centered():
    g = np.random.default_rng(2024)
    v = np.array([sample_unit_sphere(g) for _ in range(100_000)])
    assert np.abs(np.linalg.norm(v, axis=1) - 1.0).max() < 1e-12
    assert np.abs(v.mean(axis=0)).max() < 0.01
    # uniform on the sphere: E[x^2] = 1/3 per coordinate
    assert_allclose((v ** 2).mean(axis=0), 1 / 3, atol=0.01)
