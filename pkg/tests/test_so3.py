import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from rago import so3
from rago.errors import DegenerateInput


def test_random_rotation_deterministic():
    a = so3.random_rotation(np.random.default_rng(7))
    b = so3.random_rotation(np.random.default_rng(7))
    assert np.array_equal(a, b)


def test_random_rotation_haar_mean_trace():
    # angle density under Haar measure is (1 - cos t)/pi on [0, pi]; tr = 1 + 2 cos t
    t = np.linspace(0.0, np.pi, 200001)
    dens = (1 - np.cos(t)) / np.pi
    oracle = np.trapezoid((1 + 2 * np.cos(t)) * dens, t)
    rs = so3.random_rotations(10000, np.random.default_rng(0))
    mean_tr = np.trace(rs, axis1=1, axis2=2).mean()
    assert abs(mean_tr - oracle) < 0.1
    assert so3.is_rotation(rs)


def test_haar_trace_oracle_value():
    # Quaternion Monte-Carlo route, independent of the matrix sampler:
    # tr(R) = 4 w^2 - 1 for unit quaternion (w, x, y, z).
    q = np.random.default_rng(1).standard_normal((200000, 4))
    q /= np.linalg.norm(q, axis=1, keepdims=True)
    mc = np.mean(4 * q[:, 0] ** 2 - 1)
    assert abs(mc - 0.0) < 0.02


def test_perturbation_zero_sigma_is_identity():
    r = so3.random_perturbation(0.0, np.random.default_rng(3))
    assert np.allclose(r, np.eye(3), atol=1e-15)


def test_perturbation_angle_statistics():
    rng = np.random.default_rng(11)
    sigma = 5.0
    angles = np.array([so3.geodesic_deg(np.eye(3), so3.random_perturbation(sigma, rng)) for _ in range(10000)])
    # half-normal oracle via direct sampling of |N(0, sigma^2)|
    ref = np.abs(np.random.default_rng(99).normal(0.0, sigma, 200000))
    analytic_std = sigma * math.sqrt(1 - 2 / math.pi)
    assert abs(ref.std() - analytic_std) / analytic_std < 0.01
    assert abs(angles.std() - analytic_std) / analytic_std < 0.10
    assert abs(angles.mean() - sigma * math.sqrt(2 / math.pi)) < 0.2


def test_perturbation_outputs_are_rotations():
    rng = np.random.default_rng(5)
    for _ in range(50):
        assert so3.is_rotation(so3.random_perturbation(20.0, rng))


def test_geodesic_basic():
    r = so3.random_rotation(np.random.default_rng(2))
    assert so3.geodesic_deg(r, r) == pytest.approx(0.0, abs=1e-12)
    assert so3.geodesic_deg(np.eye(3), so3.rot_z(30)) == pytest.approx(30.0, abs=1e-12)
    assert so3.geodesic_deg(np.eye(3), so3.rot_x(180)) == pytest.approx(180.0, abs=1e-9)


def test_geodesic_left_invariance():
    rng = np.random.default_rng(4)
    r0, r, s = so3.random_rotations(3, rng)
    assert so3.geodesic_deg(r0 @ r, r0 @ s) == pytest.approx(so3.geodesic_deg(r, s), abs=1e-10)


def test_geodesic_matches_arccos_formula():
    rng = np.random.default_rng(8)
    a, b = so3.random_rotations(2, rng)
    ref = np.degrees(np.arccos(np.clip((np.trace(a.T @ b) - 1) / 2, -1, 1)))
    assert so3.geodesic_deg(a, b) == pytest.approx(ref, abs=1e-9)


def test_geodesic_metric_properties():
    rng = np.random.default_rng(12)
    rs = so3.random_rotations(3000, rng).reshape(1000, 3, 3, 3)
    a, b, c = rs[:, 0], rs[:, 1], rs[:, 2]
    assert np.array_equal(so3.geodesic_deg(a, b), so3.geodesic_deg(b, a))
    lhs = so3.geodesic_deg(a, c)
    rhs = so3.geodesic_deg(a, b) + so3.geodesic_deg(b, c)
    assert np.all(lhs <= rhs + 1e-9)
    d = so3.geodesic_deg(a, b)
    assert np.all((d >= 0) & (d <= 180))


def test_entrywise_l1():
    r = so3.random_rotation(np.random.default_rng(0))
    assert so3.entrywise_l1(r, r) == 0.0
    assert so3.entrywise_l1(np.eye(3), -np.eye(3)) == 6.0
    a, b = so3.random_rotations(2, np.random.default_rng(1))
    oracle = 0.0
    for i, j in itertools.product(range(3), range(3)):
        oracle += abs(a[i, j] - b[i, j])
    assert so3.entrywise_l1(a, b) == pytest.approx(oracle, abs=1e-14)


def test_orth6d_examples():
    assert np.allclose(so3.orth6d_to_rotation([2, 0, 0, 0, 3, 0]), np.eye(3))
    assert np.allclose(so3.orth6d_to_rotation([1, 0, 0, 1, 1, 0]), np.eye(3))
    r = so3.random_rotation(np.random.default_rng(3))
    assert np.linalg.norm(so3.orth6d_to_rotation(so3.rotation_to_orth6d(r)) - r) < 1e-12


def test_rotation_to_orth6d_examples():
    assert np.array_equal(so3.rotation_to_orth6d(np.eye(3)), [1, 0, 0, 0, 1, 0])
    # rot_z(90) = [[0,-1,0],[1,0,0],[0,0,1]]: columns (0,1,0) and (-1,0,0)
    assert np.allclose(so3.rotation_to_orth6d(so3.rot_z(90)), [0, 1, 0, -1, 0, 0], atol=1e-15)


@pytest.mark.parametrize("v", [[0, 0, 0, 0, 1, 0], [1, 2, 3, 2, 4, 6], [1e-13, 0, 0, 0, 1, 0]])
def test_orth6d_degenerate(v):
    with pytest.raises(DegenerateInput):
        so3.orth6d_to_rotation(v)


@settings(max_examples=200, deadline=None)
@given(st.lists(st.floats(-10, 10, allow_nan=False), min_size=6, max_size=6))
def test_orth6d_always_rotation(v):
    v = np.array(v)
    a, b = v[:3], v[3:]
    if np.linalg.norm(a) < 1e-3 or np.linalg.norm(np.cross(a, b)) < 1e-3 * np.linalg.norm(a):
        return
    assert so3.is_rotation(so3.orth6d_to_rotation(v))


def test_project_to_so3():
    rng = np.random.default_rng(6)
    r = so3.random_rotation(rng)
    assert np.allclose(so3.project_to_so3(r), r, atol=1e-12)
    assert np.allclose(so3.project_to_so3(2 * r), r, atol=1e-12)
    with pytest.raises(DegenerateInput):
        so3.project_to_so3(np.zeros((3, 3)))
    with pytest.raises(DegenerateInput):
        so3.project_to_so3(np.outer([1, 2, 3], [1, 0, 0]))


def test_project_to_so3_noise_matches_grid_search():
    rng = np.random.default_rng(21)
    r = so3.random_rotation(rng)
    m = r + 0.01 * rng.uniform(-1, 1, (3, 3))
    p = so3.project_to_so3(m)
    assert so3.geodesic_deg(p, r) < 3.0
    # brute force: coarse grid of perturbations around r, pick Frobenius-closest
    best, best_d = None, np.inf
    grid = np.deg2rad(np.arange(-3.0, 3.01, 0.25))
    for x in grid:
        for y in grid:
            for z in grid:
                cand = r @ so3.exp_map([x, y, z])
                d = np.linalg.norm(cand - m)
                if d < best_d:
                    best, best_d = cand, d
    assert so3.geodesic_deg(p, best) <= 0.25 * math.sqrt(3) / 2 + 1e-6
    assert np.linalg.norm(p - m) <= best_d + 1e-12


def test_compose_transpose():
    rs = so3.random_rotations(20, np.random.default_rng(9))
    prod = so3.compose(*rs)
    assert np.linalg.norm(prod @ so3.transpose(prod) - np.eye(3)) < 1e-12


def test_log_exp_round_trip():
    rs = so3.random_rotations(100, np.random.default_rng(10))
    assert np.allclose(so3.exp_map(so3.log_map(rs)), rs, atol=1e-12)


def test_log_exp_match_scipy():
    from scipy.spatial.transform import Rotation

    rng = np.random.default_rng(11)
    rs = so3.random_rotations(2000, rng)
    assert np.abs(so3.log_map(rs) - Rotation.from_matrix(rs).as_rotvec()).max() < 1e-12
    vs = rng.standard_normal((2000, 3)) * rng.uniform(0.0, 3.0, (2000, 1))
    assert np.abs(so3.exp_map(vs) - Rotation.from_rotvec(vs).as_matrix()).max() < 1e-12


@pytest.mark.parametrize("angle", [0.0, 1e-10, 1e-6, 1e-3, math.pi - 1e-3, math.pi - 1e-9, math.pi])
def test_log_map_edge_angles(angle):
    axes = np.random.default_rng(12).standard_normal((50, 3))
    axes /= np.linalg.norm(axes, axis=1, keepdims=True)
    rs = so3.exp_map(axes * angle)
    back = so3.log_map(rs)
    assert np.allclose(np.linalg.norm(back, axis=1), angle, atol=1e-9)
    assert np.abs(so3.exp_map(back) - rs).max() < 1e-12
