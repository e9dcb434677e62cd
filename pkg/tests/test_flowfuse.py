"""Flow lifting and the ridge-regularized per-voxel solve.

The voxel solve minimizes ``||A F - d||^2 + alpha^2 ||F||^2`` with rows
``A_i = u_i^T``, ``d_i = ||u_i||^2`` and ``alpha = alpha0 / m * sum ||u_i||^2``.
Oracles: dense elimination of the 3x3 system when ``alpha0 = 0`` and the
closed form ``(A^T A + alpha^2 I)^{-1} A^T d`` otherwise.
"""

import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from firegs.camera import backproject_points, look_at, project_points
from firegs.errors import NoObservationError, NotObservedError, ValidationError
from firegs.flowfuse import (GridSpec, backproject_flow, backproject_flows, fuse_flow_grid, regularization_weight,
                             sample_flow, solve_voxel_flow, solve_voxel_flows)
from firegs.rasters import DepthMap, FlowMap

from conftest import simple_camera


def _objective(U, F, alpha0):
    d = (U * U).sum(axis=1)
    alpha = regularization_weight(U, alpha0)
    r = U @ F - d
    return r @ r + alpha**2 * F @ F


def _ridge_oracle(U, alpha0):
    d = (U * U).sum(axis=1)
    alpha = alpha0 / len(U) * d.sum()
    return np.linalg.solve(U.T @ U + alpha**2 * np.eye(3), U.T @ d)


def _const_flow(fu, fv, size=101):
    return FlowMap(np.broadcast_to([fu, fv], (size, size, 2)).copy(), np.ones((size, size), bool))


def test_zero_flow_gives_zero(cam100):
    u = backproject_flow(cam100, _const_flow(0, 0), (0.1, -0.2, 2.0))
    np.testing.assert_array_equal(u, 0.0)


def test_flow_lift_pinhole_arithmetic(cam100):
    # 10 px at fx = 100 and depth 2 m is 0.2 m
    u = backproject_flow(cam100, _const_flow(10, 0), (0, 0, 2.0))
    np.testing.assert_allclose(u, [0.2, 0, 0], atol=1e-12)


def test_flow_lift_stays_at_constant_depth(rng, cam100):
    x = np.c_[rng.uniform(-0.5, 0.5, (50, 2)), rng.uniform(1, 4, 50)]
    flow = FlowMap(rng.normal(0, 3, (101, 101, 2)), np.ones((101, 101), bool))
    u, ok = backproject_flows(cam100, flow, x)
    assert ok.all()
    np.testing.assert_allclose(u[:, 2], 0.0, atol=1e-12)


def test_flow_lift_rotated_camera_keeps_camera_depth(rng):
    cam = simple_camera(pose=look_at((1.0, 0.5, -2.0), (0, 0, 0)))
    x = rng.uniform(-0.3, 0.3, (20, 3))
    flow = FlowMap(rng.normal(0, 3, (101, 101, 2)), np.ones((101, 101), bool))
    u, ok = backproject_flows(cam, flow, x)
    _, z0 = project_points(cam, x[ok])
    _, z1 = project_points(cam, x[ok] + u[ok])
    np.testing.assert_allclose(z1, z0, atol=1e-12)


def test_flow_lift_not_observed(cam100):
    with pytest.raises(NotObservedError):
        backproject_flow(cam100, _const_flow(1, 1), (10.0, 0, 1.0))
    valid = np.ones((101, 101), bool)
    valid[50, 51] = False
    flow = FlowMap(np.zeros((101, 101, 2)), valid)
    # (50.5, 50) touches the invalid pixel through its bilinear weight
    with pytest.raises(NotObservedError):
        backproject_flow(cam100, flow, (0.005, 0, 1.0))
    backproject_flow(cam100, flow, (0.0, 0.0, 1.0))


def test_bilinear_sampling():
    vals = np.zeros((4, 4, 2))
    vals[..., 0] = np.arange(4)[None, :]
    vals[..., 1] = 10 * np.arange(4)[:, None]
    f, ok = sample_flow(FlowMap(vals, np.ones((4, 4), bool)), np.array([[1.25, 2.5], [3.0, 3.0], [3.5, 0]]))
    np.testing.assert_allclose(f[0], [1.25, 25.0])
    np.testing.assert_allclose(f[1], [3.0, 30.0])
    assert ok.tolist() == [True, True, False]


def test_solve_all_zero():
    F, conf = solve_voxel_flow(np.zeros((3, 3)), 0.1)
    np.testing.assert_array_equal(F, 0.0)
    assert conf == 0.0


def test_solve_two_orthonormal():
    F, _ = solve_voxel_flow([[1, 0, 0], [0, 1, 0]], 0.0)
    np.testing.assert_allclose(F, [1, 1, 0], atol=1e-12)


def test_solve_single_ridge():
    F, conf = solve_voxel_flow([[1, 0, 0]], 0.1)
    np.testing.assert_allclose(F, [1 / 1.01, 0, 0], atol=1e-12)
    assert abs(F[0] - 0.990099) < 1e-6
    assert conf == 0.0


def test_solve_requires_observations():
    with pytest.raises(NoObservationError):
        solve_voxel_flow(np.zeros((0, 3)))


def test_exact_3x3_and_ridge_oracles(rng):
    for _ in range(200):
        U = rng.normal(size=(3, 3))
        if np.linalg.cond(U) > 1e3:
            continue
        F, conf = solve_voxel_flow(U, 0.0)
        exact = np.linalg.solve(U, (U * U).sum(axis=1))
        assert np.abs(F - exact).max() <= 1e-9 * max(1.0, np.abs(exact).max())
        assert conf == pytest.approx(1 / np.linalg.cond(U), rel=1e-9)
        m = rng.integers(1, 6)
        U = rng.normal(size=(m, 3))
        a0 = rng.uniform(0.01, 1.0)
        F, _ = solve_voxel_flow(U, a0)
        oracle = _ridge_oracle(U, a0)
        assert np.abs(F - oracle).max() <= 1e-9 * max(1.0, np.abs(oracle).max())


def test_batched_matches_single(rng):
    U = rng.normal(size=(40, 4, 3))
    observed = rng.uniform(size=(40, 4)) > 0.3
    observed[:, 0] = True
    F, conf = solve_voxel_flows(U, observed, 0.1)
    for k in range(40):
        f1, c1 = solve_voxel_flow(U[k][observed[k]], 0.1)
        np.testing.assert_allclose(F[k], f1, atol=1e-12, rtol=1e-10)
        assert conf[k] == pytest.approx(c1, abs=1e-12)


def test_local_minimum_probe(rng):
    deltas = [np.array(d) * 1e-4 / np.linalg.norm(d)
              for d in itertools.product((-1, 0, 1), repeat=3) if any(d)]
    for _ in range(50):
        U = rng.normal(size=(rng.integers(1, 5), 3))
        F, _ = solve_voxel_flow(U, 0.1)
        base = _objective(U, F, 0.1)
        assert all(base <= _objective(U, F + d, 0.1) for d in deltas)


def test_ridge_shrinkage(rng):
    U = rng.normal(size=(3, 3))
    norms = [np.linalg.norm(solve_voxel_flow(U, a)[0]) for a in np.linspace(0, 2, 21)]
    assert all(b <= a + 1e-12 for a, b in zip(norms, norms[1:]))


@settings(max_examples=100, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), m=st.integers(1, 3))
def test_projection_constraint_when_consistent(seed, m):
    rng = np.random.default_rng(seed)
    F_true = rng.normal(size=3)
    # observations consistent with F_true: u_i is the projection of F_true onto a direction
    dirs = rng.normal(size=(m, 3))
    dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
    U = (dirs @ F_true)[:, None] * dirs
    if np.linalg.norm(U, axis=1).min() < 1e-3:
        return
    F, _ = solve_voxel_flow(U, 0.0)
    for u in U:
        assert abs((F - u) @ u) < 1e-6


def _plane_setup(n_cams, size=48):
    cams = []
    for i in range(n_cams):
        az = np.radians(-20 + 40 * i / max(n_cams - 1, 1))
        eye = (2.0 * np.sin(az), 0.0, -2.0 * np.cos(az))
        cams.append(simple_camera(f=50, c=(size - 1) / 2, size=size, pose=look_at(eye, (0, 0, 0))))
    return cams


def _translation_flows(cams, v, size=48):
    """Exact flows of a translating surface at each camera's center distance."""
    flows, hints = [], []
    for cam in cams:
        rows, cols = np.mgrid[0:size, 0:size]
        uv = np.stack([cols.ravel(), rows.ravel()], axis=1).astype(float)
        z = np.full(len(uv), np.linalg.norm(cam.pose.center))
        x = backproject_points(cam, uv, z)
        uv1, _ = project_points(cam, x + v)
        flows.append(FlowMap((uv1 - uv).reshape(size, size, 2), np.ones((size, size), bool)))
        hints.append(DepthMap.from_array(z.reshape(size, size)))
    return flows, hints


def test_empty_masks_no_voxels():
    cams = _plane_setup(3)
    flows, hints = _translation_flows(cams, np.array([0, 0.01, 0]))
    masks = [np.zeros((48, 48), bool) for _ in cams]
    grid = GridSpec((-0.2, -0.2, -0.2), 0.05, (8, 8, 8))
    assert not fuse_flow_grid(cams, flows, hints, masks, grid).occupancy.any()


def test_single_camera_rejected():
    cams = _plane_setup(1)
    flows, _ = _translation_flows(cams, np.array([0, 0.01, 0]))
    masks = [np.ones((48, 48), bool)]
    grid = GridSpec((-0.2, -0.2, -0.2), 0.05, (8, 8, 8))
    field = fuse_flow_grid(cams, flows, [None], masks, grid)
    assert not field.occupancy.any()


def test_fuse_requires_cameras():
    with pytest.raises(ValidationError):
        fuse_flow_grid([], [], [], [], GridSpec((0, 0, 0), 1.0, (1, 1, 1)))


def test_fused_translation_recovered():
    cams = _plane_setup(3)
    v = np.array([0.0, 0.004, 0.0])
    flows, hints = _translation_flows(cams, v)
    masks = [np.ones((48, 48), bool) for _ in cams]
    grid = GridSpec((-0.1, -0.1, -0.1), 0.05, (4, 4, 4))
    # near rank-one system (all views see the same vertical motion): the ridge
    # term keeps the null directions at zero
    field = fuse_flow_grid(cams, flows, hints, masks, grid, alpha0=0.1)
    assert field.occupancy.sum() >= 8
    err = np.linalg.norm(field.flow[field.occupancy] - v, axis=1)
    # voxels sit up to 1.5 voxels off the 2 m surface, so the lifted flow
    # scales by at most 0.075 / 2
    assert err.max() <= np.linalg.norm(v) * 0.075 / 2
    # voxels off the surface fail the depth-hint test
    far = fuse_flow_grid(cams, flows, hints, masks, GridSpec((-0.1, -0.1, 0.5), 0.05, (4, 4, 2)))
    assert not far.occupancy.any()
