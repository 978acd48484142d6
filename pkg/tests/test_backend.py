"""Both kernel backends must agree on every operation."""

import numpy as np
import pytest

from centermesh import backend
from centermesh import _kernels_np as knp

try:
    from centermesh import _kernels_nb as knb

    HAVE_NUMBA = True
except ImportError:
    HAVE_NUMBA = False

pytestmark = pytest.mark.skipif(not HAVE_NUMBA, reason="numba not installed")


def test_backend_switching():
    original = backend.backend_name()
    with backend.use_backend("numpy"):
        assert backend.backend_name() == "numpy"
    assert backend.backend_name() == original


def test_render_gaussians_agree(rng):
    for _ in range(10):
        n = rng.integers(0, 6)
        rows = rng.integers(0, 64, n)
        cols = rng.integers(0, 64, n)
        sigmas = rng.uniform(0.5, 3.0, n)
        radii = rng.integers(1, 8, n)
        hm_a = np.zeros((64, 64))
        hm_b = np.zeros((64, 64))
        knp.render_gaussians(hm_a, rows, cols, sigmas, radii)
        knb.render_gaussians(hm_b, rows, cols, sigmas, radii)
        np.testing.assert_allclose(hm_a, hm_b, rtol=0, atol=1e-15)


def test_fill_param_map_agree(rng):
    for _ in range(10):
        n = int(rng.integers(1, 5))
        cxs = rng.uniform(0, 63, n)
        cys = rng.uniform(0, 63, n)
        radii = rng.integers(1, 6, n).astype(np.int64)
        params = rng.normal(size=(n, 7))
        pm_a = np.zeros((7, 64, 64))
        pm_b = np.zeros((7, 64, 64))
        best_a = np.full((64, 64), np.inf)
        best_b = np.full((64, 64), np.inf)
        knp.fill_param_map(pm_a, best_a, cxs, cys, radii, params)
        knb.fill_param_map(pm_b, best_b, cxs, cys, radii, params)
        np.testing.assert_array_equal(pm_a, pm_b)
        np.testing.assert_array_equal(best_a, best_b)


def test_peak_mask_agree(rng):
    for _ in range(20):
        cm = rng.random((32, 32))
        if rng.random() < 0.5:
            cm = np.round(cm, 1)  # create plateaus
        np.testing.assert_array_equal(knp.peak_mask(cm), knb.peak_mask(cm))


def test_focal_agree(rng):
    for _ in range(10):
        pred = rng.uniform(1e-3, 1 - 1e-3, (64, 64))
        gt = np.zeros((64, 64))
        gt[rng.integers(0, 64, 3), rng.integers(0, 64, 3)] = 1.0
        a = knp.focal_sums(pred, gt, 1e-4)
        b = knb.focal_sums(pred, gt, 1e-4)
        np.testing.assert_allclose(a, b, rtol=1e-12)
        np.testing.assert_allclose(
            knp.focal_grad(pred, gt, 1e-4), knb.focal_grad(pred, gt, 1e-4), rtol=1e-12
        )


def test_car_repel_agree(rng):
    for _ in range(10):
        n = int(rng.integers(2, 8))
        centers = rng.uniform(5, 58, (n, 2))
        ks = rng.uniform(2, 7, n)
        ca = centers.copy()
        cb = centers.copy()
        sa = knp.car_repel(ca, ks, 0.2, 64.0, 64.0, 100)
        sb = knb.car_repel(cb, ks, 0.2, 64.0, 64.0, 100)
        assert sa == sb
        np.testing.assert_array_equal(ca, cb)


def test_body_forward_agree(rng, toy_model):
    n = 4
    r6 = rng.normal(size=(n, toy_model.n_joints, 6))
    betas = rng.normal(size=(n, 10))
    reg_idx, reg_w, skin_idx, skin_w = toy_model.sparse_rows
    args = (
        toy_model.template,
        toy_model.shape_dirs,
        reg_idx,
        reg_w,
        toy_model.parents,
        skin_idx,
        skin_w,
        betas,
        r6,
    )
    mesh_a, joints_a, bad_a = knp.body_forward(*args)
    mesh_b, joints_b, bad_b = knb.body_forward(*args)
    assert bad_a == bad_b == -1
    np.testing.assert_allclose(mesh_a, mesh_b, atol=1e-12)
    np.testing.assert_allclose(joints_a, joints_b, atol=1e-12)


def test_body_forward_degenerate_flag_agrees(rng, toy_model):
    r6 = rng.normal(size=(2, toy_model.n_joints, 6))
    r6[1, 5] = [1, 0, 0, 2, 0, 0]  # parallel columns
    betas = rng.normal(size=(2, 10))
    reg_idx, reg_w, skin_idx, skin_w = toy_model.sparse_rows
    args = (toy_model.template, toy_model.shape_dirs, reg_idx, reg_w,
            toy_model.parents, skin_idx, skin_w, betas, r6)
    bad_a = knp.body_forward(*args)[2]
    bad_b = knb.body_forward(*args)[2]
    assert bad_a == bad_b == toy_model.n_joints + 5
