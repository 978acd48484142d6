import io

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from centermesh import (
    BodyModel,
    PoseParams,
    ShapeParams,
    forward,
    load_model,
    make_toy_model,
    matrix_to_rot6d,
    rot6d_to_matrix,
    rot6d_to_matrix_batch,
    save_model,
)
from centermesh.body_model import rot6d_backward
from centermesh.errors import DegenerateRotationError, ModelLoadError


# ---------------------------------------------------------------------------
# 6D rotations
# ---------------------------------------------------------------------------


def test_rot6d_canonical_identity():
    np.testing.assert_array_equal(rot6d_to_matrix([1, 0, 0, 0, 1, 0]), np.eye(3))


def test_rot6d_hand_gram_schmidt():
    # u = (0,1,0); b orthogonal to u so v = (-1,0,0); z = u x v = (0,0,1).
    expected = np.array([[0.0, -1.0, 0.0], [1.0, 0.0, 0.0], [0.0, 0.0, 1.0]])
    got = rot6d_to_matrix([0, 1, 0, -1, 0, 0])
    np.testing.assert_allclose(got, expected, atol=1e-15)
    # 90 degrees about z: maps e_x to e_y.
    np.testing.assert_allclose(got @ [1, 0, 0], [0, 1, 0], atol=1e-15)


def test_rot6d_scale_invariance():
    np.testing.assert_allclose(
        rot6d_to_matrix([2, 0, 0, 0, 3, 0]), np.eye(3), atol=1e-15
    )


@pytest.mark.parametrize(
    "bad",
    [
        [0, 0, 0, 0, 1, 0],  # zero first vector
        [1, 0, 0, 2, 0, 0],  # parallel
        [1, 0, 0, -3, 1e-12, 0],  # near parallel
    ],
)
def test_rot6d_degenerate_inputs(bad):
    with pytest.raises(DegenerateRotationError):
        rot6d_to_matrix(bad)


def test_rot6d_orthonormality_on_random_inputs(rng):
    r6 = rng.normal(size=(1000, 6))
    rots = rot6d_to_matrix_batch(r6)
    gram = np.einsum("nab,nac->nbc", rots, rots)
    assert np.max(np.abs(gram - np.eye(3))) < 1e-6
    dets = np.linalg.det(rots)
    assert np.all(np.abs(dets - 1.0) < 1e-6)


def test_rot6d_matrix_round_trip(rng):
    r6 = rng.normal(size=(50, 6))
    rots = rot6d_to_matrix_batch(r6)
    again = rot6d_to_matrix_batch(matrix_to_rot6d(rots))
    np.testing.assert_allclose(rots, again, atol=1e-12)


@given(st.integers(0, 2**32 - 1))
@settings(max_examples=50, deadline=None)
def test_rot6d_orthonormal_property(seed):
    r6 = np.random.default_rng(seed).normal(size=6)
    rot = rot6d_to_matrix(r6)
    assert np.max(np.abs(rot.T @ rot - np.eye(3))) < 1e-6
    assert abs(np.linalg.det(rot) - 1.0) < 1e-6


def test_rot6d_backward_matches_finite_differences(rng):
    # Scalar probe L = <G, R(r)> with a fixed random G.
    for _ in range(5):
        r6 = rng.normal(size=(3, 6))
        g = rng.normal(size=(3, 3, 3))
        grad = rot6d_backward(r6, g)
        h = 1e-6
        for idx in np.ndindex(r6.shape):
            plus = r6.copy()
            plus[idx] += h
            minus = r6.copy()
            minus[idx] -= h
            fd = (
                np.sum(g * rot6d_to_matrix_batch(plus))
                - np.sum(g * rot6d_to_matrix_batch(minus))
            ) / (2 * h)
            assert abs(fd - grad[idx]) < 1e-5 * max(1.0, abs(fd))


# ---------------------------------------------------------------------------
# Forward pass
# ---------------------------------------------------------------------------


def test_zero_pose_returns_template(toy_model):
    mesh, joints = forward(toy_model, PoseParams.identity(22), ShapeParams())
    np.testing.assert_allclose(mesh, toy_model.template, atol=1e-6)
    np.testing.assert_allclose(joints, toy_model.rest_joints(), atol=1e-6)


def test_global_rotation_rotates_template_about_root(toy_model, rng):
    r6 = PoseParams.identity(22).rot6d
    rot0 = rot6d_to_matrix(rng.normal(size=6))
    r6[0] = matrix_to_rot6d(rot0)
    mesh, joints = forward(toy_model, PoseParams(r6), ShapeParams())
    root = toy_model.rest_joints()[0]
    expected_mesh = (toy_model.template - root) @ rot0.T + root
    np.testing.assert_allclose(mesh, expected_mesh, atol=1e-6)
    expected_joints = (toy_model.rest_joints() - root) @ rot0.T + root
    np.testing.assert_allclose(joints, expected_joints, atol=1e-6)


def test_shape_basis_vector_adds_blendshape(toy_model):
    beta = np.zeros(10)
    beta[0] = 1.0
    mesh, _ = forward(toy_model, PoseParams.identity(22), ShapeParams(beta))
    np.testing.assert_allclose(
        mesh, toy_model.template + toy_model.shape_dirs[:, :, 0], atol=1e-6
    )


def test_blendshape_linearity(toy_model, rng):
    b1 = rng.normal(size=10)
    b2 = rng.normal(size=10)
    pose = PoseParams.identity(22)
    m1, _ = forward(toy_model, pose, ShapeParams(b1))
    m2, _ = forward(toy_model, pose, ShapeParams(b2))
    m12, _ = forward(toy_model, pose, ShapeParams(b1 + b2))
    np.testing.assert_allclose(m12, m1 + m2 - toy_model.template, atol=1e-6)


def test_forward_dimension_mismatch(toy_model):
    with pytest.raises(ValueError):
        forward(toy_model, PoseParams.identity(10), ShapeParams())
    with pytest.raises(ValueError):
        forward(toy_model, PoseParams.identity(22), ShapeParams(np.zeros(4)))


def test_forward_rejects_degenerate_pose(toy_model):
    r6 = PoseParams.identity(22).rot6d
    r6[7] = 0.0  # zero 6D vector has no rotation
    with pytest.raises(DegenerateRotationError, match="joint 7"):
        forward(toy_model, PoseParams(r6), ShapeParams())


def test_forward_rejects_nonfinite_pose(toy_model):
    r6 = PoseParams.identity(22).rot6d
    r6[3, 2] = np.nan
    with pytest.raises(DegenerateRotationError):
        forward(toy_model, PoseParams(r6), ShapeParams())
    with pytest.raises(ValueError):
        forward(toy_model, PoseParams.identity(22), ShapeParams(np.full(10, np.inf)))


# ---------------------------------------------------------------------------
# Toy model generator
# ---------------------------------------------------------------------------


def test_toy_model_satisfies_invariants():
    model = make_toy_model(120, 22, 0)
    model.validate()
    assert model.n_vertices == 120
    assert model.n_joints == 22


def test_toy_model_deterministic():
    a = make_toy_model(120, 22, 7)
    b = make_toy_model(120, 22, 7)
    np.testing.assert_array_equal(a.template, b.template)
    np.testing.assert_array_equal(a.skin_weights, b.skin_weights)
    np.testing.assert_array_equal(a.joint_regressor, b.joint_regressor)


def test_toy_model_seed_changes_template():
    a = make_toy_model(120, 22, 1)
    b = make_toy_model(120, 22, 2)
    assert np.any(a.template != b.template)


@pytest.mark.parametrize("v,k", [(8, 2), (100, 25), (500, 5)])
def test_toy_model_other_sizes(v, k):
    make_toy_model(v, k, 3).validate()


def test_toy_model_preconditions():
    with pytest.raises(ValueError):
        make_toy_model(20, 22, 0)  # v < 4k
    with pytest.raises(ValueError):
        make_toy_model(10, 1, 0)  # k < 2


# ---------------------------------------------------------------------------
# Container I/O
# ---------------------------------------------------------------------------


def test_model_file_round_trip_bit_exact(tmp_path, toy_model):
    path = tmp_path / "model.rmtf"
    save_model(path, toy_model)
    loaded = load_model(path)
    for attr in ("template", "shape_dirs", "joint_regressor", "skin_weights"):
        np.testing.assert_array_equal(getattr(loaded, attr), getattr(toy_model, attr))
    np.testing.assert_array_equal(loaded.parents, toy_model.parents)
    # File-level round trip: load -> save produces identical bytes.
    buf = io.BytesIO()
    save_model(buf, loaded)
    assert buf.getvalue() == path.read_bytes()


def test_load_rejects_denormalized_skin_rows(tmp_path, toy_model):
    path = tmp_path / "bad.rmtf"
    bad = BodyModel(
        template=toy_model.template,
        shape_dirs=toy_model.shape_dirs,
        joint_regressor=toy_model.joint_regressor,
        parents=toy_model.parents,
        skin_weights=toy_model.skin_weights * 0.9,
    )
    save_model(path, bad)
    with pytest.raises(ModelLoadError, match="skin_weights"):
        load_model(path)


def test_load_rejects_missing_tensor(tmp_path, toy_model):
    from centermesh import rmtf

    path = tmp_path / "missing.rmtf"
    entries = {
        "template": toy_model.template,
        "shape_dirs": toy_model.shape_dirs,
        "joint_regressor": toy_model.joint_regressor,
        "parents": toy_model.parents.astype(np.float64),
    }
    rmtf.write_tensors(path, entries)
    with pytest.raises(ModelLoadError, match="skin_weights"):
        load_model(path)


def test_load_truncated_file_raises(tmp_path, toy_model):
    from centermesh.errors import TensorFormatError

    path = tmp_path / "model.rmtf"
    save_model(path, toy_model)
    clipped = tmp_path / "clipped.rmtf"
    clipped.write_bytes(path.read_bytes()[:-100])
    with pytest.raises(TensorFormatError):
        load_model(clipped)


def test_load_rejects_wrong_dims(tmp_path, toy_model):
    from centermesh import rmtf

    path = tmp_path / "dims.rmtf"
    rmtf.write_tensors(
        path,
        {
            "template": toy_model.template,
            "shape_dirs": toy_model.shape_dirs[:, :, :4],  # not 10 basis dirs
            "joint_regressor": toy_model.joint_regressor,
            "parents": toy_model.parents.astype(np.float64),
            "skin_weights": toy_model.skin_weights,
        },
    )
    with pytest.raises(ModelLoadError, match="shape_dirs"):
        load_model(path)
