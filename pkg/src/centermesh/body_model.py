"""Parametric body model: shape blendshapes, forward kinematics, skinning.

The model maps per-joint rotations (6D representation, 22 joints by default)
and 10 shape coefficients to a posed vertex mesh plus regressed 3D joints.
Dimensions are generic: vertex count V and joint count K are data, not code.

Joint order convention (documented indices, used for torso-center logic):
0 pelvis (root), 1 left hip, 2 right hip, 3 spine, ..., 12 neck,
16 left shoulder, 17 right shoulder. Parents always precede children.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from . import rmtf
from .backend import kernels
from .errors import DegenerateRotationError, ModelLoadError

NUM_SHAPE_COEFFS = 10
DEFAULT_NUM_JOINTS = 22

# neck, left/right shoulder, pelvis, left/right hip
TORSO_JOINT_INDICES = (12, 16, 17, 0, 1, 2)

_MODEL_ENTRIES = ("template", "shape_dirs", "joint_regressor", "parents", "skin_weights")

# Rest skeleton for the default 22-joint layout (meters, y up, T-pose).
_REST_JOINTS_22 = np.array(
    [
        [0.00, 0.00, 0.00],  # 0  pelvis
        [0.09, -0.06, 0.00],  # 1  left hip
        [-0.09, -0.06, 0.00],  # 2  right hip
        [0.00, 0.10, 0.00],  # 3  spine1
        [0.10, -0.50, 0.00],  # 4  left knee
        [-0.10, -0.50, 0.00],  # 5  right knee
        [0.00, 0.22, 0.00],  # 6  spine2
        [0.11, -0.90, 0.00],  # 7  left ankle
        [-0.11, -0.90, 0.00],  # 8  right ankle
        [0.00, 0.32, 0.00],  # 9  spine3
        [0.12, -0.98, 0.09],  # 10 left foot
        [-0.12, -0.98, 0.09],  # 11 right foot
        [0.00, 0.50, 0.00],  # 12 neck
        [0.06, 0.44, 0.00],  # 13 left collar
        [-0.06, 0.44, 0.00],  # 14 right collar
        [0.00, 0.64, 0.00],  # 15 head
        [0.17, 0.45, 0.00],  # 16 left shoulder
        [-0.17, 0.45, 0.00],  # 17 right shoulder
        [0.42, 0.43, 0.00],  # 18 left elbow
        [-0.42, 0.43, 0.00],  # 19 right elbow
        [0.66, 0.42, 0.00],  # 20 left wrist
        [-0.66, 0.42, 0.00],  # 21 right wrist
    ]
)

_PARENTS_22 = np.array(
    [-1, 0, 0, 0, 1, 2, 3, 4, 5, 6, 7, 8, 9, 9, 9, 12, 13, 14, 16, 17, 18, 19],
    dtype=np.int64,
)


# ---------------------------------------------------------------------------
# 6D rotation representation
# ---------------------------------------------------------------------------


def rot6d_to_matrix_batch(r6: np.ndarray) -> np.ndarray:
    """Gram-Schmidt two 3-vectors into rotation matrices, (...,6) -> (...,3,3).

    Columns of the result are (u, v, u x v) where u is the normalized first
    vector and v the normalized rejection of the second. Raises
    DegenerateRotationError when a first vector is near zero or the two
    vectors are near parallel (norm <= 1e-8 after projection).
    """
    r6 = np.asarray(r6, dtype=np.float64)
    a = r6[..., 0:3]
    b = r6[..., 3:6]
    na = np.linalg.norm(a, axis=-1)
    if np.any(na <= 1e-8) or not np.all(np.isfinite(r6)):
        raise DegenerateRotationError("first 6D column is near zero or non-finite")
    u = a / na[..., None]
    proj = np.sum(u * b, axis=-1)
    w = b - proj[..., None] * u
    nw = np.linalg.norm(w, axis=-1)
    if np.any(nw <= 1e-8):
        raise DegenerateRotationError("6D columns are near parallel")
    v = w / nw[..., None]
    z = np.cross(u, v)
    return np.stack([u, v, z], axis=-1)


def rot6d_to_matrix(r6: np.ndarray) -> np.ndarray:
    """Convert one 6-vector to a 3x3 rotation matrix."""
    r6 = np.asarray(r6, dtype=np.float64).reshape(6)
    return rot6d_to_matrix_batch(r6)


def matrix_to_rot6d(rot: np.ndarray) -> np.ndarray:
    """Inverse embedding: first two matrix columns, (...,3,3) -> (...,6)."""
    rot = np.asarray(rot, dtype=np.float64)
    return np.concatenate([rot[..., :, 0], rot[..., :, 1]], axis=-1)


def rot6d_backward(r6: np.ndarray, grad_rot: np.ndarray) -> np.ndarray:
    """Chain a gradient w.r.t. the rotation matrix back to the 6D input.

    r6 (...,6), grad_rot (...,3,3) -> (...,6). Used by the pose loss so its
    analytic gradient can be checked against finite differences.
    """
    r6 = np.asarray(r6, dtype=np.float64)
    grad_rot = np.asarray(grad_rot, dtype=np.float64)
    a = r6[..., 0:3]
    b = r6[..., 3:6]
    na = np.linalg.norm(a, axis=-1, keepdims=True)
    u = a / na
    proj = np.sum(u * b, axis=-1, keepdims=True)
    w = b - proj * u
    nw = np.linalg.norm(w, axis=-1, keepdims=True)
    v = w / nw

    g_u = grad_rot[..., :, 0]
    g_v = grad_rot[..., :, 1]
    g_z = grad_rot[..., :, 2]

    # z = u x v contributes to both u and v paths.
    gu1 = g_u + np.cross(v, g_z)
    gv1 = g_v + np.cross(g_z, u)
    g_w = (gv1 - np.sum(v * gv1, axis=-1, keepdims=True) * v) / nw
    g_b = g_w - np.sum(u * g_w, axis=-1, keepdims=True) * u
    gu2 = -np.sum(u * g_w, axis=-1, keepdims=True) * b - proj * g_w
    gu_t = gu1 + gu2
    g_a = (gu_t - np.sum(u * gu_t, axis=-1, keepdims=True) * u) / na
    return np.concatenate([g_a, g_b], axis=-1)


# ---------------------------------------------------------------------------
# Parameter containers
# ---------------------------------------------------------------------------


@dataclass
class PoseParams:
    """Per-joint rotations in the 6D representation, joint 0 = global.

    Finiteness and orthonormalizability are enforced where the values are
    consumed (matrix conversion / forward pass), keeping construction cheap
    for batched decoding.
    """

    rot6d: np.ndarray  # (K, 6)

    def __post_init__(self):
        self.rot6d = np.asarray(self.rot6d, dtype=np.float64)
        if self.rot6d.ndim != 2 or self.rot6d.shape[1] != 6:
            raise ValueError(f"pose must be (K, 6), got {self.rot6d.shape}")

    @classmethod
    def identity(cls, n_joints: int = DEFAULT_NUM_JOINTS) -> "PoseParams":
        r6 = np.zeros((n_joints, 6))
        r6[:, 0] = 1.0
        r6[:, 4] = 1.0
        return cls(r6)

    @classmethod
    def from_matrices(cls, rots: np.ndarray) -> "PoseParams":
        return cls(matrix_to_rot6d(rots))

    def matrices(self) -> np.ndarray:
        return rot6d_to_matrix_batch(self.rot6d)

    @property
    def n_joints(self) -> int:
        return self.rot6d.shape[0]


@dataclass
class ShapeParams:
    """PCA shape coefficients (10 by convention); finiteness checked at use."""

    beta: np.ndarray = field(default_factory=lambda: np.zeros(NUM_SHAPE_COEFFS))

    def __post_init__(self):
        self.beta = np.asarray(self.beta, dtype=np.float64).reshape(-1)


# ---------------------------------------------------------------------------
# Body model
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class BodyModel:
    """Immutable parametric body model, safe to share across threads.

    template (V,3) rest vertices in meters; shape_dirs (V,3,10) blendshape
    basis; joint_regressor (K,V) nonnegative rows summing to 1; parents (K,)
    with parents[0] == -1 and parents[k] < k; skin_weights (V,K) convex rows.
    """

    template: np.ndarray
    shape_dirs: np.ndarray
    joint_regressor: np.ndarray
    parents: np.ndarray
    skin_weights: np.ndarray

    @property
    def n_vertices(self) -> int:
        return self.template.shape[0]

    @property
    def n_joints(self) -> int:
        return self.joint_regressor.shape[0]

    def validate(self) -> None:
        """Check every model invariant; raise ModelLoadError with the reason."""
        v = self.template.shape[0]
        k = self.joint_regressor.shape[0]
        if self.template.ndim != 2 or self.template.shape[1] != 3:
            raise ModelLoadError(f"template must be (V, 3), got {self.template.shape}")
        if self.shape_dirs.shape != (v, 3, NUM_SHAPE_COEFFS):
            raise ModelLoadError(
                f"shape_dirs must be (V, 3, {NUM_SHAPE_COEFFS}), got {self.shape_dirs.shape}"
            )
        if self.joint_regressor.shape != (k, v):
            raise ModelLoadError(
                f"joint_regressor must be (K, V), got {self.joint_regressor.shape}"
            )
        if self.parents.shape != (k,):
            raise ModelLoadError(f"parents must be (K,), got {self.parents.shape}")
        if self.skin_weights.shape != (v, k):
            raise ModelLoadError(
                f"skin_weights must be (V, K), got {self.skin_weights.shape}"
            )
        for name, arr in (("joint_regressor", self.joint_regressor),
                          ("skin_weights", self.skin_weights)):
            if np.any(arr < 0):
                raise ModelLoadError(f"{name} has negative entries")
            sums = arr.sum(axis=1)
            bad = np.abs(sums - 1.0) > 1e-6
            if np.any(bad):
                idx = int(np.argmax(bad))
                raise ModelLoadError(
                    f"{name} row {idx} sums to {sums[idx]:.8f}, expected 1 within 1e-6"
                )
        if self.parents[0] != -1:
            raise ModelLoadError("parents[0] must be -1 (root)")
        for j in range(1, k):
            if not 0 <= self.parents[j] < j:
                raise ModelLoadError(
                    f"parents[{j}] = {self.parents[j]} does not precede its child; "
                    "joints must be ordered parents-first in a single rooted tree"
                )

    @cached_property
    def sparse_rows(self):
        """(reg_idx, reg_w, skin_idx, skin_w): regressor and skinning rows in
        padded sparse form, precomputed for the forward kernels."""
        return (*_pack_sparse_rows(self.joint_regressor),
                *_pack_sparse_rows(self.skin_weights))

    def shaped_vertices(self, beta: np.ndarray) -> np.ndarray:
        """Rest mesh with blendshapes applied: template + shape_dirs . beta."""
        return self.template + self.shape_dirs @ np.asarray(beta, dtype=np.float64)

    def rest_joints(self, beta: np.ndarray | None = None) -> np.ndarray:
        verts = self.template if beta is None else self.shaped_vertices(beta)
        return self.joint_regressor @ verts


def forward(model: BodyModel, pose: PoseParams, shape: ShapeParams):
    """Pose the model: (pose, shape) -> (mesh (V,3), joints (K,3)).

    Vertices are skinned with per-joint world transforms composed along the
    kinematic tree from the shaped rest pose; returned joints are regressed
    from the posed mesh.
    """
    mesh, joints = forward_batch(model, pose.rot6d[None], shape.beta[None])
    return mesh[0], joints[0]


def forward_batch(model: BodyModel, rot6d: np.ndarray, betas: np.ndarray):
    """Batched forward: rot6d (N,K,6), betas (N,S) -> meshes (N,V,3), joints (N,K,3)."""
    rot6d = np.ascontiguousarray(rot6d, dtype=np.float64)
    betas = np.ascontiguousarray(betas, dtype=np.float64)
    if rot6d.ndim != 3 or rot6d.shape[1] != model.n_joints or rot6d.shape[2] != 6:
        raise ValueError(
            f"pose batch must be (N, {model.n_joints}, 6), got {rot6d.shape}"
        )
    if betas.ndim != 2 or betas.shape[1] != model.shape_dirs.shape[2]:
        raise ValueError(
            f"shape batch must be (N, {model.shape_dirs.shape[2]}), got {betas.shape}"
        )
    if rot6d.shape[0] != betas.shape[0]:
        raise ValueError("pose and shape batch sizes differ")
    if not np.isfinite(betas).all():
        raise ValueError("shape batch contains non-finite values")
    reg_idx, reg_w, skin_idx, skin_w = model.sparse_rows
    mesh, joints, bad = kernels().body_forward(
        model.template,
        model.shape_dirs,
        reg_idx,
        reg_w,
        model.parents,
        skin_idx,
        skin_w,
        betas,
        rot6d,
    )
    if bad != -1:
        n, j = divmod(int(bad), model.n_joints)
        raise DegenerateRotationError(
            f"degenerate 6D rotation at batch item {n}, joint {j}"
        )
    return mesh, joints


def _pack_sparse_rows(mat: np.ndarray):
    """Pad each row's nonzeros into (indices, weights) arrays of equal width."""
    counts = np.count_nonzero(mat, axis=1)
    width = max(int(counts.max()), 1)
    idx = np.zeros((mat.shape[0], width), dtype=np.int64)
    w = np.zeros((mat.shape[0], width))
    for r in range(mat.shape[0]):
        nz = np.flatnonzero(mat[r])
        idx[r, : nz.size] = nz
        w[r, : nz.size] = mat[r, nz]
    return idx, w


# ---------------------------------------------------------------------------
# Toy model generation and container I/O
# ---------------------------------------------------------------------------


def _quantize(arr: np.ndarray) -> np.ndarray:
    """Round to float32-representable values (kept as float64 in memory)."""
    return arr.astype(np.float32).astype(np.float64)


def _quantize_rows_normalized(arr: np.ndarray) -> np.ndarray:
    """Quantize to f32 values whose exact row sums stay within ~1 ulp of 1.

    The largest entry of each row is recomputed as f32(1 - sum(others)) so
    normalization survives the float32 container round trip.
    """
    q = arr.astype(np.float32)
    out = q.astype(np.float64)
    for r in range(out.shape[0]):
        j = int(np.argmax(out[r]))
        rest = out[r].sum() - out[r, j]
        out[r, j] = np.float64(np.float32(1.0 - rest))
    return out


def make_toy_model(v_count: int, k_count: int, seed: int) -> BodyModel:
    """Deterministic synthetic body model standing in for licensed weights.

    Vertices form blobs around a humanoid T-pose skeleton (torso joints at
    the documented indices for k_count >= 18); each vertex is skinned to its
    anchor joint plus that joint's parent, and each joint is regressed from
    its anchor blob. Requires v_count >= 4 * k_count and k_count >= 2.
    """
    if k_count < 2:
        raise ValueError(f"k_count must be >= 2, got {k_count}")
    if v_count < 4 * k_count:
        raise ValueError(f"v_count must be >= 4 * k_count, got {v_count} < {4 * k_count}")
    rng = np.random.default_rng(seed)

    k22 = min(k_count, DEFAULT_NUM_JOINTS)
    joint_pos = _REST_JOINTS_22[:k22].copy()
    parents = _PARENTS_22[:k22].copy()
    if k_count > DEFAULT_NUM_JOINTS:
        extra = k_count - DEFAULT_NUM_JOINTS
        extra_parents = rng.integers(0, DEFAULT_NUM_JOINTS, size=extra)
        extra_pos = joint_pos[extra_parents] + rng.normal(scale=0.08, size=(extra, 3))
        joint_pos = np.vstack([joint_pos, extra_pos])
        parents = np.concatenate([parents, extra_parents.astype(np.int64)])

    anchors = np.arange(v_count) % k_count
    template = joint_pos[anchors] + rng.normal(scale=0.06, size=(v_count, 3))
    shape_dirs = rng.normal(scale=0.02, size=(v_count, 3, NUM_SHAPE_COEFFS))

    skin = np.zeros((v_count, k_count))
    w_anchor = 0.65 + 0.25 * rng.random(v_count)
    for vi in range(v_count):
        a = anchors[vi]
        if parents[a] < 0:
            skin[vi, a] = 1.0
        else:
            skin[vi, a] = w_anchor[vi]
            skin[vi, parents[a]] = 1.0 - w_anchor[vi]

    regressor = np.zeros((k_count, v_count))
    for ki in range(k_count):
        members = np.flatnonzero(anchors == ki)
        regressor[ki, members] = 1.0 / len(members)

    model = BodyModel(
        template=_quantize(template),
        shape_dirs=_quantize(shape_dirs),
        joint_regressor=_quantize_rows_normalized(regressor),
        parents=parents,
        skin_weights=_quantize_rows_normalized(skin),
    )
    model.validate()
    return model


def save_model(path_or_file, model: BodyModel) -> None:
    """Write a model to the RMTF container (parents stored as f32, -1 = root)."""
    rmtf.write_tensors(
        path_or_file,
        {
            "template": model.template,
            "shape_dirs": model.shape_dirs,
            "joint_regressor": model.joint_regressor,
            "parents": model.parents.astype(np.float64),
            "skin_weights": model.skin_weights,
        },
    )


def load_model(path_or_file) -> BodyModel:
    """Load and validate a model; raises ModelLoadError on any defect."""
    entries = rmtf.read_tensors(path_or_file)
    missing = [name for name in _MODEL_ENTRIES if name not in entries]
    if missing:
        raise ModelLoadError(f"model file is missing tensors: {', '.join(missing)}")
    parents_f = entries["parents"].astype(np.float64)
    parents = np.rint(parents_f).astype(np.int64)
    if np.any(np.abs(parents_f - parents) > 1e-3):
        raise ModelLoadError("parents entry holds non-integer values")
    model = BodyModel(
        template=entries["template"].astype(np.float64),
        shape_dirs=entries["shape_dirs"].astype(np.float64),
        joint_regressor=entries["joint_regressor"].astype(np.float64),
        parents=parents,
        skin_weights=entries["skin_weights"].astype(np.float64),
    )
    model.validate()
    return model
