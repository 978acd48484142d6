"""Inference-side parsing: peaks from the center heatmap, parameters from the
mesh parameter map, greedy ground-truth matching, and depth ordering.

Map cells are addressed as (row, col); the decode stage is deterministic,
including plateau tie-breaking (lexicographically smallest cell wins) and
equal-confidence ordering.
"""

from __future__ import annotations

import functools
from dataclasses import dataclass

import numpy as np

from .backend import kernels
from .body_model import BodyModel, PoseParams, ShapeParams, forward_batch
from .camera import CameraParams, project
from .center_map import CenterHeatmap

DEFAULT_CONF_THRESHOLD = 0.25
DEFAULT_MAX_PEOPLE = 64
DEPTH_SCALE_EPS = 0.1

CAM_CHANNELS = 3
SHAPE_CHANNELS = 10


@dataclass
class MeshParamMap:
    """Stacked camera + pose + shape channels, one parameter vector per cell.

    Channels: [0:3] camera (s, tx, ty), [3:3+6K] per-joint 6D pose, last 10
    shape coefficients. 145 channels for the default 22 joints.
    """

    values: np.ndarray  # (C, H, W)

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.ndim != 3:
            raise ValueError(f"param map must be (C, H, W), got {self.values.shape}")
        extra = self.values.shape[0] - CAM_CHANNELS - SHAPE_CHANNELS
        if extra <= 0 or extra % 6 != 0:
            raise ValueError(
                f"channel count {self.values.shape[0]} is not 3 + 6*K + 10 for integer K"
            )

    @property
    def n_joints(self) -> int:
        return (self.values.shape[0] - CAM_CHANNELS - SHAPE_CHANNELS) // 6

    @property
    def map_shape(self):
        return self.values.shape[1:]


@dataclass
class Detection:
    """One decoded person: peak cell, confidence, and sampled parameters."""

    center: tuple[int, int]  # (row, col)
    confidence: float
    cam: CameraParams
    pose: PoseParams
    shape: ShapeParams


@dataclass
class DecodedPerson:
    """Detection plus the derived mesh, 3D joints, projected 2D joints, and
    its position in the front-to-back depth ordering (0 = front)."""

    detection: Detection
    mesh: np.ndarray  # (V, 3)
    joints3d: np.ndarray  # (K, 3)
    joints2d: np.ndarray  # (K, 2) normalized image coords
    depth_rank: int


def parse_peaks(
    cm,
    conf_threshold: float = DEFAULT_CONF_THRESHOLD,
    max_people: int = DEFAULT_MAX_PEOPLE,
):
    """Extract local maxima of the center heatmap.

    A cell is a peak iff it equals the 3x3 max-pool at its position and its
    value is strictly above conf_threshold; within a flat plateau only the
    lexicographically smallest (row, col) survives. Peaks are thresholded
    first, then sorted by confidence descending (ties by (row, col)) and
    capped at max_people. Returns (centers (n, 2) int64, confidences (n,)).
    """
    values = cm.values if isinstance(cm, CenterHeatmap) else np.asarray(cm, dtype=np.float64)
    mask = kernels().peak_mask(values).astype(bool)
    mask &= values > conf_threshold
    rows, cols = np.nonzero(mask)
    confs = values[rows, cols]
    order = np.lexsort((cols, rows, -confs))[:max_people]
    centers = np.stack([rows[order], cols[order]], axis=1).astype(np.int64)
    return centers, confs[order]


def sample_params(pm: MeshParamMap, center):
    """Read the parameter vector at one cell: (CameraParams, PoseParams, ShapeParams).

    Cell-exact (no interpolation); raises IndexError outside the map.
    """
    row, col = int(center[0]), int(center[1])
    _, h, w = pm.values.shape
    if not (0 <= row < h and 0 <= col < w):
        raise IndexError(f"center ({row}, {col}) outside {h}x{w} map")
    vec = pm.values[:, row, col]
    return _split_vector(vec, pm.n_joints)


def _split_vector(vec: np.ndarray, n_joints: int):
    cam = CameraParams.from_array(vec[:CAM_CHANNELS])
    pose = PoseParams(vec[CAM_CHANNELS : CAM_CHANNELS + 6 * n_joints].reshape(n_joints, 6))
    shape = ShapeParams(vec[CAM_CHANNELS + 6 * n_joints :])
    return cam, pose, shape


@dataclass
class MatchResult:
    """Greedy one-to-one assignment between predicted and GT centers."""

    pairs: list  # (pred_index, gt_index, distance), in match order
    unmatched_pred: list  # false positives
    unmatched_gt: list  # missed people


def match_to_gt(pred_centers, gt_centers) -> MatchResult:
    """Greedy global-nearest matching by L2 distance.

    Repeatedly takes the smallest remaining predicted-to-GT distance among
    unmatched items (ties by smaller pred then gt index). Requires a
    nonempty GT list.
    """
    pred = np.asarray(pred_centers, dtype=np.float64).reshape(-1, 2)
    gt = np.asarray(gt_centers, dtype=np.float64).reshape(-1, 2)
    if gt.shape[0] == 0:
        raise ValueError("ground-truth center list is empty")
    if pred.shape[0] == 0:
        return MatchResult([], [], list(range(gt.shape[0])))
    dists = np.linalg.norm(pred[:, None, :] - gt[None, :, :], axis=2)
    pairs = []
    free_pred = set(range(pred.shape[0]))
    free_gt = set(range(gt.shape[0]))
    order = sorted(
        ((dists[i, j], i, j) for i in range(pred.shape[0]) for j in range(gt.shape[0]))
    )
    for dist, i, j in order:
        if i in free_pred and j in free_gt:
            pairs.append((i, j, float(dist)))
            free_pred.remove(i)
            free_gt.remove(j)
            if not free_pred or not free_gt:
                break
    return MatchResult(pairs, sorted(free_pred), sorted(free_gt))


def depth_order(detections: list[Detection], scale_eps: float = DEPTH_SCALE_EPS):
    """Order detections front to back.

    A pair with clearly different camera scales (relative gap above
    scale_eps) is ordered by scale descending; otherwise the higher center
    confidence goes in front. Returns a new list.
    """

    def cmp(a: Detection, b: Detection) -> int:
        sa, sb = a.cam.s, b.cam.s
        if abs(sa - sb) > scale_eps * max(sa, sb):
            return -1 if sa > sb else 1
        if a.confidence != b.confidence:
            return -1 if a.confidence > b.confidence else 1
        return 0

    return sorted(detections, key=functools.cmp_to_key(cmp))


_PAD_VECTORS: dict[tuple[int, int], np.ndarray] = {}


def _pad_vector(n_joints: int, n_channels: int) -> np.ndarray:
    """Parameter vector for unused decode slots: unit camera, identity pose."""
    key = (n_joints, n_channels)
    if key not in _PAD_VECTORS:
        vec = np.zeros(n_channels)
        vec[0] = 1.0
        pose = np.zeros((n_joints, 6))
        pose[:, 0] = 1.0
        pose[:, 4] = 1.0
        vec[CAM_CHANNELS : CAM_CHANNELS + 6 * n_joints] = pose.reshape(-1)
        _PAD_VECTORS[key] = vec
    return _PAD_VECTORS[key]


def decode_scene(
    cm,
    pm: MeshParamMap,
    body: BodyModel,
    conf_threshold: float = DEFAULT_CONF_THRESHOLD,
    max_people: int = DEFAULT_MAX_PEOPLE,
) -> list[DecodedPerson]:
    """Full decode: peaks -> parameters -> body forward -> 2D projection.

    Returns one DecodedPerson per peak, sorted by confidence descending,
    with depth_rank assigned from the depth ordering. The batched math is
    always sized by the max_people budget (unused slots carry identity
    padding and are discarded), so decode latency is set by the budget and
    the map size, not by how many people are in the scene.
    """
    values = cm.values if isinstance(cm, CenterHeatmap) else np.asarray(cm, dtype=np.float64)
    if values.shape != pm.map_shape:
        raise ValueError(f"heatmap {values.shape} and param map {pm.map_shape} disagree")
    if pm.n_joints != body.n_joints:
        raise ValueError(
            f"param map encodes {pm.n_joints} joints but the body model has {body.n_joints}"
        )
    centers, confs = parse_peaks(values, conf_threshold, max_people)
    n = centers.shape[0]
    if n == 0:
        return []

    k = pm.n_joints
    batch = min(max_people, values.size)  # a map cannot hold more peaks than cells
    vectors = np.tile(_pad_vector(k, pm.values.shape[0]), (batch, 1))
    vectors[:n] = pm.values[:, centers[:, 0], centers[:, 1]].T
    cams = vectors[:, :CAM_CHANNELS]
    pose6d = vectors[:, CAM_CHANNELS : CAM_CHANNELS + 6 * k].reshape(batch, k, 6)
    betas = vectors[:, CAM_CHANNELS + 6 * k :]
    meshes, joints3d = forward_batch(body, pose6d, betas)
    joints2d = project(joints3d, cams)

    detections = [
        Detection(
            center=(int(centers[i, 0]), int(centers[i, 1])),
            confidence=float(confs[i]),
            cam=CameraParams(float(cams[i, 0]), float(cams[i, 1]), float(cams[i, 2])),
            pose=PoseParams(pose6d[i]),
            shape=ShapeParams(betas[i]),
        )
        for i in range(n)
    ]
    by_depth = depth_order(detections)
    rank_of = {id(det): r for r, det in enumerate(by_depth)}
    return [
        DecodedPerson(
            detection=det,
            mesh=meshes[i],
            joints3d=joints3d[i],
            joints2d=joints2d[i],
            depth_rank=rank_of[id(det)],
        )
        for i, det in enumerate(detections)
    ]


def people_to_json(decoded: list[DecodedPerson]) -> dict:
    """Detections as the documented JSON payload."""
    return {
        "people": [
            {
                "center": [int(p.detection.center[0]), int(p.detection.center[1])],
                "conf": p.detection.confidence,
                "cam": p.detection.cam.as_array().tolist(),
                "pose6d": p.detection.pose.rot6d.reshape(-1).tolist(),
                "shape": p.detection.shape.beta.tolist(),
                "depth_rank": p.depth_rank,
            }
            for p in decoded
        ]
    }


def people_from_json(payload: dict) -> list[dict]:
    """Parse the JSON payload back to per-person dicts with array fields."""
    people = []
    for entry in payload["people"]:
        pose = np.asarray(entry["pose6d"], dtype=np.float64)
        people.append(
            {
                "center": (int(entry["center"][0]), int(entry["center"][1])),
                "conf": float(entry["conf"]),
                "cam": CameraParams.from_array(entry["cam"]),
                "pose": PoseParams(pose.reshape(-1, 6)),
                "shape": ShapeParams(np.asarray(entry["shape"], dtype=np.float64)),
                "depth_rank": int(entry["depth_rank"]),
            }
        )
    return people
