"""Evaluation metrics: MPJPE, PMPJPE, PVE, PCK/AUC, MPJAE, PA-MPJAE, AP@0.5.

Position metrics take millimeter inputs that the caller has already
root-centered (pelvis at the origin); `root_center` is the helper for that.
Angle metrics work on per-joint rotation matrices. AP@0.5 matches 2D
skeletons greedily by object-keypoint similarity.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .losses import procrustes_align

PCK_THRESHOLD_MM = 150.0
AUC_GRID_MM = np.arange(0.0, 155.0, 5.0)  # 0, 5, ..., 150
DEFAULT_OKS_SIGMA = 0.05


@dataclass
class EvalResult:
    """Aggregate metric values for a set of matched people."""

    mpjpe: float
    pmpjpe: float
    pve: float
    pck: float
    auc: float
    mpjae: float
    pa_mpjae: float
    ap50: float

    def as_dict(self) -> dict:
        return {
            "mpjpe_mm": self.mpjpe,
            "pmpjpe_mm": self.pmpjpe,
            "pve_mm": self.pve,
            "pck": self.pck,
            "auc": self.auc,
            "mpjae_deg": self.mpjae,
            "pa_mpjae_deg": self.pa_mpjae,
            "ap50": self.ap50,
        }


def root_center(points: np.ndarray, root_index: int = 0) -> np.ndarray:
    """Translate so the root joint (or a given reference row) sits at the origin."""
    points = np.asarray(points, dtype=np.float64)
    return points - points[..., root_index : root_index + 1, :]


def mpjpe(pred: np.ndarray, gt: np.ndarray) -> float:
    """Mean per-joint Euclidean distance (inputs already root-centered, mm)."""
    pred = np.asarray(pred, dtype=np.float64)
    gt = np.asarray(gt, dtype=np.float64)
    if pred.shape != gt.shape:
        raise ValueError(f"joint sets differ in shape: {pred.shape} vs {gt.shape}")
    return float(np.mean(np.linalg.norm(pred - gt, axis=-1)))


def pmpjpe(pred: np.ndarray, gt: np.ndarray) -> float:
    """MPJPE after similarity Procrustes alignment of pred onto gt."""
    res = procrustes_align(pred, gt)
    return mpjpe(res.aligned, gt)


def pve(pred_vertices: np.ndarray, gt_vertices: np.ndarray) -> float:
    """Mean per-vertex distance (inputs root-centered, mm)."""
    return mpjpe(pred_vertices, gt_vertices)


def pck_auc(
    pred: np.ndarray,
    gt: np.ndarray,
    thresholds: np.ndarray | None = None,
    pck_threshold: float = PCK_THRESHOLD_MM,
):
    """Fraction of joints within pck_threshold, and the mean over a grid.

    A joint counts as correct when its error is within the threshold
    (inclusive, so a perfect prediction scores 1 on every grid point).
    Thresholds must be nonempty and ascending; defaults to 0..150 mm step 5.
    """
    if thresholds is None:
        thresholds = AUC_GRID_MM
    thresholds = np.asarray(thresholds, dtype=np.float64).reshape(-1)
    if thresholds.size == 0:
        raise ValueError("threshold grid is empty")
    if np.any(np.diff(thresholds) < 0):
        raise ValueError("threshold grid must be ascending")
    errors = np.linalg.norm(
        np.asarray(pred, dtype=np.float64) - np.asarray(gt, dtype=np.float64), axis=-1
    ).reshape(-1)
    pck = float(np.mean(errors <= pck_threshold))
    auc = float(np.mean([np.mean(errors <= t) for t in thresholds]))
    return pck, auc


def _check_rotations(rots: np.ndarray, name: str) -> np.ndarray:
    rots = np.asarray(rots, dtype=np.float64)
    if rots.ndim != 3 or rots.shape[1:] != (3, 3):
        raise ValueError(f"{name} must be (J, 3, 3), got {rots.shape}")
    gram = np.einsum("jab,jac->jbc", rots, rots)
    if np.max(np.abs(gram - np.eye(3))) > 1e-5:
        raise ValueError(f"{name} contains non-orthonormal matrices")
    return rots


def mpjae(pred_rots: np.ndarray, gt_rots: np.ndarray) -> float:
    """Mean geodesic angle between per-joint rotations, in degrees."""
    pred_rots = _check_rotations(pred_rots, "pred_rots")
    gt_rots = _check_rotations(gt_rots, "gt_rots")
    if pred_rots.shape != gt_rots.shape:
        raise ValueError("rotation sets differ in shape")
    rel = np.einsum("jba,jbc->jac", pred_rots, gt_rots)  # R_p^T R_g
    traces = np.trace(rel, axis1=1, axis2=2)
    cosang = np.clip((traces - 1.0) / 2.0, -1.0, 1.0)
    return float(np.degrees(np.arccos(cosang)).mean())


def pa_mpjae(pred_rots: np.ndarray, gt_rots: np.ndarray, root_index: int = 0) -> float:
    """MPJAE after removing the root joint's relative rotation globally.

    Every predicted rotation is premultiplied by R_g[root] R_p[root]^T, so
    the root contributes zero error and the remaining joints are compared in
    a root-aligned frame.
    """
    pred_rots = _check_rotations(pred_rots, "pred_rots")
    gt_rots = _check_rotations(gt_rots, "gt_rots")
    align = gt_rots[root_index] @ pred_rots[root_index].T
    return mpjae(align[None] @ pred_rots, gt_rots)


# ---------------------------------------------------------------------------
# OKS-based average precision
# ---------------------------------------------------------------------------


def oks_similarity(
    pred_xy: np.ndarray,
    gt_xy: np.ndarray,
    gt_vis: np.ndarray | None = None,
    sigmas: np.ndarray | None = None,
) -> float:
    """Object-keypoint similarity between one predicted and one GT skeleton.

    exp(-d^2 / (2 * area * (2 sigma)^2)) averaged over visible GT joints,
    with area the GT joint bounding-box area (floored at 1) as the object
    scale. 1.0 for a perfect prediction regardless of scale.
    """
    pred_xy = np.asarray(pred_xy, dtype=np.float64)
    gt_xy = np.asarray(gt_xy, dtype=np.float64)
    k = gt_xy.shape[0]
    vis = np.ones(k, dtype=bool) if gt_vis is None else np.asarray(gt_vis, dtype=bool)
    if not vis.any():
        return 0.0
    sig = np.full(k, DEFAULT_OKS_SIGMA) if sigmas is None else np.asarray(sigmas, dtype=np.float64)
    span = gt_xy[vis].max(axis=0) - gt_xy[vis].min(axis=0)
    area = max(float(span[0] * span[1]), 1.0)
    d2 = np.sum((pred_xy - gt_xy) ** 2, axis=-1)
    e = d2 / (2.0 * area * (2.0 * sig) ** 2)
    return float(np.mean(np.exp(-e[vis])))


def ap50(
    pred_scenes,
    gt_scenes,
    sigmas: np.ndarray | None = None,
    oks_threshold: float = 0.5,
) -> float:
    """Average precision at an OKS threshold over a set of scenes.

    pred_scenes: per scene, a tuple (joints (N, K, 2), scores (N,)).
    gt_scenes: per scene, a tuple (joints (M, K, 2), vis (M, K) or None).
    Within each scene predictions greedily claim the best-OKS unmatched GT in
    descending score order; the PR curve over all scenes is integrated with
    all-point interpolation. Both sides empty scores 1.0; predictions with
    no GT anywhere (or none at all with GT present) score 0.0.
    """
    if len(pred_scenes) != len(gt_scenes):
        raise ValueError("prediction and ground-truth scene counts differ")
    records = []  # (score, is_tp), across scenes
    total_gt = 0
    for (pj, scores), (gj, gvis) in zip(pred_scenes, gt_scenes):
        scores = np.asarray(scores, dtype=np.float64).reshape(-1)
        if len(pj) != scores.shape[0]:
            raise ValueError("prediction joints and scores lengths differ")
        m = len(gj)
        total_gt += m
        taken = np.zeros(m, dtype=bool)
        order = np.argsort(-scores, kind="stable")
        for i in order:
            best_j, best_oks = -1, 0.0
            for j in range(m):
                if taken[j]:
                    continue
                vis_j = None if gvis is None else gvis[j]
                val = oks_similarity(pj[i], gj[j], vis_j, sigmas)
                if val > best_oks:
                    best_oks, best_j = val, j
            if best_j >= 0 and best_oks >= oks_threshold:
                taken[best_j] = True
                records.append((float(scores[i]), True))
            else:
                records.append((float(scores[i]), False))
    if total_gt == 0:
        return 1.0 if not records else 0.0
    if not records:
        return 0.0
    records.sort(key=lambda rec: -rec[0])
    tps = np.cumsum([1.0 if tp else 0.0 for _, tp in records])
    fps = np.cumsum([0.0 if tp else 1.0 for _, tp in records])
    recalls = tps / total_gt
    precisions = tps / (tps + fps)
    # All-point interpolation: running max of precision from the right.
    interp = np.maximum.accumulate(precisions[::-1])[::-1]
    ap = 0.0
    prev_r = 0.0
    for r, p in zip(recalls, interp):
        if r > prev_r:
            ap += (r - prev_r) * p
            prev_r = r
    return float(ap)
