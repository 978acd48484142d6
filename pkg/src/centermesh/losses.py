"""Training objective: focal center loss plus the six-term mesh parameter loss.

Every term is a plain forward function with an analytic-gradient companion so
the gradients can be verified against central finite differences. Squared
(L2) errors use the mean over all entries, which makes the Procrustes-aligned
joint loss provably bounded by the root-centered one.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import rmtf
from .backend import kernels
from .body_model import rot6d_backward, rot6d_to_matrix_batch
from .errors import (
    DegenerateGeometryError,
    EmptySupervisionError,
    NoPositiveCellsError,
)

FOCAL_EPS = 1e-4


@dataclass
class LossWeights:
    """Term weights; defaults keep the weighted terms at comparable magnitude."""

    center: float = 200.0
    pose: float = 60.0
    shape: float = 1.0
    j3d: float = 360.0
    paj3d: float = 400.0
    pj2d: float = 420.0
    prior: float = 1.6

    def __post_init__(self):
        for name in ("center", "pose", "shape", "j3d", "paj3d", "pj2d", "prior"):
            v = getattr(self, name)
            if not np.isfinite(v) or v < 0:
                raise ValueError(f"loss weight {name} must be finite and >= 0")


# ---------------------------------------------------------------------------
# Focal body-center loss
# ---------------------------------------------------------------------------


def _heatmap_values(hm) -> np.ndarray:
    values = getattr(hm, "values", hm)
    return np.asarray(values, dtype=np.float64)


def focal_center_loss(pred, gt, w_c: float = 200.0, eps: float = FOCAL_EPS) -> float:
    """Focal loss between predicted and ground-truth center heatmaps.

    Cells where gt >= 1 are positives; all others are negatives down-weighted
    by (1 - gt)^4. Predictions are clamped to [eps, 1-eps] before the logs.
    The sum is normalized by the positive count and scaled by w_c.
    """
    p = _heatmap_values(pred)
    g = _heatmap_values(gt)
    if p.shape != g.shape:
        raise ValueError(f"heatmap shapes differ: {p.shape} vs {g.shape}")
    l_pos, l_neg, n_pos = kernels().focal_sums(p, g, eps)
    if n_pos == 0:
        raise NoPositiveCellsError("ground-truth heatmap has no cell >= 1")
    return float(-(l_pos + l_neg) / n_pos * w_c)


def focal_center_loss_grad(pred, gt, w_c: float = 200.0, eps: float = FOCAL_EPS) -> np.ndarray:
    """Gradient of focal_center_loss w.r.t. the predicted map (zero where clamped)."""
    p = _heatmap_values(pred)
    g = _heatmap_values(gt)
    if not float(np.count_nonzero(g >= 1.0)):
        raise NoPositiveCellsError("ground-truth heatmap has no cell >= 1")
    return kernels().focal_grad(p, g, eps) * w_c


# ---------------------------------------------------------------------------
# Procrustes alignment
# ---------------------------------------------------------------------------


@dataclass
class ProcrustesResult:
    scale: float
    rotation: np.ndarray  # (3, 3), proper
    translation: np.ndarray  # (3,)
    aligned: np.ndarray  # (K, 3) = scale * X @ rotation.T + translation


def procrustes_align(x: np.ndarray, y: np.ndarray) -> ProcrustesResult:
    """Similarity transform minimizing ||s R x_i + t - y_i||^2 with det(R) = +1."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape != y.shape or x.ndim != 2 or x.shape[1] != 3:
        raise ValueError(f"point sets must both be (K, 3), got {x.shape} and {y.shape}")
    if x.shape[0] < 3:
        raise ValueError("need at least 3 points for alignment")
    mu_x = x.mean(axis=0)
    mu_y = y.mean(axis=0)
    xc = x - mu_x
    yc = y - mu_y
    var_x = float(np.sum(xc * xc))
    if var_x < 1e-12 or float(np.sum(yc * yc)) < 1e-12:
        raise DegenerateGeometryError("point set is (near) coincident; alignment undefined")
    cov = xc.T @ yc  # maximize tr(R @ cov)
    u, svals, vt = np.linalg.svd(cov)
    d = np.sign(np.linalg.det(vt.T @ u.T))
    if d == 0:
        d = 1.0
    signs = np.array([1.0, 1.0, d])
    rot = vt.T @ np.diag(signs) @ u.T
    scale = float(np.sum(svals * signs)) / var_x
    translation = mu_y - scale * rot @ mu_x
    aligned = scale * x @ rot.T + translation
    return ProcrustesResult(scale, rot, translation, aligned)


# ---------------------------------------------------------------------------
# Gaussian-mixture pose prior
# ---------------------------------------------------------------------------


class GmmPrior:
    """Mixture-of-Gaussians prior over the flattened body pose (no global joint).

    The loss is the negative log of the best weighted component density (the
    usual single-component surrogate for -log sum), so it is exact for one
    component and an upper bound otherwise.
    """

    def __init__(self, weights, means, covariances):
        self.weights = np.asarray(weights, dtype=np.float64).reshape(-1)
        self.means = np.asarray(means, dtype=np.float64)
        self.covariances = np.asarray(covariances, dtype=np.float64)
        n = self.weights.shape[0]
        if self.means.ndim != 2 or self.means.shape[0] != n:
            raise ValueError("means must be (n_components, dim)")
        dim = self.means.shape[1]
        if self.covariances.shape != (n, dim, dim):
            raise ValueError("covariances must be (n_components, dim, dim)")
        if abs(self.weights.sum() - 1.0) > 1e-6 or np.any(self.weights <= 0):
            raise ValueError("component weights must be positive and sum to 1")
        if not np.allclose(self.covariances, np.swapaxes(self.covariances, 1, 2), atol=1e-8):
            raise ValueError("covariances must be symmetric")
        try:
            self._chol = np.linalg.cholesky(self.covariances)
        except np.linalg.LinAlgError as exc:
            raise ValueError(f"covariance is not positive-definite: {exc}") from exc
        logdets = 2.0 * np.sum(np.log(np.diagonal(self._chol, axis1=1, axis2=2)), axis=1)
        self._consts = (
            -np.log(self.weights) + 0.5 * logdets + 0.5 * dim * np.log(2.0 * np.pi)
        )

    @property
    def dim(self) -> int:
        return self.means.shape[1]

    @property
    def n_components(self) -> int:
        return self.weights.shape[0]

    def nll(self, theta: np.ndarray):
        """Negative log density surrogate at theta: (value, component index)."""
        theta = np.asarray(theta, dtype=np.float64).reshape(-1)
        if theta.shape[0] != self.dim:
            raise ValueError(f"theta has dim {theta.shape[0]}, prior expects {self.dim}")
        costs = np.empty(self.n_components)
        for j in range(self.n_components):
            z = np.linalg.solve(self._chol[j], theta - self.means[j])
            costs[j] = 0.5 * float(z @ z) + self._consts[j]
        best = int(np.argmin(costs))
        return float(costs[best]), best

    def nll_grad(self, theta: np.ndarray) -> np.ndarray:
        theta = np.asarray(theta, dtype=np.float64).reshape(-1)
        _, j = self.nll(theta)
        z = np.linalg.solve(self._chol[j], theta - self.means[j])
        return np.linalg.solve(self._chol[j].T, z)

    @classmethod
    def standard_normal(cls, dim: int) -> "GmmPrior":
        """Single-component unit-Gaussian fallback used in tests."""
        return cls(np.ones(1), np.zeros((1, dim)), np.eye(dim)[None])

    @classmethod
    def from_rmtf(cls, path_or_file) -> "GmmPrior":
        entries = rmtf.read_tensors(path_or_file)
        for name in ("weights", "means", "covariances"):
            if name not in entries:
                raise ValueError(f"prior file is missing entry {name!r}")
        return cls(entries["weights"], entries["means"], entries["covariances"])

    def to_rmtf(self, path_or_file) -> None:
        rmtf.write_tensors(
            path_or_file,
            {"weights": self.weights, "means": self.means, "covariances": self.covariances},
        )


def gmm_prior_loss(pose_rot6d: np.ndarray, beta: np.ndarray, prior: GmmPrior) -> float:
    """Pose-plausibility NLL on the body joints plus the squared shape magnitude."""
    pose_rot6d = np.asarray(pose_rot6d, dtype=np.float64)
    body = pose_rot6d[1:].reshape(-1)
    value, _ = prior.nll(body)
    return value + float(np.sum(np.asarray(beta, dtype=np.float64) ** 2))


def gmm_prior_loss_grad(pose_rot6d: np.ndarray, beta: np.ndarray, prior: GmmPrior):
    """Gradients of gmm_prior_loss w.r.t. (pose_rot6d, beta)."""
    pose_rot6d = np.asarray(pose_rot6d, dtype=np.float64)
    grad_pose = np.zeros_like(pose_rot6d)
    grad_pose[1:] = prior.nll_grad(pose_rot6d[1:].reshape(-1)).reshape(
        pose_rot6d.shape[0] - 1, 6
    )
    return grad_pose, 2.0 * np.asarray(beta, dtype=np.float64)


# ---------------------------------------------------------------------------
# Individual mesh-parameter terms (value + analytic gradient)
# ---------------------------------------------------------------------------


def pose_loss(pred_rot6d: np.ndarray, gt_rot6d: np.ndarray) -> float:
    """Mean squared difference of per-joint rotations in matrix form."""
    rp = rot6d_to_matrix_batch(np.asarray(pred_rot6d, dtype=np.float64))
    rg = rot6d_to_matrix_batch(np.asarray(gt_rot6d, dtype=np.float64))
    return float(np.mean((rp - rg) ** 2))


def pose_loss_grad(pred_rot6d: np.ndarray, gt_rot6d: np.ndarray) -> np.ndarray:
    pred_rot6d = np.asarray(pred_rot6d, dtype=np.float64)
    rp = rot6d_to_matrix_batch(pred_rot6d)
    rg = rot6d_to_matrix_batch(np.asarray(gt_rot6d, dtype=np.float64))
    return rot6d_backward(pred_rot6d, 2.0 * (rp - rg) / rp.size)


def shape_loss(pred_beta: np.ndarray, gt_beta: np.ndarray) -> float:
    diff = np.asarray(pred_beta, dtype=np.float64) - np.asarray(gt_beta, dtype=np.float64)
    return float(np.mean(diff**2))


def shape_loss_grad(pred_beta: np.ndarray, gt_beta: np.ndarray) -> np.ndarray:
    diff = np.asarray(pred_beta, dtype=np.float64) - np.asarray(gt_beta, dtype=np.float64)
    return 2.0 * diff / diff.size


def joint3d_loss(pred_j3d: np.ndarray, gt_j3d: np.ndarray, root_index: int = 0) -> float:
    """Mean squared 3D joint difference after centering both at the root joint."""
    p = np.asarray(pred_j3d, dtype=np.float64)
    g = np.asarray(gt_j3d, dtype=np.float64)
    diff = (p - p[root_index]) - (g - g[root_index])
    return float(np.mean(diff**2))


def joint3d_loss_grad(pred_j3d: np.ndarray, gt_j3d: np.ndarray, root_index: int = 0) -> np.ndarray:
    p = np.asarray(pred_j3d, dtype=np.float64)
    g = np.asarray(gt_j3d, dtype=np.float64)
    e = 2.0 * ((p - p[root_index]) - (g - g[root_index])) / p.size
    grad = e.copy()
    grad[root_index] -= e.sum(axis=0)
    return grad


def pa_joint3d_loss(pred_j3d: np.ndarray, gt_j3d: np.ndarray) -> float:
    """Mean squared 3D joint difference after Procrustes alignment."""
    res = procrustes_align(pred_j3d, gt_j3d)
    return float(np.mean((res.aligned - np.asarray(gt_j3d, dtype=np.float64)) ** 2))


def pa_joint3d_loss_grad(pred_j3d: np.ndarray, gt_j3d: np.ndarray) -> np.ndarray:
    # Envelope theorem: the optimal (s, R, t) is stationary, so only the
    # direct dependence on the points contributes.
    p = np.asarray(pred_j3d, dtype=np.float64)
    g = np.asarray(gt_j3d, dtype=np.float64)
    res = procrustes_align(p, g)
    e = 2.0 * (res.aligned - g) / p.size
    return res.scale * e @ res.rotation


def proj2d_loss(pred_j2d: np.ndarray, gt_j2d: np.ndarray, visibility=None) -> float:
    """Mean squared 2D joint difference over visible joints only."""
    p = np.asarray(pred_j2d, dtype=np.float64)
    g = np.asarray(gt_j2d, dtype=np.float64)
    vis = _vis_mask(p, visibility)
    n_vis = int(np.count_nonzero(vis))
    if n_vis == 0:
        raise ValueError("no visible joints for the 2D projection loss")
    diff = p[vis] - g[vis]
    return float(np.sum(diff**2) / (2.0 * n_vis))


def proj2d_loss_grad(pred_j2d: np.ndarray, gt_j2d: np.ndarray, visibility=None) -> np.ndarray:
    p = np.asarray(pred_j2d, dtype=np.float64)
    g = np.asarray(gt_j2d, dtype=np.float64)
    vis = _vis_mask(p, visibility)
    n_vis = int(np.count_nonzero(vis))
    grad = np.zeros_like(p)
    grad[vis] = (p[vis] - g[vis]) / n_vis
    return grad


def _vis_mask(pred: np.ndarray, visibility) -> np.ndarray:
    if visibility is None:
        return np.ones(pred.shape[0], dtype=bool)
    return np.asarray(visibility, dtype=bool).reshape(-1)


# ---------------------------------------------------------------------------
# Combined mesh parameter loss
# ---------------------------------------------------------------------------


@dataclass
class PersonPrediction:
    """Prediction side of one matched person."""

    rot6d: np.ndarray  # (J, 6)
    beta: np.ndarray  # (S,)
    joints3d: np.ndarray  # (K, 3)
    joints2d: np.ndarray  # (K, 2)


@dataclass
class SupervisionTargets:
    """Ground truth for one matched person; None marks a term unavailable."""

    rot6d: np.ndarray | None = None
    beta: np.ndarray | None = None
    joints3d: np.ndarray | None = None
    joints2d: np.ndarray | None = None
    joints2d_vis: np.ndarray | None = None


@dataclass
class MeshParamLossResult:
    total: float
    terms: dict = field(default_factory=dict)  # raw (unweighted) values

    def weighted(self, weights: LossWeights) -> dict:
        return {name: getattr(weights, name) * value for name, value in self.terms.items()}


def mesh_param_loss(
    pred: PersonPrediction,
    gt: SupervisionTargets,
    weights: LossWeights | None = None,
    prior: GmmPrior | None = None,
    root_index: int = 0,
) -> MeshParamLossResult:
    """Weighted sum of the available mesh-parameter terms for one matched pair.

    Terms whose ground truth is marked unavailable contribute nothing; the
    prior term needs no ground truth and is active whenever a prior is given.
    Raises EmptySupervisionError when no term at all can be computed.
    """
    weights = weights or LossWeights()
    terms: dict[str, float] = {}
    if gt.rot6d is not None:
        terms["pose"] = pose_loss(pred.rot6d, gt.rot6d)
    if gt.beta is not None:
        terms["shape"] = shape_loss(pred.beta, gt.beta)
    if gt.joints3d is not None:
        terms["j3d"] = joint3d_loss(pred.joints3d, gt.joints3d, root_index)
        terms["paj3d"] = pa_joint3d_loss(pred.joints3d, gt.joints3d)
    if gt.joints2d is not None:
        vis = gt.joints2d_vis
        if vis is None or np.asarray(vis, dtype=bool).any():
            terms["pj2d"] = proj2d_loss(pred.joints2d, gt.joints2d, vis)
    if prior is not None:
        terms["prior"] = gmm_prior_loss(pred.rot6d, pred.beta, prior)
    if not terms:
        raise EmptySupervisionError("no ground-truth term available for this person")
    total = sum(getattr(weights, name) * value for name, value in terms.items())
    return MeshParamLossResult(total=float(total), terms=terms)
