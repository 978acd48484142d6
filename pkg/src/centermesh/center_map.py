"""Ground-truth body-center heatmap construction and collision-aware repulsion.

The body center of a person is the mean of its visible torso joints (neck,
shoulders, pelvis, hips), falling back to the mean of all visible joints.
Each center becomes a truncated Gaussian peak whose kernel size grows with
the person's bounding-box diagonal; overlapping peaks composite by max.
Centers that sit too close are pushed apart by a pairwise repulsion field
before rendering, which keeps severely overlapping people distinguishable.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .backend import kernels
from .body_model import TORSO_JOINT_INDICES
from .errors import NoVisibleJointsError

DEFAULT_MAP_SIZE = 64
KERNEL_MIN = 2.0  # k_l: kernel size of a zero-size person
KERNEL_RANGE = 5.0  # k_r: extra kernel size at full-image scale
DEFAULT_CAR_GAMMA = 0.2


@dataclass
class Joints2D:
    """2D joints in heatmap pixels (x along columns) with a visibility mask."""

    positions: np.ndarray  # (K, 2)
    visibility: np.ndarray  # (K,) bool

    def __post_init__(self):
        self.positions = np.asarray(self.positions, dtype=np.float64).reshape(-1, 2)
        self.visibility = np.asarray(self.visibility, dtype=bool).reshape(-1)
        if self.positions.shape[0] != self.visibility.shape[0]:
            raise ValueError("positions and visibility lengths differ")

    def visible_positions(self) -> np.ndarray:
        return self.positions[self.visibility]


@dataclass
class CenterSpec:
    """One person's rendering spec: center (x, y) px, kernel size, bbox diagonal."""

    center: np.ndarray
    kernel_k: float
    bbox_diag: float

    def __post_init__(self):
        self.center = np.asarray(self.center, dtype=np.float64).reshape(2)


@dataclass
class CenterHeatmap:
    """Single-channel probability map; ground-truth peaks are exactly 1."""

    values: np.ndarray  # (H, W) in [0, 1]

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.ndim == 3 and self.values.shape[0] == 1:
            self.values = self.values[0]
        if self.values.ndim != 2:
            raise ValueError(f"heatmap must be (H, W) or (1, H, W), got {self.values.shape}")

    @property
    def shape(self):
        return self.values.shape


def compute_body_center(
    joints: Joints2D, torso_indices=TORSO_JOINT_INDICES
) -> np.ndarray:
    """Mean of visible torso joints; mean of all visible joints as fallback.

    Raises NoVisibleJointsError when nothing is visible.
    """
    vis = joints.visibility
    if not vis.any():
        raise NoVisibleJointsError("person has no visible joints; center undefined")
    torso = [t for t in torso_indices if t < vis.shape[0] and vis[t]]
    if torso:
        return joints.positions[torso].mean(axis=0)
    return joints.positions[vis].mean(axis=0)


def kernel_size(
    bbox_diag: float,
    map_width: int = DEFAULT_MAP_SIZE,
    k_min: float = KERNEL_MIN,
    k_range: float = KERNEL_RANGE,
) -> float:
    """Scale-adaptive Gaussian kernel size k = k_min + ratio^2 * k_range.

    ratio is the bbox diagonal over the map diagonal (sqrt(2) * W), clamped
    to [0, 1], so k stays within [k_min, k_min + k_range].
    """
    if bbox_diag < 0:
        raise ValueError("bbox_diag must be >= 0")
    if map_width <= 0:
        raise ValueError("map_width must be > 0")
    ratio = min(bbox_diag / (np.sqrt(2.0) * map_width), 1.0)
    return k_min + ratio * ratio * k_range


def gauss_sigma(kernel_k: float) -> float:
    """Gaussian sigma for a kernel of size k: (2k + 1) / 6 (radius ~ 3 sigma)."""
    return (2.0 * kernel_k + 1.0) / 6.0


def render_heatmap(
    specs: list[CenterSpec], height: int = DEFAULT_MAP_SIZE, width: int = DEFAULT_MAP_SIZE
) -> CenterHeatmap:
    """Render unnormalized Gaussians, one per spec, max-composited.

    Peaks are centered on the rounded center cell (so each peak cell is
    exactly 1) and truncated beyond Euclidean radius ceil(k).
    """
    hm = np.zeros((height, width))
    if specs:
        centers = np.stack([s.center for s in specs])
        rows = np.rint(centers[:, 1]).astype(np.int64)
        cols = np.rint(centers[:, 0]).astype(np.int64)
        sigmas = np.array([gauss_sigma(s.kernel_k) for s in specs])
        radii = np.array([int(np.ceil(s.kernel_k)) for s in specs], dtype=np.int64)
        kernels().render_gaussians(hm, rows, cols, sigmas, radii)
    return CenterHeatmap(hm)


def repel_pair(c1, c2, k1: float, k2: float, gamma: float):
    """One application of the pairwise repulsion (no clamping).

    Triggered when the center distance d is strictly below k1 + k2 + 1; the
    push vector is ((k1+k2+1-d)/d) * (c1-c2) scaled by gamma, added to c1
    and subtracted from c2. Returns (c1_hat, c2_hat, triggered).
    """
    c1 = np.asarray(c1, dtype=np.float64).reshape(2).copy()
    c2 = np.asarray(c2, dtype=np.float64).reshape(2).copy()
    d = float(np.linalg.norm(c1 - c2))
    thr = k1 + k2 + 1.0
    if d >= thr or d < 1e-6:
        return c1, c2, False
    push = gamma * ((thr - d) / d) * (c1 - c2)
    return c1 + push, c2 - push, True


def apply_car(
    centers: np.ndarray,
    kernel_sizes: np.ndarray,
    gamma: float = DEFAULT_CAR_GAMMA,
    height: int = DEFAULT_MAP_SIZE,
    width: int = DEFAULT_MAP_SIZE,
    max_sweeps: int = 100,
):
    """Sweep the pairwise repulsion to a fixed point over all centers.

    centers (n, 2) as (x, y); each sweep visits unordered pairs in ascending
    index order, pushes triggered pairs apart, and clamps to the map bounds.
    Coincident centers (< 1e-6 apart) first split the higher-indexed one by
    +1 in x. Stops after a trigger-free sweep or max_sweeps. Returns
    (new_centers, n_sweeps).
    """
    if gamma < 0:
        raise ValueError("gamma must be >= 0")
    out = np.array(centers, dtype=np.float64).reshape(-1, 2).copy()
    ks = np.asarray(kernel_sizes, dtype=np.float64).reshape(-1)
    if out.shape[0] != ks.shape[0]:
        raise ValueError("centers and kernel_sizes lengths differ")
    sweeps = kernels().car_repel(out, ks, float(gamma), float(width), float(height),
                                 max_sweeps)
    return out, int(sweeps)
