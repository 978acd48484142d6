"""Weak-perspective camera: 3D joints -> normalized image coords -> map pixels.

Normalized image coordinates run in (-1, 1) over the padded square image;
(x, y) = (-1, -1) is the top-left corner. Heatmap pixels put x along columns
and y along rows, so cell (row, col) sits at position (x=col, y=row).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass
class CameraParams:
    """Scale and normalized translation: x_hat = s*x + tx, y_hat = s*y + ty."""

    s: float
    tx: float
    ty: float

    def as_array(self) -> np.ndarray:
        return np.array([self.s, self.tx, self.ty], dtype=np.float64)

    @classmethod
    def from_array(cls, arr) -> "CameraParams":
        s, tx, ty = np.asarray(arr, dtype=np.float64).reshape(3)
        return cls(float(s), float(tx), float(ty))

    def is_valid(self) -> bool:
        """Soft validity used for ground-truth people: s > 0, t in (-1, 1)."""
        return self.s > 0 and -1 < self.tx < 1 and -1 < self.ty < 1


def project(joints3d: np.ndarray, cam) -> np.ndarray:
    """Project (..., K, 3) joints to (..., K, 2) normalized coords, dropping z."""
    joints3d = np.asarray(joints3d, dtype=np.float64)
    if isinstance(cam, CameraParams):
        cam = cam.as_array()
    cam = np.asarray(cam, dtype=np.float64)
    s = cam[..., 0:1][..., None]
    t = cam[..., 1:3][..., None, :]
    return s * joints3d[..., :2] + t


def normalized_to_heatmap(pts: np.ndarray, height: int, width: int):
    """Map normalized (x, y) in (-1, 1) to heatmap pixels.

    Returns (pixels, in_frame): x_px = (x+1)/2 * (W-1), y_px likewise with
    H; points outside (-1, 1) land outside the grid and are flagged.
    """
    pts = np.asarray(pts, dtype=np.float64)
    px = np.empty_like(pts)
    px[..., 0] = (pts[..., 0] + 1.0) / 2.0 * (width - 1)
    px[..., 1] = (pts[..., 1] + 1.0) / 2.0 * (height - 1)
    in_frame = np.all(np.abs(pts) < 1.0, axis=-1)
    return px, in_frame


def heatmap_to_normalized(px: np.ndarray, height: int, width: int) -> np.ndarray:
    """Inverse of normalized_to_heatmap (exact round trip)."""
    px = np.asarray(px, dtype=np.float64)
    out = np.empty_like(px)
    out[..., 0] = 2.0 * px[..., 0] / (width - 1) - 1.0
    out[..., 1] = 2.0 * px[..., 1] / (height - 1) - 1.0
    return out
