"""Synthetic scenes and ground-truth map encoding.

A Scene is a set of people (pose, shape, camera, derived 2D joints) over a
512x512 image mapped to 64x64 output maps (stride 8). Encoding builds the
ground-truth center heatmap (with optional center repulsion) and parameter
map; scenes round-trip through a human-diffable JSON form.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .body_model import (
    BodyModel,
    PoseParams,
    ShapeParams,
    TORSO_JOINT_INDICES,
    forward,
    make_toy_model,
    matrix_to_rot6d,
)
from .camera import CameraParams, normalized_to_heatmap, project
from .center_map import (
    CenterHeatmap,
    CenterSpec,
    DEFAULT_CAR_GAMMA,
    Joints2D,
    apply_car,
    compute_body_center,
    kernel_size,
    render_heatmap,
)
from .decode import MeshParamMap
from .backend import kernels
from .errors import TensorFormatError
from . import rmtf

BACKBONE_STRIDE = 8
DEFAULT_IMAGE_SIZE = (512, 512)
DEFAULT_MAP_SIZE = (64, 64)

TOY_MODEL_SPEC = (120, 22, 0)  # canonical (v_count, k_count, seed)

_toy_cache: dict[tuple, BodyModel] = {}


def default_toy_model() -> BodyModel:
    """The canonical toy body model used by the CLI when no file is given."""
    if TOY_MODEL_SPEC not in _toy_cache:
        _toy_cache[TOY_MODEL_SPEC] = make_toy_model(*TOY_MODEL_SPEC)
    return _toy_cache[TOY_MODEL_SPEC]


@dataclass
class Person:
    """One subject: parameters plus 2D joints derived from them.

    joints2d lives in heatmap pixels; center and bbox_diag are derived from
    the visible joints (center raises when nothing is visible).
    """

    pose: PoseParams
    shape: ShapeParams
    cam: CameraParams
    joints2d: Joints2D
    confidence: float | None = None

    @property
    def center(self) -> np.ndarray:
        return compute_body_center(self.joints2d)

    @property
    def bbox_diag(self) -> float:
        vis = self.joints2d.visible_positions()
        span = vis.max(axis=0) - vis.min(axis=0)
        return float(np.linalg.norm(span))

    @classmethod
    def from_params(
        cls,
        model: BodyModel,
        pose: PoseParams,
        shape: ShapeParams,
        cam: CameraParams,
        map_size=DEFAULT_MAP_SIZE,
        visibility: np.ndarray | None = None,
    ) -> "Person":
        _, joints3d = forward(model, pose, shape)
        normalized = project(joints3d, cam)
        px, _ = normalized_to_heatmap(normalized, map_size[1], map_size[0])
        if visibility is None:
            visibility = np.ones(px.shape[0], dtype=bool)
        return cls(pose, shape, cam, Joints2D(px, visibility))


@dataclass
class Scene:
    """A set of people plus image/map geometry; the unit of encode and eval."""

    people: list[Person] = field(default_factory=list)
    image_size: tuple[int, int] = DEFAULT_IMAGE_SIZE
    map_size: tuple[int, int] = DEFAULT_MAP_SIZE
    car_gamma: float = DEFAULT_CAR_GAMMA

    def __post_init__(self):
        for img, mp in zip(self.image_size, self.map_size):
            if img != mp * BACKBONE_STRIDE:
                raise ValueError(
                    f"image size {self.image_size} must be map size {self.map_size} "
                    f"times the backbone stride {BACKBONE_STRIDE}"
                )


# ---------------------------------------------------------------------------
# Scene synthesis
# ---------------------------------------------------------------------------

OVERLAP_LEVELS = ("none", "moderate", "severe")


def synth_scene(
    n_people: int,
    seed: int,
    overlap_level: str = "none",
    model: BodyModel | None = None,
    car_gamma: float = DEFAULT_CAR_GAMMA,
    image_size=DEFAULT_IMAGE_SIZE,
    map_size=DEFAULT_MAP_SIZE,
) -> Scene:
    """Deterministic synthetic scene with the requested crowding.

    'none' keeps every center pair outside the repulsion trigger distance,
    'moderate' places people freely, and 'severe' forces at least one pair
    inside the trigger distance (guaranteed for n_people >= 2). All joints
    land inside the frame.
    """
    if n_people < 0:
        raise ValueError("n_people must be >= 0")
    if overlap_level not in OVERLAP_LEVELS:
        raise ValueError(f"overlap_level must be one of {OVERLAP_LEVELS}")
    model = model or default_toy_model()
    rng = np.random.default_rng(seed)
    w_map = map_size[0]

    people: list[Person] = []
    centers_px: list[np.ndarray] = []
    kernel_ks: list[float] = []
    for i in range(n_people):
        pose = _random_pose(rng, model.n_joints)
        shape = ShapeParams(rng.normal(scale=0.5, size=model.shape_dirs.shape[2]))
        if overlap_level == "severe":
            s_lo, s_hi = 0.30, 0.45
        elif overlap_level == "none" and n_people > 12:
            # Crowded but collision-free scenes need smaller people so the
            # separation constraint stays feasible on a 64-cell map.
            s_hi = 0.45 if n_people <= 20 else 0.33
            s_lo = s_hi - 0.05
        else:
            s_lo, s_hi = 0.35, 0.60
        s = float(rng.uniform(s_lo, s_hi))

        _, joints3d = forward(model, pose, shape)
        xy = joints3d[:, :2]
        lo, hi = xy.min(axis=0), xy.max(axis=0)
        torso = [t for t in TORSO_JOINT_INDICES if t < model.n_joints]
        torso_mean = xy[torso].mean(axis=0) if torso else xy.mean(axis=0)
        span_px = s * (hi - lo) * (w_map - 1) / 2.0
        diag_px = float(np.linalg.norm(span_px))
        k_i = kernel_size(diag_px, w_map)

        margin = 0.02
        t_lo = -1.0 + margin - s * lo
        t_hi = 1.0 - margin - s * hi
        if np.any(t_lo > t_hi):
            raise ValueError("person too large to fit in frame; lower the scale range")

        t = _place_person(
            rng, overlap_level, i, s, torso_mean, t_lo, t_hi,
            centers_px, kernel_ks, k_i, w_map, map_size,
        )
        cam = CameraParams(s, float(t[0]), float(t[1]))
        person = Person.from_params(model, pose, shape, cam, map_size)
        people.append(person)
        centers_px.append(person.center)
        kernel_ks.append(k_i)

    return Scene(people, tuple(image_size), tuple(map_size), car_gamma)


def _random_pose(rng, n_joints: int) -> PoseParams:
    """Small random axis-angle rotations per joint, exact under 6D round trip."""
    axes = rng.normal(size=(n_joints, 3))
    axes /= np.linalg.norm(axes, axis=1, keepdims=True)
    angles = rng.uniform(0.0, 0.5, size=n_joints)
    angles[0] = rng.uniform(0.0, 0.25)  # keep the body roughly frontal
    rots = np.empty((n_joints, 3, 3))
    for j in range(n_joints):
        rots[j] = _axis_angle_matrix(axes[j], angles[j])
    return PoseParams(matrix_to_rot6d(rots))


def _axis_angle_matrix(axis: np.ndarray, angle: float) -> np.ndarray:
    x, y, z = axis
    k = np.array([[0.0, -z, y], [z, 0.0, -x], [-y, x, 0.0]])
    return np.eye(3) + np.sin(angle) * k + (1.0 - np.cos(angle)) * (k @ k)


def _center_to_t(target_px, s, torso_mean, map_size):
    """Solve the camera translation that puts the body center at target_px."""
    w, h = map_size[0], map_size[1]
    cx = 2.0 * target_px[0] / (w - 1) - 1.0
    cy = 2.0 * target_px[1] / (h - 1) - 1.0
    return np.array([cx, cy]) - s * torso_mean


def _t_to_center_px(t, s, torso_mean, map_size):
    w, h = map_size[0], map_size[1]
    c = s * torso_mean + t
    return np.array([(c[0] + 1.0) / 2.0 * (w - 1), (c[1] + 1.0) / 2.0 * (h - 1)])


def _place_person(
    rng, overlap_level, index, s, torso_mean, t_lo, t_hi,
    centers_px, kernel_ks, k_i, w_map, map_size,
):
    if overlap_level == "severe" and index >= 1:
        # Land inside the repulsion trigger radius of the previous person.
        partner = index - 1
        thr = kernel_ks[partner] + k_i + 1.0
        for _ in range(200):
            dist = rng.uniform(0.3, 0.9) * thr
            ang = rng.uniform(0.0, 2.0 * np.pi)
            target = centers_px[partner] + dist * np.array([np.cos(ang), np.sin(ang)])
            t = np.clip(_center_to_t(target, s, torso_mean, map_size), t_lo, t_hi)
            got = _t_to_center_px(t, s, torso_mean, map_size)
            if np.linalg.norm(got - centers_px[partner]) < thr:
                return t
        # In-frame clamping kept defeating the overlap; stack directly on top.
        return np.clip(
            _center_to_t(centers_px[partner], s, torso_mean, map_size), t_lo, t_hi
        )
    if overlap_level == "none" and centers_px:
        # trigger distance plus rounding slack, so encoding never repels;
        # crowded scenes get the slimmer margin
        margin = 3.0 if len(centers_px) <= 12 else 2.0

        def separated(center):
            return all(
                np.linalg.norm(center - c) > k_i + k_prev + margin
                for c, k_prev in zip(centers_px, kernel_ks)
            )

        for _ in range(500):
            t = rng.uniform(t_lo, t_hi)
            if separated(_t_to_center_px(t, s, torso_mean, map_size)):
                return t
        # Dense scene: fall back to a deterministic raster scan of the
        # feasible translation box.
        for fy in np.linspace(0.0, 1.0, 33):
            for fx in np.linspace(0.0, 1.0, 33):
                t = t_lo + np.array([fx, fy]) * (t_hi - t_lo)
                if separated(_t_to_center_px(t, s, torso_mean, map_size)):
                    return t
        raise ValueError(
            f"could not place {index + 1} non-overlapping people; reduce n_people"
        )
    return rng.uniform(t_lo, t_hi)


# ---------------------------------------------------------------------------
# Ground-truth map encoding
# ---------------------------------------------------------------------------


def person_param_vector(person: Person) -> np.ndarray:
    """[s, tx, ty] ++ flattened 6D pose ++ shape, the per-cell map payload."""
    return np.concatenate(
        [person.cam.as_array(), person.pose.rot6d.reshape(-1), person.shape.beta]
    )


def encode_scene(scene: Scene, model: BodyModel):
    """Build the ground-truth (CenterHeatmap, MeshParamMap) for a scene.

    Centers come from visible torso joints, are pushed apart when
    scene.car_gamma > 0, and are rendered as scale-adaptive Gaussians. Each
    person's parameter vector fills every cell within its kernel radius of
    its (repelled) center; contested cells keep the nearest center. Cells no
    person covers stay zero.
    """
    h, w = scene.map_size[1], scene.map_size[0]
    n_channels = 3 + 6 * model.n_joints + 10
    pm = np.zeros((n_channels, h, w))
    if not scene.people:
        return CenterHeatmap(np.zeros((h, w))), MeshParamMap(pm)

    centers = np.stack([p.center for p in scene.people])
    ks = np.array([kernel_size(p.bbox_diag, w) for p in scene.people])
    if scene.car_gamma > 0:
        centers, _ = apply_car(centers, ks, scene.car_gamma, height=h, width=w)

    specs = [CenterSpec(c, k, p.bbox_diag) for c, k, p in zip(centers, ks, scene.people)]
    heatmap = render_heatmap(specs, h, w)

    params = np.stack([person_param_vector(p) for p in scene.people])
    radii = np.ceil(ks).astype(np.int64)
    best_d2 = np.full((h, w), np.inf)
    kernels().fill_param_map(pm, best_d2, centers[:, 0], centers[:, 1], radii, params)
    return heatmap, MeshParamMap(pm)


# ---------------------------------------------------------------------------
# Map container I/O
# ---------------------------------------------------------------------------


def save_maps(path_or_file, heatmap: CenterHeatmap, pm: MeshParamMap) -> None:
    """Write encoded maps to an RMTF container (float32 payloads)."""
    rmtf.write_tensors(
        path_or_file,
        {"center_heatmap": heatmap.values[None], "mesh_param_map": pm.values},
    )


def load_maps(path_or_file):
    """Read (CenterHeatmap, MeshParamMap) from an RMTF container."""
    entries = rmtf.read_tensors(path_or_file)
    for name in ("center_heatmap", "mesh_param_map"):
        if name not in entries:
            raise TensorFormatError(f"maps file is missing entry {name!r}")
    return (
        CenterHeatmap(entries["center_heatmap"].astype(np.float64)),
        MeshParamMap(entries["mesh_param_map"].astype(np.float64)),
    )


# ---------------------------------------------------------------------------
# JSON round trip
# ---------------------------------------------------------------------------


def scene_to_json(scene: Scene) -> dict:
    people = []
    for p in scene.people:
        entry = {
            "pose6d": p.pose.rot6d.tolist(),
            "shape": p.shape.beta.tolist(),
            "cam": p.cam.as_array().tolist(),
            "joints2d": p.joints2d.positions.tolist(),
            "joints_vis": p.joints2d.visibility.astype(bool).tolist(),
            # informational, rederived from joints2d on load:
            "center": p.center.tolist(),
            "bbox_diag": p.bbox_diag,
        }
        if p.confidence is not None:
            entry["conf"] = p.confidence
        people.append(entry)
    return {
        "image_size": list(scene.image_size),
        "map_size": list(scene.map_size),
        "car_gamma": scene.car_gamma,
        "people": people,
    }


def scene_from_json(payload: dict) -> Scene:
    people = []
    for entry in payload["people"]:
        pose = PoseParams(np.asarray(entry["pose6d"], dtype=np.float64))
        shape = ShapeParams(np.asarray(entry["shape"], dtype=np.float64))
        cam = CameraParams.from_array(entry["cam"])
        joints = Joints2D(
            np.asarray(entry["joints2d"], dtype=np.float64),
            np.asarray(entry["joints_vis"], dtype=bool),
        )
        people.append(Person(pose, shape, cam, joints, entry.get("conf")))
    return Scene(
        people,
        tuple(payload.get("image_size", DEFAULT_IMAGE_SIZE)),
        tuple(payload.get("map_size", DEFAULT_MAP_SIZE)),
        float(payload.get("car_gamma", DEFAULT_CAR_GAMMA)),
    )


def save_scene(path_or_file, scene: Scene) -> None:
    payload = scene_to_json(scene)
    if hasattr(path_or_file, "write"):
        json.dump(payload, path_or_file)
    else:
        with open(path_or_file, "w") as fh:
            json.dump(payload, fh)


def load_scene(path_or_file) -> Scene:
    if hasattr(path_or_file, "read"):
        return scene_from_json(json.load(path_or_file))
    with open(path_or_file) as fh:
        return scene_from_json(json.load(fh))
