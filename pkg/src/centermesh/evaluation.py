"""Scene-level evaluation: match decoded people to ground truth, run every
metric, and emit JSON/CSV reports.

Predicted and ground-truth people are matched greedily on body-center
distance (heatmap pixels). Position metrics are computed in millimeters on
root-centered joints/vertices from the shared body model; AP@0.5 uses the
projected 2D skeletons in heatmap pixels.
"""

from __future__ import annotations

import io

import numpy as np

from . import metrics
from .body_model import BodyModel, forward
from .camera import normalized_to_heatmap, project
from .decode import match_to_gt
from .scene import Scene

M_TO_MM = 1000.0

CSV_FIELDS = (
    "scene", "n_gt", "n_pred", "n_matched",
    "mpjpe_mm", "pmpjpe_mm", "pve_mm", "pck", "auc",
    "mpjae_deg", "pa_mpjae_deg", "ap50",
)


def _person_geometry(model: BodyModel, pose, shape, cam, map_size):
    """Mesh/joints in mm plus projected 2D joints in heatmap pixels."""
    mesh, joints3d = forward(model, pose, shape)
    normalized = project(joints3d, cam)
    px, _ = normalized_to_heatmap(normalized, map_size[1], map_size[0])
    return mesh * M_TO_MM, joints3d * M_TO_MM, px


def evaluate_scene(
    pred_people: list[dict],
    scene: Scene,
    model: BodyModel,
    sigmas: np.ndarray | None = None,
) -> dict:
    """Evaluate one scene's decoded people against its ground truth.

    pred_people follow the decode JSON layout (center (row, col), conf, cam,
    pose, shape). Returns a flat dict of aggregate metric values plus match
    counts; metric fields are None when nothing matched.
    """
    n_gt = len(scene.people)
    n_pred = len(pred_people)
    out = {"n_gt": n_gt, "n_pred": n_pred, "n_matched": 0}

    pred_xy = np.array(
        [[p["center"][1], p["center"][0]] for p in pred_people], dtype=np.float64
    ).reshape(-1, 2)
    gt_xy = np.array([p.center for p in scene.people], dtype=np.float64).reshape(-1, 2)

    pairs = []
    if n_gt and n_pred:
        pairs = match_to_gt(pred_xy, gt_xy).pairs
    out["n_matched"] = len(pairs)

    per_person = {name: [] for name in ("mpjpe", "pmpjpe", "pve", "pck", "auc",
                                        "mpjae", "pa_mpjae")}
    pred_skeletons = []
    for person in pred_people:
        _, _, px = _person_geometry(
            model, person["pose"], person["shape"], person["cam"], scene.map_size
        )
        pred_skeletons.append(px)

    for pi, gi, _dist in pairs:
        pred = pred_people[pi]
        gt = scene.people[gi]
        mesh_p, j3d_p, _ = _person_geometry(model, pred["pose"], pred["shape"],
                                            pred["cam"], scene.map_size)
        mesh_g, j3d_g, _ = _person_geometry(model, gt.pose, gt.shape, gt.cam,
                                            scene.map_size)
        j3d_p_c = metrics.root_center(j3d_p)
        j3d_g_c = metrics.root_center(j3d_g)
        per_person["mpjpe"].append(metrics.mpjpe(j3d_p_c, j3d_g_c))
        per_person["pmpjpe"].append(metrics.pmpjpe(j3d_p_c, j3d_g_c))
        root_p = j3d_p[0]
        root_g = j3d_g[0]
        per_person["pve"].append(metrics.pve(mesh_p - root_p, mesh_g - root_g))
        pck, auc = metrics.pck_auc(j3d_p_c, j3d_g_c)
        per_person["pck"].append(pck)
        per_person["auc"].append(auc)
        rots_p = pred["pose"].matrices()
        rots_g = gt.pose.matrices()
        per_person["mpjae"].append(metrics.mpjae(rots_p, rots_g))
        per_person["pa_mpjae"].append(metrics.pa_mpjae(rots_p, rots_g))

    scores = np.array([p["conf"] for p in pred_people], dtype=np.float64)
    gt_joints = [p.joints2d.positions for p in scene.people]
    gt_vis = [p.joints2d.visibility for p in scene.people]
    scene_ap = metrics.ap50(
        [(pred_skeletons, scores)],
        [(gt_joints, gt_vis)],
        sigmas=sigmas,
    )
    if pairs:
        result = metrics.EvalResult(
            mpjpe=float(np.mean(per_person["mpjpe"])),
            pmpjpe=float(np.mean(per_person["pmpjpe"])),
            pve=float(np.mean(per_person["pve"])),
            pck=float(np.mean(per_person["pck"])),
            auc=float(np.mean(per_person["auc"])),
            mpjae=float(np.mean(per_person["mpjae"])),
            pa_mpjae=float(np.mean(per_person["pa_mpjae"])),
            ap50=scene_ap,
        )
        out.update(result.as_dict())
    else:
        out.update({
            "mpjpe_mm": None, "pmpjpe_mm": None, "pve_mm": None, "pck": None,
            "auc": None, "mpjae_deg": None, "pa_mpjae_deg": None, "ap50": scene_ap,
        })
    return out


def evaluate_scenes(
    preds_per_scene: list[list[dict]],
    scenes: list[Scene],
    model: BodyModel,
    sigmas: np.ndarray | None = None,
) -> dict:
    """Evaluate several scenes and aggregate: mean metrics weighted by matched
    people, AP@0.5 computed globally across scenes."""
    if len(preds_per_scene) != len(scenes):
        raise ValueError("prediction and scene counts differ")
    scene_reports = []
    for i, (preds, scene) in enumerate(zip(preds_per_scene, scenes)):
        rep = evaluate_scene(preds, scene, model, sigmas)
        rep["scene"] = i
        scene_reports.append(rep)

    agg: dict = {"scene": "aggregate"}
    for key in ("n_gt", "n_pred", "n_matched"):
        agg[key] = int(sum(rep[key] for rep in scene_reports))
    for key in ("mpjpe_mm", "pmpjpe_mm", "pve_mm", "pck", "auc", "mpjae_deg",
                "pa_mpjae_deg"):
        num = sum(
            rep[key] * rep["n_matched"] for rep in scene_reports if rep[key] is not None
        )
        den = sum(rep["n_matched"] for rep in scene_reports if rep[key] is not None)
        agg[key] = float(num / den) if den else None

    pred_sets, gt_sets = [], []
    for preds, scene in zip(preds_per_scene, scenes):
        skeletons = []
        for person in preds:
            _, _, px = _person_geometry(model, person["pose"], person["shape"],
                                        person["cam"], scene.map_size)
            skeletons.append(px)
        scores = np.array([p["conf"] for p in preds], dtype=np.float64)
        pred_sets.append((skeletons, scores))
        gt_sets.append((
            [p.joints2d.positions for p in scene.people],
            [p.joints2d.visibility for p in scene.people],
        ))
    agg["ap50"] = metrics.ap50(pred_sets, gt_sets, sigmas=sigmas)
    return {"scenes": scene_reports, "aggregate": agg}


def report_to_csv(report: dict) -> str:
    """One CSV row per scene plus the aggregate row."""
    buf = io.StringIO()
    buf.write(",".join(CSV_FIELDS) + "\n")
    for rep in [*report["scenes"], report["aggregate"]]:
        cells = []
        for name in CSV_FIELDS:
            value = rep.get(name)
            if value is None:
                cells.append("")
            elif isinstance(value, float):
                cells.append(f"{value:.6f}")
            else:
                cells.append(str(value))
        buf.write(",".join(cells) + "\n")
    return buf.getvalue()
