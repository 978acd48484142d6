import io
import json

import numpy as np
import pytest

from centermesh import (
    Joints2D,
    Person,
    Scene,
    decode_scene,
    encode_scene,
    kernel_size,
    load_maps,
    load_scene,
    normalized_to_heatmap,
    project,
    save_maps,
    save_scene,
    synth_scene,
)
from centermesh.body_model import forward
from centermesh.errors import NoVisibleJointsError
from centermesh.scene import person_param_vector, scene_to_json


def test_synth_empty_scene():
    scene = synth_scene(0, 3, "none")
    assert scene.people == []
    assert scene.image_size == (512, 512)
    assert scene.map_size == (64, 64)


def test_synth_deterministic(toy_model):
    a = synth_scene(4, 11, "moderate", model=toy_model)
    b = synth_scene(4, 11, "moderate", model=toy_model)
    assert json.dumps(scene_to_json(a)) == json.dumps(scene_to_json(b))


def test_synth_seeds_differ(toy_model):
    a = synth_scene(2, 1, "none", model=toy_model)
    b = synth_scene(2, 2, "none", model=toy_model)
    assert json.dumps(scene_to_json(a)) != json.dumps(scene_to_json(b))


def test_synth_severe_triggers_repulsion(toy_model):
    for seed in range(10):
        scene = synth_scene(2, seed, "severe", model=toy_model)
        p1, p2 = scene.people
        k1 = kernel_size(p1.bbox_diag, 64)
        k2 = kernel_size(p2.bbox_diag, 64)
        assert np.linalg.norm(p1.center - p2.center) < k1 + k2 + 1


def test_synth_none_keeps_people_apart(toy_model):
    scene = synth_scene(6, 4, "none", model=toy_model)
    people = scene.people
    for i in range(len(people)):
        for j in range(i + 1, len(people)):
            ki = kernel_size(people[i].bbox_diag, 64)
            kj = kernel_size(people[j].bbox_diag, 64)
            dist = np.linalg.norm(people[i].center - people[j].center)
            assert dist >= ki + kj + 1


def test_synth_people_in_frame(toy_model):
    for overlap in ("none", "moderate", "severe"):
        scene = synth_scene(5, 9, overlap, model=toy_model)
        for person in scene.people:
            pos = person.joints2d.positions
            assert np.all(pos >= 0) and np.all(pos <= 63)


def test_person_joints_consistent_with_projection(toy_model):
    scene = synth_scene(3, 21, "moderate", model=toy_model)
    for person in scene.people:
        _, joints3d = forward(toy_model, person.pose, person.shape)
        px, _ = normalized_to_heatmap(project(joints3d, person.cam), 64, 64)
        np.testing.assert_allclose(person.joints2d.positions, px, atol=1e-6)


def test_scene_stride_validation():
    with pytest.raises(ValueError):
        Scene([], image_size=(512, 512), map_size=(32, 32))


# ---------------------------------------------------------------------------
# Encoding
# ---------------------------------------------------------------------------


def test_encode_one_person_peak_and_params(toy_model):
    scene = synth_scene(1, 5, "none", model=toy_model, car_gamma=0.0)
    cm, pm = encode_scene(scene, toy_model)
    person = scene.people[0]
    cx, cy = np.rint(person.center).astype(int)
    assert cm.values[cy, cx] == 1.0
    assert cm.values.max() == 1.0
    np.testing.assert_allclose(
        pm.values[:, cy, cx], person_param_vector(person), atol=0
    )


def test_encode_deterministic(toy_model):
    scene = synth_scene(4, 2, "moderate", model=toy_model)
    cm1, pm1 = encode_scene(scene, toy_model)
    cm2, pm2 = encode_scene(scene, toy_model)
    np.testing.assert_array_equal(cm1.values, cm2.values)
    np.testing.assert_array_equal(pm1.values, pm2.values)


def test_encode_empty_scene(toy_model):
    cm, pm = encode_scene(Scene([]), toy_model)
    assert not cm.values.any()
    assert not pm.values.any()
    assert pm.values.shape == (145, 64, 64)


def test_encode_untouched_cells_are_zero(toy_model):
    scene = synth_scene(1, 5, "none", model=toy_model, car_gamma=0.0)
    cm, pm = encode_scene(scene, toy_model)
    person = scene.people[0]
    rad = np.ceil(kernel_size(person.bbox_diag, 64))
    cx, cy = person.center
    ys, xs = np.mgrid[0:64, 0:64]
    outside = (xs - cx) ** 2 + (ys - cy) ** 2 > rad**2
    assert not pm.values[:, outside].any()
    # inside cells carry the person's vector
    inside = ~outside
    vec = person_param_vector(person)
    np.testing.assert_allclose(
        pm.values[:, inside], vec[:, None] * np.ones(inside.sum()), atol=0
    )


def test_encode_severe_with_car_matches_apply_car(toy_model):
    from centermesh import apply_car

    scene = synth_scene(2, 7, "severe", model=toy_model, car_gamma=0.2)
    centers = np.stack([p.center for p in scene.people])
    ks = np.array([kernel_size(p.bbox_diag, 64) for p in scene.people])
    expected, _ = apply_car(centers, ks, 0.2)
    cm, _ = encode_scene(scene, toy_model)
    peak_cells = {tuple(np.rint(c)[::-1].astype(int)) for c in expected}  # (row, col)
    for r, c in peak_cells:
        assert cm.values[r, c] == 1.0


def test_encode_contested_cells_nearest_center_wins(toy_model):
    scene = synth_scene(2, 3, "severe", model=toy_model, car_gamma=0.2)
    cm, pm = encode_scene(scene, toy_model)
    from centermesh import apply_car

    centers = np.stack([p.center for p in scene.people])
    ks = np.array([kernel_size(p.bbox_diag, 64) for p in scene.people])
    repelled, _ = apply_car(centers, ks, 0.2)
    vecs = [person_param_vector(p) for p in scene.people]
    filled = np.flatnonzero(pm.values.any(axis=0))
    ys, xs = np.unravel_index(filled, (64, 64))
    for y, x in zip(ys, xs):
        cell_vec = pm.values[:, y, x]
        owner = int(np.argmin([np.linalg.norm([x, y] - c) for c in repelled]))
        d_owner = np.linalg.norm([x, y] - repelled[owner])
        d_other = np.linalg.norm([x, y] - repelled[1 - owner])
        if abs(d_owner - d_other) > 1e-9:  # clear nearest-center cells
            np.testing.assert_array_equal(cell_vec, vecs[owner])


def test_encode_rejects_invisible_person(toy_model):
    scene = synth_scene(1, 5, "none", model=toy_model)
    person = scene.people[0]
    blind = Person(
        person.pose,
        person.shape,
        person.cam,
        Joints2D(person.joints2d.positions, np.zeros(22, dtype=bool)),
    )
    with pytest.raises(NoVisibleJointsError):
        encode_scene(Scene([blind]), toy_model)


# ---------------------------------------------------------------------------
# Round trips
# ---------------------------------------------------------------------------


def test_scene_json_round_trip(toy_model, tmp_path):
    scene = synth_scene(3, 13, "moderate", model=toy_model, car_gamma=0.1)
    path = tmp_path / "scene.json"
    save_scene(path, scene)
    loaded = load_scene(path)
    assert loaded.car_gamma == 0.1
    assert len(loaded.people) == 3
    for a, b in zip(scene.people, loaded.people):
        np.testing.assert_array_equal(a.pose.rot6d, b.pose.rot6d)
        np.testing.assert_array_equal(a.shape.beta, b.shape.beta)
        np.testing.assert_array_equal(a.joints2d.positions, b.joints2d.positions)
        np.testing.assert_allclose(a.center, b.center, atol=0)


def test_maps_rmtf_round_trip(toy_model, tmp_path):
    scene = synth_scene(2, 4, "none", model=toy_model, car_gamma=0.0)
    cm, pm = encode_scene(scene, toy_model)
    path = tmp_path / "maps.rmtf"
    save_maps(path, cm, pm)
    cm2, pm2 = load_maps(path)
    np.testing.assert_allclose(cm2.values, cm.values, atol=1e-7)  # f32 container
    np.testing.assert_allclose(pm2.values, pm.values, atol=1e-6)


def test_encode_decode_round_trip_exact_params(toy_model):
    for n, seed in ((1, 0), (3, 1), (8, 2)):
        scene = synth_scene(n, seed, "none", model=toy_model, car_gamma=0.0)
        cm, pm = encode_scene(scene, toy_model)
        decoded = decode_scene(cm, pm, toy_model)
        assert len(decoded) == n
        gt_centers = np.stack([p.center for p in scene.people])
        for person in decoded:
            row, col = person.detection.center
            dists = np.linalg.norm(gt_centers - np.array([col, row]), axis=1)
            gi = int(np.argmin(dists))
            assert dists[gi] <= 0.5 * np.sqrt(2.0) + 1e-9
            gt = scene.people[gi]
            np.testing.assert_allclose(
                person.detection.pose.rot6d, gt.pose.rot6d, atol=1e-6
            )
            np.testing.assert_allclose(person.detection.shape.beta, gt.shape.beta, atol=1e-6)
            np.testing.assert_allclose(
                person.detection.cam.as_array(), gt.cam.as_array(), atol=1e-6
            )


def test_round_trip_with_car_centers_near_repelled(toy_model):
    from centermesh import apply_car

    scene = synth_scene(2, 9, "severe", model=toy_model, car_gamma=0.2)
    centers = np.stack([p.center for p in scene.people])
    ks = np.array([kernel_size(p.bbox_diag, 64) for p in scene.people])
    repelled, _ = apply_car(centers, ks, 0.2)
    cm, pm = encode_scene(scene, toy_model)
    decoded = decode_scene(cm, pm, toy_model)
    assert len(decoded) == 2
    for person in decoded:
        row, col = person.detection.center
        dists = np.linalg.norm(repelled - np.array([col, row]), axis=1)
        assert dists.min() <= 0.5 * np.sqrt(2.0) + 1e-9


def test_top_n_cap_on_crowded_map(toy_model):
    scene = synth_scene(70, 0, "moderate", model=toy_model, car_gamma=0.2)
    cm, pm = encode_scene(scene, toy_model)
    decoded = decode_scene(cm, pm, toy_model, max_people=64)
    assert len(decoded) == 64
    decoded_all = decode_scene(cm, pm, toy_model, max_people=1000)
    confs_all = sorted((p.detection.confidence for p in decoded_all), reverse=True)
    confs_top = sorted((p.detection.confidence for p in decoded), reverse=True)
    assert confs_top == confs_all[:64]
