"""Command-line surface: synth | encode | decode | eval | loss | bench | model.

Subcommands read their primary input from stdin and write to stdout when the
corresponding flag is omitted, so they pipe:

    centermesh synth --n 3 --seed 1 --out scene.json
    centermesh encode --scene scene.json | centermesh decode | \
        centermesh eval --gt scene.json

Exit codes: 0 success, 1 usage error, 2 data error. Errors go to stderr as
single-line JSON.
"""

from __future__ import annotations

import argparse
import io
import json
import sys

import numpy as np

from .backend import set_backend
from .bench import bench_backends, bench_decode, rows_to_csv
from .body_model import forward, load_model, make_toy_model, save_model
from .camera import project
from .decode import (
    DEFAULT_CONF_THRESHOLD,
    DEFAULT_MAX_PEOPLE,
    decode_scene,
    match_to_gt,
    parse_peaks,
    people_from_json,
    people_to_json,
    sample_params,
)
from .errors import CenterMeshError
from .evaluation import evaluate_scenes, report_to_csv
from .losses import (
    GmmPrior,
    LossWeights,
    PersonPrediction,
    SupervisionTargets,
    focal_center_loss,
    mesh_param_loss,
)
from .scene import (
    TOY_MODEL_SPEC,
    default_toy_model,
    encode_scene,
    load_maps,
    load_scene,
    save_maps,
    save_scene,
    synth_scene,
)


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # argparse defaults to exit code 2; we use 1
        raise UsageError(message)


def _fail(kind: str, message: str, code: int) -> int:
    sys.stderr.write(json.dumps({"error": kind, "message": message}) + "\n")
    return code


def _load_model_arg(path: str | None):
    if path is None:
        return default_toy_model()
    return load_model(path)


def _read_json(path: str | None) -> dict:
    if path is None:
        return json.load(sys.stdin)
    with open(path) as fh:
        return json.load(fh)


def _read_maps(path: str | None):
    if path is None:
        return load_maps(io.BytesIO(sys.stdin.buffer.read()))
    return load_maps(path)


def _write_json(payload: dict, path: str | None) -> None:
    text = json.dumps(payload, indent=2)
    if path is None:
        sys.stdout.write(text + "\n")
    else:
        with open(path, "w") as fh:
            fh.write(text + "\n")


def build_parser() -> _Parser:
    parser = _Parser(prog="centermesh", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("model", help="generate a toy body model file")
    p.add_argument("--v", type=int, default=TOY_MODEL_SPEC[0])
    p.add_argument("--k", type=int, default=TOY_MODEL_SPEC[1])
    p.add_argument("--seed", type=int, default=TOY_MODEL_SPEC[2])
    p.add_argument("--out", help="output .rmtf path (default stdout)")

    p = sub.add_parser("synth", help="generate a synthetic scene")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--overlap", choices=("none", "moderate", "severe"), default="none")
    p.add_argument("--car-gamma", type=float, default=0.2)
    p.add_argument("--model", help="body model .rmtf (default: built-in toy model)")
    p.add_argument("--out", help="output scene.json path (default stdout)")

    p = sub.add_parser("encode", help="encode a scene into ground-truth maps")
    p.add_argument("--scene", help="scene.json path (default stdin)")
    p.add_argument("--model", help="body model .rmtf (default: built-in toy model)")
    p.add_argument("--car-gamma", type=float, default=None,
                   help="override the scene's repulsion strength")
    p.add_argument("--out", help="output maps.rmtf path (default stdout)")

    p = sub.add_parser("decode", help="parse maps into people")
    p.add_argument("--maps", help="maps.rmtf path (default stdin)")
    p.add_argument("--model", help="body model .rmtf (default: built-in toy model)")
    p.add_argument("--tc", type=float, default=DEFAULT_CONF_THRESHOLD)
    p.add_argument("--topn", type=int, default=DEFAULT_MAX_PEOPLE)
    p.add_argument("--out", help="output people.json path (default stdout)")

    p = sub.add_parser("eval", help="score decoded people against a scene")
    p.add_argument("--pred", help="people.json path (default stdin)")
    p.add_argument("--gt", required=True, help="ground-truth scene.json path")
    p.add_argument("--model", help="body model .rmtf (default: built-in toy model)")
    p.add_argument("--report", help="output report.json path (default stdout)")
    p.add_argument("--csv", help="also write the report as CSV to this path")

    p = sub.add_parser("loss", help="loss breakdown between predicted and GT maps")
    p.add_argument("--pred", required=True, help="predicted maps.rmtf")
    p.add_argument("--gt", required=True, help="ground-truth maps.rmtf")
    p.add_argument("--model", help="body model .rmtf (default: built-in toy model)")
    p.add_argument("--prior", help="GMM prior .rmtf (default: unit-normal fallback)")
    p.add_argument("--tc", type=float, default=DEFAULT_CONF_THRESHOLD)

    p = sub.add_parser("bench", help="decode latency vs person count (CSV)")
    p.add_argument("--people", default="1,8,32",
                   help="counts: comma list and/or a..b ranges, e.g. 1,4..8,32")
    p.add_argument("--repeat", type=int, default=100)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--backend", choices=("auto", "numba", "numpy", "both"),
                   default="auto")
    return parser


def _parse_counts(spec: str) -> list[int]:
    counts = []
    for token in spec.split(","):
        token = token.strip()
        if not token:
            continue
        if ".." in token:
            lo, hi = token.split("..")
            counts.extend(range(int(lo), int(hi) + 1))
        else:
            counts.append(int(token))
    if not counts or any(c < 0 for c in counts):
        raise UsageError(f"invalid --people spec: {spec!r}")
    return counts


# ---------------------------------------------------------------------------
# Subcommand bodies
# ---------------------------------------------------------------------------


def _cmd_model(args) -> int:
    model = make_toy_model(args.v, args.k, args.seed)
    if args.out is None:
        buf = io.BytesIO()
        save_model(buf, model)
        sys.stdout.buffer.write(buf.getvalue())
    else:
        save_model(args.out, model)
    return 0


def _cmd_synth(args) -> int:
    model = _load_model_arg(args.model)
    scene = synth_scene(args.n, args.seed, args.overlap, model=model,
                        car_gamma=args.car_gamma)
    if args.out is None:
        save_scene(sys.stdout, scene)
        sys.stdout.write("\n")
    else:
        save_scene(args.out, scene)
    return 0


def _cmd_encode(args) -> int:
    model = _load_model_arg(args.model)
    if args.scene is None:
        scene = load_scene(sys.stdin)
    else:
        scene = load_scene(args.scene)
    if args.car_gamma is not None:
        scene.car_gamma = args.car_gamma
    cm, pm = encode_scene(scene, model)
    if args.out is None:
        buf = io.BytesIO()
        save_maps(buf, cm, pm)
        sys.stdout.buffer.write(buf.getvalue())
    else:
        save_maps(args.out, cm, pm)
    return 0


def _cmd_decode(args) -> int:
    model = _load_model_arg(args.model)
    cm, pm = _read_maps(args.maps)
    decoded = decode_scene(cm, pm, model, conf_threshold=args.tc, max_people=args.topn)
    _write_json(people_to_json(decoded), args.out)
    return 0


def _cmd_eval(args) -> int:
    model = _load_model_arg(args.model)
    people = people_from_json(_read_json(args.pred))
    scene = load_scene(args.gt)
    report = evaluate_scenes([people], [scene], model)
    _write_json(report, args.report)
    if args.csv:
        with open(args.csv, "w") as fh:
            fh.write(report_to_csv(report))
    return 0


def _cmd_loss(args) -> int:
    model = _load_model_arg(args.model)
    cm_pred, pm_pred = load_maps(args.pred)
    cm_gt, pm_gt = load_maps(args.gt)
    prior = GmmPrior.from_rmtf(args.prior) if args.prior else GmmPrior.standard_normal(
        (model.n_joints - 1) * 6
    )
    weights = LossWeights()
    center = focal_center_loss(cm_pred, cm_gt, weights.center)

    pred_centers, _ = parse_peaks(cm_pred, args.tc)
    gt_centers, _ = parse_peaks(cm_gt, args.tc)
    people = []
    mesh_totals = []
    if len(gt_centers) and len(pred_centers):
        match = match_to_gt(pred_centers, gt_centers)
        for pi, gi, dist in match.pairs:
            pred_vec = _person_from_map(pm_pred, pred_centers[pi], model)
            gt_vec = _person_from_map(pm_gt, gt_centers[gi], model)
            gt_targets = SupervisionTargets(
                rot6d=gt_vec.rot6d, beta=gt_vec.beta,
                joints3d=gt_vec.joints3d, joints2d=gt_vec.joints2d,
            )
            result = mesh_param_loss(pred_vec, gt_targets, weights, prior)
            people.append(
                {
                    "pred_center": [int(pred_centers[pi][0]), int(pred_centers[pi][1])],
                    "gt_center": [int(gt_centers[gi][0]), int(gt_centers[gi][1])],
                    "center_dist": dist,
                    "terms": result.terms,
                    "weighted": result.weighted(weights),
                    "total": result.total,
                }
            )
            mesh_totals.append(result.total)
    mesh_mean = float(np.mean(mesh_totals)) if mesh_totals else 0.0
    payload = {
        "center_loss": center,
        "mesh_loss": mesh_mean,
        "total": center + mesh_mean,
        "n_matched": len(people),
        "people": people,
    }
    _write_json(payload, None)
    return 0


def _person_from_map(pm, center, model) -> PersonPrediction:
    cam, pose, shape = sample_params(pm, center)
    _, joints3d = forward(model, pose, shape)
    joints2d = project(joints3d, cam)
    return PersonPrediction(
        rot6d=pose.rot6d, beta=shape.beta, joints3d=joints3d, joints2d=joints2d
    )


def _cmd_bench(args) -> int:
    counts = _parse_counts(args.people)
    if args.backend == "both":
        rows = bench_backends(counts, args.repeat, args.seed)
        sys.stdout.write(rows_to_csv(rows, with_backend=True))
        return 0
    if args.backend != "auto":
        set_backend(args.backend)
    rows = bench_decode(counts, args.repeat, args.seed)
    sys.stdout.write(rows_to_csv(rows))
    return 0


_COMMANDS = {
    "model": _cmd_model,
    "synth": _cmd_synth,
    "encode": _cmd_encode,
    "decode": _cmd_decode,
    "eval": _cmd_eval,
    "loss": _cmd_loss,
    "bench": _cmd_bench,
}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        return _fail("usage", str(exc), 1)
    try:
        return _COMMANDS[args.command](args)
    except UsageError as exc:
        return _fail("usage", str(exc), 1)
    except (CenterMeshError, ValueError, IndexError, KeyError) as exc:
        return _fail(type(exc).__name__, str(exc), 2)
    except OSError as exc:
        return _fail("io", str(exc), 2)


if __name__ == "__main__":
    sys.exit(main())
