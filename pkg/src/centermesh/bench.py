"""Decode latency benchmarks, including the numba-vs-numpy backend comparison.

The scenes used for timing place people with no center collisions so the
decoder really processes n distinct detections per map.
"""

from __future__ import annotations

import time

import numpy as np

from .backend import backend_name, use_backend, warmup
from .body_model import BodyModel
from .decode import decode_scene
from .scene import default_toy_model, encode_scene, synth_scene

BENCH_CSV_FIELDS = ("n_people", "mean_ms", "p95_ms")


def bench_decode(
    people_counts,
    repeat: int = 100,
    seed: int = 0,
    model: BodyModel | None = None,
    warmup_runs: int = 3,
) -> list[dict]:
    """Time decode_scene for each person count under the active backend.

    Returns one row per count: {backend, n_people, n_decoded, mean_ms, p95_ms}.
    JIT compilation is triggered before any timing.
    """
    model = model or default_toy_model()
    warmup()
    rows = []
    for n in people_counts:
        scene = synth_scene(int(n), seed, "none", model=model, car_gamma=0.0)
        cm, pm = encode_scene(scene, model)
        for _ in range(warmup_runs):
            decoded = decode_scene(cm, pm, model)
        times = np.empty(repeat)
        for r in range(repeat):
            t0 = time.perf_counter()
            decoded = decode_scene(cm, pm, model)
            times[r] = time.perf_counter() - t0
        rows.append(
            {
                "backend": backend_name(),
                "n_people": int(n),
                "n_decoded": len(decoded),
                "mean_ms": float(times.mean() * 1e3),
                "p95_ms": float(np.percentile(times, 95) * 1e3),
            }
        )
    return rows


def bench_backends(people_counts, repeat: int = 100, seed: int = 0,
                   model: BodyModel | None = None) -> list[dict]:
    """Run bench_decode under both backends for a side-by-side comparison."""
    rows = []
    for name in ("numba", "numpy"):
        try:
            with use_backend(name):
                rows.extend(bench_decode(people_counts, repeat, seed, model))
        except ImportError:
            continue
    return rows


def rows_to_csv(rows: list[dict], with_backend: bool = False) -> str:
    fields = (("backend",) if with_backend else ()) + BENCH_CSV_FIELDS
    lines = [",".join(fields)]
    for row in rows:
        cells = []
        for name in fields:
            value = row[name]
            cells.append(f"{value:.6f}" if isinstance(value, float) else str(value))
        lines.append(",".join(cells))
    return "\n".join(lines) + "\n"
