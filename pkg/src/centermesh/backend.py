"""Kernel backend selection: numba-accelerated by default, pure numpy on demand.

The hot inner loops (heatmap rendering, parameter-map fill, peak parsing,
focal-loss sums, center repulsion sweeps, skinning forward) exist twice with
identical signatures and semantics:

    _kernels_nb.py   numba @njit versions (default when numba imports)
    _kernels_np.py   pure numpy versions

Selection, in order of precedence:

    1. CENTERMESH_BACKEND environment variable: "numba", "numpy", or "auto".
    2. set_backend()/use_backend() at runtime (used by the benchmark).
    3. auto: numba when importable, else numpy.
"""

from __future__ import annotations

import os
from contextlib import contextmanager

import numpy as np

BACKENDS = ("numba", "numpy")

_active_name: str | None = None
_active_mod = None


def _resolve(name: str):
    if name == "numpy":
        from . import _kernels_np

        return _kernels_np
    if name == "numba":
        from . import _kernels_nb

        return _kernels_nb
    raise ValueError(f"unknown backend {name!r}; expected one of {BACKENDS}")


def _initial() -> tuple[str, object]:
    env = os.environ.get("CENTERMESH_BACKEND", "auto").strip().lower()
    if env in ("", "auto"):
        try:
            return "numba", _resolve("numba")
        except ImportError:
            return "numpy", _resolve("numpy")
    if env not in BACKENDS:
        raise ValueError(
            f"CENTERMESH_BACKEND={env!r} not understood; use 'numba', 'numpy', or 'auto'"
        )
    return env, _resolve(env)


def kernels():
    """Return the active kernel module."""
    global _active_name, _active_mod
    if _active_mod is None:
        _active_name, _active_mod = _initial()
    return _active_mod


def backend_name() -> str:
    kernels()
    assert _active_name is not None
    return _active_name


def set_backend(name: str) -> None:
    """Switch the active backend ('numba' or 'numpy') for this process."""
    global _active_name, _active_mod
    mod = _resolve(name)
    _active_name, _active_mod = name, mod


@contextmanager
def use_backend(name: str):
    """Temporarily run under a given backend (benchmarks, equivalence tests)."""
    global _active_name, _active_mod
    kernels()
    prev = _active_name, _active_mod
    set_backend(name)
    try:
        yield
    finally:
        _active_name, _active_mod = prev


def warmup() -> None:
    """Run every kernel once on tiny inputs so JIT compilation happens up front.

    A no-op for the numpy backend; for numba this triggers (or loads the
    cached) compilation outside any timed section.
    """
    k = kernels()
    hm = np.zeros((8, 8))
    k.render_gaussians(hm, np.array([4]), np.array([4]), np.array([1.0]), np.array([2]))
    pm = np.zeros((5, 8, 8))
    best = np.full((8, 8), np.inf)
    k.fill_param_map(pm, best, np.array([4.0]), np.array([4.0]), np.array([2]),
                     np.zeros((1, 5)))
    k.peak_mask(hm)
    k.focal_sums(np.full((8, 8), 0.5), hm, 1e-4)
    k.focal_grad(np.full((8, 8), 0.5), hm, 1e-4)
    centers = np.array([[2.0, 2.0], [3.0, 2.0]])
    k.car_repel(centers, np.array([2.0, 2.0]), 0.2, 8.0, 8.0, 4)
    rot6d = np.zeros((1, 2, 6))
    rot6d[..., 0] = 1.0
    rot6d[..., 4] = 1.0
    k.body_forward(
        np.zeros((8, 3)), np.zeros((8, 3, 2)),
        np.zeros((2, 4), dtype=np.int64), np.full((2, 4), 0.25),
        np.array([-1, 0], dtype=np.int64),
        np.zeros((8, 2), dtype=np.int64), np.full((8, 2), 0.5),
        np.zeros((1, 2)), rot6d,
    )
