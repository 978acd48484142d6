"""Numba-accelerated twins of the kernels in `_kernels_np.py`.

Same signatures, same semantics, same float64 math; only the execution
strategy differs (compiled loops instead of vectorized numpy). Compilation
results are cached on disk, so only the first process pays the JIT cost.
"""

from __future__ import annotations

import math

import numpy as np
from numba import njit


@njit(cache=True)
def render_gaussians(hm, rows, cols, sigmas, radii):
    H, W = hm.shape
    for i in range(len(rows)):
        rad = int(radii[i])
        inv = 1.0 / (2.0 * sigmas[i] * sigmas[i])
        for dr in range(-rad, rad + 1):
            r = rows[i] + dr
            if r < 0 or r >= H:
                continue
            for dc in range(-rad, rad + 1):
                c = cols[i] + dc
                if c < 0 or c >= W:
                    continue
                d2 = dr * dr + dc * dc
                if d2 > rad * rad:
                    continue
                v = math.exp(-d2 * inv)
                if v > hm[r, c]:
                    hm[r, c] = v


@njit(cache=True)
def fill_param_map(pm, best_d2, cxs, cys, radii, params):
    C, H, W = pm.shape
    for i in range(len(cxs)):
        rad = float(radii[i])
        r0 = max(int(math.ceil(cys[i] - rad)), 0)
        r1 = min(int(math.floor(cys[i] + rad)), H - 1)
        c0 = max(int(math.ceil(cxs[i] - rad)), 0)
        c1 = min(int(math.floor(cxs[i] + rad)), W - 1)
        for r in range(r0, r1 + 1):
            dy = r - cys[i]
            for c in range(c0, c1 + 1):
                dx = c - cxs[i]
                d2 = dx * dx + dy * dy
                if d2 <= rad * rad and d2 < best_d2[r, c]:
                    best_d2[r, c] = d2
                    for ch in range(C):
                        pm[ch, r, c] = params[i, ch]


@njit(cache=True)
def peak_mask(cm):
    H, W = cm.shape
    out = np.zeros((H, W), dtype=np.uint8)
    for r in range(H):
        for c in range(W):
            v = cm[r, c]
            ok = True
            for dr in range(-1, 2):
                nr = r + dr
                if nr < 0 or nr >= H:
                    continue
                for dc in range(-1, 2):
                    if dr == 0 and dc == 0:
                        continue
                    nc = c + dc
                    if nc < 0 or nc >= W:
                        continue
                    nv = cm[nr, nc]
                    if dr > 0 or (dr == 0 and dc > 0):
                        if not v >= nv:
                            ok = False
                            break
                    else:
                        if not v > nv:
                            ok = False
                            break
                if not ok:
                    break
            if ok:
                out[r, c] = 1
    return out


@njit(cache=True)
def focal_sums(pred, gt, eps):
    H, W = pred.shape
    l_pos = 0.0
    l_neg = 0.0
    n_pos = 0.0
    for r in range(H):
        for c in range(W):
            p = pred[r, c]
            if p < eps:
                p = eps
            elif p > 1.0 - eps:
                p = 1.0 - eps
            g = gt[r, c]
            if g >= 1.0:
                l_pos += math.log(p) * (1.0 - p) * (1.0 - p)
                n_pos += 1.0
            else:
                gw = (1.0 - g) ** 4
                l_neg += math.log(1.0 - p) * p * p * gw
    return l_pos, l_neg, n_pos


@njit(cache=True)
def focal_grad(pred, gt, eps):
    H, W = pred.shape
    n_pos = 0.0
    for r in range(H):
        for c in range(W):
            if gt[r, c] >= 1.0:
                n_pos += 1.0
    grad = np.zeros((H, W))
    for r in range(H):
        for c in range(W):
            p = pred[r, c]
            if p <= eps or p >= 1.0 - eps:
                continue
            if gt[r, c] >= 1.0:
                d = (1.0 - p) * (1.0 - p) / p - 2.0 * (1.0 - p) * math.log(p)
            else:
                gw = (1.0 - gt[r, c]) ** 4
                d = (-(p * p) / (1.0 - p) + 2.0 * p * math.log(1.0 - p)) * gw
            grad[r, c] = -d / n_pos
    return grad


@njit(cache=True)
def car_repel(centers, ks, gamma, width, height, max_sweeps):
    n = centers.shape[0]
    if n < 2 or gamma == 0.0:
        return 0
    sweeps = 0
    for _ in range(max_sweeps):
        sweeps += 1
        triggered = False
        for i in range(n - 1):
            for j in range(i + 1, n):
                dx = centers[i, 0] - centers[j, 0]
                dy = centers[i, 1] - centers[j, 1]
                d = math.sqrt(dx * dx + dy * dy)
                if d < 1e-6:
                    centers[j, 0] = min(centers[j, 0] + 1.0, width - 1.0)
                    dx = centers[i, 0] - centers[j, 0]
                    d = math.sqrt(dx * dx + dy * dy)
                    if d < 1e-6:
                        centers[j, 0] = max(centers[i, 0] - 1.0, 0.0)
                        dx = centers[i, 0] - centers[j, 0]
                        d = math.sqrt(dx * dx + dy * dy)
                        if d < 1e-6:
                            continue
                thr = ks[i] + ks[j] + 1.0
                if d < thr:
                    triggered = True
                    f = gamma * (thr - d) / d
                    px = f * dx
                    py = f * dy
                    centers[i, 0] = min(max(centers[i, 0] + px, 0.0), width - 1.0)
                    centers[i, 1] = min(max(centers[i, 1] + py, 0.0), height - 1.0)
                    centers[j, 0] = min(max(centers[j, 0] - px, 0.0), width - 1.0)
                    centers[j, 1] = min(max(centers[j, 1] - py, 0.0), height - 1.0)
        if not triggered:
            break
    return sweeps


@njit(cache=True)
def body_forward(template, shape_dirs, reg_idx, reg_w, parents, skin_idx, skin_w,
                 betas, rot6d):
    N = rot6d.shape[0]
    K = rot6d.shape[1]
    V = template.shape[0]
    S = shape_dirs.shape[2]
    M1 = reg_idx.shape[1]
    M2 = skin_idx.shape[1]

    mesh = np.empty((N, V, 3))
    joints = np.empty((N, K, 3))
    rots = np.empty((N, K, 3, 3))

    # Gram-Schmidt all rotations up front so a degenerate input aborts early.
    for n in range(N):
        for k in range(K):
            ax = rot6d[n, k, 0]
            ay = rot6d[n, k, 1]
            az = rot6d[n, k, 2]
            na = math.sqrt(ax * ax + ay * ay + az * az)
            if not na > 1e-8:
                return mesh, joints, n * K + k
            ux = ax / na
            uy = ay / na
            uz = az / na
            bx = rot6d[n, k, 3]
            by = rot6d[n, k, 4]
            bz = rot6d[n, k, 5]
            proj = ux * bx + uy * by + uz * bz
            wx = bx - proj * ux
            wy = by - proj * uy
            wz = bz - proj * uz
            nw = math.sqrt(wx * wx + wy * wy + wz * wz)
            if not nw > 1e-8:
                return mesh, joints, n * K + k
            vx = wx / nw
            vy = wy / nw
            vz = wz / nw
            rots[n, k, 0, 0] = ux
            rots[n, k, 1, 0] = uy
            rots[n, k, 2, 0] = uz
            rots[n, k, 0, 1] = vx
            rots[n, k, 1, 1] = vy
            rots[n, k, 2, 1] = vz
            rots[n, k, 0, 2] = uy * vz - uz * vy
            rots[n, k, 1, 2] = uz * vx - ux * vz
            rots[n, k, 2, 2] = ux * vy - uy * vx

    shaped = np.empty((V, 3))
    rest_j = np.empty((K, 3))
    world_r = np.empty((K, 3, 3))
    world_t = np.empty((K, 3))
    skin_t = np.empty((K, 3))

    for n in range(N):
        for v in range(V):
            for c in range(3):
                acc = template[v, c]
                for s in range(S):
                    acc += shape_dirs[v, c, s] * betas[n, s]
                shaped[v, c] = acc
        for k in range(K):
            for c in range(3):
                acc = 0.0
                for m in range(M1):
                    acc += reg_w[k, m] * shaped[reg_idx[k, m], c]
                rest_j[k, c] = acc

        for a in range(3):
            for b in range(3):
                world_r[0, a, b] = rots[n, 0, a, b]
            world_t[0, a] = rest_j[0, a]
        for k in range(1, K):
            p = parents[k]
            for a in range(3):
                for b in range(3):
                    acc = 0.0
                    for m in range(3):
                        acc += world_r[p, a, m] * rots[n, k, m, b]
                    world_r[k, a, b] = acc
                acc = 0.0
                for m in range(3):
                    acc += world_r[p, a, m] * (rest_j[k, m] - rest_j[p, m])
                world_t[k, a] = acc + world_t[p, a]
        for k in range(K):
            for a in range(3):
                acc = 0.0
                for m in range(3):
                    acc += world_r[k, a, m] * rest_j[k, m]
                skin_t[k, a] = world_t[k, a] - acc

        for v in range(V):
            x = shaped[v, 0]
            y = shaped[v, 1]
            z = shaped[v, 2]
            for a in range(3):
                acc = 0.0
                for m in range(M2):
                    w = skin_w[v, m]
                    if w != 0.0:
                        k = skin_idx[v, m]
                        acc += w * (
                            world_r[k, a, 0] * x
                            + world_r[k, a, 1] * y
                            + world_r[k, a, 2] * z
                            + skin_t[k, a]
                        )
                mesh[n, v, a] = acc
        for k in range(K):
            for c in range(3):
                acc = 0.0
                for m in range(M1):
                    acc += reg_w[k, m] * mesh[n, reg_idx[k, m], c]
                joints[n, k, c] = acc
    return mesh, joints, -1
