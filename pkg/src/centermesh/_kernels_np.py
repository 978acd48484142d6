"""Pure numpy implementations of the hot kernels.

Reference semantics for the numba versions in `_kernels_nb.py`; both modules
expose the same functions with the same contracts. Coordinates follow the
repo-wide convention: heatmap cells are (row, col), continuous positions are
(x, y) with x along columns.
"""

from __future__ import annotations

import math

import numpy as np


def render_gaussians(hm, rows, cols, sigmas, radii):
    """Max-composite truncated Gaussians onto `hm` in place.

    Each peak i is centered on integer cell (rows[i], cols[i]) with value
    exp(-(dr^2+dc^2) / (2 sigma^2)) on cells within Euclidean radius radii[i].
    The center cell gets exactly 1.
    """
    H, W = hm.shape
    for i in range(len(rows)):
        rad = int(radii[i])
        r0 = max(int(rows[i]) - rad, 0)
        r1 = min(int(rows[i]) + rad, H - 1)
        c0 = max(int(cols[i]) - rad, 0)
        c1 = min(int(cols[i]) + rad, W - 1)
        if r0 > r1 or c0 > c1:
            continue
        dr = np.arange(r0, r1 + 1) - rows[i]
        dc = np.arange(c0, c1 + 1) - cols[i]
        d2 = dr[:, None] ** 2 + dc[None, :] ** 2
        patch = np.exp(-d2 / (2.0 * sigmas[i] * sigmas[i]))
        patch[d2 > rad * rad] = 0.0
        region = hm[r0 : r1 + 1, c0 : c1 + 1]
        np.maximum(region, patch, out=region)


def fill_param_map(pm, best_d2, cxs, cys, radii, params):
    """Write each person's parameter vector into every cell within its radius.

    Contested cells go to the nearest fractional center (cxs[i], cys[i]);
    ties keep the earlier (lower-index) person. `best_d2` must start at +inf
    and carries the running nearest distance per cell.
    """
    _, H, W = pm.shape
    for i in range(len(cxs)):
        rad = float(radii[i])
        r0 = max(int(math.ceil(cys[i] - rad)), 0)
        r1 = min(int(math.floor(cys[i] + rad)), H - 1)
        c0 = max(int(math.ceil(cxs[i] - rad)), 0)
        c1 = min(int(math.floor(cxs[i] + rad)), W - 1)
        if r0 > r1 or c0 > c1:
            continue
        dy = np.arange(r0, r1 + 1) - cys[i]
        dx = np.arange(c0, c1 + 1) - cxs[i]
        d2 = dy[:, None] ** 2 + dx[None, :] ** 2
        win_best = best_d2[r0 : r1 + 1, c0 : c1 + 1]
        mask = (d2 <= rad * rad) & (d2 < win_best)
        if not mask.any():
            continue
        win_best[mask] = d2[mask]
        pm[:, r0 : r1 + 1, c0 : c1 + 1][:, mask] = params[i][:, None]


def peak_mask(cm):
    """Local-maximum mask under the lexicographic plateau rule.

    A cell is a peak iff, over its 3x3 neighborhood, it is strictly greater
    than every lexicographically-earlier neighbor and >= every later one, so
    each flat plateau keeps exactly its smallest (row, col) cell.
    """
    H, W = cm.shape
    padded = np.full((H + 2, W + 2), -np.inf)
    padded[1:-1, 1:-1] = cm
    ok = np.ones((H, W), dtype=bool)
    for dr in (-1, 0, 1):
        for dc in (-1, 0, 1):
            if dr == 0 and dc == 0:
                continue
            nb = padded[1 + dr : H + 1 + dr, 1 + dc : W + 1 + dc]
            if dr > 0 or (dr == 0 and dc > 0):
                ok &= cm >= nb
            else:
                ok &= cm > nb
    return ok.astype(np.uint8)


def focal_sums(pred, gt, eps):
    """Positive/negative focal log-sums and the positive-cell count.

    Returns (l_pos, l_neg, n_pos) with predictions clamped to [eps, 1-eps]:
        l_pos = sum over cells with gt >= 1 of log(p) (1-p)^2
        l_neg = sum elsewhere of log(1-p) p^2 (1-gt)^4
    """
    p = np.clip(pred, eps, 1.0 - eps)
    pos = gt >= 1.0
    l_pos = float(np.sum(np.log(p[pos]) * (1.0 - p[pos]) ** 2))
    gneg = gt[~pos]
    pneg = p[~pos]
    l_neg = float(np.sum(np.log(1.0 - pneg) * pneg**2 * (1.0 - gneg) ** 4))
    return l_pos, l_neg, float(np.count_nonzero(pos))


def focal_grad(pred, gt, eps):
    """Gradient of -(l_pos + l_neg) / n_pos with respect to `pred`.

    Zero where the clamp is active (pred outside the open interval).
    """
    p = np.clip(pred, eps, 1.0 - eps)
    pos = gt >= 1.0
    n_pos = float(np.count_nonzero(pos))
    grad = np.zeros_like(pred)
    d_pos = (1.0 - p) ** 2 / p - 2.0 * (1.0 - p) * np.log(p)
    d_neg = (-(p**2) / (1.0 - p) + 2.0 * p * np.log(1.0 - p)) * (1.0 - gt) ** 4
    grad[pos] = d_pos[pos]
    grad[~pos] = d_neg[~pos]
    grad[(pred <= eps) | (pred >= 1.0 - eps)] = 0.0
    return -grad / n_pos


def car_repel(centers, ks, gamma, width, height, max_sweeps):
    """Pairwise center repulsion swept to a fixed point, in place.

    Gauss-Seidel sweeps over unordered pairs in ascending index order; a pair
    (i, j) with distance d below ks[i]+ks[j]+1 is pushed apart by gamma times
    the repulsion vector, then clamped to [0, width-1] x [0, height-1].
    Coincident pairs split the higher-indexed center by +1 in x first.
    Returns the number of sweeps performed (the final, trigger-free sweep
    included).
    """
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


def body_forward(template, shape_dirs, reg_idx, reg_w, parents, skin_idx, skin_w,
                 betas, rot6d):
    """Batched body-model forward pass from 6D pose parameters.

    template (V,3); shape_dirs (V,3,S); joint regressor in sparse row form
    reg_idx/reg_w (K,M1); parents (K,) with parents[0] == -1 and
    parents[j] < j; skinning weights in sparse row form skin_idx/skin_w
    (V,M2); betas (N,S); rot6d (N,K,6).

    Returns (mesh (N,V,3), joints (N,K,3), bad): joints regressed from the
    posed mesh, bad == -1 on success or the flat joint index of the first
    degenerate 6D rotation (near-zero or parallel columns).
    """
    n, k = rot6d.shape[0], rot6d.shape[1]

    # Gram-Schmidt, columns (u, v, u x v).
    a = rot6d[..., 0:3]
    b = rot6d[..., 3:6]
    na = np.linalg.norm(a, axis=-1)
    with np.errstate(invalid="ignore", divide="ignore"):
        u = a / na[..., None]
        proj = np.sum(u * b, axis=-1)
        w = b - proj[..., None] * u
        nw = np.linalg.norm(w, axis=-1)
        v = w / nw[..., None]
    good = (na > 1e-8) & (nw > 1e-8)
    if not good.all():
        bad = int(np.argmin(good.reshape(-1)))
        return np.empty((n, 0, 3)), np.empty((n, k, 3)), bad
    z = np.cross(u, v)
    rots = np.stack([u, v, z], axis=-1)

    shaped = template[None] + np.einsum("vcs,ns->nvc", shape_dirs, betas)
    rest_j = (shaped[:, reg_idx] * reg_w[None, :, :, None]).sum(axis=2)

    world_r = np.empty((n, k, 3, 3))
    world_t = np.empty((n, k, 3))
    world_r[:, 0] = rots[:, 0]
    world_t[:, 0] = rest_j[:, 0]
    for j in range(1, k):
        p = parents[j]
        world_r[:, j] = world_r[:, p] @ rots[:, j]
        offset = rest_j[:, j] - rest_j[:, p]
        world_t[:, j] = (world_r[:, p] @ offset[..., None])[..., 0] + world_t[:, p]

    # Posed = world transform after undoing the rest joint position; the 12
    # transform numbers per joint are gathered sparsely per vertex.
    skin_t = world_t - (world_r @ rest_j[..., None])[..., 0]
    tf = np.concatenate([world_r.reshape(n, k, 9), skin_t], axis=2)  # (N,K,12)
    blended = (tf[:, skin_idx] * skin_w[None, :, :, None]).sum(axis=2)  # (N,V,12)
    mesh = (blended[..., :9].reshape(n, -1, 3, 3) @ shaped[..., None])[..., 0]
    mesh = mesh + blended[..., 9:]
    joints = (mesh[:, reg_idx] * reg_w[None, :, :, None]).sum(axis=2)
    return mesh, joints, -1
