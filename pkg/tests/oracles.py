"""Independent reference implementations used to verify the library.

Everything here recomputes results through a different route than the
package (plain Python loops, quaternion algebra, inverse-based densities),
so agreement is meaningful.
"""

import math

import numpy as np


def oracle_focal(pred, gt, w_c, eps=1e-4):
    """Scalar per-cell focal center loss."""
    h, w = pred.shape
    l_pos = l_neg = 0.0
    n_pos = 0
    for r in range(h):
        for c in range(w):
            p = min(max(pred[r, c], eps), 1 - eps)
            g = gt[r, c]
            if g >= 1.0:
                l_pos += math.log(p) * (1 - p) ** 2
                n_pos += 1
            else:
                l_neg += math.log(1 - p) * p * p * (1 - g) ** 4
    return -(l_pos + l_neg) / n_pos * w_c


def oracle_gram_schmidt(r6):
    """6D -> rotation columns with plain Python floats."""
    a = [float(v) for v in r6[:3]]
    b = [float(v) for v in r6[3:]]
    na = math.sqrt(sum(x * x for x in a))
    u = [x / na for x in a]
    dot = sum(ux * bx for ux, bx in zip(u, b))
    w = [bx - dot * ux for ux, bx in zip(u, b)]
    nw = math.sqrt(sum(x * x for x in w))
    v = [x / nw for x in w]
    z = [
        u[1] * v[2] - u[2] * v[1],
        u[2] * v[0] - u[0] * v[2],
        u[0] * v[1] - u[1] * v[0],
    ]
    return [[u[i], v[i], z[i]] for i in range(3)]


def oracle_pose(pred_r6, gt_r6):
    total = 0.0
    count = 0
    for jp, jg in zip(pred_r6, gt_r6):
        rp = oracle_gram_schmidt(jp)
        rg = oracle_gram_schmidt(jg)
        for i in range(3):
            for j in range(3):
                total += (rp[i][j] - rg[i][j]) ** 2
                count += 1
    return total / count


def oracle_shape(pred, gt):
    return sum((p - g) ** 2 for p, g in zip(pred, gt)) / len(pred)


def oracle_j3d(pred, gt, root=0):
    total = 0.0
    for j in range(len(pred)):
        for c in range(3):
            diff = (pred[j][c] - pred[root][c]) - (gt[j][c] - gt[root][c])
            total += diff * diff
    return total / (3 * len(pred))


def oracle_procrustes_horn(x, y):
    """Horn's quaternion absolute orientation (no SVD)."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    xc = x - x.mean(axis=0)
    yc = y - y.mean(axis=0)
    s_mat = xc.T @ yc
    sxx, sxy, sxz = s_mat[0]
    syx, syy, syz = s_mat[1]
    szx, szy, szz = s_mat[2]
    n = np.array(
        [
            [sxx + syy + szz, syz - szy, szx - sxz, sxy - syx],
            [syz - szy, sxx - syy - szz, sxy + syx, szx + sxz],
            [szx - sxz, sxy + syx, -sxx + syy - szz, syz + szy],
            [sxy - syx, szx + sxz, syz + szy, -sxx - syy + szz],
        ]
    )
    eigvals, eigvecs = np.linalg.eigh(n)
    qw, qx, qy, qz = eigvecs[:, np.argmax(eigvals)]
    rot = np.array(
        [
            [1 - 2 * (qy**2 + qz**2), 2 * (qx * qy - qz * qw), 2 * (qx * qz + qy * qw)],
            [2 * (qx * qy + qz * qw), 1 - 2 * (qx**2 + qz**2), 2 * (qy * qz - qx * qw)],
            [2 * (qx * qz - qy * qw), 2 * (qy * qz + qx * qw), 1 - 2 * (qx**2 + qy**2)],
        ]
    )
    scale = float(np.sum(yc * (xc @ rot.T))) / float(np.sum(xc * xc))
    t = y.mean(axis=0) - scale * rot @ x.mean(axis=0)
    return scale, rot, t


def oracle_paj3d(pred, gt):
    scale, rot, t = oracle_procrustes_horn(pred, gt)
    aligned = scale * np.asarray(pred) @ rot.T + t
    return float(np.mean((aligned - np.asarray(gt)) ** 2))


def oracle_pj2d(pred, gt, vis):
    total = 0.0
    n_vis = 0
    for j in range(len(pred)):
        if vis[j]:
            n_vis += 1
            for c in range(2):
                total += (pred[j][c] - gt[j][c]) ** 2
    return total / (2 * n_vis)


def oracle_prior(pose_r6, beta, weights, means, covs):
    """GMM NLL surrogate via explicit inverse + slogdet."""
    body = np.asarray(pose_r6)[1:].reshape(-1)
    d = body.shape[0]
    best = np.inf
    for w, mu, cov in zip(weights, means, covs):
        inv = np.linalg.inv(cov)
        _, logdet = np.linalg.slogdet(cov)
        maha = float((body - mu) @ inv @ (body - mu))
        cost = 0.5 * maha - math.log(w) + 0.5 * logdet + 0.5 * d * math.log(2 * math.pi)
        best = min(best, cost)
    return best + float(np.sum(np.asarray(beta) ** 2))


def brute_force_peaks(cm, threshold):
    """Every-cell scan for the peak rule: strictly greater than each
    lexicographically-earlier neighbor, >= each later one."""
    h, w = cm.shape
    found = set()
    for r in range(h):
        for c in range(w):
            v = cm[r, c]
            if v <= threshold:
                continue
            ok = True
            for dr in (-1, 0, 1):
                for dc in (-1, 0, 1):
                    if dr == 0 and dc == 0:
                        continue
                    rr, cc = r + dr, c + dc
                    if 0 <= rr < h and 0 <= cc < w:
                        nv = cm[rr, cc]
                        if nv > v or (nv == v and (rr, cc) < (r, c)):
                            ok = False
            if ok:
                found.add((r, c))
    return found


def rel_err(a, b):
    denom = max(np.linalg.norm(a), np.linalg.norm(b), 1e-12)
    return np.linalg.norm(np.asarray(a) - np.asarray(b)) / denom


def central_diff(fn, x, h=1e-5):
    x = np.asarray(x, dtype=np.float64)
    grad = np.zeros_like(x)
    for idx in np.ndindex(x.shape):
        plus = x.copy()
        plus[idx] += h
        minus = x.copy()
        minus[idx] -= h
        grad[idx] = (fn(plus) - fn(minus)) / (2 * h)
    return grad
