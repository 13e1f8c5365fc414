"""Hot numeric kernels with a numba fast path and a pure-numpy fallback.

The two inner loops that dominate batch runtime live here:

* ``laplacian_variance`` — per-pixel 4-neighbor Laplacian variance used to
  score frame sharpness (one call per video frame).
* ``candidate_alignment_errors`` — the O(F^2) scan that scores every
  per-frame candidate transform against all common frames during submap
  registration.

Set ``VQ3DKIT_DISABLE_NUMBA=1`` (before import) to force the numpy
fallbacks; ``vq3dkit.kernels.USING_NUMBA`` reports which path is active.
Both paths compute identical formulas; results agree to float rounding.
``benchmarks/bench_kernels.py`` compares them.
"""

import math
import os

import numpy as np

__all__ = [
    "USING_NUMBA",
    "laplacian_variance",
    "candidate_alignment_errors",
    "laplacian_variance_numpy",
    "candidate_alignment_errors_numpy",
]

_DISABLED = os.environ.get("VQ3DKIT_DISABLE_NUMBA", "").strip().lower() in (
    "1",
    "true",
    "yes",
)

if not _DISABLED:
    try:
        from numba import njit
    except ImportError:  # pragma: no cover - numba is a declared dependency
        njit = None
else:
    njit = None

USING_NUMBA = njit is not None


# ---------------------------------------------------------------------------
# Variance of the 4-neighbor Laplacian over interior pixels
# ---------------------------------------------------------------------------
#
# Neighbor sums are grouped pairwise, (up+down) + (left+right) - 4*center,
# so a constant image yields an exact zero response in floating point.

def _laplacian_variance_loops(px):
    h, w = px.shape
    n = (h - 2) * (w - 2)
    s = 0.0
    s2 = 0.0
    for r in range(1, h - 1):
        for c in range(1, w - 1):
            lap = (px[r - 1, c] + px[r + 1, c]) + (px[r, c - 1] + px[r, c + 1]) \
                - 4.0 * px[r, c]
            s += lap
            s2 += lap * lap
    mean = s / n
    return s2 / n - mean * mean


def laplacian_variance_numpy(px: np.ndarray) -> float:
    """Vectorized fallback; identical stencil and variance definition."""
    lap = (px[:-2, 1:-1] + px[2:, 1:-1]) + (px[1:-1, :-2] + px[1:-1, 2:]) \
        - 4.0 * px[1:-1, 1:-1]
    return float(lap.var())


# ---------------------------------------------------------------------------
# Per-frame candidate scan for submap registration
# ---------------------------------------------------------------------------
#
# Inputs are camera centers (F, 3) and camera-to-world unit quaternions
# (F, 4) for the same frames in the submap system (c) and the world system
# (m).  Candidate i is the rigid transform mapping pose c_i exactly onto
# pose m_i:  R_i = R_m,i R_c,i^T,  t_i = center_m,i - R_i center_c,i.
# The returned error for candidate i is the mean over all frames j of
#   ||center_m,j - (R_i center_c,j + t_i)|| + lam * geo(q_m,j, q_i ⊗ q_c,j)

def _candidate_errors_loops(centers_c, centers_m, quats_c, quats_m, lam):
    f = centers_c.shape[0]
    errs = np.empty(f)
    for i in range(f):
        # candidate rotation q_i = q_m,i * conj(q_c,i)
        aw, ax, ay, az = quats_m[i, 0], quats_m[i, 1], quats_m[i, 2], quats_m[i, 3]
        bw, bx, by, bz = quats_c[i, 0], -quats_c[i, 1], -quats_c[i, 2], -quats_c[i, 3]
        qw = aw * bw - ax * bx - ay * by - az * bz
        qx = aw * bx + ax * bw + ay * bz - az * by
        qy = aw * by - ax * bz + ay * bw + az * bx
        qz = aw * bz + ax * by - ay * bx + az * bw
        # rotate center_c,i by q_i to get the candidate translation
        cx, cy, cz = centers_c[i, 0], centers_c[i, 1], centers_c[i, 2]
        tx1 = 2.0 * (qy * cz - qz * cy)
        ty1 = 2.0 * (qz * cx - qx * cz)
        tz1 = 2.0 * (qx * cy - qy * cx)
        rx = cx + qw * tx1 + (qy * tz1 - qz * ty1)
        ry = cy + qw * ty1 + (qz * tx1 - qx * tz1)
        rz = cz + qw * tz1 + (qx * ty1 - qy * tx1)
        tx = centers_m[i, 0] - rx
        ty = centers_m[i, 1] - ry
        tz = centers_m[i, 2] - rz
        total = 0.0
        for j in range(f):
            px, py, pz = centers_c[j, 0], centers_c[j, 1], centers_c[j, 2]
            ux = 2.0 * (qy * pz - qz * py)
            uy = 2.0 * (qz * px - qx * pz)
            uz = 2.0 * (qx * py - qy * px)
            wx = px + qw * ux + (qy * uz - qz * uy) + tx
            wy = py + qw * uy + (qz * ux - qx * uz) + ty
            wz = pz + qw * uz + (qx * uy - qy * ux) + tz
            dx = centers_m[j, 0] - wx
            dy = centers_m[j, 1] - wy
            dz = centers_m[j, 2] - wz
            trans_err = math.sqrt(dx * dx + dy * dy + dz * dz)
            # rotated source quaternion q_i * q_c,j
            sw, sx, sy, sz = (
                quats_c[j, 0],
                quats_c[j, 1],
                quats_c[j, 2],
                quats_c[j, 3],
            )
            rw = qw * sw - qx * sx - qy * sy - qz * sz
            r1 = qw * sx + qx * sw + qy * sz - qz * sy
            r2 = qw * sy - qx * sz + qy * sw + qz * sx
            r3 = qw * sz + qx * sy - qy * sx + qz * sw
            # relative quaternion (q_i q_c,j) * conj(q_m,j); atan2 form of
            # the geodesic angle keeps full precision near zero
            mw, mx, my, mz = quats_m[j, 0], -quats_m[j, 1], -quats_m[j, 2], -quats_m[j, 3]
            ew = rw * mw - r1 * mx - r2 * my - r3 * mz
            ex = rw * mx + r1 * mw + r2 * mz - r3 * my
            ey = rw * my - r1 * mz + r2 * mw + r3 * mx
            ez = rw * mz + r1 * my - r2 * mx + r3 * mw
            rot_err = 2.0 * math.atan2(math.sqrt(ex * ex + ey * ey + ez * ez), abs(ew))
            total += trans_err + lam * rot_err
        errs[i] = total / f
    return errs


def _quat_mul_rows(a, b):
    aw, ax, ay, az = a[:, 0], a[:, 1], a[:, 2], a[:, 3]
    bw, bx, by, bz = b[:, 0], b[:, 1], b[:, 2], b[:, 3]
    return np.stack(
        [
            aw * bw - ax * bx - ay * by - az * bz,
            aw * bx + ax * bw + ay * bz - az * by,
            aw * by - ax * bz + ay * bw + az * bx,
            aw * bz + ax * by - ay * bx + az * bw,
        ],
        axis=1,
    )


def _quat_rotate_rows(q, v):
    w = q[:, :1]
    im = q[:, 1:]
    t = 2.0 * np.cross(im, v)
    return v + w * t + np.cross(im, t)


def candidate_alignment_errors_numpy(centers_c, centers_m, quats_c, quats_m, lam):
    """Fallback: per-candidate loop with vectorized inner frame sweep."""
    f = centers_c.shape[0]
    conj_c = quats_c * np.array([1.0, -1.0, -1.0, -1.0])
    conj_m = quats_m * np.array([1.0, -1.0, -1.0, -1.0])
    errs = np.empty(f)
    for i in range(f):
        q = _quat_mul_rows(quats_m[i : i + 1], conj_c[i : i + 1])[0]
        qrow = np.broadcast_to(q, (f, 4))
        rotated = _quat_rotate_rows(qrow, centers_c)
        t = centers_m[i] - rotated[i]
        trans_err = np.linalg.norm(centers_m - (rotated + t), axis=1)
        rel = _quat_mul_rows(_quat_mul_rows(qrow, quats_c), conj_m)
        rot_err = 2.0 * np.arctan2(np.linalg.norm(rel[:, 1:], axis=1), np.abs(rel[:, 0]))
        errs[i] = float(np.mean(trans_err + lam * rot_err))
    return errs


if USING_NUMBA:
    laplacian_variance = njit(cache=True)(_laplacian_variance_loops)
    candidate_alignment_errors = njit(cache=True)(_candidate_errors_loops)
else:
    laplacian_variance = laplacian_variance_numpy
    candidate_alignment_errors = candidate_alignment_errors_numpy
