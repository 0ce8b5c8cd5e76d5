"""numba-compiled twins of the kernels in ``_numpy``.

Each kernel loops in the same accumulation order as its numpy counterpart, so
the two paths agree to rounding (tested to 1e-12).
"""
import math

import numpy as np
from numba import njit


@njit(cache=True)
def im2col(xp, kh, kw, stride, ho, wo):
    n, c = xp.shape[0], xp.shape[1]
    cols = np.empty((c * kh * kw, n * ho * wo))
    for ci in range(c):
        for a in range(kh):
            for b in range(kw):
                r = (ci * kh + a) * kw + b
                for ni in range(n):
                    base = ni * ho * wo
                    for i in range(ho):
                        for j in range(wo):
                            cols[r, base + i * wo + j] = xp[ni, ci, i * stride + a, j * stride + b]
    return cols


@njit(cache=True)
def col2im(cols, n, c, hp, wp, kh, kw, stride, ho, wo):
    out = np.zeros((n, c, hp, wp))
    for a in range(kh):
        for b in range(kw):
            for ci in range(c):
                r = (ci * kh + a) * kw + b
                for ni in range(n):
                    base = ni * ho * wo
                    for i in range(ho):
                        for j in range(wo):
                            out[ni, ci, i * stride + a, j * stride + b] += cols[r, base + i * wo + j]
    return out


@njit(cache=True)
def _bilinear(img, row, col):
    n0, n1 = img.shape
    r0 = math.floor(row)
    c0 = math.floor(col)
    fr = row - r0
    fc = col - c0
    r0 = int(r0)
    c0 = int(c0)
    acc = 0.0
    for dr in range(2):
        wr = fr if dr else 1.0 - fr
        rr = r0 + dr
        for dc in range(2):
            wc = fc if dc else 1.0 - fc
            cc = c0 + dc
            v = 0.0
            if rr >= 0 and rr < n0 and cc >= 0 and cc < n1:
                v = img[rr, cc]
            acc += wr * wc * v
    return acc


@njit(cache=True)
def radon(img, angles, offsets, ts, step):
    n = img.shape[0]
    center = 0.5 * (n - 1)
    sino = np.empty((angles.size, offsets.size))
    for k in range(angles.size):
        ct = math.cos(angles[k])
        st = math.sin(angles[k])
        for d in range(offsets.size):
            s = offsets[d]
            acc = 0.0
            for m in range(ts.size):
                t = ts[m]
                x = s * ct - t * st
                y = s * st + t * ct
                acc += _bilinear(img, y + center, x + center)
            sino[k, d] = acc * step
    return sino


@njit(cache=True)
def backproject(sino, angles, n, pitch):
    n_det = sino.shape[1]
    center = 0.5 * (n - 1)
    dcenter = 0.5 * (n_det - 1)
    img = np.zeros((n, n))
    for k in range(angles.size):
        ct = math.cos(angles[k])
        st = math.sin(angles[k])
        for i in range(n):
            y = i - center
            for j in range(n):
                x = j - center
                u = (x * ct + y * st) / pitch + dcenter
                u0 = math.floor(u)
                f = u - u0
                u0 = int(u0)
                lo = 0.0
                hi = 0.0
                if u0 >= 0 and u0 < n_det:
                    lo = sino[k, u0]
                if u0 + 1 >= 0 and u0 + 1 < n_det:
                    hi = sino[k, u0 + 1]
                img[i, j] += (1.0 - f) * lo + f * hi
    return img
