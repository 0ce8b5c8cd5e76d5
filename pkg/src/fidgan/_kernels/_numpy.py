"""Pure-numpy kernels. Reference path, also used when numba is disabled."""
import numpy as np
from numpy.lib.stride_tricks import sliding_window_view


def im2col(xp, kh, kw, stride, ho, wo):
    n, c = xp.shape[:2]
    v = sliding_window_view(xp, (kh, kw), axis=(2, 3))
    v = v[:, :, : (ho - 1) * stride + 1 : stride, : (wo - 1) * stride + 1 : stride]
    # (n, c, ho, wo, kh, kw) -> (c, kh, kw, n, ho, wo)
    return np.ascontiguousarray(v.transpose(1, 4, 5, 0, 2, 3)).reshape(c * kh * kw, n * ho * wo)


def col2im(cols, n, c, hp, wp, kh, kw, stride, ho, wo):
    out = np.zeros((n, c, hp, wp))
    c6 = cols.reshape(c, kh, kw, n, ho, wo)
    for a in range(kh):
        for b in range(kw):
            out[:, :, a : a + stride * (ho - 1) + 1 : stride, b : b + stride * (wo - 1) + 1 : stride] += (
                c6[:, a, b].transpose(1, 0, 2, 3)
            )
    return out


def _bilinear(img, rows, cols):
    n0, n1 = img.shape
    r0 = np.floor(rows)
    c0 = np.floor(cols)
    fr = rows - r0
    fc = cols - c0
    r0 = r0.astype(np.int64)
    c0 = c0.astype(np.int64)
    out = np.zeros(rows.shape)
    for dr, wr in ((0, 1.0 - fr), (1, fr)):
        for dc, wc in ((0, 1.0 - fc), (1, fc)):
            rr = r0 + dr
            cc = c0 + dc
            ok = (rr >= 0) & (rr < n0) & (cc >= 0) & (cc < n1)
            vals = np.zeros(rows.shape)
            vals[ok] = img[rr[ok], cc[ok]]
            out += wr * wc * vals
    return out


def radon(img, angles, offsets, ts, step):
    n = img.shape[0]
    center = 0.5 * (n - 1)
    sino = np.empty((angles.size, offsets.size))
    s = offsets[:, None]
    t = ts[None, :]
    for k in range(angles.size):
        ct, st = np.cos(angles[k]), np.sin(angles[k])
        x = s * ct - t * st
        y = s * st + t * ct
        vals = _bilinear(img, y + center, x + center)
        sino[k] = vals.sum(axis=1) * step
    return sino


def backproject(sino, angles, n, pitch):
    n_det = sino.shape[1]
    center = 0.5 * (n - 1)
    dcenter = 0.5 * (n_det - 1)
    coord = np.arange(n) - center
    y, x = np.meshgrid(coord, coord, indexing="ij")
    img = np.zeros((n, n))
    for k in range(angles.size):
        u = (x * np.cos(angles[k]) + y * np.sin(angles[k])) / pitch + dcenter
        u0 = np.floor(u)
        f = u - u0
        u0 = u0.astype(np.int64)
        row = sino[k]
        lo = np.zeros(u.shape)
        hi = np.zeros(u.shape)
        ok = (u0 >= 0) & (u0 < n_det)
        lo[ok] = row[u0[ok]]
        ok = (u0 + 1 >= 0) & (u0 + 1 < n_det)
        hi[ok] = row[u0[ok] + 1]
        img += (1.0 - f) * lo + f * hi
    return img
