"""Single-level orthonormal 2-D Haar analysis/synthesis on NCHW tensors.

For each non-overlapping 2x2 block ``[a b; c d]``::

    ll = (a + b + c + d) / 2      lh = (a - b + c - d) / 2
    hl = (a + b - c - d) / 2      hh = (a - b - c + d) / 2

The transform is orthonormal, so synthesis is its transpose and the backward
pass of one is the forward of the other.
"""
from typing import NamedTuple

import numpy as np

from .tensor import Tensor, _node


class Subbands(NamedTuple):
    ll: Tensor
    lh: Tensor
    hl: Tensor
    hh: Tensor


def _analysis(x):
    a = x[..., 0::2, 0::2]
    b = x[..., 0::2, 1::2]
    c = x[..., 1::2, 0::2]
    d = x[..., 1::2, 1::2]
    return (
        0.5 * (a + b + c + d),
        0.5 * (a - b + c - d),
        0.5 * (a + b - c - d),
        0.5 * (a - b - c + d),
    )


def _synthesis(ll, lh, hl, hh):
    shape = ll.shape[:-2] + (2 * ll.shape[-2], 2 * ll.shape[-1])
    out = np.empty(shape)
    out[..., 0::2, 0::2] = 0.5 * (ll + lh + hl + hh)
    out[..., 0::2, 1::2] = 0.5 * (ll - lh + hl - hh)
    out[..., 1::2, 0::2] = 0.5 * (ll + lh - hl - hh)
    out[..., 1::2, 1::2] = 0.5 * (ll - lh - hl + hh)
    return out


def wave_dec(x):
    """Split ``x`` (N,C,H,W) into four (N,C,H/2,W/2) subbands."""
    h, w = x.shape[-2:]
    if h % 2 or w % 2:
        raise ValueError(f"wave_dec needs even spatial extents, got {h}x{w}; pad the input upstream")
    bands = _analysis(x.data)
    out = []
    for k in range(4):

        def fn(g, k=k):
            seeds = [np.zeros_like(g) for _ in range(4)]
            seeds[k] = g
            return (_synthesis(*seeds),)

        out.append(_node(bands[k], (x,), fn))
    return Subbands(*out)


def wave_rec(*bands):
    """Exact inverse of ``wave_dec``. Accepts a ``Subbands`` or four tensors."""
    if len(bands) == 1:
        bands = tuple(bands[0])
    if len(bands) != 4:
        raise ValueError("wave_rec needs exactly four subbands")
    shape = bands[0].shape
    for b in bands[1:]:
        if b.shape != shape:
            raise ValueError(f"wave_rec: subband shapes differ: {shape} vs {b.shape}")
    data = _synthesis(*(b.data for b in bands))
    return _node(data, tuple(bands), lambda g: _analysis(g))
