"""Binary container for images and sinograms.

Little-endian layout::

    magic b"FGGR" | u32 version | u8 dtype tag (1 = f32, 2 = f64) | u8 rank
    | u16 label length | axis-order label (ascii, e.g. "row,col")
    | u64 extent * rank | raw values, row-major

A 16-bit grayscale PNG sidecar can be written for viewing (needs Pillow).
"""
import os
import struct

import numpy as np

MAGIC = b"FGGR"
VERSION = 1
_TAGS = {1: np.dtype("<f4"), 2: np.dtype("<f8")}
_CODES = {"float32": 1, "float64": 2}


def dumps(arr, dtype="float32", axes=None):
    arr = np.asarray(arr)
    if dtype not in _CODES:
        raise ValueError(f"dtype must be float32 or float64, got {dtype!r}")
    if axes is None:
        axes = "row,col" if arr.ndim == 2 else ",".join(f"a{i}" for i in range(arr.ndim))
    label = axes.encode("ascii")
    code = _CODES[dtype]
    head = MAGIC + struct.pack("<IBBH", VERSION, code, arr.ndim, len(label)) + label
    head += struct.pack(f"<{arr.ndim}Q", *arr.shape)
    return head + np.ascontiguousarray(arr, dtype=_TAGS[code]).tobytes()


def loads(data):
    """Returns (array, axis label). The array keeps its stored dtype."""
    if data[:4] != MAGIC:
        raise ValueError("not a grid file (bad magic)")
    version, code, rank, llen = struct.unpack_from("<IBBH", data, 4)
    if version != VERSION:
        raise ValueError(f"unsupported grid file version {version}")
    if code not in _TAGS:
        raise ValueError(f"unknown dtype tag {code}")
    pos = 12
    label = bytes(data[pos : pos + llen]).decode("ascii")
    pos += llen
    shape = struct.unpack_from(f"<{rank}Q", data, pos)
    pos += 8 * rank
    dt = _TAGS[code]
    count = int(np.prod(shape)) if rank else 1
    if len(data) - pos != count * dt.itemsize:
        raise ValueError("grid file payload size does not match its extents")
    arr = np.frombuffer(data, dtype=dt, count=count, offset=pos).reshape(shape)
    return arr.astype(dt.newbyteorder("=")), label


def write(path, arr, dtype="float32", axes=None):
    with open(os.fspath(path), "wb") as fh:
        fh.write(dumps(arr, dtype, axes))


def read(path):
    with open(os.fspath(path), "rb") as fh:
        return loads(fh.read())[0]


def write_png16(path, img, lo=None, hi=None):
    """Window ``img`` to [lo, hi] and save it as 16-bit grayscale."""
    from PIL import Image

    img = np.asarray(img, dtype=np.float64)
    lo = img.min() if lo is None else lo
    hi = img.max() if hi is None else hi
    span = hi - lo if hi > lo else 1.0
    q = np.round(np.clip((img - lo) / span, 0.0, 1.0) * 65535).astype(np.uint16)
    Image.fromarray(q).save(os.fspath(path))
