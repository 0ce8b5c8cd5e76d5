"""Minimal reverse-mode automatic differentiation on float64 numpy arrays.

Every operation that touches a ``requires_grad`` tensor records its parents
and a closure mapping the output adjoint to input adjoints. ``backward``
walks that record in reverse topological order, visiting each node once.

Only leaves (tensors created directly, e.g. parameters) keep ``.grad``.
"""
import contextlib
import io
import os
import struct

import numpy as np

from . import _kernels

__all__ = [
    "Tensor",
    "no_grad",
    "is_grad_enabled",
    "backward",
    "conv2d",
    "batch_norm2d",
    "leaky_relu",
    "concat_channels",
    "split_channels",
    "mse_loss",
    "mean",
    "tsum",
    "exp",
    "save_tensors",
    "load_tensors",
    "dump_tensors",
    "parse_tensors",
]

_grad_enabled = True


@contextlib.contextmanager
def no_grad():
    """Disable tape recording inside the block."""
    global _grad_enabled
    prev = _grad_enabled
    _grad_enabled = False
    try:
        yield
    finally:
        _grad_enabled = prev


def is_grad_enabled():
    return _grad_enabled


class Tensor:
    """N-D float64 array that can participate in a differentiation tape."""

    def __init__(self, data, requires_grad=False, name=None):
        self.data = np.array(data, dtype=np.float64)
        self.requires_grad = bool(requires_grad)
        self.grad = None
        self.name = name
        self._parents = ()
        self._live = ()
        self._backward = None
        self._consumed = False

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    @property
    def size(self):
        return self.data.size

    def numpy(self):
        return self.data

    def item(self):
        return float(self.data.reshape(-1)[0]) if self.data.size == 1 else self.data.item()

    def detach(self):
        return Tensor(self.data)

    def zero_grad(self):
        self.grad = np.zeros_like(self.data)

    def __repr__(self):
        tag = f", name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad}{tag})"

    # arithmetic -----------------------------------------------------------
    def __add__(self, other):
        if isinstance(other, Tensor):
            _same_shape(self, other, "add")
            return _node(self.data + other.data, (self, other), lambda g: (g, g))
        return _node(self.data + float(other), (self,), lambda g: (g,))

    __radd__ = __add__

    def __sub__(self, other):
        if isinstance(other, Tensor):
            _same_shape(self, other, "sub")
            return _node(self.data - other.data, (self, other), lambda g: (g, -g))
        return _node(self.data - float(other), (self,), lambda g: (g,))

    def __rsub__(self, other):
        return _node(float(other) - self.data, (self,), lambda g: (-g,))

    def __neg__(self):
        return _node(-self.data, (self,), lambda g: (-g,))

    def __mul__(self, other):
        if isinstance(other, Tensor):
            _same_shape(self, other, "mul")
            a, b = self.data, other.data
            return _node(a * b, (self, other), lambda g: (g * b, g * a))
        return scale(self, other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        if isinstance(other, Tensor):
            raise TypeError("division is only defined by a scalar")
        return scale(self, 1.0 / float(other))

    def sum(self):
        return tsum(self)

    def mean(self):
        return mean(self)

    def exp(self):
        return exp(self)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        old = self.shape
        return _node(self.data.reshape(shape), (self,), lambda g: (g.reshape(old),))

    def backward(self):
        backward(self)


def _same_shape(a, b, op):
    if a.shape != b.shape:
        raise ValueError(f"{op}: shape mismatch {a.shape} vs {b.shape}")


def _node(data, parents, fn):
    out = Tensor.__new__(Tensor)
    out.data = data
    out.grad = None
    out.name = None
    out._consumed = False
    if _grad_enabled and any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = parents
        # flags are frozen now so that toggling requires_grad later has no effect on this graph
        out._live = tuple(p.requires_grad for p in parents)
        out._backward = fn
    else:
        out.requires_grad = False
        out._parents = ()
        out._live = ()
        out._backward = None
    return out


def backward(loss):
    """Populate ``.grad`` on every leaf reachable from the scalar ``loss``.

    Leaf gradients accumulate, so call ``zero_grad`` between steps. A graph
    can be walked only once.
    """
    if loss.size != 1:
        raise ValueError(f"backward needs a scalar loss, got shape {loss.shape}")
    if not loss.requires_grad:
        raise RuntimeError("loss is detached from the tape (nothing requires grad)")
    if loss._consumed:
        raise RuntimeError("backward already ran through this graph")

    order = []
    seen = set()
    stack = [(loss, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p, live in zip(node._parents, node._live):
            if live and id(p) not in seen:
                stack.append((p, False))

    for node in order:
        if node._consumed:
            raise RuntimeError("backward already ran through part of this graph")

    grads = {id(loss): np.ones_like(loss.data)}
    for node in reversed(order):
        g = grads.pop(id(node), None)
        if g is None:
            continue
        if node._backward is None:
            node.grad = g.copy() if node.grad is None else node.grad + g
            continue
        node._consumed = True
        for p, live, pg in zip(node._parents, node._live, node._backward(g)):
            if pg is None or not live:
                continue
            k = id(p)
            grads[k] = pg if k not in grads else grads[k] + pg
        node._backward = None
        node._parents = ()
        node._live = ()


# elementwise / reductions ---------------------------------------------------

def scale(x, alpha):
    alpha = float(alpha)
    return _node(x.data * alpha, (x,), lambda g: (g * alpha,))


def tsum(x):
    shape = x.shape
    return _node(np.array(x.data.sum()), (x,), lambda g: (np.full(shape, float(g)),))


def mean(x):
    shape, n = x.shape, x.size
    return _node(np.array(x.data.mean()), (x,), lambda g: (np.full(shape, float(g) / n),))


def exp(x):
    y = np.exp(x.data)
    return _node(y, (x,), lambda g: (g * y,))


def leaky_relu(x, slope=0.2):
    """x if x >= 0 else slope*x; the derivative at exactly 0 is taken as ``slope``."""
    d = np.where(x.data > 0, 1.0, slope)
    return _node(x.data * np.where(x.data >= 0, 1.0, slope), (x,), lambda g: (g * d,))


def mse_loss(a, b):
    _same_shape(a, b, "mse_loss")
    diff = a.data - b.data
    n = diff.size
    return _node(np.array(np.mean(diff * diff)), (a, b), lambda g: (2.0 * float(g) / n * diff, -2.0 * float(g) / n * diff))


def concat_channels(*tensors):
    """Stack NCHW tensors along the channel axis."""
    if len(tensors) == 1 and isinstance(tensors[0], (list, tuple)):
        tensors = tuple(tensors[0])
    ref = tensors[0].shape
    for t in tensors[1:]:
        if t.ndim != 4 or t.shape[0] != ref[0] or t.shape[2:] != ref[2:]:
            raise ValueError(f"concat_channels: incompatible shapes {ref} and {t.shape}")
    bounds = np.cumsum([0] + [t.shape[1] for t in tensors])
    data = np.concatenate([t.data for t in tensors], axis=1)

    def fn(g):
        return tuple(g[:, bounds[i] : bounds[i + 1]] for i in range(len(tensors)))

    return _node(data, tuple(tensors), fn)


def split_channels(x, sizes):
    """Inverse of ``concat_channels``: slice NCHW ``x`` into channel groups."""
    if sum(sizes) != x.shape[1]:
        raise ValueError(f"split_channels: sizes {sizes} do not sum to {x.shape[1]} channels")
    out = []
    start = 0
    for k in sizes:
        lo, hi = start, start + k

        def fn(g, lo=lo, hi=hi):
            full = np.zeros(x.shape)
            full[:, lo:hi] = g
            return (full,)

        out.append(_node(x.data[:, lo:hi], (x,), fn))
        start = hi
    return out


# layers ---------------------------------------------------------------------

def conv2d(x, weight, bias=None, stride=1, padding=0):
    """2-D cross-correlation of NCHW input with FCkk weights, zero padded."""
    if x.ndim != 4 or weight.ndim != 4:
        raise ValueError(f"conv2d expects 4-D input and weight, got {x.shape} and {weight.shape}")
    n, c, h, w = x.shape
    f, wc, kh, kw = weight.shape
    if wc != c:
        raise ValueError(f"conv2d: weight {weight.shape} expects {wc} channels, input {x.shape} has {c}")
    if stride < 1 or padding < 0:
        raise ValueError("conv2d: stride must be >= 1 and padding >= 0")
    hp, wp = h + 2 * padding, w + 2 * padding
    if kh > hp or kw > wp:
        raise ValueError(f"conv2d: kernel {kh}x{kw} larger than padded input {hp}x{wp}")
    if bias is not None and bias.shape != (f,):
        raise ValueError(f"conv2d: bias shape {bias.shape} does not match {f} filters")
    ho = (hp - kh) // stride + 1
    wo = (wp - kw) // stride + 1

    xp = np.pad(x.data, ((0, 0), (0, 0), (padding, padding), (padding, padding))) if padding else x.data
    cols = _kernels.im2col(np.ascontiguousarray(xp), kh, kw, stride, ho, wo)
    wmat = weight.data.reshape(f, -1)
    out = (wmat @ cols).reshape(f, n, ho, wo).transpose(1, 0, 2, 3)
    if bias is not None:
        out = out + bias.data[None, :, None, None]
    out = np.ascontiguousarray(out)

    parents = (x, weight) if bias is None else (x, weight, bias)
    need_x, need_w = x.requires_grad, weight.requires_grad

    def fn(g):
        gmat = g.transpose(1, 0, 2, 3).reshape(f, -1)
        gw = (gmat @ cols.T).reshape(weight.shape) if need_w else None
        gx = None
        if need_x:
            gcols = wmat.T @ gmat
            gxp = _kernels.col2im(gcols, n, c, hp, wp, kh, kw, stride, ho, wo)
            gx = gxp[:, :, padding : padding + h, padding : padding + w] if padding else gxp
        if bias is None:
            return gx, gw
        return gx, gw, g.sum(axis=(0, 2, 3))

    return _node(out, parents, fn)


def batch_norm2d(x, gamma, beta, running_mean, running_var, training=True, momentum=0.9, eps=1e-5):
    """Per-channel normalization of NCHW input.

    In training mode the batch statistics (biased variance) are used and the
    running buffers are updated in place as ``r <- momentum*r + (1-momentum)*batch``
    (the running variance tracks the unbiased estimate). In eval mode the
    running buffers are used.
    """
    if eps <= 0:
        raise ValueError("batch_norm2d: eps must be positive")
    n, c, h, w = x.shape
    m = n * h * w
    g4 = gamma.data[None, :, None, None]
    if training:
        if m < 2:
            raise ValueError("batch_norm2d: need at least two values per channel in training mode")
        mu = x.data.mean(axis=(0, 2, 3))
        xc = x.data - mu[None, :, None, None]
        var = (xc * xc).mean(axis=(0, 2, 3))
        if running_mean is not None:
            running_mean *= momentum
            running_mean += (1.0 - momentum) * mu
            running_var *= momentum
            running_var += (1.0 - momentum) * var * (m / (m - 1))
    else:
        mu = running_mean
        var = running_var
        xc = x.data - mu[None, :, None, None]
    inv = 1.0 / np.sqrt(var + eps)
    xhat = xc * inv[None, :, None, None]
    out = g4 * xhat + beta.data[None, :, None, None]

    def fn(g):
        gbeta = g.sum(axis=(0, 2, 3))
        ggamma = (g * xhat).sum(axis=(0, 2, 3))
        gxhat = g * g4
        if training:
            gx = (inv[None, :, None, None] / m) * (
                m * gxhat - gxhat.sum(axis=(0, 2, 3))[None, :, None, None]
                - xhat * (gxhat * xhat).sum(axis=(0, 2, 3))[None, :, None, None]
            )
        else:
            gx = gxhat * inv[None, :, None, None]
        return gx, ggamma, gbeta

    return _node(out, (x, gamma, beta), fn)


# serialization --------------------------------------------------------------
#
# little-endian layout:
#   magic b"FGTN" | u32 version | u32 count
#   per tensor: u32 name_len | name (utf-8) | u32 rank | u64 extent * rank | f64 values (row-major)

TENSOR_MAGIC = b"FGTN"
TENSOR_VERSION = 1


def dump_tensors(tensors):
    """Serialize a name -> array mapping to bytes."""
    buf = io.BytesIO()
    buf.write(TENSOR_MAGIC)
    buf.write(struct.pack("<II", TENSOR_VERSION, len(tensors)))
    for name, arr in tensors.items():
        if isinstance(arr, Tensor):
            arr = arr.data
        arr = np.asarray(arr, dtype="<f8")
        raw = name.encode("utf-8")
        buf.write(struct.pack("<I", len(raw)))
        buf.write(raw)
        buf.write(struct.pack("<I", arr.ndim))
        buf.write(struct.pack(f"<{arr.ndim}Q", *arr.shape))
        buf.write(np.ascontiguousarray(arr).tobytes())
    return buf.getvalue()


def parse_tensors(data, offset=0):
    """Inverse of ``dump_tensors``. Returns (mapping, end offset)."""
    if data[offset : offset + 4] != TENSOR_MAGIC:
        raise ValueError("not a tensor blob (bad magic)")
    version, count = struct.unpack_from("<II", data, offset + 4)
    if version != TENSOR_VERSION:
        raise ValueError(f"unsupported tensor blob version {version}")
    pos = offset + 12
    out = {}
    for _ in range(count):
        (nlen,) = struct.unpack_from("<I", data, pos)
        pos += 4
        name = bytes(data[pos : pos + nlen]).decode("utf-8")
        pos += nlen
        (rank,) = struct.unpack_from("<I", data, pos)
        pos += 4
        shape = struct.unpack_from(f"<{rank}Q", data, pos)
        pos += 8 * rank
        count_vals = int(np.prod(shape)) if rank else 1
        arr = np.frombuffer(data, dtype="<f8", count=count_vals, offset=pos).reshape(shape)
        pos += 8 * count_vals
        out[name] = arr.astype(np.float64)
    return out, pos


def save_tensors(path, tensors):
    with open(os.fspath(path), "wb") as fh:
        fh.write(dump_tensors(tensors))


def load_tensors(path):
    with open(os.fspath(path), "rb") as fh:
        data = fh.read()
    out, _ = parse_tensors(data)
    return out
