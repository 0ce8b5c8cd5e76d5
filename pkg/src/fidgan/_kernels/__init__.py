"""Hot numeric kernels with a numba path and a pure-numpy fallback.

The numba path is used when numba imports cleanly, unless the environment
variable ``FIDGAN_DISABLE_NUMBA`` is set to a non-empty value other than
``"0"``. Both implementations are always importable as ``numpy_impl`` and
(when available) ``numba_impl`` so tests and benchmarks can compare them.
"""
import os

from . import _numpy as numpy_impl

try:
    from . import _numba as numba_impl
except ImportError:  # pragma: no cover - numba is a declared dependency
    numba_impl = None


def _numba_requested():
    flag = os.environ.get("FIDGAN_DISABLE_NUMBA", "")
    return flag in ("", "0")


USE_NUMBA = numba_impl is not None and _numba_requested()
BACKEND = "numba" if USE_NUMBA else "numpy"
_active = numba_impl if USE_NUMBA else numpy_impl

# numpy's strided copy already runs at memory bandwidth; the numba im2col
# measures slower, so both backends dispatch to numpy for this one kernel
im2col = numpy_impl.im2col
col2im = _active.col2im
radon = _active.radon
backproject = _active.backproject

__all__ = ["BACKEND", "USE_NUMBA", "numpy_impl", "numba_impl", "im2col", "col2im", "radon", "backproject"]
