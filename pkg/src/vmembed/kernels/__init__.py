"""Kernel dispatch: compiled extension when available, numpy otherwise.

Set VMEMBED_PURE_PYTHON=1 to force the fallback (useful for timing
comparisons and for debugging the extension itself).
"""

from __future__ import annotations

import os

import numpy as np

from . import _reference

BACKEND = "python"
_impl = _reference

if not os.environ.get("VMEMBED_PURE_PYTHON"):
    try:
        from . import _native  # type: ignore[attr-defined]

        _impl = _native
        BACKEND = "native"
    except ImportError:
        pass


def sliding_median(x: np.ndarray, kernel: int, axis: int = -1) -> np.ndarray:
    """Odd-length median filter along `axis` with edge replication."""
    if kernel < 1 or kernel % 2 == 0:
        raise ValueError(f"kernel must be odd and positive, got {kernel}")
    x = np.ascontiguousarray(x, dtype=np.float64)
    if axis < 0:
        axis += x.ndim
    if not 0 <= axis < x.ndim:
        raise ValueError(f"axis {axis} out of range for ndim {x.ndim}")
    if x.shape[axis] == 0:
        return x.copy()
    if x.ndim > 2:  # compiled path is specialised to 1-D/2-D
        return _reference.sliding_median(x, int(kernel), int(axis))
    return _impl.sliding_median(x, int(kernel), int(axis))


def polyphase_resample(x: np.ndarray, h: np.ndarray, up: int, down: int,
                       n_out: int, center: int) -> np.ndarray:
    """Polyphase FIR rate conversion (zero-stuff, filter, decimate)."""
    x = np.ascontiguousarray(x, dtype=np.float64)
    h = np.ascontiguousarray(h, dtype=np.float64)
    if n_out <= 0:
        return np.zeros(0)
    return _impl.polyphase_resample(x, h, int(up), int(down),
                                    int(n_out), int(center))


__all__ = ["BACKEND", "sliding_median", "polyphase_resample"]
