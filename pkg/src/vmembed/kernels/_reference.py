"""Pure-numpy kernels: the fallback path when the compiled extension is
unavailable.  Must agree with vmembed.kernels._native to float rounding.
"""

from __future__ import annotations

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view


def sliding_median(x: np.ndarray, kernel: int, axis: int) -> np.ndarray:
    """Median filter of odd length `kernel` along `axis`, edges replicated.

    Output shape equals input shape.  With an odd kernel the median is an
    exact order statistic, so results are bit-identical to the compiled
    implementation.
    """
    x = np.asarray(x, dtype=np.float64)
    half = kernel // 2
    pad = [(0, 0)] * x.ndim
    pad[axis] = (half, half)
    padded = np.pad(x, pad, mode="edge")
    windows = sliding_window_view(padded, kernel, axis=axis)
    return np.median(windows, axis=-1)


def polyphase_resample(x: np.ndarray, h: np.ndarray, up: int, down: int,
                       n_out: int, center: int) -> np.ndarray:
    """Polyphase FIR rate conversion.

    Conceptually: zero-stuff `x` by `up`, convolve with `h`, keep every
    `down`-th sample starting at `center` (the filter group delay), i.e.

        y[m] = sum_k h[r + k*up] * x[q - k],  i = m*down + center,
        r = i % up, q = i // up,

    with x taken as zero outside its support.  Outputs are grouped by
    m mod up so each group shares one filter phase and reduces to a
    windowed matrix-vector product.
    """
    x = np.asarray(x, dtype=np.float64)
    h = np.asarray(h, dtype=np.float64)
    n = x.shape[0]
    taps = -(-h.shape[0] // up)  # taps per phase, ceil

    # x padded so window [q-taps+1 .. q] is always in range
    q_max = ((n_out - 1) * down + center) // up
    left = taps - 1
    right = max(0, q_max + 1 - n)
    xp = np.concatenate([np.zeros(left), x, np.zeros(right)])
    windows = sliding_window_view(xp, taps)

    # zero-pad h to a whole number of phases
    hp = np.zeros(taps * up)
    hp[:h.shape[0]] = h

    y = np.empty(n_out)
    for g in range(min(up, n_out)):
        ms = np.arange(g, n_out, up)
        i0 = g * down + center
        r = i0 % up
        q0 = i0 // up
        qs = q0 + down * np.arange(ms.shape[0])
        phase = hp[r::up][::-1]  # reversed so windows[q] @ phase sums h[r+k*up]*x[q-k]
        y[ms] = windows[qs] @ phase
    return y
