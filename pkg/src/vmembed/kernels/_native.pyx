# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled hot kernels: running median and polyphase FIR resampling.

Semantics match vmembed.kernels._reference exactly; see that module for
the definitions.
"""

import numpy as np

cimport numpy as cnp

cnp.import_array()


cdef void _median_1d(const double[::1] row, double[::1] out,
                     double[::1] buf, Py_ssize_t kernel) noexcept nogil:
    """Running median over one pre-padded row.

    `row` carries kernel//2 replicated samples on each side; `out`
    receives len(row) - kernel + 1 medians.  A sorted window buffer is
    maintained by binary-search remove/insert.
    """
    cdef Py_ssize_t n_out = row.shape[0] - kernel + 1
    cdef Py_ssize_t half = kernel // 2
    cdef Py_ssize_t i, j, lo, hi, mid
    cdef double old, new

    # initial window, insertion sort
    for i in range(kernel):
        new = row[i]
        j = i
        while j > 0 and buf[j - 1] > new:
            buf[j] = buf[j - 1]
            j -= 1
        buf[j] = new
    out[0] = buf[half]

    for i in range(1, n_out):
        old = row[i - 1]
        new = row[i + kernel - 1]
        if old != new:
            # locate an occurrence of old (lower bound)
            lo = 0
            hi = kernel - 1
            while lo < hi:
                mid = (lo + hi) >> 1
                if buf[mid] < old:
                    lo = mid + 1
                else:
                    hi = mid
            # shift towards the insertion point of new
            if new > old:
                while lo < kernel - 1 and buf[lo + 1] < new:
                    buf[lo] = buf[lo + 1]
                    lo += 1
            else:
                while lo > 0 and buf[lo - 1] > new:
                    buf[lo] = buf[lo - 1]
                    lo -= 1
            buf[lo] = new
        out[i] = buf[half]


def sliding_median(x, Py_ssize_t kernel, int axis):
    """Median filter of odd length `kernel` along `axis`, edges replicated."""
    cdef Py_ssize_t half = kernel // 2
    cdef Py_ssize_t r, n_rows

    arr = np.asarray(x, dtype=np.float64)
    if arr.ndim == 1:
        return sliding_median(arr[None, :], kernel, axis=1)[0]
    moved = np.moveaxis(arr, axis, -1)
    padded = np.ascontiguousarray(
        np.pad(moved, [(0, 0), (half, half)], mode="edge"))

    cdef double[:, ::1] work = padded
    n_rows = work.shape[0]
    out_arr = np.empty((n_rows, work.shape[1] - kernel + 1), dtype=np.float64)
    cdef double[:, ::1] out = out_arr
    cdef double[::1] buf = np.empty(kernel, dtype=np.float64)
    with nogil:
        for r in range(n_rows):
            _median_1d(work[r], out[r], buf, kernel)
    return np.moveaxis(out_arr, -1, axis)


def polyphase_resample(x, h, Py_ssize_t up, Py_ssize_t down,
                       Py_ssize_t n_out, Py_ssize_t center):
    """Polyphase FIR rate conversion; see _reference.polyphase_resample."""
    cdef double[::1] xv = np.ascontiguousarray(x, dtype=np.float64)
    cdef double[::1] hv = np.ascontiguousarray(h, dtype=np.float64)
    out_arr = np.empty(n_out, dtype=np.float64)
    cdef double[::1] y = out_arr
    cdef Py_ssize_t n = xv.shape[0]
    cdef Py_ssize_t nh = hv.shape[0]
    cdef Py_ssize_t m, i, r, q, j, idx
    cdef double acc

    with nogil:
        for m in range(n_out):
            i = m * down + center
            r = i % up
            q = i // up
            acc = 0.0
            j = r
            idx = q
            while j < nh:
                if 0 <= idx < n:
                    acc += hv[j] * xv[idx]
                j += up
                idx -= 1
            y[m] = acc
    return out_arr
