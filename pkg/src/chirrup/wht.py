"""Orthonormal fast Walsh-Hadamard transform."""

from __future__ import annotations

import numpy as np


def _log2_length(n: int) -> int:
    if n < 1 or n & (n - 1):
        raise ValueError(f"length must be a power of two, got {n}")
    return n.bit_length() - 1


def fwht(x: np.ndarray) -> np.ndarray:
    """Walsh-Hadamard transform along the last axis.

    Coefficient ``v`` is ``2**(-m/2) * sum_a (-1)**popcount(v & a) * x[a]``,
    so the transform is its own inverse.  Leading axes are treated as a
    batch.  Runs ``m`` butterfly passes, O(n log n) per vector.
    """
    x = np.asarray(x)
    n = x.shape[-1]
    m = _log2_length(n)
    batch = x.shape[:-1]
    out = x.reshape(-1, n).astype(np.result_type(x.dtype, np.float64), copy=True)
    h = 1
    for _ in range(m):
        view = out.reshape(out.shape[0], -1, 2, h)
        lo = view[:, :, 0, :].copy()
        hi = view[:, :, 1, :]
        view[:, :, 0, :] += hi
        lo -= hi
        view[:, :, 1, :] = lo
        h *= 2
    out *= 2.0 ** (-m / 2)
    return out.reshape(*batch, n)

