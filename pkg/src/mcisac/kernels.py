"""Hot loops with a compiled implementation and a numpy fallback.

The compiled module is used when it was built; set ``MCISAC_PURE_PYTHON=1``
to force the fallback.
"""
from __future__ import annotations

import os

import numpy as np


def pair_search_py(Q: np.ndarray, c: np.ndarray, min_sep: int = 1, chunk: int = 256):
    """Numpy version of :func:`pair_search` (same tie-breaking: first maximum in row-major order)."""
    n = Q.shape[0]
    d = np.real(np.diag(Q))
    c2 = np.abs(c) ** 2
    best, bi, bj = -1.0, -1, -1
    cols = np.arange(n)
    for start in range(0, n, chunk):
        rows = np.arange(start, min(start + chunk, n))
        Qr = Q[rows]
        det = d[rows, None] * d[None, :] - np.abs(Qr) ** 2
        num = d[None, :] * c2[rows, None] + d[rows, None] * c2[None, :] - 2.0 * np.real(
            np.conj(c[rows, None]) * Qr * c[None, :]
        )
        valid = (cols[None, :] - rows[:, None] >= min_sep) & (det > 1e-12 * d[rows, None] * d[None, :])
        with np.errstate(divide="ignore", invalid="ignore"):
            s = np.where(valid, num / np.where(valid, det, 1.0), -np.inf)
        k = int(np.argmax(s))
        r, col = divmod(k, n)
        if s[r, col] > best:
            best, bi, bj = float(s[r, col]), int(rows[r]), int(col)
    return bi, bj, best


def _load():
    if os.environ.get("MCISAC_PURE_PYTHON", "") not in ("", "0"):
        return None
    try:
        from ._ext import _kernels
    except ImportError:
        return None
    return _kernels


_compiled = _load()
HAVE_COMPILED = _compiled is not None


def pair_search(Q: np.ndarray, c: np.ndarray, min_sep: int = 1):
    if _compiled is not None:
        return _compiled.pair_search(np.ascontiguousarray(Q, complex), np.ascontiguousarray(c, complex), int(min_sep))
    return pair_search_py(Q, c, min_sep)
