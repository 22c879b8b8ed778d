"""Enumeration kernels for the exhaustive span search.

Both kernels scan the codes ``g(i) = i ^ (i >> 1)`` for ``i`` in ``[start, stop)``
and return the codes whose image ``B @ bits(g)`` is entry-wise within ``tol``
of {0, 1}.  Consecutive Gray codes differ in one bit, so the running image is
updated with a single column add or subtract: ``O(n)`` work per candidate.
"""
from __future__ import annotations

import numpy as np

try:
    from numba import njit

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    HAVE_NUMBA = False


def _gray_scan_py(Bt, tol, start, stop):
    d, n = Bt.shape
    x = np.zeros(n)
    g0 = start ^ (start >> 1)
    for j in range(d):
        if (g0 >> j) & 1:
            for i in range(n):
                x[i] += Bt[j, i]
    hits = []
    ok = True
    for i in range(n):
        if abs(abs(x[i] - 0.5) - 0.5) > tol:
            ok = False
            break
    if ok and g0 != 0:
        hits.append(g0)
    for t in range(start + 1, stop):
        g = t ^ (t >> 1)
        j = 0
        tt = t
        while (tt & 1) == 0:
            tt >>= 1
            j += 1
        s = 1.0 if (g >> j) & 1 else -1.0
        ok = True
        for i in range(n):
            v = x[i] + s * Bt[j, i]
            x[i] = v
            if abs(abs(v - 0.5) - 0.5) > tol:
                ok = False
        if ok and g != 0:
            hits.append(g)
    return hits


if HAVE_NUMBA:
    _gray_scan = njit(cache=True, nogil=True)(_gray_scan_py)
else:  # pragma: no cover
    _gray_scan = _gray_scan_py


def gray_scan(B: np.ndarray, tol: float, start: int, stop: int) -> list[int]:
    """Compiled Gray-code scan of ``B`` (n x d) over indices ``[start, stop)``."""
    Bt = np.ascontiguousarray(B.T, dtype=np.float64)
    return [int(g) for g in _gray_scan(Bt, float(tol), int(start), int(stop))]


def block_scan(B: np.ndarray, tol: float, start: int, stop: int, block_elems: int = 1 << 18) -> list[int]:
    """Vectorised numpy scan over the same index range as :func:`gray_scan`.

    The low ``c`` bits of every code are tabulated once (``n x 2^c``); the high
    bits are walked in Gray order, shifting the table by one column of ``B``.
    Only whole high-bit blocks are supported, so ``start`` and ``stop`` must be
    multiples of ``2^c`` (or cover the full range).
    """
    n, d = B.shape
    c = max(0, min(d, int(np.log2(max(1, block_elems // max(n, 1))))))
    width = 1 << c
    if start % width or (stop % width and stop != 1 << d):
        c, width = 0, 1
    low = np.arange(width)
    bits = ((low[:, None] >> np.arange(c)) & 1).astype(np.float64)
    # over a whole block of 2^c indices the Gray codes share their high bits and
    # hit every low pattern once, so the table can stay in natural order
    table = B[:, :c] @ bits.T - 0.5
    hi_start, hi_stop = start // width, -(-stop // width)
    base = np.zeros(n)
    g_prev = hi_start ^ (hi_start >> 1)
    for j in range(d - c):
        if (g_prev >> j) & 1:
            base += B[:, c + j]
    buf = np.empty_like(table)
    hits: list[int] = []
    for h in range(hi_start, hi_stop):
        g = h ^ (h >> 1)
        if h != hi_start:
            j = (g ^ g_prev).bit_length() - 1
            if (g >> j) & 1:
                base += B[:, c + j]
            else:
                base -= B[:, c + j]
        g_prev = g
        np.add(table, base[:, None], out=buf)
        np.abs(buf, out=buf)
        buf -= 0.5
        np.abs(buf, out=buf)
        ok = (buf <= tol).all(axis=0)
        for lo in np.flatnonzero(ok):
            code = (g << c) | int(lo)
            if code:
                hits.append(code)
    return hits
