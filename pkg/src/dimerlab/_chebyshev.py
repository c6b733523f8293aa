"""Chebyshev evaluation of exp(-i s M) x for Hermitian tridiagonal M.

A diagonal phase transform maps M onto a real symmetric tridiagonal matrix
R, exp(-i s M) = G exp(-i s R) G^+.  The series coefficients of
exp(-i z y) are 2 (-i)^k J_k(z), alternately real and imaginary, so the
whole recursion runs in real arithmetic on a float view of the complex
data, with one accumulator for even and one for odd orders.
"""

from __future__ import annotations

import numba
import numpy as np
from scipy.special import jv

_TAIL = 1e-16
_CHUNK = 32


@numba.njit(cache=True)
def _apply(diag, off, src, dst, scale, prev, prev_scale):
    # dst = scale * R src + prev_scale * prev   (rows of length 2m, real view)
    n, w = src.shape
    for i in range(n):
        d = diag[i] * scale
        lo = off[i - 1] * scale if i > 0 else 0.0
        up = off[i] * scale if i < n - 1 else 0.0
        im = i - 1 if i > 0 else 0
        ip = i + 1 if i < n - 1 else n - 1
        for c in range(w):
            dst[i, c] = d * src[i, c] + lo * src[im, c] + up * src[ip, c] + prev_scale * prev[i, c]


@numba.njit(cache=True)
def _chunk(diag, off, even, odd, x, acc_e, acc_o, prev, cur):
    # x: (n, 2w) real view of a column block; T_0 = x, T_1 = R x
    n, w = x.shape
    for i in range(n):
        for c in range(w):
            prev[i, c] = x[i, c]
            acc_e[i, c] = even[0] * x[i, c]
    _apply(diag, off, x, cur, 1.0, x, 0.0)
    for i in range(n):
        for c in range(w):
            acc_o[i, c] = odd[1] * cur[i, c]
    for k in range(2, even.shape[0]):
        # prev <- 2 R cur - prev (row i of prev is only read at row i)
        _apply(diag, off, cur, prev, 2.0, prev, -1.0)
        if k % 2 == 0:
            ck = even[k]
            for i in range(n):
                for c in range(w):
                    acc_e[i, c] += ck * prev[i, c]
        else:
            ck = odd[k]
            for i in range(n):
                for c in range(w):
                    acc_o[i, c] += ck * prev[i, c]
        prev, cur = cur, prev


@numba.njit(cache=True)
def _series(diag, off, even, odd, xr, out):
    # xr: real view (n, 2m) of the complex input; out complex (n, m)
    n = xr.shape[0]
    m = xr.shape[1] // 2
    width = min(m, _CHUNK)
    xs = np.empty((n, 2 * width))
    acc_e = np.empty((n, 2 * width))
    acc_o = np.empty((n, 2 * width))
    prev = np.empty((n, 2 * width))
    cur = np.empty((n, 2 * width))
    for c0 in range(0, m, width):
        w = min(width, m - c0)
        for i in range(n):
            for c in range(2 * w):
                xs[i, c] = xr[i, 2 * c0 + c]
        _chunk(diag, off, even, odd, xs[:, : 2 * w], acc_e[:, : 2 * w], acc_o[:, : 2 * w],
               prev[:, : 2 * w], cur[:, : 2 * w])
        for i in range(n):
            for c in range(w):
                # even orders carry real coefficients, odd orders imaginary ones
                re = acc_e[i, 2 * c] - acc_o[i, 2 * c + 1]
                im = acc_e[i, 2 * c + 1] + acc_o[i, 2 * c]
                out[i, c0 + c] = re + 1j * im
    return out


def chebyshev_coefficients(z: float) -> np.ndarray:
    """Coefficients of exp(-i z y) = sum_k c_k T_k(y) on y in [-1, 1], tail-trimmed."""
    kmax = int(z + 12.0 * max(z, 1.0) ** (1.0 / 3.0) + 30)
    k = np.arange(kmax + 1)
    bessel = jv(k, z)
    big = np.nonzero(np.abs(bessel) > _TAIL)[0]
    last = max(int(big[-1]) if big.size else 0, 1)
    k = k[: last + 1]
    coefs = 2.0 * (-1j) ** k * bessel[: last + 1]
    coefs[0] *= 0.5
    return coefs


def _split(coefs):
    # c_k = even_k (k even, real) or i * odd_k (k odd)
    k = np.arange(coefs.size)
    even = np.where(k % 2 == 0, coefs.real, 0.0)
    odd = np.where(k % 2 == 1, coefs.imag, 0.0)
    return np.ascontiguousarray(even), np.ascontiguousarray(odd)


def expm_tridiagonal(diag, upper, s, lo, hi, x):
    """Return exp(-i s M) x given bounds ``lo <= spec(M) <= hi``.

    ``M`` is Hermitian tridiagonal with real ``diag`` and ``upper[i] = M[i, i+1]``.
    ``x`` is a 2-D block of column vectors.
    """
    center = 0.5 * (hi + lo)
    half = 0.5 * (hi - lo)
    if half <= 0.0:
        return np.exp(-1j * s * center) * x
    upper = np.asarray(upper)
    off = np.abs(upper)
    # gauge: M = G R G^+ with R[i, i+1] = |upper[i]|, G = diag(exp(i theta))
    theta = np.concatenate(([0.0], -np.cumsum(np.angle(upper))))
    gauge = np.exp(1j * theta)
    even, odd = _split(chebyshev_coefficients(s * half))
    xg = np.ascontiguousarray(gauge.conj()[:, None] * x, dtype=np.complex128)
    out = np.empty_like(xg)
    _series((np.asarray(diag, dtype=float) - center) / half, off / half, even, odd,
            xg.view(np.float64), out)
    out *= gauge[:, None] * np.exp(-1j * s * center)
    return out
