"""Hot elementwise kernels for the staircase family.

Every kernel has two implementations with identical arithmetic: an explicit
loop compiled with ``numba.njit`` and a vectorised numpy version.  The numba
path is used when numba imports cleanly and ``STAIRCASE_DP_NUMBA`` is not set
to ``0``/``false``/``off``.  ``benchmarks/bench_kernels.py`` times both.

Kernels take plain float64/int64 arrays and scalar parameters; validation
lives in the callers.
"""

from __future__ import annotations

import math
import os

import numpy as np

try:
    import numba

    _HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    numba = None
    _HAVE_NUMBA = False

_FLAG = os.environ.get("STAIRCASE_DP_NUMBA", "1").strip().lower()
NUMBA_ENABLED = _HAVE_NUMBA and _FLAG not in ("0", "false", "off", "no")


def _njit(func):
    if not _HAVE_NUMBA:
        return func
    return numba.njit(cache=True)(func)


# ---------------------------------------------------------------------------
# continuous staircase


def staircase_level_numpy(x, delta, gamma):
    """Geometric exponent of the staircase density at ``x``: f(x) = a * b**level."""
    t = np.abs(x) / delta
    k = np.floor(t)
    frac = t - k
    return (k + (frac >= gamma)).astype(np.int64)


def staircase_pdf_numpy(x, b, delta, gamma, a):
    return a * b ** staircase_level_numpy(x, delta, gamma)


def staircase_sf_numpy(x, b, delta, gamma, a):
    # P(X > x) for x >= 0.
    t = x / delta
    k = np.floor(t)
    frac = t - k
    bk = b ** k.astype(np.int64)
    inner = np.minimum(frac, gamma) + b * np.maximum(frac - gamma, 0.0)
    return bk * 0.5 - a * delta * bk * inner


def staircase_transform_numpy(u, eps, b, delta, gamma):
    """Algorithm-1 draw from a (4, n) block of uniforms.

    Rows are used as: sign, geometric period, within-step position, step choice.
    Returns ``(value, sign, period, step)``.
    """
    sign = np.where(u[0] < 0.5, 1, -1).astype(np.int64)
    period = np.floor(np.log1p(-u[1]) / -eps).astype(np.int64)
    if gamma <= 0.0:
        step = np.ones(u.shape[1], dtype=np.int64)
    elif gamma >= 1.0:
        step = np.zeros(u.shape[1], dtype=np.int64)
    else:
        p_high = gamma / (gamma + (1.0 - gamma) * b)
        step = (u[3] >= p_high).astype(np.int64)
    value = _staircase_combine_numpy(sign, period, u[2], step, delta, gamma)
    return value, sign, period, step


def _staircase_combine_numpy(sign, period, unif, step, delta, gamma):
    low = (period + gamma * unif) * delta
    high = (period + gamma + (1.0 - gamma) * unif) * delta
    return sign * np.where(step == 0, low, high)


@_njit
def staircase_level_numba(x, delta, gamma):
    out = np.empty(x.shape[0], dtype=np.int64)
    for i in range(x.shape[0]):
        t = abs(x[i]) / delta
        k = math.floor(t)
        frac = t - k
        lvl = np.int64(k)
        if frac >= gamma:
            lvl += 1
        out[i] = lvl
    return out


@_njit
def staircase_pdf_numba(x, b, delta, gamma, a):
    out = np.empty(x.shape[0])
    for i in range(x.shape[0]):
        t = abs(x[i]) / delta
        k = math.floor(t)
        frac = t - k
        lvl = np.int64(k)
        if frac >= gamma:
            lvl += 1
        out[i] = a * b**lvl
    return out


@_njit
def staircase_sf_numba(x, b, delta, gamma, a):
    out = np.empty(x.shape[0])
    for i in range(x.shape[0]):
        t = x[i] / delta
        k = math.floor(t)
        frac = t - k
        bk = b ** np.int64(k)
        inner = min(frac, gamma) + b * max(frac - gamma, 0.0)
        out[i] = bk * 0.5 - a * delta * bk * inner
    return out


@_njit
def staircase_transform_numba(u, eps, b, delta, gamma):
    n = u.shape[1]
    value = np.empty(n)
    sign = np.empty(n, dtype=np.int64)
    period = np.empty(n, dtype=np.int64)
    step = np.empty(n, dtype=np.int64)
    if gamma <= 0.0:
        p_high = 0.0
    elif gamma >= 1.0:
        p_high = 2.0
    else:
        p_high = gamma / (gamma + (1.0 - gamma) * b)
    for i in range(n):
        s = 1 if u[0, i] < 0.5 else -1
        g = np.int64(math.floor(math.log1p(-u[1, i]) / -eps))
        bit = 1 if u[3, i] >= p_high else 0
        if bit == 0:
            mag = (g + gamma * u[2, i]) * delta
        else:
            mag = (g + gamma + (1.0 - gamma) * u[2, i]) * delta
        value[i] = s * mag
        sign[i] = s
        period[i] = g
        step[i] = bit
    return value, sign, period, step


# ---------------------------------------------------------------------------
# discrete staircase


def discrete_level_numpy(i, delta, r):
    t = np.abs(i)
    k = t // delta
    return k + ((t - k * delta) >= r)


def discrete_pmf_numpy(i, b, delta, r, a):
    return a * b ** discrete_level_numpy(i, delta, r)


def discrete_transform_numpy(u, eps, b, delta, r):
    """Sign, geometric period and within-period index from a (3, n) block."""
    sign = np.where(u[0] < 0.5, 1, -1).astype(np.int64)
    period = np.floor(np.log1p(-u[1]) / -eps).astype(np.int64)
    total = r + b * (delta - r)
    pos = u[2] * total
    index = np.where(pos < r, np.floor(pos), r + np.floor((pos - r) / b))
    index = np.minimum(index, np.where(pos < r, r - 1, delta - 1)).astype(np.int64)
    value = sign * (period * delta + index)
    return value, sign, period, index


@_njit
def discrete_pmf_numba(i, b, delta, r, a):
    out = np.empty(i.shape[0])
    for j in range(i.shape[0]):
        t = abs(i[j])
        k = t // delta
        lvl = k
        if t - k * delta >= r:
            lvl += 1
        out[j] = a * b**lvl
    return out


@_njit
def discrete_transform_numba(u, eps, b, delta, r):
    n = u.shape[1]
    value = np.empty(n, dtype=np.int64)
    sign = np.empty(n, dtype=np.int64)
    period = np.empty(n, dtype=np.int64)
    index = np.empty(n, dtype=np.int64)
    total = r + b * (delta - r)
    for i in range(n):
        s = 1 if u[0, i] < 0.5 else -1
        g = np.int64(math.floor(math.log1p(-u[1, i]) / -eps))
        pos = u[2, i] * total
        if pos < r:
            j = min(np.int64(math.floor(pos)), r - 1)
        else:
            j = min(r + np.int64(math.floor((pos - r) / b)), delta - 1)
        value[i] = s * (g * delta + j)
        sign[i] = s
        period[i] = g
        index[i] = j
    return value, sign, period, index


# ---------------------------------------------------------------------------
# dispatch

if NUMBA_ENABLED:
    staircase_level = staircase_level_numba
    staircase_pdf = staircase_pdf_numba
    staircase_sf = staircase_sf_numba
    staircase_transform = staircase_transform_numba
    discrete_pmf = discrete_pmf_numba
    discrete_transform = discrete_transform_numba
else:
    staircase_level = staircase_level_numpy
    staircase_pdf = staircase_pdf_numpy
    staircase_sf = staircase_sf_numpy
    staircase_transform = staircase_transform_numpy
    discrete_pmf = discrete_pmf_numpy
    discrete_transform = discrete_transform_numpy

BACKEND = "numba" if NUMBA_ENABLED else "numpy"
