"""Noise distributions: continuous staircase, Laplace, discrete staircase, geometric.

Densities follow the half-open convention: the staircase density is constant
on ``[k*delta, (k+gamma)*delta)`` and ``[(k+gamma)*delta, (k+1)*delta)`` for
``x >= 0`` and mirrored for ``x < 0``, so a breakpoint takes the value of the
piece to its right (in ``|x|``).

All samplers draw from a caller-supplied ``numpy.random.Generator``; there is
no module-level random state.
"""

from __future__ import annotations

import functools
import math
from dataclasses import dataclass, field
from typing import Any, Optional, Union

import numpy as np

from . import _kernels
from .exceptions import ValidationError

__all__ = [
    "PrivacyParams",
    "StaircaseContinuous",
    "LaplaceMechanism",
    "StaircaseDiscrete",
    "NoiseSample",
    "geometric",
    "staircase_pdf",
    "staircase_cdf",
    "staircase_sample",
    "staircase_from_latent",
    "laplace_pdf",
    "laplace_cdf",
    "laplace_quantile",
    "laplace_sample",
    "discrete_pmf",
    "discrete_cdf",
    "discrete_sample",
    "discrete_from_latent",
    "density",
    "cdf",
    "sample",
]


def _check_positive(name: str, value: float) -> float:
    value = float(value)
    if not math.isfinite(value) or value <= 0.0:
        raise ValidationError(f"{name} must be a positive finite number, got {value!r}")
    return value


@dataclass(frozen=True)
class PrivacyParams:
    """Privacy level ``epsilon`` and query sensitivity ``delta``."""

    epsilon: float
    delta: float

    def __post_init__(self):
        object.__setattr__(self, "epsilon", _check_positive("epsilon", self.epsilon))
        object.__setattr__(self, "delta", _check_positive("delta", self.delta))

    @property
    def b(self) -> float:
        """Per-period decay factor ``exp(-epsilon)``."""
        return math.exp(-self.epsilon)

    @property
    def one_minus_b(self) -> float:
        # expm1 keeps full relative precision as epsilon -> 0
        return -math.expm1(-self.epsilon)


@dataclass(frozen=True)
class StaircaseContinuous:
    params: PrivacyParams
    gamma: float

    def __post_init__(self):
        g = float(self.gamma)
        if not (0.0 <= g <= 1.0):
            raise ValidationError(f"gamma must lie in [0, 1], got {self.gamma!r}")
        object.__setattr__(self, "gamma", g)

    @property
    def a_gamma(self) -> float:
        """Density height on the first step, ``(1-b) / (2 delta (gamma + b (1-gamma)))``."""
        p = self.params
        return p.one_minus_b / (2.0 * p.delta * (self.gamma + p.b * (1.0 - self.gamma)))

    @property
    def name(self) -> str:
        return "staircase"


@dataclass(frozen=True)
class LaplaceMechanism:
    params: PrivacyParams

    @property
    def scale(self) -> float:
        return self.params.delta / self.params.epsilon

    @property
    def name(self) -> str:
        return "laplace"


@dataclass(frozen=True)
class StaircaseDiscrete:
    """Integer-valued staircase pmf; ``r`` is the number of indices on the high step."""

    params: PrivacyParams
    r: int

    def __post_init__(self):
        d = self.params.delta
        if d != int(d) or d < 1:
            raise ValidationError(f"discrete mechanisms need an integer delta >= 1, got {d!r}")
        if int(self.r) != self.r or not (1 <= self.r <= d):
            raise ValidationError(f"r must be an integer in [1, {int(d)}], got {self.r!r}")
        object.__setattr__(self, "r", int(self.r))

    @property
    def delta(self) -> int:
        return int(self.params.delta)

    @property
    def a_r(self) -> float:
        p = self.params
        b = p.b
        # (1 - b) / (2r + 2b(delta - r) - (1 - b)), regrouped so delta = 1 gives (1 - b) / (1 + b)
        return p.one_minus_b / ((2 * self.r - 1) + b * (2 * (self.delta - self.r) + 1))

    @property
    def name(self) -> str:
        return "geometric" if self.delta == 1 else "staircase-discrete"


def geometric(epsilon: float) -> StaircaseDiscrete:
    """Two-sided geometric mechanism, the ``delta = 1`` discrete staircase."""
    return StaircaseDiscrete(PrivacyParams(epsilon, 1.0), 1)


Mechanism = Union[StaircaseContinuous, LaplaceMechanism, StaircaseDiscrete]


@dataclass
class NoiseSample:
    """A noise draw (scalar or array) plus, optionally, the latent variables behind it."""

    value: Any
    trace: Optional[dict] = field(default=None)


def _as_float_array(x):
    arr = np.asarray(x, dtype=np.float64)
    if not np.all(np.isfinite(arr)):
        raise ValidationError("noise argument must be finite")
    return arr


def _finish(arr, scalar: bool):
    return float(arr.reshape(-1)[0]) if scalar else arr


# ---------------------------------------------------------------------------
# continuous staircase


def staircase_pdf(mech: StaircaseContinuous, x):
    arr = _as_float_array(x)
    p = mech.params
    flat = np.ascontiguousarray(arr.reshape(-1))
    out = _kernels.staircase_pdf(flat, p.b, p.delta, mech.gamma, mech.a_gamma)
    return _finish(out.reshape(arr.shape), arr.ndim == 0)


def staircase_sf(mech: StaircaseContinuous, x):
    """Survival function ``P(X > x)``; accurate deep in the upper tail."""
    arr = _as_float_array(x)
    p = mech.params
    flat = np.ascontiguousarray(np.abs(arr.reshape(-1)))
    upper = _kernels.staircase_sf(flat, p.b, p.delta, mech.gamma, mech.a_gamma)
    out = np.where(arr.reshape(-1) >= 0, upper, 1.0 - upper)
    return _finish(out.reshape(arr.shape), arr.ndim == 0)


def staircase_cdf(mech: StaircaseContinuous, x):
    arr = _as_float_array(x)
    p = mech.params
    flat = np.ascontiguousarray(np.abs(arr.reshape(-1)))
    upper = _kernels.staircase_sf(flat, p.b, p.delta, mech.gamma, mech.a_gamma)
    out = np.where(arr.reshape(-1) >= 0, 1.0 - upper, upper)
    return _finish(out.reshape(arr.shape), arr.ndim == 0)


def staircase_from_latent(mech: StaircaseContinuous, sign, period, unif, step):
    """Recompute noise from latent draws: sign S, period G, uniform U, step bit B."""
    p = mech.params
    return _kernels._staircase_combine_numpy(
        np.asarray(sign), np.asarray(period), np.asarray(unif, dtype=np.float64),
        np.asarray(step), p.delta, mech.gamma,
    )[()]


def staircase_sample(mech: StaircaseContinuous, rng: np.random.Generator, size=None,
                     trace: bool = False) -> NoiseSample:
    """Draw staircase noise by the sign / geometric / uniform / binary construction.

    Four uniforms are consumed per draw, laid out as a ``(4, n)`` block.
    """
    n = 1 if size is None else int(np.prod(size))
    u = rng.random((4, n))
    p = mech.params
    value, sign, period, step = _kernels.staircase_transform(u, p.epsilon, p.b, p.delta, mech.gamma)
    shape = () if size is None else size
    tr = None
    if trace:
        tr = {"S": sign.reshape(shape), "G": period.reshape(shape),
              "U": u[2].reshape(shape), "B": step.reshape(shape)}
        if size is None:
            tr = {k: v[()] for k, v in tr.items()}
    return NoiseSample(_finish(value, True) if size is None else value.reshape(shape), tr)


# ---------------------------------------------------------------------------
# Laplace


def laplace_pdf(mech: LaplaceMechanism, x):
    arr = _as_float_array(x)
    lam = mech.scale
    return _finish(np.exp(-np.abs(arr) / lam) / (2.0 * lam), arr.ndim == 0)


def laplace_cdf(mech: LaplaceMechanism, x):
    arr = _as_float_array(x)
    half_tail = 0.5 * np.exp(-np.abs(arr) / mech.scale)
    return _finish(np.where(arr < 0, half_tail, 1.0 - half_tail), arr.ndim == 0)


def laplace_quantile(mech: LaplaceMechanism, u):
    """Inverse CDF; ``u = 0.5`` maps to 0 and ``u`` in {0, 1} to -inf/+inf."""
    u = np.asarray(u, dtype=np.float64)
    c = u - 0.5
    with np.errstate(divide="ignore"):
        out = -mech.scale * np.sign(c) * np.log1p(-2.0 * np.abs(c))
    return out[()] if out.ndim == 0 else out


def laplace_sample(mech: LaplaceMechanism, rng: np.random.Generator, size=None,
                   trace: bool = False) -> NoiseSample:
    n = 1 if size is None else int(np.prod(size))
    u = rng.random(n)
    value = laplace_quantile(mech, u)
    if size is None:
        return NoiseSample(float(value[0]), {"U": float(u[0])} if trace else None)
    return NoiseSample(value.reshape(size), {"U": u.reshape(size)} if trace else None)


# ---------------------------------------------------------------------------
# discrete staircase


def discrete_pmf(mech: StaircaseDiscrete, i):
    arr = np.asarray(i)
    if arr.dtype.kind not in "iu":
        if not np.all(np.equal(np.mod(arr, 1), 0)):
            raise ValidationError("pmf argument must be integer valued")
    flat = np.ascontiguousarray(arr.reshape(-1).astype(np.int64))
    p = mech.params
    out = _kernels.discrete_pmf(flat, p.b, mech.delta, mech.r, mech.a_r)
    return _finish(out.reshape(arr.shape), arr.ndim == 0)


def discrete_cdf(mech: StaircaseDiscrete, i):
    """``P(X <= i)`` from the closed-form period sums."""
    arr = np.asarray(i, dtype=np.int64)
    p = mech.params
    b, d, r, a = p.b, mech.delta, mech.r, mech.a_r

    def upper_tail(m):
        # P(X >= m) for m >= 1
        t = m - 1
        k = t // d
        j = t - k * d  # indices 0..j of period k already consumed
        consumed = np.minimum(j + 1, r) + b * np.maximum(j + 1 - r, 0)
        period_mass = a * (r + b * (d - r))
        return b**k * (period_mass - a * consumed) + period_mass * b ** (k + 1) / p.one_minus_b

    flat = arr.reshape(-1)
    out = np.where(
        flat >= 0,
        1.0 - upper_tail(np.maximum(flat + 1, 1)),
        upper_tail(np.maximum(-flat, 1)),
    )
    return _finish(out.reshape(arr.shape), arr.ndim == 0)


def discrete_from_latent(mech: StaircaseDiscrete, sign, period, index):
    return (np.asarray(sign) * (np.asarray(period) * mech.delta + np.asarray(index)))[()]


def discrete_sample(mech: StaircaseDiscrete, rng: np.random.Generator, size=None,
                    trace: bool = False) -> NoiseSample:
    """Draw integer staircase noise.

    Sign, geometric period and a weighted within-period index are combined as
    ``S * (G * delta + J)``.  Zero is reachable with either sign, so the draw
    ``(S=-1, G=0, J=0)`` is rejected and redrawn; that halves the weight of the
    doubled zero and makes the output exactly ``discrete_pmf``.
    """
    n = 1 if size is None else int(np.prod(size))
    p = mech.params
    value = np.empty(n, dtype=np.int64)
    sign = np.empty(n, dtype=np.int64)
    period = np.empty(n, dtype=np.int64)
    index = np.empty(n, dtype=np.int64)
    todo = np.arange(n)
    while todo.size:
        u = rng.random((3, todo.size))
        v, s, g, j = _kernels.discrete_transform(u, p.epsilon, p.b, mech.delta, mech.r)
        ok = ~((s < 0) & (g == 0) & (j == 0))
        dst = todo[ok]
        value[dst], sign[dst], period[dst], index[dst] = v[ok], s[ok], g[ok], j[ok]
        todo = todo[~ok]
    tr = None
    if trace:
        tr = {"S": sign, "G": period, "J": index}
    if size is None:
        if tr is not None:
            tr = {k: int(v[0]) for k, v in tr.items()}
        return NoiseSample(int(value[0]), tr)
    if tr is not None:
        tr = {k: v.reshape(size) for k, v in tr.items()}
    return NoiseSample(value.reshape(size), tr)


# ---------------------------------------------------------------------------
# generic dispatch


@functools.singledispatch
def density(mech, x):
    """Density (continuous) or pmf (discrete) of ``mech`` at ``x``."""
    raise TypeError(f"unsupported mechanism {type(mech).__name__}")


density.register(StaircaseContinuous, staircase_pdf)
density.register(LaplaceMechanism, laplace_pdf)
density.register(StaircaseDiscrete, discrete_pmf)


@functools.singledispatch
def cdf(mech, x):
    raise TypeError(f"unsupported mechanism {type(mech).__name__}")


cdf.register(StaircaseContinuous, staircase_cdf)
cdf.register(LaplaceMechanism, laplace_cdf)
cdf.register(StaircaseDiscrete, discrete_cdf)


@functools.singledispatch
def sample(mech, rng, size=None, trace=False) -> NoiseSample:
    raise TypeError(f"unsupported mechanism {type(mech).__name__}")


sample.register(StaircaseContinuous, staircase_sample)
sample.register(LaplaceMechanism, laplace_sample)
sample.register(StaircaseDiscrete, discrete_sample)


def tail_periods(b: float, rel: float = 1e-12) -> int:
    """Smallest K with ``b**K < rel``: periods needed before the geometric tail is negligible."""
    return max(1, math.ceil(math.log(rel) / math.log(b)))
