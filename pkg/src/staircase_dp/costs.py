"""Cost functions and the expected cost V(p) = E[L(X)] of noise distributions.

Closed forms cover |x|, x**2 and |x|**m under the staircase density;
tabulated costs go through per-piece Gauss-Legendre quadrature with a
geometric tail certificate.  Discrete staircase costs reduce to the
per-residue weights ``w_i``.

The ``v_*`` and ``excess_*`` formula helpers use only arithmetic operators, so
they accept floats, numpy scalars or mpmath numbers alike.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from .exceptions import ValidationError
from .mechanisms import PrivacyParams, StaircaseDiscrete

MAX_BINOMIAL_N = 64
_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(32)


# ---------------------------------------------------------------------------
# cost functions


@dataclass(frozen=True)
class CostFunction:
    """Symmetric, non-decreasing loss ``L(x)``.

    ``kind`` is one of ``abs``, ``square``, ``moment``, ``constant`` or
    ``tabulated``.  ``threshold`` and ``ratio_bound`` are the growth
    certificate: ``L(x + 1) <= ratio_bound * L(x)`` for all ``x >= threshold``.
    """

    kind: str
    m: int = 1
    level: float = 1.0
    xs: Optional[np.ndarray] = field(default=None, compare=False, repr=False)
    ys: Optional[np.ndarray] = field(default=None, compare=False, repr=False)
    threshold: float = 1.0
    ratio_bound: float = 2.0
    source: Optional[str] = None

    # -- constructors -----------------------------------------------------

    @classmethod
    def abs(cls) -> "CostFunction":
        return cls("abs", m=1, threshold=1.0, ratio_bound=2.0)

    @classmethod
    def square(cls) -> "CostFunction":
        return cls("square", m=2, threshold=1.0, ratio_bound=4.0)

    @classmethod
    def moment(cls, m: int) -> "CostFunction":
        if int(m) != m or m < 1:
            raise ValidationError(f"moment order must be an integer >= 1, got {m!r}")
        if m + 1 > MAX_BINOMIAL_N:
            raise ValidationError(f"moment order {m} exceeds the supported maximum {MAX_BINOMIAL_N - 1}")
        return cls("moment", m=int(m), threshold=1.0, ratio_bound=2.0 ** int(m))

    @classmethod
    def constant(cls, level: float = 1.0) -> "CostFunction":
        if not (level > 0 and math.isfinite(level)):
            raise ValidationError("constant cost must be positive and finite")
        return cls("constant", m=0, level=float(level), threshold=1.0, ratio_bound=1.0)

    @classmethod
    def tabulated(cls, xs, ys, threshold: float, ratio_bound: float, source=None) -> "CostFunction":
        """Piecewise-linear cost through ``(xs, ys)`` on ``[0, xs[-1]]``, mirrored to ``x < 0``."""
        xs = np.asarray(xs, dtype=np.float64)
        ys = np.asarray(ys, dtype=np.float64)
        if xs.ndim != 1 or xs.shape != ys.shape or xs.size < 2:
            raise ValidationError("tabulated cost needs two equal-length columns with at least 2 rows")
        if not (np.all(np.isfinite(xs)) and np.all(np.isfinite(ys))):
            raise ValidationError("tabulated cost values must be finite")
        if xs[0] != 0.0:
            raise ValidationError("tabulated cost must start at x = 0")
        if np.any(np.diff(xs) <= 0):
            raise ValidationError("tabulated abscissae must be strictly increasing")
        if np.any(ys < 0) or np.any(np.diff(ys) < 0):
            raise ValidationError("tabulated cost must be non-negative and non-decreasing")
        if not (ratio_bound >= 1.0 and math.isfinite(ratio_bound)):
            raise ValidationError("ratio bound B must be finite and >= 1")
        if not (0.0 <= threshold <= xs[-1]):
            raise ValidationError("threshold T must lie inside the tabulated range")
        cost = cls("tabulated", m=0, xs=xs, ys=ys, threshold=float(threshold),
                   ratio_bound=float(ratio_bound), source=source)
        if cost(threshold) <= 0:
            raise ValidationError("L(T) must be positive")
        # spot-check the declared growth bound on the samples
        probe = xs[(xs >= threshold) & (xs + 1.0 <= xs[-1])]
        if probe.size:
            ratio = cost(probe + 1.0) / cost(probe)
            worst = int(np.argmax(ratio))
            if ratio[worst] > ratio_bound * (1 + 1e-12):
                raise ValidationError(
                    f"growth bound violated: L({probe[worst] + 1:g}) / L({probe[worst]:g}) = "
                    f"{ratio[worst]:.6g} > B = {ratio_bound:g}"
                )
        return cost

    @classmethod
    def from_file(cls, path) -> "CostFunction":
        """Read a two-column ``x, L(x)`` table with a ``# T=<t> B=<b>`` header line."""
        path = Path(path)
        text = path.read_text().splitlines()
        header = None
        rows = []
        for line in text:
            s = line.strip()
            if not s:
                continue
            if header is None and ("T=" in s or "T =" in s):
                header = s
                continue
            if s.startswith("#"):
                continue
            parts = [p for p in re.split(r"[,\s]+", s) if p]
            if len(parts) != 2:
                raise ValidationError(f"{path}: expected two columns, got {s!r}")
            rows.append((float(parts[0]), float(parts[1])))
        if header is None:
            raise ValidationError(f"{path}: missing header declaring T and B")
        t = re.search(r"T\s*=\s*([-+0-9.eE]+)", header)
        bnd = re.search(r"B\s*=\s*([-+0-9.eE]+)", header)
        if not (t and bnd):
            raise ValidationError(f"{path}: header must declare both T and B, got {header!r}")
        arr = np.array(rows, dtype=np.float64)
        return cls.tabulated(arr[:, 0], arr[:, 1], float(t.group(1)), float(bnd.group(1)),
                             source=str(path))

    @classmethod
    def parse(cls, spec: str) -> "CostFunction":
        """Parse ``abs``, ``square``, ``moment:<m>``, ``constant[:<c>]`` or ``table:<path>``."""
        spec = spec.strip()
        low = spec.lower()
        if low in ("abs", "l1", "|x|"):
            return cls.abs()
        if low in ("square", "l2", "x2", "x^2"):
            return cls.square()
        if low.startswith("moment:"):
            try:
                m = int(spec.split(":", 1)[1])
            except ValueError:
                raise ValidationError(f"bad moment order in {spec!r}") from None
            return cls.moment(m)
        if low == "constant":
            return cls.constant()
        if low.startswith("constant:"):
            return cls.constant(float(spec.split(":", 1)[1]))
        if low.startswith("table:"):
            return cls.from_file(spec.split(":", 1)[1])
        raise ValidationError(f"unknown cost {spec!r}; use abs, square, moment:<m>, constant or table:<path>")

    # -- evaluation ---------------------------------------------------------

    @property
    def label(self) -> str:
        if self.kind == "moment":
            return f"moment:{self.m}"
        if self.kind == "tabulated":
            return f"table:{self.source}" if self.source else "table"
        if self.kind == "constant":
            return "constant" if self.level == 1.0 else f"constant:{self.level:g}"
        return self.kind

    @property
    def power(self) -> Optional[int]:
        """Exponent m when L(x) = |x|**m, else None."""
        return self.m if self.kind in ("abs", "square", "moment") else None

    @property
    def x_max(self) -> float:
        return float(self.xs[-1]) if self.kind == "tabulated" else math.inf

    def __call__(self, x):
        ax = np.abs(np.asarray(x, dtype=np.float64))
        if self.kind in ("abs", "square", "moment"):
            out = ax**self.m
        elif self.kind == "constant":
            out = np.full_like(ax, self.level)
        else:
            if np.any(ax > self.xs[-1] * (1 + 1e-15)):
                raise ValidationError(f"tabulated cost evaluated beyond its last sample x = {self.xs[-1]:g}")
            out = np.interp(ax, self.xs, self.ys)
        return out[()] if out.ndim == 0 else out

    def growth_bound(self, t: float, step: float) -> float:
        """Upper bound on ``sup_{x >= t} L(x + step) / L(x)``."""
        if self.kind == "constant":
            return 1.0
        if self.kind == "tabulated":
            return self.ratio_bound ** math.ceil(step) if t >= self.threshold else math.inf
        if t <= 0:
            return math.inf
        return ((t + step) / t) ** self.m


# ---------------------------------------------------------------------------
# results


@dataclass(frozen=True)
class ExpectedCost:
    value: float
    method: str  # closed-form | series | quadrature
    error_bound: float = 0.0

    def __post_init__(self):
        if self.error_bound < 0:
            raise ValueError("error bound must be non-negative")

    def to_dict(self) -> dict:
        return {"value": self.value, "method": self.method, "error_bound": self.error_bound}


@dataclass(frozen=True)
class MomentSeries:
    """``c[i] = sum_{k>=0} b**k * k**i`` for ``i = 0..n``."""

    b: float
    c: tuple


@dataclass(frozen=True)
class DiscreteWeights:
    """Per-residue weights: ``V(p) = sum_i p(i) * w[i]`` over ``i = 0..delta-1``."""

    w: np.ndarray
    error_bound: float


# ---------------------------------------------------------------------------
# geometric moment sums


def moment_series(b, n: int, one_minus_b=None) -> MomentSeries:
    """Moment sums ``c_0..c_n`` from the binomial recursion.

    ``c_{i+1} = b/(1-b)^2 + b/(1-b) * sum_{j=1}^{i} C(i+1, j) c_j``.
    Pass ``one_minus_b`` explicitly (e.g. ``-expm1(-eps)``) when b is close to 1.
    """
    if not (0 < b < 1):
        raise ValidationError(f"b must lie in (0, 1), got {b!r}")
    if n < 0 or n + 1 > MAX_BINOMIAL_N:
        raise ValidationError(f"moment series order must be in [0, {MAX_BINOMIAL_N - 1}]")
    om = (1 - b) if one_minus_b is None else one_minus_b
    c = [1 / om]
    if n >= 1:
        lead = b / (om * om)
        ratio = b / om
        for i in range(n):
            acc = 0
            for j in range(1, i + 1):
                acc += math.comb(i + 1, j) * c[j]
            c.append(lead + ratio * acc)
    return MomentSeries(b=b, c=tuple(c))


# ---------------------------------------------------------------------------
# staircase closed forms (type generic)


def v_abs(b, om, gamma, delta):
    """E|X| under the staircase density; ``om`` is ``1 - b``."""
    return delta * (b / om + (b + om * gamma * gamma) / (b + om * gamma) / 2)


def v_square(b, om, gamma, delta):
    den = b + om * gamma
    return delta * delta * (
        (b * b + b) / (om * om)
        + (b + om * gamma * gamma) / den * b / om
        + (b + om * gamma**3) / den / 3
    )


def v_moment(b, om, gamma, delta, m, c):
    """E|X|^m from the moment sums ``c`` (length >= m + 2)."""
    n = m + 1
    den = gamma * om + b
    acc = 0
    for i in range(1, n + 1):
        acc += math.comb(n, i) * c[n - i] * (gamma**i * om + b)
    return delta**m * om / n * acc / den


def excess_abs(b, om, gamma, delta):
    """``V(gamma) - V(1)`` for |x|, written without cancellation."""
    return -delta * om * gamma * (1 - gamma) / (2 * (b + om * gamma))


def excess_square(b, om, gamma, delta):
    return delta * delta * gamma * (gamma - 1) * (om * (gamma + 1) / 3 + b) / (b + om * gamma)


def excess_moment(b, om, gamma, delta, m, c):
    n = m + 1
    acc = 0
    for i in range(2, n + 1):
        acc += math.comb(n, i) * c[n - i] * (gamma**i - gamma)
    return delta**m * om * om / n * acc / (gamma * om + b)


def _check_gamma(gamma) -> float:
    g = float(gamma)
    if not (0.0 <= g <= 1.0):
        raise ValidationError(f"gamma must lie in [0, 1], got {gamma!r}")
    return g


def staircase_cost_abs(params: PrivacyParams, gamma: float) -> ExpectedCost:
    g = _check_gamma(gamma)
    return ExpectedCost(v_abs(params.b, params.one_minus_b, g, params.delta), "closed-form")


def staircase_cost_square(params: PrivacyParams, gamma: float) -> ExpectedCost:
    g = _check_gamma(gamma)
    return ExpectedCost(v_square(params.b, params.one_minus_b, g, params.delta), "closed-form")


def staircase_cost_moment(params: PrivacyParams, gamma: float, m: int) -> ExpectedCost:
    g = _check_gamma(gamma)
    if int(m) != m or m < 1:
        raise ValidationError(f"moment order must be an integer >= 1, got {m!r}")
    if m + 1 > MAX_BINOMIAL_N:
        raise ValidationError(f"moment order {m} exceeds the supported maximum {MAX_BINOMIAL_N - 1}")
    # c_m ~ m! / (1-b)^(m+1); refuse before the float range is exhausted
    log_mag = m * math.log(params.delta) + math.lgamma(m + 1) - m * math.log(params.one_minus_b)
    if log_mag > 700:
        raise OverflowError(f"E|X|^{m} is out of floating-point range for these parameters")
    series = moment_series(params.b, m + 1, params.one_minus_b)
    value = v_moment(params.b, params.one_minus_b, g, params.delta, int(m), series.c)
    if not math.isfinite(value):
        raise OverflowError(f"E|X|^{m} overflowed")
    return ExpectedCost(value, "series")


def staircase_cost(params: PrivacyParams, gamma: float, cost: CostFunction) -> ExpectedCost:
    """Expected cost by the most exact route available for ``cost``."""
    if cost.kind == "abs":
        return staircase_cost_abs(params, gamma)
    if cost.kind == "square":
        return staircase_cost_square(params, gamma)
    if cost.kind == "moment":
        return staircase_cost_moment(params, gamma, cost.m)
    if cost.kind == "constant":
        _check_gamma(gamma)
        return ExpectedCost(cost.level, "closed-form")
    return staircase_cost_quadrature(params, gamma, cost)


# ---------------------------------------------------------------------------
# quadrature


def _gl_integrate(cost: CostFunction, lo: np.ndarray, hi: np.ndarray) -> np.ndarray:
    half = 0.5 * (hi - lo)
    mid = 0.5 * (hi + lo)
    x = mid[:, None] + half[:, None] * _GL_NODES[None, :]
    return half * (cost(x) @ _GL_WEIGHTS)


def _split_at_samples(cost: CostFunction, lo, hi, weight):
    """Subdivide pieces at tabulated abscissae so each cell sees a linear integrand."""
    lo_out, hi_out, w_out = [], [], []
    for a, b, w in zip(lo, hi, weight):
        inner = cost.xs[(cost.xs > a) & (cost.xs < b)]
        edges = np.concatenate(([a], inner, [b]))
        lo_out.append(edges[:-1])
        hi_out.append(edges[1:])
        w_out.append(np.full(edges.size - 1, w))
    return np.concatenate(lo_out), np.concatenate(hi_out), np.concatenate(w_out)


def _staircase_pieces(params: PrivacyParams, gamma: float, k0: int, k1: int):
    """Pieces of the positive half-line for periods ``k0..k1-1``: (lo, hi, density, period)."""
    d = params.delta
    b = params.b
    a = params.one_minus_b / (2.0 * d * (gamma + b * (1.0 - gamma)))
    k = np.arange(k0, k1, dtype=np.float64)
    bk = b ** np.arange(k0, k1)
    lo = np.concatenate((k * d, (k + gamma) * d))
    hi = np.concatenate(((k + gamma) * d, (k + 1) * d))
    dens = np.concatenate((a * bk, a * bk * b))
    per = np.concatenate((np.arange(k0, k1), np.arange(k0, k1)))
    keep = hi > lo
    return lo[keep], hi[keep], dens[keep], per[keep]


def staircase_cost_quadrature(params: PrivacyParams, gamma: float, cost: CostFunction,
                              rel_tol: float = 1e-12, block: int = 64,
                              max_periods: int = 1_000_000) -> ExpectedCost:
    """``E[L(X)]`` by 32-node Gauss-Legendre on every constant piece of the density.

    Periods are summed until the growth certificate bounds the remaining tail
    by ``rel_tol`` times the running total.  For tabulated costs integration
    stops at the last sample and the tail beyond it is bounded using the
    declared ratio ``B``; that bound is reported as ``error_bound``.
    """
    g = _check_gamma(gamma)
    d = params.delta
    b = params.b
    total = 0.0
    k = 0
    tab = cost.kind == "tabulated"
    while True:
        lo, hi, dens, per = _staircase_pieces(params, g, k, k + block)
        if tab:
            keep = lo < cost.x_max
            lo, hi, dens, per = lo[keep], np.minimum(hi[keep], cost.x_max), dens[keep], per[keep]
            if lo.size:
                lo, hi, dens = _split_at_samples(cost, lo, hi, dens)
        contrib = 2.0 * dens * _gl_integrate(cost, lo, hi) if lo.size else np.zeros(0)
        total += float(contrib.sum())
        k += block
        if tab:
            if not lo.size or hi.max() >= cost.x_max:
                break
            continue
        # per-period contributions of the last period in this block certify the tail
        last = k - 1
        last_mass = float(contrib[per == last].sum()) if contrib.size else 0.0
        r = b * cost.growth_bound(last * d, d)
        if r < 1.0:
            tail = last_mass * r / (1.0 - r)
            if tail <= rel_tol * total:
                return ExpectedCost(total, "quadrature", tail)
        if k >= max_periods:
            raise ValidationError("quadrature did not converge; cost grows too fast for this epsilon")
    tail = _tabulated_tail(cost, params, g)
    return ExpectedCost(total, "quadrature", tail)


def _tabulated_tail(cost: CostFunction, params: PrivacyParams, gamma: float) -> float:
    # L(x) <= L(x_max) B^(j+1) on [x_max + j, x_max + j + 1) and f(x) <= a b^(x/delta - 1)
    d = params.delta
    b = params.b
    a = params.one_minus_b / (2.0 * d * (gamma + b * (1.0 - gamma)))
    xm = cost.x_max
    q = cost.ratio_bound * b ** (1.0 / d)
    if q >= 1.0:
        raise ValidationError(
            f"declared growth bound B = {cost.ratio_bound:g} cannot certify the tail beyond "
            f"x = {xm:g} at epsilon = {params.epsilon:g}, delta = {d:g}"
        )
    return 2.0 * a * float(cost(xm)) * cost.ratio_bound * b ** (xm / d - 1.0) / (1.0 - q)


# ---------------------------------------------------------------------------
# Laplace


def laplace_cost(params: PrivacyParams, cost: CostFunction) -> ExpectedCost:
    """Expected cost of Laplace noise with scale ``delta / epsilon``."""
    lam = params.delta / params.epsilon
    if cost.kind == "abs":
        return ExpectedCost(lam, "closed-form")
    if cost.kind == "square":
        return ExpectedCost(2.0 * lam * lam, "closed-form")
    if cost.kind == "moment":
        return ExpectedCost(math.factorial(cost.m) * lam**cost.m, "closed-form")
    if cost.kind == "constant":
        return ExpectedCost(cost.level, "closed-form")
    return laplace_cost_quadrature(params, cost)


def laplace_cost_quadrature(params: PrivacyParams, cost: CostFunction,
                            rel_tol: float = 1e-12) -> ExpectedCost:
    lam = params.delta / params.epsilon
    step = lam
    total = 0.0
    k = 0
    block = 256
    while True:
        lo = np.arange(k, k + block, dtype=np.float64) * step
        hi = lo + step
        if cost.kind == "tabulated":
            keep = lo < cost.x_max
            lo, hi = lo[keep], np.minimum(hi[keep], cost.x_max)
            if lo.size:
                lo, hi, _ = _split_at_samples(cost, lo, hi, np.ones(lo.size))
        if lo.size:
            half = 0.5 * (hi - lo)
            x = (0.5 * (hi + lo))[:, None] + half[:, None] * _GL_NODES[None, :]
            vals = cost(x) * np.exp(-x / lam) / lam
            contrib = half * (vals @ _GL_WEIGHTS)
            total += float(contrib.sum())
        k += block
        if cost.kind == "tabulated":
            if not lo.size or hi.max() >= cost.x_max:
                xm = cost.x_max
                q = cost.ratio_bound * math.exp(-1.0 / lam)
                if q >= 1.0:
                    raise ValidationError("declared growth bound cannot certify the Laplace tail")
                tail = float(cost(xm)) * cost.ratio_bound * math.exp(-xm / lam) / (lam * (1 - q))
                return ExpectedCost(total, "quadrature", tail)
            continue
        r = math.exp(-1.0) * cost.growth_bound((k - 1) * step, step)
        if r < 1.0:
            tail = float(contrib[-1]) * r / (1 - r)
            if tail <= rel_tol * total:
                return ExpectedCost(total, "quadrature", tail)


# ---------------------------------------------------------------------------
# discrete


def discrete_weights(params: PrivacyParams, cost: CostFunction, rel_tol: float = 1e-12,
                     block: int = 256, max_periods: int = 10_000_000) -> DiscreteWeights:
    """Residue weights ``w_0 = L(0) + 2 sum_{k>=1} L(k d) b^k``, ``w_i = 2 sum_{k>=0} L(i + k d) b^k``."""
    d = params.delta
    if d != int(d) or d < 1:
        raise ValidationError("discrete weights need an integer delta >= 1")
    d = int(d)
    b = params.b
    w = np.zeros(d)
    resid = np.arange(d)
    tab = cost.kind == "tabulated"
    k = 0
    while True:
        ks = np.arange(k, k + block)
        pts = resid[None, :] + ks[:, None] * d
        if tab:
            inside = pts <= cost.x_max
            vals = np.where(inside, cost(np.minimum(pts, cost.x_max)), 0.0)
        else:
            vals = cost(pts.astype(np.float64))
        terms = 2.0 * vals * (b ** ks)[:, None]
        if k == 0:
            terms[0, 0] = vals[0, 0]
        w += terms.sum(axis=0)
        k += block
        if tab:
            if not inside[-1].all():
                r = b * cost.ratio_bound ** d
                if r >= 1.0:
                    raise ValidationError("declared growth bound cannot certify the discrete tail")
                # last in-table term of each residue bounds everything after it
                last_in = np.array([terms[inside[:, i], i][-1] if inside[:, i].any() else 0.0
                                    for i in range(d)])
                bound = last_in * r / (1 - r)
                return DiscreteWeights(w, float(bound.max()))
            continue
        r = b * cost.growth_bound(float((k - 1) * d), float(d))
        if r < 1.0:
            bound = terms[-1] * r / (1.0 - r)
            if np.all(bound <= rel_tol * w):
                return DiscreteWeights(w, float(bound.max()))
        if k >= max_periods:
            raise ValidationError("discrete weights did not converge")


def discrete_cost(mech: StaircaseDiscrete, cost: CostFunction,
                  weights: Optional[DiscreteWeights] = None) -> ExpectedCost:
    """``sum_i L(i) p_r(i)`` through the residue weights."""
    if weights is None:
        weights = discrete_weights(mech.params, cost)
    a = mech.a_r
    pmf0 = np.where(np.arange(mech.delta) < mech.r, a, a * mech.params.b)
    return ExpectedCost(float(pmf0 @ weights.w), "series", float(pmf0.sum() * weights.error_bound))
