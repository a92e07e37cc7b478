"""Privacy audits: density-ratio checks, hypothesis-testing tradeoff curves and
goodness-of-fit tests for the samplers.

The ratio audit for piecewise-constant densities is exact.  Pieces are kept as
intervals with rational endpoints and explicit open/closed ends; for every pair
of pieces that contains some ``(x, x + d)`` with ``|d| <= delta`` the density
ratio is compared.  Grid mode evaluates ``f(x) / f(x + d)`` on a mesh and is
used for Laplace and arbitrary callables.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Optional, Sequence

import numpy as np
from scipy import stats

from . import _kernels
from .exceptions import AuditFailure, ValidationError
from .mechanisms import (
    LaplaceMechanism,
    PrivacyParams,
    StaircaseContinuous,
    StaircaseDiscrete,
    cdf,
    discrete_cdf,
    discrete_pmf,
    staircase_pdf,
    tail_periods,
)
from .streams import sample_stream

RATIO_REL_TOL = 1e-12
CURVE_TOL = 1e-10


@dataclass
class RatioAudit:
    max_ratio: float
    epsilon: float
    method: str  # exact-cells | grid | exhaustive
    grid: dict = field(default_factory=dict)
    witness: Optional[tuple] = None

    @property
    def slack(self) -> float:
        return self.max_ratio / math.exp(self.epsilon) - 1.0

    @property
    def passed(self) -> bool:
        return self.max_ratio <= math.exp(self.epsilon) * (1.0 + RATIO_REL_TOL)

    def to_dict(self) -> dict:
        return {
            "check": "density-ratio",
            "method": self.method,
            "epsilon": self.epsilon,
            "bound": math.exp(self.epsilon),
            "max_ratio": self.max_ratio,
            "slack": self.slack,
            "passed": self.passed,
            "witness": list(self.witness) if self.witness is not None else None,
            "grid": self.grid,
        }


# ---------------------------------------------------------------------------
# exact audit of piecewise-constant densities


@dataclass(frozen=True)
class Piece:
    lo: Fraction
    hi: Fraction
    lo_closed: bool
    hi_closed: bool
    value: float  # log density, or an integer level when ``levels`` is used

    @property
    def empty(self) -> bool:
        return self.lo > self.hi or (self.lo == self.hi and not (self.lo_closed and self.hi_closed))


def _reachable(p: Piece, q: Piece, reach: Fraction) -> bool:
    """True when some x in p and y in q satisfy |y - x| <= reach."""
    if q.lo >= p.hi:
        gap, attained = q.lo - p.hi, q.lo_closed and p.hi_closed
    elif p.lo >= q.hi:
        gap, attained = p.lo - q.hi, p.lo_closed and q.hi_closed
    else:
        return True
    return gap < reach or (gap == reach and attained)


def _witness(p: Piece, q: Piece, reach: float):
    lo, hi = float(p.lo), float(p.hi)
    width = hi - lo
    for x in (0.5 * (lo + hi), lo + 1e-9 * max(width, 1e-300), hi - 1e-9 * max(width, 1e-300), lo, hi):
        a, b = max(float(q.lo), x - reach), min(float(q.hi), x + reach)
        if a < b:
            return (x, 0.5 * (a + b) - x)
    return None


def max_piece_difference(pieces: Sequence[Piece], reach: Fraction):
    """Largest ``value(p) - value(q)`` over reachable piece pairs, plus the pair."""
    pieces = sorted((p for p in pieces if not p.empty), key=lambda p: (p.lo, p.hi))
    best, pair = -math.inf, None
    n = len(pieces)
    for i, p in enumerate(pieces):
        for step in (1, -1):
            j = i
            while 0 <= j < n:
                q = pieces[j]
                if step == 1 and q.lo - p.hi > reach:
                    break
                if step == -1 and p.lo - q.hi > reach:
                    break
                if _reachable(p, q, reach):
                    diff = p.value - q.value
                    if diff > best:
                        best, pair = diff, (p, q)
                j += step
    return best, pair


def staircase_pieces(mech: StaircaseContinuous, periods: int):
    """Level-valued pieces covering ``[-(periods) delta, periods delta]`` in units of delta."""
    g = Fraction(mech.gamma)
    pieces = []
    for k in range(periods):
        pieces.append(Piece(Fraction(k), k + g, True, False, k))
        pieces.append(Piece(k + g, Fraction(k + 1), True, False, k + 1))
        pieces.append(Piece(-(k + g), Fraction(-k), False, True, k))
        pieces.append(Piece(Fraction(-(k + 1)), -(k + g), False, True, k + 1))
    return pieces


def audit_staircase_exact(mech: StaircaseContinuous, periods: Optional[int] = None) -> RatioAudit:
    """Exact supremum of ``f(x) / f(x + d)`` over ``|d| <= delta``.

    Positions are measured in units of delta and kept as exact rationals, so
    breakpoint membership is decided without rounding.
    """
    p = mech.params
    k = (periods if periods is not None else tail_periods(p.b)) + 1
    pieces = staircase_pieces(mech, k)
    # value is the level; the ratio f(x)/f(x+d) is b**(level(x) - level(x+d))
    flipped = [Piece(q.lo, q.hi, q.lo_closed, q.hi_closed, -q.value) for q in pieces]
    diff, pair = max_piece_difference(flipped, Fraction(1))
    ratio = math.exp(p.epsilon * diff)
    witness = None
    if pair is not None:
        w = _witness(pair[0], pair[1], 1.0)
        witness = (w[0] * p.delta, w[1] * p.delta) if w else None
    grid = {"periods": k, "pieces": len(pieces), "max_level_step": int(diff)}
    return RatioAudit(ratio, p.epsilon, "exact-cells", grid, witness)


@dataclass(frozen=True)
class PiecewiseConstantDensity:
    """A density given on consecutive cells ``(lo_i, hi_i)``; zero outside them.

    Values at cell edges are unspecified, as for any density defined almost
    everywhere.
    """

    lo: np.ndarray
    hi: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        lo, hi, v = (np.asarray(a, dtype=np.float64) for a in (self.lo, self.hi, self.values))
        if not (lo.shape == hi.shape == v.shape) or lo.ndim != 1 or lo.size == 0:
            raise ValidationError("density table needs equal-length, non-empty lo/hi/density columns")
        if not (np.all(np.isfinite(lo)) and np.all(np.isfinite(hi)) and np.all(np.isfinite(v))):
            raise ValidationError("density table entries must be finite")
        if np.any(hi <= lo) or np.any(lo[1:] < hi[:-1]):
            raise ValidationError("density cells must be non-empty and non-overlapping, in increasing order")
        if np.any(v < 0):
            raise ValidationError("density values must be non-negative")
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)
        object.__setattr__(self, "values", v)

    @classmethod
    def from_file(cls, path) -> "PiecewiseConstantDensity":
        rows = []
        with open(path, newline="") as fh:
            for rec in csv.reader(fh):
                if not rec or rec[0].lstrip().startswith("#"):
                    continue
                try:
                    rows.append([float(x) for x in rec[:3]])
                except ValueError:
                    if rows:
                        raise ValidationError(f"{path}: non-numeric row {rec!r}") from None
                    continue  # header
        if not rows or any(len(r) != 3 for r in rows):
            raise ValidationError(f"{path}: expected rows 'lo,hi,density'")
        arr = np.array(rows)
        return cls(arr[:, 0], arr[:, 1], arr[:, 2])

    @classmethod
    def from_mechanism(cls, mech: StaircaseContinuous, periods: int) -> "PiecewiseConstantDensity":
        d, g = mech.params.delta, mech.gamma
        edges = []
        for k in range(periods):
            edges += [k, k + g]
        edges.append(periods)
        right = np.unique(np.array(edges, dtype=np.float64) * d)
        full = np.unique(np.concatenate([-right, right]))
        lo, hi = full[:-1], full[1:]
        return cls(lo, hi, staircase_pdf(mech, 0.5 * (lo + hi)))

    def pieces(self):
        # cell edges carry no density information, so cells are taken as open
        # intervals and the audit is over pairs that meet on a positive-length set
        out = []
        with np.errstate(divide="ignore"):
            logv = np.log(self.values)
        for lo, hi, lv in zip(self.lo, self.hi, logv):
            out.append(Piece(Fraction(float(lo)), Fraction(float(hi)), False, False, float(lv)))
        return out


def audit_piecewise_exact(density: PiecewiseConstantDensity, params: PrivacyParams,
                          edge_tol: float = 1e-12) -> RatioAudit:
    """Exact ratio audit of a tabulated density over pairs inside its support table.

    Cell pairs that can only meet on a sliver of relative width ``edge_tol``
    (shifts within ``edge_tol * delta`` of ``delta``) are ignored, so that
    rounded float cell edges do not register as violations.
    """
    pieces = density.pieces()
    reach = Fraction(params.delta) * (1 - Fraction(edge_tol))
    best, pair = -math.inf, None
    positive = [p for p in pieces if p.value > -math.inf]
    zero = [p for p in pieces if p.value == -math.inf]
    for p in positive:
        q = next((q for q in zero if _reachable(p, q, reach)), None)
        if q is not None:
            best, pair = math.inf, (p, q)
            break
    if best < math.inf:
        best, pair = max_piece_difference(positive, reach)
    ratio = math.exp(best) if best < math.inf else math.inf
    witness = _witness(pair[0], pair[1], float(reach)) if pair is not None else None
    grid = {"cells": len(pieces), "edge_tol": edge_tol}
    return RatioAudit(ratio, params.epsilon, "exact-cells", grid, witness)


# ---------------------------------------------------------------------------
# grid audit


def audit_ratio_grid(logpdf: Callable, params: PrivacyParams, x_lo: float, x_hi: float,
                     x_grid_n: int = 2001, d_grid_n: int = 201,
                     breakpoints: Sequence[float] = (), offset: float = 1e-9,
                     chunk: int = 4096) -> RatioAudit:
    """Max of ``f(x) / f(x + d)`` on an x mesh (plus points just either side of each
    breakpoint) against a d mesh spanning ``[-delta, delta]``."""
    if x_grid_n < 2 or d_grid_n < 2:
        raise ValidationError("grids need at least 2 points")
    bp = np.asarray(breakpoints, dtype=np.float64)
    xs = np.concatenate([np.linspace(x_lo, x_hi, x_grid_n), bp - offset, bp + offset])
    ds = np.linspace(-params.delta, params.delta, d_grid_n)
    best, witness = -math.inf, None
    for start in range(0, xs.size, chunk):
        x = xs[start:start + chunk, None]
        y = x + ds[None, :]
        with np.errstate(divide="ignore", invalid="ignore"):
            lx = logpdf(x)
            ly = logpdf(y)
            diff = lx - ly
        diff = np.where(np.isneginf(lx), -np.inf, diff)  # f(x) = 0 never violates
        # x + d is rounded; drop pairs whose realised shift exceeds delta
        diff = np.where(np.abs(y - x) <= params.delta, diff, -np.inf)
        idx = np.unravel_index(np.argmax(diff), diff.shape)
        if diff[idx] > best:
            best = float(diff[idx])
            witness = (float(x[idx[0], 0]), float(ds[idx[1]]))
    ratio = math.exp(best) if best < math.inf else math.inf
    grid = {"x_range": [x_lo, x_hi], "x_grid_n": x_grid_n, "d_grid_n": d_grid_n,
            "breakpoints": int(bp.size)}
    return RatioAudit(ratio, params.epsilon, "grid", grid, witness)


def _staircase_logpdf(mech: StaircaseContinuous):
    p = mech.params
    log_a, log_b = math.log(mech.a_gamma), -p.epsilon

    def logpdf(x):
        lvl = _kernels.staircase_level_numpy(x, p.delta, mech.gamma)
        return log_a + lvl * log_b

    return logpdf


def _laplace_logpdf(mech: LaplaceMechanism):
    lam = mech.scale
    return lambda x: -np.abs(x) / lam - math.log(2.0 * lam)


def audit_ratio_continuous(mech, x_grid_n: int = 2001, d_grid_n: int = 201,
                           method: str = "auto") -> RatioAudit:
    """Density-ratio audit of a continuous mechanism.

    ``method="auto"`` uses the exact cell audit for the staircase and the grid
    audit for Laplace.
    """
    p = mech.params
    periods = tail_periods(p.b)
    if isinstance(mech, StaircaseContinuous):
        if method in ("auto", "exact"):
            return audit_staircase_exact(mech, periods)
        if method != "grid":
            raise ValidationError(f"unknown audit method {method!r}")
        ks = np.arange(periods + 1, dtype=np.float64)
        bp = np.concatenate([ks, ks + mech.gamma]) * p.delta
        bp = np.concatenate([bp, -bp])
        span = (periods + 1) * p.delta
        return audit_ratio_grid(_staircase_logpdf(mech), p, -span, span, x_grid_n, d_grid_n, bp)
    if isinstance(mech, LaplaceMechanism):
        if method not in ("auto", "grid"):
            raise ValidationError("Laplace supports only the grid audit")
        span = (periods + 1) * p.delta
        return audit_ratio_grid(_laplace_logpdf(mech), p, -span, span, x_grid_n, d_grid_n, [0.0])
    raise ValidationError(f"unsupported mechanism {type(mech).__name__}")


def audit_ratio_discrete(mech: StaircaseDiscrete, span: Optional[int] = None) -> RatioAudit:
    """Exhaustive max of ``p(i) / p(i + d)`` over ``|i| <= span`` and ``|d| <= delta``."""
    p = mech.params
    d = mech.delta
    if span is None:
        span = d * (tail_periods(p.b) + 1)
    span = int(span)
    if span < d:
        raise ValidationError("span must cover at least one period")
    i = np.arange(-span, span + 1)
    shifts = np.arange(-d, d + 1)
    lvl_x = _kernels.discrete_level_numpy(i, d, mech.r)
    lvl_y = _kernels.discrete_level_numpy(i[:, None] + shifts[None, :], d, mech.r)
    steps = lvl_y - lvl_x[:, None]
    idx = np.unravel_index(np.argmax(steps), steps.shape)
    top = int(steps[idx])
    pmf = discrete_pmf(mech, i)
    pmf_y = discrete_pmf(mech, (i[:, None] + shifts[None, :]).reshape(-1)).reshape(steps.shape)
    float_ratio = float(np.max(pmf[:, None] / pmf_y))
    grid = {"span": span, "max_level_step": top, "max_ratio_float": float_ratio}
    return RatioAudit(math.exp(p.epsilon * top), p.epsilon, "exhaustive", grid,
                      (int(i[idx[0]]), int(shifts[idx[1]])))


# ---------------------------------------------------------------------------
# tradeoff curves


@dataclass
class TradeoffCurve:
    p_fa: np.ndarray
    p_md: np.ndarray
    mechanism: str
    epsilon: float
    shift: float
    method: str = "numeric"

    def violations(self) -> dict:
        e = math.exp(self.epsilon)
        lhs1 = e * self.p_md + self.p_fa
        lhs2 = self.p_md + e * self.p_fa
        return {"bound_md": float(np.min(lhs1) - 1.0), "bound_fa": float(np.min(lhs2) - 1.0)}

    def feasible(self, tol: float = CURVE_TOL) -> bool:
        v = self.violations()
        return v["bound_md"] >= -tol and v["bound_fa"] >= -tol

    def monotone(self, tol: float = 1e-12) -> bool:
        return bool(np.all(np.diff(self.p_md) <= tol))

    def rows(self):
        for fa, md in zip(self.p_fa, self.p_md):
            yield float(fa), float(md), self.mechanism, self.epsilon, self.shift


def _p_fa_grid(n: int) -> np.ndarray:
    if n < 2:
        raise ValidationError("need at least 2 P_FA points")
    return np.linspace(0.0, 1.0, int(n))


def laplace_region(epsilon: float, p_fa) -> np.ndarray:
    """Lowest missed-detection probability at each false-alarm level for a Laplace pair."""
    p = np.asarray(p_fa, dtype=np.float64)
    b = math.exp(-epsilon)
    first = 1.0 - math.exp(epsilon) * p
    with np.errstate(divide="ignore"):
        middle = b / (4.0 * p)
    last = b * (1.0 - p)
    return np.where(p < b / 2.0, first, np.where(p < 0.5, middle, last))


def laplace_tradeoff(params: PrivacyParams, n_points: int = 1001) -> TradeoffCurve:
    p_fa = _p_fa_grid(n_points)
    return TradeoffCurve(p_fa, laplace_region(params.epsilon, p_fa), "laplace",
                         params.epsilon, params.delta, "closed-form")


def _laplace_numeric(mech: LaplaceMechanism, shift: float, p_fa: np.ndarray) -> np.ndarray:
    # Reject H0 when X > c; the likelihood ratio is non-decreasing in X.
    lam = mech.scale
    c = np.full_like(p_fa, np.inf)
    inner = (p_fa > 0) & (p_fa < 1)
    u = 1.0 - p_fa[inner]
    h = u - 0.5
    c[inner] = -lam * np.sign(h) * np.log1p(-2.0 * np.abs(h))
    c[p_fa >= 1] = -np.inf
    z = c - shift
    with np.errstate(invalid="ignore", over="ignore"):
        tail = 0.5 * np.exp(-np.abs(z) / lam)
    return np.where(np.isposinf(z), 1.0, np.where(np.isneginf(z), 0.0, np.where(z < 0, tail, 1.0 - tail)))


def _cells_continuous(mech: StaircaseContinuous, s: float):
    """Cells with constant likelihood ratio and their masses under H0 and H1.

    Outside the central window both densities shrink by b per period, so the
    last period on each side stands for its whole tail with weight 1/(1-b).
    """
    p = mech.params
    d, g = p.delta, mech.gamma
    right = (math.ceil(s / d) + 1) * d
    left = -d
    periods = np.arange(math.floor(left / d) - 1, math.ceil(right / d) + 2)
    base = np.concatenate([periods, periods + g]) * d
    edges = np.unique(np.concatenate([base, -base, base + s, -base + s]))
    edges = edges[(edges >= left - d) & (edges <= right + d)]
    lo, hi = edges[:-1], edges[1:]
    mid = 0.5 * (lo + hi)
    width = hi - lo
    m0 = staircase_pdf(mech, mid) * width
    m1 = staircase_pdf(mech, mid - s) * width
    weight = np.where((mid < left) | (mid > right), 1.0 / p.one_minus_b, 1.0)
    return m0 * weight, m1 * weight


def _cells_discrete(mech: StaircaseDiscrete, s: int):
    d = mech.delta
    left, right = -d, s + d
    i = np.arange(left - d, right + d)
    m0 = discrete_pmf(mech, i)
    m1 = discrete_pmf(mech, i - s)
    weight = np.where((i < left) | (i >= right), 1.0 / mech.params.one_minus_b, 1.0)
    return m0 * weight, m1 * weight


def _envelope(m0: np.ndarray, m1: np.ndarray, p_fa: np.ndarray) -> np.ndarray:
    """Optimal (randomised) test curve from cell masses.

    Cells are admitted to the rejection region in decreasing likelihood-ratio
    order; interpolating between vertices is exactly the randomised test that
    splits a cell, so the piecewise-linear curve is the lower convex envelope.
    """
    order = np.argsort(-(m1 / m0), kind="stable")
    m0, m1 = m0[order], m1[order]
    total0, total1 = m0.sum(), m1.sum()
    fa = np.concatenate([[0.0], np.cumsum(m0)]) / total0
    md = np.concatenate([np.cumsum(m1[::-1])[::-1], [0.0]]) / total1
    fa[-1] = 1.0
    return np.interp(p_fa, fa, md)


def numeric_tradeoff(mech, shift: Optional[float] = None, n_thresholds: int = 1001) -> TradeoffCurve:
    """Most powerful tests between the noise density and its shift by ``shift``."""
    p = mech.params
    shift = p.delta if shift is None else float(shift)
    if not math.isfinite(shift) or abs(shift) > p.delta * (1 + 1e-12):
        raise ValidationError(f"|shift| must be at most delta = {p.delta}, got {shift}")
    s = abs(shift)  # symmetric densities: the curve depends on |shift| only
    p_fa = _p_fa_grid(n_thresholds)
    if isinstance(mech, LaplaceMechanism):
        p_md = _laplace_numeric(mech, s, p_fa)
    elif isinstance(mech, StaircaseContinuous):
        p_md = _envelope(*_cells_continuous(mech, s), p_fa)
    elif isinstance(mech, StaircaseDiscrete):
        if s != int(s):
            raise ValidationError("discrete mechanisms need an integer shift")
        p_md = _envelope(*_cells_discrete(mech, int(s)), p_fa)
    else:
        raise ValidationError(f"unsupported mechanism {type(mech).__name__}")
    return TradeoffCurve(p_fa, np.clip(p_md, 0.0, 1.0), mech.name, p.epsilon, shift, "numeric")


# ---------------------------------------------------------------------------
# sampler goodness of fit


@dataclass
class GofReport:
    test: str
    statistic: float
    pvalue: float
    critical_value: Optional[float]
    alpha: float
    n: int
    seed: int
    mechanism: str
    bins: Optional[int] = None

    @property
    def passed(self) -> bool:
        return self.pvalue >= self.alpha

    def to_dict(self) -> dict:
        out = {"check": "sampler-gof", "test": self.test, "statistic": self.statistic,
               "pvalue": self.pvalue, "critical_value": self.critical_value, "alpha": self.alpha,
               "n": self.n, "seed": self.seed, "mechanism": self.mechanism, "passed": self.passed}
        if self.bins is not None:
            out["bins"] = self.bins
        return out


def _chi_square_bins(reference: StaircaseDiscrete, n: int, min_expected: float = 5.0):
    # widen a symmetric core until its outermost cells drop below min_expected
    k = 0
    while n * discrete_pmf(reference, k + 1) >= min_expected:
        k += 1
    core = np.arange(-k, k + 1)
    probs = np.concatenate([[discrete_cdf(reference, -k - 1)], discrete_pmf(reference, core),
                            [discrete_cdf(reference, -k - 1)]])
    return core, probs


def sampler_gof(mech, n: int = 100_000, seed: int = 0, alpha: float = 1e-3,
                reference=None, raise_on_fail: bool = False) -> GofReport:
    """Draw ``n`` samples from ``mech`` and test them against ``reference``'s law.

    ``reference`` defaults to ``mech``; passing a different mechanism checks
    that the harness can tell distributions apart.
    """
    if n < 10_000:
        raise ValidationError("goodness of fit needs n >= 10^4")
    reference = mech if reference is None else reference
    x = sample_stream(mech, n, seed)
    if isinstance(reference, StaircaseDiscrete):
        core, probs = _chi_square_bins(reference, n)
        k = core[-1]
        obs = np.concatenate([[np.sum(x < -k)],
                              np.bincount((x[np.abs(x) <= k] + k).astype(np.int64), minlength=core.size),
                              [np.sum(x > k)]])
        exp = probs / probs.sum() * n
        keep = exp > 0
        res = stats.chisquare(obs[keep], exp[keep])
        crit = float(stats.chi2.ppf(1 - alpha, keep.sum() - 1))
        report = GofReport("chi-square", float(res.statistic), float(res.pvalue), crit, alpha,
                           n, seed, mech.name, int(keep.sum()))
    else:
        res = stats.kstest(x, lambda t: cdf(reference, t))
        crit = float(stats.kstwo.ppf(1 - alpha, n))
        report = GofReport("kolmogorov-smirnov", float(res.statistic), float(res.pvalue), crit,
                           alpha, n, seed, mech.name)
    if raise_on_fail and not report.passed:
        raise AuditFailure(f"{report.test} statistic {report.statistic:.6g} rejects at alpha={alpha} "
                           f"(seed {seed}, n {n})", report)
    return report
