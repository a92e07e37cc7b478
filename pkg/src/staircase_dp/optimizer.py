"""Optimal staircase parameters.

* |x| and x**2: closed-form gamma*, cross-checked by golden-section search.
* |x|**m: root of the stationarity polynomial in gamma, bracketed by a scan of
  [0, 1] and refined by bisection.
* other costs: golden-section search on the quadrature cost.
* discrete staircase: enumeration of the break index r.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .costs import (
    CostFunction,
    DiscreteWeights,
    ExpectedCost,
    discrete_cost,
    discrete_weights,
    excess_abs,
    excess_moment,
    excess_square,
    laplace_cost,
    moment_series,
    staircase_cost,
    staircase_cost_abs,
    staircase_cost_moment,
    staircase_cost_quadrature,
    staircase_cost_square,
)
from .exceptions import ValidationError
from .mechanisms import PrivacyParams, StaircaseDiscrete

INV_PHI = (math.sqrt(5.0) - 1.0) / 2.0


@dataclass
class OptimizationResult:
    parameter: float
    cost: ExpectedCost
    method: str  # closed-form | polynomial-root | golden-section | enumeration | heuristic
    diagnostics: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "parameter": self.parameter,
            "cost": self.cost.to_dict(),
            "method": self.method,
            "diagnostics": self.diagnostics,
        }


@dataclass
class GoldenResult:
    x: float
    fx: float
    bracket: float
    evaluations: int


def golden_section(f: Callable, lo, hi, tol=1e-8, max_iter: int = 500) -> GoldenResult:
    """Minimise a unimodal ``f`` on ``[lo, hi]`` until the bracket is narrower than ``tol``.

    Plain arithmetic only, so ``lo``/``hi``/``tol`` may be mpmath numbers.
    The endpoints are compared against the interior estimate at the end, so a
    monotone ``f`` returns the better endpoint.
    """
    a, b = lo, hi
    inv = INV_PHI if isinstance(lo, float) else (type(lo)(5) ** 0.5 - 1) / 2
    c = b - inv * (b - a)
    d = a + inv * (b - a)
    fc, fd = f(c), f(d)
    evals = 2
    for _ in range(max_iter):
        if b - a <= tol:
            break
        if fc < fd:
            b, d, fd = d, c, fc
            c = b - inv * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + inv * (b - a)
            fd = f(d)
        evals += 1
    x, fx = (c, fc) if fc < fd else (d, fd)
    f_lo, f_hi = f(lo), f(hi)
    evals += 2
    if f_lo < fx:
        x, fx = lo, f_lo
    if f_hi < fx:
        x, fx = hi, f_hi
    return GoldenResult(x, fx, b - a, evals)


def _local_min_certificate(value_at: Callable[[float], float], g: float, step: float = 1e-4) -> bool:
    v = value_at(g)
    for h in (g - step, g + step):
        if 0.0 <= h <= 1.0 and value_at(h) < v:
            return False
    return True


# ---------------------------------------------------------------------------
# closed forms


def gamma_opt_abs(params: PrivacyParams) -> OptimizationResult:
    """gamma* = 1 / (1 + e^{eps/2}) and V* = delta e^{eps/2} / (e^eps - 1) for L(x) = |x|."""
    eps, d = params.epsilon, params.delta
    half = math.exp(-eps / 2.0)
    gamma = half / (1.0 + half)
    value = d * half / params.one_minus_b
    b, om = params.b, params.one_minus_b
    gs = golden_section(lambda g: excess_abs(b, om, g, d), 0.0, 1.0, tol=1e-12)
    check = staircase_cost_abs(params, gamma).value
    diag = {
        "golden_gamma": gs.x,
        "golden_agreement": abs(gs.x - gamma),
        "cost_consistency": abs(check - value) / value,
        "local_minimum": _local_min_certificate(lambda g: staircase_cost_abs(params, g).value, gamma),
    }
    return OptimizationResult(gamma, ExpectedCost(value, "closed-form"), "closed-form", diag)


def cubic_residual(params: PrivacyParams, gamma: float) -> float:
    """Left side of the x**2 stationarity cubic at ``gamma``."""
    b, om = params.b, params.one_minus_b
    return (2.0 / 3.0) * om * om * gamma**3 + 2 * b * om * gamma**2 + 2 * b * b * gamma - (2 * b * b + b) / 3.0


def gamma_opt_square(params: PrivacyParams) -> OptimizationResult:
    """Closed-form gamma* for L(x) = x**2.

    Uses ``gamma* = ((b(1+b)/2)^{1/3} - b) / (1 - b)``, an algebraic rewrite of the
    textbook root that avoids the (1-b)^3 cancellation, evaluated through
    expm1/log1p so it keeps relative accuracy as epsilon -> 0.
    """
    eps, d = params.epsilon, params.delta
    b, om = params.b, params.one_minus_b
    # log(b (1+b) / 2) = -eps + log1p(-(1-b)/2)
    log_base = -eps + math.log1p(-om / 2.0)
    gamma = (math.expm1(log_base / 3.0) + om) / om
    value = d * d * (math.exp(2.0 * log_base / 3.0) + b) / (om * om)
    gs = golden_section(lambda g: excess_square(b, om, g, d), 0.0, 1.0, tol=1e-12)
    check = staircase_cost_square(params, gamma).value
    diag = {
        "golden_gamma": gs.x,
        "golden_agreement": abs(gs.x - gamma),
        "cubic_residual": cubic_residual(params, gamma),
        "cost_consistency": abs(check - value) / value,
        "local_minimum": _local_min_certificate(lambda g: staircase_cost_square(params, g).value, gamma),
    }
    return OptimizationResult(gamma, ExpectedCost(value, "closed-form"), "closed-form", diag)


# ---------------------------------------------------------------------------
# moment costs


def stationarity_coefficients(params: PrivacyParams, m: int) -> np.ndarray:
    """Coefficients ``p[0..n]`` (ascending powers, n = m + 1) whose root in [0, 1] is gamma*."""
    n = m + 1
    b, om = params.b, params.one_minus_b
    c = moment_series(b, m, om).c
    comb = math.comb
    p = np.zeros(n + 1)
    p[n] = c[0] * (n - 1) * om * om
    for i in range(1, n):
        p[i] = comb(n, i) * c[n - i] * (i - 1) * om * om + comb(n, i + 1) * c[n - i - 1] * (i + 1) * om * b
    p[0] = -sum(comb(n, i) * c[n - i] for i in range(2, n + 1)) * b * om
    return p


def _horner(p: np.ndarray, x: float) -> float:
    acc = 0.0
    for coef in p[::-1]:
        acc = acc * x + coef
    return acc


def _bisect(fn: Callable[[float], float], lo: float, hi: float, f_lo: float) -> float:
    for _ in range(2000):
        mid = 0.5 * (lo + hi)
        if mid <= lo or mid >= hi:
            break
        fm = fn(mid)
        if fm == 0.0:
            return mid
        if (fm < 0) == (f_lo < 0):
            lo, f_lo = mid, fm
        else:
            hi = mid
    return 0.5 * (lo + hi)


def polynomial_roots_01(p: np.ndarray, n_scan: int = 256) -> list:
    """Real roots of the polynomial in [0, 1] found by sign-change scan plus bisection."""
    fn = lambda x: _horner(p, x)  # noqa: E731
    grid = np.linspace(0.0, 1.0, n_scan + 1)
    vals = [fn(float(x)) for x in grid]
    roots = []
    for j in range(n_scan):
        lo, hi, f_lo, f_hi = float(grid[j]), float(grid[j + 1]), vals[j], vals[j + 1]
        if f_lo == 0.0:
            roots.append(lo)
        elif f_lo * f_hi < 0:
            roots.append(_bisect(fn, lo, hi, f_lo))
    if vals[-1] == 0.0:
        roots.append(1.0)
    return roots


def gamma_opt_moment(params: PrivacyParams, m: int) -> OptimizationResult:
    """gamma* for L(x) = |x|**m from the stationarity polynomial of degree m + 1."""
    if int(m) != m or m < 1:
        raise ValidationError(f"moment order must be an integer >= 1, got {m!r}")
    m = int(m)
    b, om, d = params.b, params.one_minus_b, params.delta
    c = moment_series(b, m, om).c
    excess = lambda g: excess_moment(b, om, g, d, m, c)  # noqa: E731
    p = stationarity_coefficients(params, m)
    roots = polynomial_roots_01(p)
    gs = golden_section(excess, 0.0, 1.0, tol=1e-12)
    diag = {"roots": roots, "golden_gamma": gs.x}
    if roots:
        gamma = min(roots, key=excess)
        method = "polynomial-root"
        scale = float(np.max(np.abs(p)))
        diag["residual"] = _horner(p, gamma) / scale if scale > 0 else 0.0
    else:
        gamma = gs.x
        method = "golden-section"
        diag["no_sign_change"] = True
    diag["golden_agreement"] = abs(gs.x - gamma)
    cost = staircase_cost_moment(params, gamma, m)
    diag["local_minimum"] = _local_min_certificate(lambda g: excess(g), gamma)
    return OptimizationResult(gamma, cost, method, diag)


# ---------------------------------------------------------------------------
# general costs


def gamma_opt_generic(params: PrivacyParams, cost: CostFunction, tol: float = 1e-8) -> OptimizationResult:
    """Golden-section search of the quadrature cost over gamma in [0, 1].

    Unimodality in gamma is assumed, not proven, for arbitrary costs; the
    result carries ``unimodality_assumed`` in its diagnostics.
    """
    if cost.kind in ("abs", "square", "moment", "constant"):
        value_at = lambda g: staircase_cost(params, g, cost).value  # noqa: E731
    else:
        value_at = lambda g: staircase_cost_quadrature(params, g, cost).value  # noqa: E731
    gs = golden_section(value_at, 0.0, 1.0, tol=tol)
    v0, v_half, v1 = value_at(0.0), value_at(0.5), value_at(1.0)
    scale = max(abs(v0), abs(v1), 1e-300)
    flat = max(abs(v0 - v_half), abs(v1 - v_half), abs(gs.fx - v0)) <= 1e-12 * scale
    result_cost = staircase_cost_quadrature(params, gs.x, cost) if cost.kind == "tabulated" \
        else staircase_cost(params, gs.x, cost)
    diag = {
        "bracket_width": gs.bracket,
        "evaluations": gs.evaluations,
        "flat": flat,
        "unimodality_assumed": True,
        "endpoint_values": [v0, v1],
        "local_minimum": _local_min_certificate(value_at, gs.x),
    }
    return OptimizationResult(gs.x, result_cost, "golden-section", diag)


def heuristic_small_noise_probability(params: PrivacyParams) -> float:
    """``P(|X| <= gamma delta)`` at gamma = b/2, i.e. ``(b - b^2) / (3b - b^2)``."""
    b, om = params.b, params.one_minus_b
    return om / (3.0 - b)


def gamma_heuristic(params: PrivacyParams, cost: Optional[CostFunction] = None) -> OptimizationResult:
    """gamma = e^{-eps} / 2, a cost-independent choice."""
    cost = cost or CostFunction.abs()
    gamma = params.b / 2.0
    diag = {"prob_small_noise": heuristic_small_noise_probability(params), "cost_function": cost.label}
    return OptimizationResult(gamma, staircase_cost(params, gamma, cost), "heuristic", diag)


def optimal_gamma(params: PrivacyParams, cost: CostFunction) -> OptimizationResult:
    """Dispatch to the most exact optimiser for ``cost``."""
    if cost.kind == "abs":
        return gamma_opt_abs(params)
    if cost.kind == "square":
        return gamma_opt_square(params)
    if cost.kind == "moment":
        return gamma_opt_moment(params, cost.m)
    return gamma_opt_generic(params, cost)


# ---------------------------------------------------------------------------
# discrete


def discrete_r_opt(params: PrivacyParams, cost: CostFunction,
                   weights: Optional[DiscreteWeights] = None) -> OptimizationResult:
    """Enumerate r in [1, delta]; ties resolve to the smallest r."""
    if params.delta != int(params.delta) or params.delta < 1:
        raise ValidationError("discrete optimisation needs an integer delta >= 1")
    weights = weights or discrete_weights(params, cost)
    costs = [discrete_cost(StaircaseDiscrete(params, r), cost, weights)
             for r in range(1, int(params.delta) + 1)]
    values = [c.value for c in costs]
    best = int(np.argmin(values))
    diag = {"costs_by_r": values, "weights": weights.w.tolist(),
            "weights_error_bound": weights.error_bound}
    return OptimizationResult(best + 1, costs[best], "enumeration", diag)


# ---------------------------------------------------------------------------
# comparison with Laplace


@dataclass(frozen=True)
class ComparisonRow:
    epsilon: float
    v_lap: float
    v_opt: float
    gain: float
    gap: float
    gamma: float

    def to_dict(self) -> dict:
        return {"epsilon": self.epsilon, "v_lap": self.v_lap, "v_opt": self.v_opt,
                "gain": self.gain, "gap": self.gap, "gamma": self.gamma}


def compare_mechanisms(cost: CostFunction, eps_grid: Sequence[float], delta: float = 1.0) -> list:
    """Laplace versus optimal staircase cost for each epsilon in ``eps_grid``."""
    rows = []
    for eps in eps_grid:
        params = PrivacyParams(eps, delta)
        opt = optimal_gamma(params, cost)
        v_lap = laplace_cost(params, cost).value
        v_opt = opt.cost.value
        rows.append(ComparisonRow(params.epsilon, v_lap, v_opt, v_lap / v_opt, v_lap - v_opt, opt.parameter))
    return rows
