"""Acceptance suite: one test per criterion, each recording a PASS/FAIL line.

Runtimes are the best of several repetitions after a warm-up call, so that
one-off import and JIT compilation costs are excluded.
"""

import math
import time

import mpmath as mp
import numpy as np

from oracles import discrete_brute_force, mp_golden, mp_v_abs, mp_v_square
from staircase_dp.abstract_mech import fuzz_neighbours
from staircase_dp.costs import CostFunction, laplace_cost, staircase_cost_abs, staircase_cost_square
from staircase_dp.mechanisms import (
    LaplaceMechanism,
    PrivacyParams,
    StaircaseContinuous,
    StaircaseDiscrete,
    cdf,
    discrete_pmf,
    geometric,
)
from staircase_dp.optimizer import (
    discrete_r_opt,
    gamma_heuristic,
    gamma_opt_abs,
    gamma_opt_moment,
    gamma_opt_square,
    heuristic_small_noise_probability,
)
from staircase_dp.privacy_audit import (
    audit_ratio_continuous,
    audit_staircase_exact,
    laplace_region,
    laplace_tradeoff,
    numeric_tradeoff,
    sampler_gof,
)
from staircase_dp.streams import sample_stream

ABS, SQUARE = CostFunction.abs(), CostFunction.square()


def best_time(fn, repeat=20):
    fn()
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def gain(eps, cost, opt):
    p = PrivacyParams(eps, 1.0)
    return laplace_cost(p, cost).value / opt(p).cost.value


def test_criterion_1_gain_abs(criterion):
    g = gain(10.0, ABS, gamma_opt_abs)
    formula = math.expm1(10.0) / (10.0 * math.exp(5.0))
    t = best_time(lambda: gain(10.0, ABS, gamma_opt_abs))
    ok = abs(g - 14.84) <= 0.05 and abs(g - formula) <= 1e-12 * formula and t < 1e-3
    criterion(1, ok, f"gain={g:.6f} formula={formula:.6f} runtime={t * 1e3:.3f} ms")
    assert ok


def test_criterion_2_gain_square(criterion):
    g = gain(10.0, SQUARE, gamma_opt_square)
    t = best_time(lambda: gain(10.0, SQUARE, gamma_opt_square))
    ok = abs(g - 23.6) <= 0.3 and t < 1e-3
    criterion(2, ok, f"gain={g:.6f} runtime={t * 1e3:.3f} ms")
    assert ok


def test_criterion_3_high_privacy(criterion):
    eps, delta = 0.01, 1.0
    p = PrivacyParams(eps, delta)
    gap1 = laplace_cost(p, ABS).value - gamma_opt_abs(p).cost.value
    rel1 = abs(gap1 - delta * eps / 24) / (delta * eps / 24)
    gap2 = laplace_cost(p, SQUARE).value - gamma_opt_square(p).cost.value
    err2 = abs(gap2 - delta**2 * (1 / 12 - eps**2 / 720))
    ok = rel1 < 0.01 and err2 < 1e-6 * delta**2
    criterion(3, ok, f"abs rel err={rel1:.3e} square abs err={err2:.3e}")
    assert ok


def test_criterion_4_closed_form_vs_golden(criterion):
    eps_set = [0.1, 0.5, 1, 2, 5, 10, 20]
    worst_closed = worst_moment = 0.0

    def run():
        nonlocal worst_closed, worst_moment
        with mp.workdps(30):
            for eps in eps_set:
                p = PrivacyParams(eps, 1.0)
                ga, gs = gamma_opt_abs(p).parameter, gamma_opt_square(p).parameter
                oa = float(mp_golden(lambda g: mp_v_abs(eps, g), tol=mp.mpf(10) ** -12))
                osq = float(mp_golden(lambda g: mp_v_square(eps, g), tol=mp.mpf(10) ** -12))
                worst_closed = max(worst_closed, abs(ga - oa), abs(gs - osq))
                m1, m2 = gamma_opt_moment(p, 1).parameter, gamma_opt_moment(p, 2).parameter
                worst_moment = max(worst_moment, abs(m1 - ga), abs(m2 - gs))

    t0 = time.perf_counter()
    run()
    t = time.perf_counter() - t0
    ok = worst_closed <= 1e-8 and worst_moment <= 1e-6 and t < 1.0
    criterion(4, ok, f"closed-vs-golden={worst_closed:.2e} moment-vs-closed={worst_moment:.2e} runtime={t:.3f} s")
    assert ok


def test_criterion_5_sampler(criterion):
    p = PrivacyParams(1.0, 1.0)
    mech = StaircaseContinuous(p, gamma_opt_abs(p).parameter)
    sample_stream(mech, 10, 0)  # warm-up
    t0 = time.perf_counter()
    x = sample_stream(mech, 1_000_000, 2024)
    a, s = np.abs(x), x * x
    z_abs = (a.mean() - staircase_cost_abs(p, mech.gamma).value) / (a.std(ddof=1) / math.sqrt(x.size))
    z_sq = (s.mean() - staircase_cost_square(p, mech.gamma).value) / (s.std(ddof=1) / math.sqrt(x.size))
    gof = sampler_gof(mech, 100_000, seed=2025, alpha=1e-3)
    t = time.perf_counter() - t0
    ok = abs(z_abs) < 3 and abs(z_sq) < 3 and gof.passed and t < 5.0
    criterion(5, ok, f"z(|X|)={z_abs:+.2f} z(X^2)={z_sq:+.2f} KS p={gof.pvalue:.3f} runtime={t:.2f} s")
    assert ok


def test_criterion_6_audit(criterion):
    cases = [(0.1, 0.5), (0.5, 0.123), (1.0, 0.3), (2.0, 0.0), (5.0, 1.0)]
    lines, ok = [], True
    for eps, gamma in cases:
        a = audit_staircase_exact(StaircaseContinuous(PrivacyParams(eps, 1.0), gamma))
        e = math.exp(eps)
        ok &= e * (1 - 1e-9) <= a.max_ratio <= e * (1 + 1e-12)
        lines.append(f"{a.slack:+.1e}")
    for eps in (0.1, 1.0, 5.0):
        lap = audit_ratio_continuous(LaplaceMechanism(PrivacyParams(eps, 1.0)))
        ok &= lap.passed
    criterion(6, ok, "staircase slack " + " ".join(lines) + "; laplace <= e^eps")
    assert ok


def test_criterion_7_discrete(criterion):
    """Literal form: brute force over |i| <= 200 and V* within 1e-9."""
    worked = discrete_r_opt(PrivacyParams(math.log(2), 2.0), ABS)
    ok_worked = worked.parameter == 1 and abs(worked.cost.value - 2.8) <= 1e-12
    ok_geo = True
    for eps in (0.1, 1.0, 3.0):
        b = math.exp(-eps)
        i = np.arange(-300, 301)
        ref = (1 - b) / (1 + b) * b ** np.abs(i)
        ok_geo &= np.allclose(discrete_pmf(geometric(eps), i), ref, rtol=1e-14, atol=0)
    failures = []
    for eps in (0.1, 1.0, 3.0):
        for delta in range(1, 7):
            for name, cost in (("abs", ABS), ("square", SQUARE)):
                res = discrete_r_opt(PrivacyParams(eps, delta), cost)
                r_bf, vals = discrete_brute_force(eps, delta, cost, 200)
                err = abs(res.cost.value - vals[r_bf - 1])
                if res.parameter != r_bf or err > 1e-9 * max(1.0, vals[r_bf - 1]):
                    failures.append(f"(eps={eps},D={delta},{name}: r {res.parameter}/{r_bf}, dV={err:.1e})")
    ok = ok_worked and ok_geo and not failures
    detail = f"worked={ok_worked} geometric={ok_geo} mismatches={len(failures)}/36"
    if failures:
        detail += " first: " + failures[0]
    criterion(7, ok, detail)
    # at eps = 0.1 the mass beyond |i| = 200 is not negligible, so the literal
    # truncated brute force disagrees with the exact sums; see the wide-support
    # check in test_optimizer.py
    assert ok, "; ".join(failures)


def test_criterion_8_heuristic(criterion):
    worst = 0.0
    for eps in (0.1, 0.5, 1.0, 2.0, 5.0, 10.0, 20.0):
        p = PrivacyParams(eps, 1.0)
        g = gamma_heuristic(p).parameter
        mech = StaircaseContinuous(p, g)
        half = p.b / 2 * p.delta
        prob = float(cdf(mech, half) - cdf(mech, -half))
        b = p.b
        worst = max(worst, abs(prob - (b - b * b) / (3 * b - b * b)),
                    abs(heuristic_small_noise_probability(p) - prob))
    limit = abs(heuristic_small_noise_probability(PrivacyParams(20.0, 1.0)) - 1 / 3)
    ok = worst <= 1e-10 and limit <= 1e-4
    criterion(8, ok, f"max |P - formula|={worst:.1e} |P(eps=20) - 1/3|={limit:.1e}")
    assert ok


def test_criterion_9_tradeoff(criterion):
    p = PrivacyParams(1.0, 1.0)
    numeric = numeric_tradeoff(LaplaceMechanism(p), p.delta, 1000)
    sup = float(np.max(np.abs(numeric.p_md - laplace_region(1.0, numeric.p_fa))))
    curves = [numeric, laplace_tradeoff(p, 1000)]
    for eps in (0.3, 1.0, 4.0):
        q = PrivacyParams(eps, 1.0)
        for g in (0.0, 0.3, gamma_opt_abs(q).parameter, 1.0):
            curves.append(numeric_tradeoff(StaircaseContinuous(q, g), 1.0, 1000))
            curves.append(numeric_tradeoff(StaircaseContinuous(q, g), 0.5, 1000))
        curves.append(numeric_tradeoff(LaplaceMechanism(q), 0.7, 1000))
        for delta, r in ((1, 1), (3, 2), (4, 4)):
            curves.append(numeric_tradeoff(StaircaseDiscrete(PrivacyParams(eps, delta), r), delta, 1000))
    feasible = all(c.feasible() for c in curves)
    ok = sup <= 1e-6 and feasible
    criterion(9, ok, f"laplace sup err={sup:.1e} feasible={feasible} over {len(curves)} curves")
    assert ok


def test_criterion_10_abstract(criterion):
    worst, ok = 0.0, True
    for eps, gamma in ((0.5, 0.3), (1.0, 0.0), (2.0, 1.0), (1.0, 0.5)):
        res = fuzz_neighbours(PrivacyParams(eps, 1.0), gamma, n_pairs=1000, max_candidates=16, seed=11)
        ok &= res["max_ratio"] <= math.exp(2 * eps) * (1 + 1e-12)
        worst = max(worst, math.log(res["max_ratio"]) / eps)
    criterion(10, ok, f"max log-ratio / eps = {worst:.4f} (bound 2)")
    assert ok
