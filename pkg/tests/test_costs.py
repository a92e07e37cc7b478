import math

import mpmath as mp
import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from staircase_dp.costs import (
    CostFunction,
    discrete_cost,
    discrete_weights,
    laplace_cost,
    laplace_cost_quadrature,
    moment_series,
    staircase_cost,
    staircase_cost_abs,
    staircase_cost_moment,
    staircase_cost_quadrature,
    staircase_cost_square,
    v_abs,
)
from staircase_dp.exceptions import ValidationError
from staircase_dp.mechanisms import PrivacyParams, StaircaseDiscrete, discrete_pmf

LN2 = math.log(2.0)


def mp_staircase_moment(eps, delta, gamma, m, dps=30):
    """E|X|^m as a direct sum over density pieces, in mpmath."""
    with mp.workdps(dps):
        eps, delta, gamma = mp.mpf(eps), mp.mpf(delta), mp.mpf(gamma)
        b = mp.e ** (-eps)
        a = (1 - b) / (2 * delta * (gamma + b * (1 - gamma)))
        prim = lambda x: x ** (m + 1) / (m + 1)  # noqa: E731
        total = mp.mpf(0)
        k = 0
        while True:
            lo, mid, hi = k * delta, (k + gamma) * delta, (k + 1) * delta
            term = a * b**k * ((prim(mid) - prim(lo)) + b * (prim(hi) - prim(mid)))
            total += term
            if k > 20 and term < total * mp.mpf(10) ** (-dps):
                break
            k += 1
        return 2 * total


def table_cost(fn, x_max=60.0, n=6001, threshold=1.0, ratio_bound=4.0):
    xs = np.linspace(0.0, x_max, n)
    return CostFunction.tabulated(xs, fn(xs), threshold, ratio_bound)


class TestCostFunction:
    def test_builtins(self):
        assert CostFunction.abs()(-3.0) == 3.0
        assert CostFunction.square()(-3.0) == 9.0
        assert CostFunction.moment(3)(2.0) == 8.0
        assert CostFunction.constant(2.5)(100.0) == 2.5

    def test_parse(self, tmp_path):
        assert CostFunction.parse("abs").kind == "abs"
        assert CostFunction.parse("square").kind == "square"
        assert CostFunction.parse("moment:4").m == 4
        assert CostFunction.parse("constant").level == 1.0
        path = tmp_path / "c.csv"
        path.write_text("# T=1 B=2\n0,0\n1,1\n2,2\n3,3\n")
        c = CostFunction.parse(f"table:{path}")
        assert c.kind == "tabulated" and c(1.5) == 1.5
        assert c.label == f"table:{path}"
        for bad in ["cube", "moment:x", "moment:0"]:
            with pytest.raises(ValidationError):
                CostFunction.parse(bad)

    def test_table_validation(self, tmp_path):
        with pytest.raises(ValidationError):
            CostFunction.tabulated([0, 1, 1], [0, 1, 2], 1, 2)
        with pytest.raises(ValidationError):
            CostFunction.tabulated([0, 1, 2], [0, 2, 1], 1, 2)
        with pytest.raises(ValidationError):
            CostFunction.tabulated([1, 2], [1, 2], 1, 2)
        with pytest.raises(ValidationError):  # L(x+1)/L(x) = 4 > B
            CostFunction.tabulated([0, 1, 2, 3], [0, 1, 4, 16], 1, 2)
        path = tmp_path / "noheader.csv"
        path.write_text("0,0\n1,1\n")
        with pytest.raises(ValidationError):
            CostFunction.from_file(path)
        c = CostFunction.tabulated([0, 1, 2], [0, 1, 2], 1, 2)
        with pytest.raises(ValidationError):
            c(3.0)


class TestMomentSeries:
    def test_half(self):
        # sum k^i 2^-k: 2, 2, 6, 26, 150
        np.testing.assert_allclose(moment_series(0.5, 4).c, [2, 2, 6, 26, 150], rtol=1e-14)

    @pytest.mark.parametrize("b", [0.05, 0.5, 0.9, 0.99])
    def test_against_direct_sum(self, b):
        k = np.arange(20000, dtype=np.float64)
        direct = [np.sum(b**k * k**i) for i in range(6)]
        np.testing.assert_allclose(moment_series(b, 5).c, direct, rtol=1e-11)


class TestStaircaseCost:
    @pytest.mark.parametrize("eps", [0.1, 0.5, 1.0, 3.0, 10.0])
    @pytest.mark.parametrize("gamma", [0.0, 0.2, 0.5, 1.0])
    def test_abs_square_vs_mp(self, eps, gamma):
        p = PrivacyParams(eps, 1.3)
        for m, fn in [(1, staircase_cost_abs), (2, staircase_cost_square)]:
            ref = float(mp_staircase_moment(eps, 1.3, gamma, m))
            assert fn(p, gamma).value == pytest.approx(ref, rel=1e-12)

    @pytest.mark.parametrize("m", [1, 2, 3, 4, 6])
    @pytest.mark.parametrize("eps", [0.1, 1.0, 5.0])
    def test_moment_vs_mp(self, m, eps):
        gamma = 0.37
        ref = float(mp_staircase_moment(eps, 0.8, gamma, m))
        assert staircase_cost_moment(PrivacyParams(eps, 0.8), gamma, m).value == pytest.approx(ref, rel=1e-11)

    def test_known_values(self):
        p = PrivacyParams(2 * LN2, 1.0)
        assert staircase_cost_abs(p, 1 / 3).value == pytest.approx(2 / 3, rel=1e-14)
        p = PrivacyParams(LN2, 1.0)
        # at gamma in {0, 1} the square cost is 13/3 for b = 1/2
        assert staircase_cost_square(p, 0.0).value == pytest.approx(13 / 3, rel=1e-14)
        assert staircase_cost_square(p, 1.0).value == pytest.approx(13 / 3, rel=1e-14)

    @pytest.mark.parametrize("eps", [0.1, 1.0, 10.0])
    @pytest.mark.parametrize("m", [1, 2, 3, 4, 5, 6])
    def test_quadrature_matches_closed_form(self, eps, m):
        # relative: at eps = 0.1 and m = 6 the cost is ~7e8
        p = PrivacyParams(eps, 1.0)
        cost = CostFunction.moment(m)
        exact = staircase_cost(p, 0.41, cost).value
        quad = staircase_cost_quadrature(p, 0.41, cost)
        assert abs(quad.value - exact) <= 1e-6 * max(1.0, abs(exact))
        assert quad.error_bound <= 1e-11 * exact

    def test_tabulated_matches_closed_form(self):
        p = PrivacyParams(1.0, 1.0)
        tab_abs = table_cost(np.abs, ratio_bound=2.0)
        tab_sq = table_cost(np.square, threshold=10.0, ratio_bound=1.21)
        for g in [0.0, 0.3, 1.0]:
            q = staircase_cost(p, g, tab_abs)
            assert q.method == "quadrature"
            assert q.value == pytest.approx(staircase_cost_abs(p, g).value, rel=1e-12)
            # linear interpolation of x^2 on spacing h adds (x - x_i)(x_{i+1} - x), mean h^2 / 6 per cell
            h = 0.01
            expect = staircase_cost_square(p, g).value + h * h / 6
            assert staircase_cost(p, g, tab_sq).value == pytest.approx(expect, rel=1e-10)

    def test_tabulated_tail_certificate(self):
        p = PrivacyParams(1.0, 1.0)
        short = table_cost(np.abs, x_max=5.0, n=51, ratio_bound=2.0)
        q = staircase_cost(p, 0.3, short)
        exact = staircase_cost_abs(p, 0.3).value
        assert q.value <= exact
        assert exact - q.value <= q.error_bound
        # B * b**(1/delta) >= 1 at small epsilon: the tail cannot be certified
        with pytest.raises(ValidationError):
            staircase_cost(PrivacyParams(0.1, 1.0), 0.3, short)

    def test_constant(self):
        p = PrivacyParams(0.7, 2.0)
        c = CostFunction.constant(3.0)
        for g in [0.0, 0.4, 1.0]:
            assert staircase_cost(p, g, c).value == 3.0
            assert staircase_cost_quadrature(p, g, c).value == pytest.approx(3.0, rel=1e-12)

    def test_gamma_range(self):
        with pytest.raises(ValidationError):
            staircase_cost_abs(PrivacyParams(1.0, 1.0), 1.5)

    def test_overflow_guard(self):
        with pytest.raises(OverflowError):
            staircase_cost_moment(PrivacyParams(1e-4, 1.0), 0.5, 62)

    @settings(max_examples=60, deadline=None)
    @given(eps=st.floats(0.05, 20), gamma=st.floats(0, 1), delta=st.floats(0.1, 10))
    def test_scaling_and_positivity(self, eps, gamma, delta):
        base = staircase_cost_square(PrivacyParams(eps, 1.0), gamma).value
        scaled = staircase_cost_square(PrivacyParams(eps, delta), gamma).value
        assert scaled == pytest.approx(delta**2 * base, rel=1e-12)
        v1 = staircase_cost_abs(PrivacyParams(eps, 1.0), gamma).value
        assert v1 > 0
        # Jensen: (E|X|)^2 <= E X^2
        assert v1 * v1 <= base * (1 + 1e-12)


class TestLaplaceCost:
    @pytest.mark.parametrize("eps,delta", [(0.5, 1.0), (1.0, 2.0), (4.0, 0.5)])
    def test_closed_forms(self, eps, delta):
        p = PrivacyParams(eps, delta)
        lam = delta / eps
        assert laplace_cost(p, CostFunction.abs()).value == pytest.approx(lam)
        assert laplace_cost(p, CostFunction.square()).value == pytest.approx(2 * lam**2)
        assert laplace_cost(p, CostFunction.moment(4)).value == pytest.approx(24 * lam**4)
        for m in (1, 2, 4):
            q = laplace_cost_quadrature(p, CostFunction.moment(m)).value
            assert q == pytest.approx(math.factorial(m) * lam**m, rel=1e-10)

    def test_tabulated(self):
        p = PrivacyParams(1.0, 1.0)
        q = laplace_cost(p, table_cost(np.abs, ratio_bound=2.0))
        assert q.value == pytest.approx(1.0, rel=1e-12)


class TestDiscreteCost:
    def test_worked_weights(self):
        p = PrivacyParams(LN2, 2.0)
        w = discrete_weights(p, CostFunction.abs())
        np.testing.assert_allclose(w.w, [8.0, 12.0], rtol=1e-14)
        assert discrete_cost(StaircaseDiscrete(p, 1), CostFunction.abs(), w).value == pytest.approx(2.8, rel=1e-14)
        assert discrete_cost(StaircaseDiscrete(p, 2), CostFunction.abs(), w).value == pytest.approx(20 / 7, rel=1e-14)

    @pytest.mark.parametrize("delta", [1, 3, 6])
    @pytest.mark.parametrize("eps", [0.1, 1.0, 3.0])
    @pytest.mark.parametrize("cost", [CostFunction.abs(), CostFunction.square(), CostFunction.constant()])
    def test_against_long_brute_force(self, delta, eps, cost):
        p = PrivacyParams(eps, delta)
        span = int(delta * (900 / eps + 10))
        i = np.arange(-span, span + 1)
        for r in range(1, delta + 1):
            m = StaircaseDiscrete(p, r)
            brute = float(np.sum(cost(i.astype(float)) * discrete_pmf(m, i)))
            assert discrete_cost(m, cost).value == pytest.approx(brute, rel=1e-11)

    def test_tabulated_discrete(self):
        p = PrivacyParams(3.0, 3.0)  # needs b * B**delta < 1
        tab = table_cost(np.abs, x_max=200.0, n=201, ratio_bound=2.0)
        m = StaircaseDiscrete(p, 2)
        assert discrete_cost(m, tab).value == pytest.approx(discrete_cost(m, CostFunction.abs()).value, rel=1e-12)


def test_formula_helpers_accept_mpmath():
    with mp.workdps(40):
        b = mp.mpf(1) / 4
        v = v_abs(b, 1 - b, mp.mpf(1) / 3, mp.mpf(1))
        assert isinstance(v, mp.mpf)
        assert abs(v - mp.mpf(2) / 3) < mp.mpf(10) ** -35
