import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from numpy.testing import assert_allclose
from scipy.special import hyp1f1, hyp2f1

from splitcount.series import (
    NonConvergenceError,
    SeriesControl,
    confluent_1f1,
    gauss_2f1,
    lauricella_d,
    log_multinomial_coefficient,
    log_pochhammer,
)


def brute_lauricella(a, b, c, s, second=None, degree=200):
    """Independent oracle: explicit nested enumeration over N^J."""
    b = list(b)
    s = list(s)
    total = 0.0
    for n in range(degree + 1):
        ratio = 1.0
        for k in range(n):
            ratio *= a + k
            ratio /= c + k
            if second is not None:
                ratio *= second[0] + k
                ratio /= second[1] + k
        shell = 0.0
        for y in compositions(n, len(b)):
            term = 1.0
            for bj, sj, yj in zip(b, s, y):
                for k in range(yj):
                    term *= (bj + k) * sj / (k + 1.0)
            shell += term
        total += ratio * shell
    return total


def compositions(n, parts):
    if parts == 1:
        yield (n,)
        return
    for head in range(n + 1):
        for rest in compositions(n - head, parts - 1):
            yield (head,) + rest


class TestLogPochhammer:
    def test_unit_base(self):
        assert_allclose(log_pochhammer(1.0, 4), math.log(24.0), rtol=1e-14)

    def test_half_base(self):
        # 0.5 * 1.5 * 2.5 = 1.875
        assert_allclose(log_pochhammer(0.5, 3), math.log(1.875), rtol=1e-14)

    def test_order_zero(self):
        assert log_pochhammer(3.7, 0) == 0.0

    def test_vectorized(self):
        out = log_pochhammer(2.0, np.array([0, 1, 2]))
        assert_allclose(out, [0.0, math.log(2.0), math.log(6.0)], atol=1e-14)

    @given(
        a=st.floats(0.05, 50.0),
        m=st.integers(0, 40),
        n=st.integers(0, 40),
    )
    @settings(max_examples=60, deadline=None)
    def test_additivity(self, a, m, n):
        # (a)_{m+n} = (a)_m * (a+m)_n
        lhs = log_pochhammer(a, m + n)
        rhs = log_pochhammer(a, m) + log_pochhammer(a + m, n)
        assert_allclose(lhs, rhs, rtol=1e-11, atol=1e-11)

    def test_domain(self):
        with pytest.raises(ValueError):
            log_pochhammer(0.0, 2)
        with pytest.raises(ValueError):
            log_pochhammer(1.0, -1)
        with pytest.raises(ValueError):
            log_pochhammer(1.0, 1.5)


class TestLogMultinomialCoefficient:
    def test_unit(self):
        # 3! / (0! * 1! 1! 1!) = 6
        assert_allclose(log_multinomial_coefficient(3, (1, 1, 1)), math.log(6.0))

    def test_partial_total(self):
        # 5! / (2! * 2! 1!) = 30
        assert_allclose(log_multinomial_coefficient(5, (2, 1)), math.log(30.0))

    def test_total_exceeds_n(self):
        with pytest.raises(ValueError):
            log_multinomial_coefficient(2, (2, 1))

    def test_negative_entry(self):
        with pytest.raises(ValueError):
            log_multinomial_coefficient(4, (2, -1))


class TestGauss2F1:
    def test_terminating_binomial_theorem(self):
        # 2F1(-2, b; b; s) = (1-s)^2 for any matching pair dropping out
        assert_allclose(gauss_2f1(-2.0, 1.0, 1.0, 0.5), 0.25, rtol=1e-14)

    def test_log_series(self):
        # 2F1(1, 1; 2; s) = -log(1-s)/s
        assert_allclose(gauss_2f1(1.0, 1.0, 2.0, 0.5), 2.0 * math.log(2.0), rtol=1e-12)

    def test_argument_zero(self):
        assert gauss_2f1(3.2, 1.1, 2.7, 0.0) == 1.0

    @given(
        a=st.floats(0.1, 8.0),
        b=st.floats(0.1, 8.0),
        c=st.floats(0.2, 10.0),
        s=st.floats(0.0, 0.9),
    )
    @settings(max_examples=60, deadline=None)
    def test_against_scipy(self, a, b, c, s):
        assert_allclose(gauss_2f1(a, b, c, s), hyp2f1(a, b, c, s), rtol=1e-9)

    def test_terminating_any_argument(self):
        # polynomial case is valid outside [0, 1)
        assert_allclose(gauss_2f1(-3.0, 2.0, 4.0, 2.5), hyp2f1(-3, 2, 4, 2.5), rtol=1e-12)

    def test_terminating_exactness(self):
        # loose control must not perturb a terminating sum
        loose = SeriesControl(rel_tol=0.5, max_terms=10)
        assert gauss_2f1(-4.0, 1.5, 2.5, 0.7, loose) == gauss_2f1(-4.0, 1.5, 2.5, 0.7)

    def test_domain_argument(self):
        with pytest.raises(ValueError):
            gauss_2f1(1.0, 2.0, 3.0, 1.0)
        with pytest.raises(ValueError):
            gauss_2f1(1.0, 2.0, 3.0, -0.2)

    def test_bad_lower_parameter(self):
        with pytest.raises(ValueError):
            gauss_2f1(1.0, 2.0, -3.0, 0.4)
        # terminating before the pole is fine: only (c)_0 .. (c)_2 are touched
        assert np.isfinite(gauss_2f1(-2.0, 1.0, -3.0, 0.4))

    def test_non_convergence_carries_partial_sum(self):
        ctl = SeriesControl(rel_tol=1e-12, max_terms=40)
        with pytest.raises(NonConvergenceError) as err:
            gauss_2f1(1.0, 1.0, 2.0, 0.999, ctl)
        assert err.value.n_terms == 40
        assert 0.0 < err.value.partial_sum < -math.log(0.001) / 0.999


class TestConfluent1F1:
    def test_exponential(self):
        # 1F1(b; b; s) = e^s
        assert_allclose(confluent_1f1(2.0, 2.0, 1.3), math.exp(1.3), rtol=1e-12)

    def test_negative_argument(self):
        # 1F1(1; 2; -1) = (1 - e^-1)
        assert_allclose(confluent_1f1(1.0, 2.0, -1.0), 1.0 - math.exp(-1.0), rtol=1e-12)

    @given(
        b=st.floats(0.1, 10.0),
        c=st.floats(0.2, 12.0),
        s=st.floats(-30.0, 30.0),
    )
    @settings(max_examples=60, deadline=None)
    def test_against_scipy(self, b, c, s):
        assert_allclose(confluent_1f1(b, c, s), hyp1f1(b, c, s), rtol=1e-8, atol=1e-12)

    def test_kummer_transform_stability(self):
        # naive alternating summation loses ~all digits near s = -60
        assert_allclose(confluent_1f1(1.5, 4.0, -60.0), hyp1f1(1.5, 4.0, -60.0), rtol=1e-8)

    def test_terminating(self):
        assert_allclose(confluent_1f1(-2.0, 3.0, 5.0), 1.0 - 10.0 / 3.0 + 25.0 / 12.0, rtol=1e-13)


class TestLauricellaD:
    def test_reduces_to_gauss_2f1(self):
        got = lauricella_d(1.3, [2.1], 3.4, [0.45])
        assert_allclose(got, gauss_2f1(1.3, 2.1, 3.4, 0.45), rtol=1e-10)

    def test_geometric_collapse(self):
        # c = b makes the J=1 series binomial: (1-s)^(-a)
        assert_allclose(lauricella_d(1.0, [2.0], 2.0, [0.3]), 1.0 / 0.7, rtol=1e-12)

    def test_terminating_matches_enumeration(self):
        got = lauricella_d(-3.0, [1.5, 2.5], 4.0, [0.6, -0.8])
        want = brute_lauricella(-3.0, [1.5, 2.5], 4.0, [0.6, -0.8], degree=3)
        assert_allclose(got, want, rtol=1e-12)

    def test_bivariate_matches_enumeration(self):
        got = lauricella_d(1.2, [0.7, 1.8], 3.9, [0.35, 0.5])
        want = brute_lauricella(1.2, [0.7, 1.8], 3.9, [0.35, 0.5], degree=120)
        assert_allclose(got, want, rtol=1e-9)

    def test_second_ratio_pair(self):
        got = lauricella_d(1.2, [0.7, 1.8], 3.9, [0.35, 0.5], second=(0.9, 2.2))
        want = brute_lauricella(
            1.2, [0.7, 1.8], 3.9, [0.35, 0.5], second=(0.9, 2.2), degree=120
        )
        assert_allclose(got, want, rtol=1e-9)

    @given(
        perm=st.permutations([0, 1, 2]),
        a=st.floats(0.2, 3.0),
    )
    @settings(max_examples=25, deadline=None)
    def test_coordinate_symmetry(self, perm, a):
        b = np.array([0.5, 1.5, 2.5])
        s = np.array([0.2, 0.4, 0.1])
        base = lauricella_d(a, b, 5.0, s)
        shuffled = lauricella_d(a, b[perm], 5.0, s[perm])
        assert_allclose(shuffled, base, rtol=1e-10)

    def test_domains(self):
        with pytest.raises(ValueError):
            lauricella_d(1.0, [1.0], 2.0, [1.0])
        with pytest.raises(ValueError):
            lauricella_d(1.0, [-1.0], 2.0, [0.5])
        with pytest.raises(ValueError):
            lauricella_d(1.0, [1.0, 1.0], 2.0, [0.5])

    def test_non_convergence(self):
        ctl = SeriesControl(rel_tol=1e-12, max_terms=128)
        with pytest.raises(NonConvergenceError):
            lauricella_d(4.0, [3.0, 3.0], 0.5, [0.97, 0.97], ctl)
