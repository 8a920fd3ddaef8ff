import math

import mpmath as mp
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from wgtransport import specfun
from wgtransport.specfun import ScaledComplex, scaled_combine


def _mp_gamma_upper(n, z):
    with mp.workdps(40):
        return complex(mp.gammainc(n + 1, complex(z)))


@pytest.mark.parametrize("n,z,expected", [(0, 0, 1.0), (4, 0, 24.0)])
def test_incomplete_gamma_trivial(n, z, expected):
    assert specfun.incomplete_gamma_upper_int(n, z) == pytest.approx(expected, rel=1e-15)


def test_incomplete_gamma_n1_z1():
    from scipy.integrate import quad

    ref, _ = quad(lambda t: t * math.exp(-t), 1, np.inf, epsabs=1e-14)
    assert specfun.incomplete_gamma_upper_int(1, 1.0) == pytest.approx(ref, rel=1e-12)
    assert specfun.incomplete_gamma_upper_int(1, 1.0) == pytest.approx(2 / math.e, rel=1e-15)


@pytest.mark.parametrize("n", [0, 1, 7, 40, 120, 200])
@pytest.mark.parametrize("z", [0.3 + 0.2j, -3 + 8j, 25 - 40j, -60 + 5j, 500j, 900 + 300j, -200 - 50j])
def test_incomplete_gamma_against_mpmath(n, z):
    got = specfun.incomplete_gamma_upper_int_scaled(n, z)
    with mp.workdps(60):
        ref = mp.gammainc(n + 1, complex(z))
        ratio = complex(mp.mpc(got.mantissa) * mp.power(2, got.exponent) / ref)
    assert abs(ratio - 1) < 1e-12


def test_incomplete_gamma_rejects_large_order():
    with pytest.raises(ValueError):
        specfun.incomplete_gamma_upper_int(513, 1.0)
    big = specfun.incomplete_gamma_upper_int_scaled(600, 0.0, max_order=600)
    assert big.log2_abs() == pytest.approx(math.lgamma(601) / math.log(2), rel=1e-14)


def test_incomplete_gamma_scaled_beyond_double_range():
    got = specfun.incomplete_gamma_upper_int_scaled(400, 1.0)
    with mp.workdps(40):
        ref = mp.gammainc(401, 1)
        assert abs(float(got.log2_abs() - mp.log(ref, 2))) < 1e-12
    with pytest.raises(OverflowError):
        got.to_complex()


@settings(max_examples=60, deadline=None)
@given(
    n=st.integers(1, 100),
    re=st.floats(-20, 40),
    im=st.floats(-40, 40),
)
def test_incomplete_gamma_recurrence(n, re, im):
    z = complex(re, im)
    lhs = specfun.incomplete_gamma_upper_int_scaled(n, z)
    rhs = scaled_combine(
        [
            specfun.incomplete_gamma_upper_int_scaled(n - 1, z) * ScaledComplex.from_int(n),
            ScaledComplex.from_complex(z) ** n * ScaledComplex.from_complex(np.exp(-z)) if z != 0 else ScaledComplex.zero(),
        ]
    )
    assert abs(complex(scaled_combine([lhs, -rhs]) / lhs)) <= 1e-11


def test_hyp0f2_trivial():
    assert specfun.hyp0f2(0.5, 0.5, 0.0) == 1.0
    assert specfun.hyp0f2(1.0, 1.5, 0.0) == 1.0


@pytest.mark.parametrize("b1,b2,z", [(0.5, 0.5, 4.0), (1.0, 1.5, 4.0), (0.5, 0.5, 100.0), (1.0, 1.5, 1e4), (0.3, 2.7, 77.0)])
def test_hyp0f2_against_extended_precision(b1, b2, z):
    with mp.workdps(50):
        ref = float(mp.hyper([], [b1, b2], z))
    assert specfun.hyp0f2(b1, b2, z) == pytest.approx(ref, rel=1e-10)


def test_hyp0f2_rejects_nonpositive_integer_parameter():
    with pytest.raises(ValueError):
        specfun.hyp0f2(-1.0, 0.5, 1.0)


def test_hyp0f2_nonconvergence_reported():
    with pytest.raises(specfun.SeriesConvergenceError):
        specfun.hyp0f2(0.5, 0.5, 1e6, max_terms=5)


@settings(max_examples=40, deadline=None)
@given(b1=st.floats(0.1, 5), b2=st.floats(0.1, 5), z=st.floats(0, 500))
def test_hyp0f2_partial_sums_monotone(b1, b2, z):
    ps = specfun.hyp0f2_partial_sums(b1, b2, z, 50)
    assert np.all(np.diff(ps) >= 0)


def test_scaled_combine_examples():
    x = ScaledComplex.from_complex(1.5 - 0.25j) * ScaledComplex(1 + 0j, 3000)
    assert scaled_combine([x]) == x
    assert scaled_combine([x, -x]).is_zero


def test_scaled_combine_matches_extended_sum():
    rng = np.random.default_rng(5)
    terms = [ScaledComplex.from_complex(complex(*rng.normal(size=2))) * ScaledComplex(1 + 0j, int(rng.integers(-30, 30))) for _ in range(10)]
    got = scaled_combine(terms)
    with mp.workdps(50):
        ref = mp.fsum(mp.mpc(t.mantissa) * mp.power(2, t.exponent) for t in terms)
        val = mp.mpc(got.mantissa) * mp.power(2, got.exponent)
        assert float(abs(val - ref) / abs(ref)) < 1e-14


def test_scaled_combine_deterministic():
    terms = [ScaledComplex.from_complex(complex(i, -i / 3)) for i in range(1, 20)]
    assert scaled_combine(terms) == scaled_combine(list(terms))


@settings(max_examples=100, deadline=None)
@given(
    a=st.tuples(st.floats(1, 1.999), st.floats(0, 6.28), st.integers(-4000, 4000)),
    b=st.tuples(st.floats(1, 1.999), st.floats(0, 6.28), st.integers(-4000, 4000)),
)
def test_scaled_product_and_sum_round_trip(a, b):
    x = ScaledComplex(a[0] * complex(math.cos(a[1]), math.sin(a[1])), a[2])
    y = ScaledComplex(b[0] * complex(math.cos(b[1]), math.sin(b[1])), b[2])
    with mp.workdps(60):
        xm = mp.mpc(x.mantissa) * mp.power(2, x.exponent)
        ym = mp.mpc(y.mantissa) * mp.power(2, y.exponent)
        for got, ref in ((x * y, xm * ym), (x + y, xm + ym)):
            if got.is_zero:
                continue
            val = mp.mpc(got.mantissa) * mp.power(2, got.exponent)
            assert float(abs(val - ref) / abs(ref)) <= 2 * np.finfo(float).eps
    assert 1 <= abs((x * y).mantissa) < 2


@settings(max_examples=100, deadline=None)
@given(st.lists(st.tuples(st.floats(1, 1.999), st.floats(0, 6.28), st.integers(-1000, 1000)), min_size=3, max_size=3))
def test_scaled_multiplication_associative(triple):
    a, b, c = (ScaledComplex(m * complex(math.cos(p), math.sin(p)), e) for m, p, e in triple)
    assert abs(complex(((a * b) * c) / (a * (b * c))) - 1) <= 2 * 2 * np.finfo(float).eps


@pytest.mark.parametrize("n,k,expected", [(5, 0, 0.0), (5, 2, math.log(10))])
def test_log_binomial_examples(n, k, expected):
    assert specfun.log_binomial(n, k) == pytest.approx(expected, abs=1e-15)


@pytest.mark.parametrize("n,k", [(200, 100), (10_000, 5000), (10_000, 3), (777, 300)])
def test_log_binomial_large(n, k):
    ref = math.log(math.comb(n, k))
    assert specfun.log_binomial(n, k) == pytest.approx(ref, rel=1e-13)
    assert specfun.log_binomial(n, k) == pytest.approx(math.lgamma(n + 1) - math.lgamma(k + 1) - math.lgamma(n - k + 1), rel=1e-11)


def test_log_binomial_rejects():
    with pytest.raises(ValueError):
        specfun.log_binomial(3, 4)


def test_poisson_weights_sum_to_one_in_the_limit():
    w = specfun.poisson_weights(200, np.array([3.0 + 0j]))
    assert w.sum() == pytest.approx(1.0, rel=1e-12)
