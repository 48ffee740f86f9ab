import math

import mpmath
import numpy as np
import pytest
from hypothesis import given, strategies as st

from humwave.bessel import bessel_j, bessel_zero, bessel_zeros_below

mpmath.mp.dps = 30


def series_j(m, x):
    """High-precision power series oracle."""
    return float(mpmath.besselj(m, mpmath.mpf(x)))


def oracle_zero(m, k):
    return float(mpmath.besseljzero(m, k))


def test_trivial_values():
    assert bessel_j(0, 0.0) == 1.0
    assert bessel_j(1, 0.0) == 0.0
    assert bessel_j(5, 0.0) == 0.0


def test_first_zero_of_j0_is_a_root():
    assert abs(bessel_j(0, 2.404825557695773)) < 1e-10


@given(st.integers(0, 60), st.floats(1e-6, 150.0))
def test_matches_series_oracle(m, x):
    assert bessel_j(m, x) == pytest.approx(series_j(m, x), abs=1e-12)


def test_vectorised_over_argument():
    x = np.linspace(0.0, 40.0, 101)
    vals = bessel_j(3, x)
    ref = np.array([series_j(3, v) for v in x])
    assert vals.shape == x.shape
    np.testing.assert_allclose(vals, ref, atol=1e-12)


@pytest.mark.parametrize("m, k, ref", [(0, 1, 2.404825557695773), (1, 1, 3.831705970207512)])
def test_known_zeros(m, k, ref):
    assert bessel_zero(m, k) == pytest.approx(ref, abs=1e-12)


@pytest.mark.parametrize("m", [0, 1, 2, 7, 20, 45])
def test_zeros_match_oracle_and_increase(m):
    zs = [bessel_zero(m, k) for k in range(1, 8)]
    np.testing.assert_allclose(zs, [oracle_zero(m, k) for k in range(1, 8)], rtol=0, atol=1e-11)
    assert all(a < b for a, b in zip(zs, zs[1:]))


def test_zeros_below_count_and_interlacing():
    z0 = bessel_zeros_below(0, 60.0)
    z1 = bessel_zeros_below(1, 60.0)
    assert z0.size == sum(oracle_zero(0, k) < 60 for k in range(1, 25))
    # J_0 and J_1 zeros interlace
    assert np.all(z0[:-1] < z1[: z0.size - 1]) and np.all(z1[: z0.size - 1] < z0[1:])


def test_invalid_arguments():
    with pytest.raises(ValueError):
        bessel_j(-1, 1.0)
    with pytest.raises(ValueError):
        bessel_j(0, -1.0)
