import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from humwave import DomainSpec
from humwave.control_kernel import (SERIES_SWITCH, ControlRegion, SpaceWeight, TimeWeight, chi0_eval,
                                    gram_matrix, psi_eval, quadrature_oracle, ramp, time_kernels)
from humwave.spectral_basis import disc_modes, fd_modes, square_modes

TWO_SIDES = ControlRegion.square_two_sides(0.2)


def kernel_oracle(weight, wn, wm):
    """The four time integrals by adaptive quadrature."""
    T = weight.T
    p2 = lambda t: psi_eval(weight, t) ** 2
    top = wn + wm
    return (
        quadrature_oracle(lambda t: p2(t) * math.sin(wn * t) * math.sin(wm * t), 0, T, top),
        quadrature_oracle(lambda t: p2(t) * math.cos(wn * t) * math.sin(wm * t), 0, T, top),
        quadrature_oracle(lambda t: p2(t) * math.sin(wn * t) * math.cos(wm * t), 0, T, top),
        quadrature_oracle(lambda t: p2(t) * math.cos(wn * t) * math.cos(wm * t), 0, T, top),
    )


def square_formula(x, y, a):
    """Smooth two-sides weight written out directly (left and top strips of width a)."""
    fx = 1.0 if x >= a else x * x / a ** 2
    fy = 1.0 if y <= 1 - a else (1 - y) ** 2 / a ** 2
    inside = x < a or y > 1 - a
    return float(inside) * (1.0 - fx * fy)


def test_chi0_constant_inside_and_outside():
    w = SpaceWeight(TWO_SIDES)
    assert chi0_eval(w, 0.1, 0.5) == 1.0
    assert chi0_eval(w, 0.5, 0.95) == 1.0
    assert chi0_eval(w, 0.5, 0.5) == 0.0


def test_chi0_smooth_matches_square_formula():
    w = SpaceWeight(TWO_SIDES, smooth=True)
    a = w.ramp_width
    rng = np.random.default_rng(3)
    for x, y in rng.random((300, 2)):
        assert chi0_eval(w, x, y) == pytest.approx(square_formula(x, y, a), abs=1e-14)
    # corner of the complement of U: both factors are 1
    assert chi0_eval(w, a, 1 - a) == 0.0
    assert chi0_eval(w, 0.0, 1.0) == 1.0


def test_chi0_smooth_ramp_midpoint_and_continuity():
    w = SpaceWeight(TWO_SIDES, smooth=True)
    a = w.ramp_width
    mid = chi0_eval(w, a / 2, 0.5)
    assert 0.0 < mid < 1.0
    xs = np.linspace(0, 0.5, 20001)
    vals = chi0_eval(w, xs, np.full_like(xs, 0.5))
    assert np.abs(np.diff(vals)).max() < 1e-3
    assert vals.min() >= 0 and vals.max() <= 1


@pytest.mark.parametrize("region", [
    ControlRegion.disc_strip(0.4),
    ControlRegion.disc_strip(0.4, "inner", 0.5),
    ControlRegion.polygon_base(DomainSpec.trapezoid().vertices, 0.2),
])
def test_chi0_range_and_support_general(region):
    w = SpaceWeight(region, smooth=True)
    rng = np.random.default_rng(1)
    x, y = rng.uniform(-1, 1, (2, 5000))
    v = chi0_eval(w, x, y)
    assert v.min() >= 0 and v.max() <= 1
    assert np.all(v[~region.contains(x, y)] == 0)


def test_ramp_values():
    assert ramp(0.0, 0.1) == 0.0
    assert ramp(0.1, 0.1) == 1.0
    assert ramp(0.05, 0.1) == pytest.approx(0.75)


def test_psi_values():
    c = TimeWeight(3.0)
    s = TimeWeight(3.0, smooth=True)
    assert psi_eval(c, 1.0) == 1.0
    assert psi_eval(s, 1.5) == 1.0
    assert psi_eval(s, 0.0) == 0.0 and psi_eval(s, 3.0) == 0.0


def test_region_validation():
    with pytest.raises(ValueError):
        ControlRegion.square_two_sides(1.5 + 0.6)
    with pytest.raises(ValueError):
        ControlRegion.disc_strip(1.2)
    with pytest.raises(ValueError):
        ControlRegion("annulus")
    with pytest.raises(ValueError):
        TimeWeight(0.0)


def test_quadrature_oracle_examples():
    assert quadrature_oracle(lambda t: math.sin(math.pi * t), 0, 1) == pytest.approx(2 / math.pi, abs=1e-13)
    s = TimeWeight(2.7, smooth=True)
    val = quadrature_oracle(lambda t: psi_eval(s, t) ** 2, 0, 2.7)
    assert val == pytest.approx(8 * 2.7 / 15, abs=1e-13)
    assert s.psi2_integral == pytest.approx(8 * 2.7 / 15)


def test_kernels_equal_frequencies_example():
    k = time_kernels(TimeWeight(2.0), [math.pi])
    assert k.a[0, 0] == pytest.approx(1.0, abs=1e-14)
    assert k.b[0, 0] == pytest.approx(0.0, abs=1e-14)
    assert k.d[0, 0] == pytest.approx(1.0, abs=1e-14)


def test_kernels_constant_closed_form():
    T, wn, wm = 3.0, 7.3, 4.1
    k = time_kernels(TimeWeight(T), [wn, wm])
    d, s = wn - wm, wn + wm
    assert k.a[0, 1] == pytest.approx(math.sin(d * T) / (2 * d) - math.sin(s * T) / (2 * s), abs=1e-14)
    ref = kernel_oracle(TimeWeight(T), wn, wm)
    got = (k.a[0, 1], k.b[0, 1], k.c[0, 1], k.d[0, 1])
    np.testing.assert_allclose(got, ref, atol=1e-10, rtol=0)


@settings(max_examples=60)
@given(st.floats(0.5, 80.0), st.floats(0.0, 1.0), st.floats(0.3, 8.0), st.booleans())
def test_kernels_match_oracle(wn, gap, T, smooth):
    # gap spans both the near-degenerate and the well-separated regimes
    wm = wn + gap ** 4 * 20.0
    w = TimeWeight(T, smooth)
    k = time_kernels(w, [wn], [wm])
    got = (k.a[0, 0], k.b[0, 0], k.c[0, 0], k.d[0, 0])
    np.testing.assert_allclose(got, kernel_oracle(w, wn, wm), atol=1e-10, rtol=0)


def test_kernel_structure():
    rng = np.random.default_rng(0)
    om = np.sort(rng.uniform(1, 60, 40))
    for smooth in (False, True):
        w = TimeWeight(2.2, smooth)
        k = time_kernels(w, om)
        assert np.array_equal(k.c, k.b.T)
        assert np.array_equal(k.a, k.a.T) and np.array_equal(k.d, k.d.T)
        bound = w.psi2_integral + 1e-12
        assert all(np.abs(m).max() <= bound for m in (k.a, k.b, k.c, k.d))


@pytest.mark.parametrize("smooth", [False, True])
@pytest.mark.parametrize("theta0", [1e-3, SERIES_SWITCH])
def test_kernel_switchover_continuity(smooth, theta0):
    T = 2.0
    w = TimeWeight(T, smooth)
    wn = 10.0
    # gaps on either side of the branch switch, a few ulps apart
    g0 = theta0 / T
    gaps = np.array([g0 * (1 - 1e-13), g0, g0 * (1 + 1e-13)])
    k = time_kernels(w, [wn], wn + gaps)
    for m in (k.a, k.b, k.c, k.d):
        assert np.abs(np.diff(m[0])).max() <= 1e-9


def test_gram_identity_when_weight_is_one():
    whole = SpaceWeight(ControlRegion("whole"))
    G = gram_matrix(square_modes(200), whole).values
    assert np.abs(G - np.eye(200)).max() < 1e-10
    G = gram_matrix(disc_modes(150), whole).values
    assert np.abs(G - np.eye(150)).max() < 1e-10
    fd = fd_modes(DomainSpec.square(32), 10)
    assert np.abs(gram_matrix(fd, whole).values - np.eye(10)).max() < 1e-10


def test_gram_half_square():
    left = SpaceWeight(ControlRegion("square_sides", 0.5, ("left",)))
    G = gram_matrix(square_modes(10), left).values
    assert G[0, 0] == pytest.approx(0.5, abs=1e-13)


@pytest.mark.parametrize("basis, region", [
    (square_modes(150), TWO_SIDES),
    (disc_modes(120), ControlRegion.disc_strip(0.4, "inner", 0.5)),
])
@pytest.mark.parametrize("smooth", [False, True])
def test_gram_symmetric_with_bounded_diagonal(basis, region, smooth):
    g = gram_matrix(basis, SpaceWeight(region, smooth))
    G = g.values
    assert np.array_equal(G, G.T)
    assert np.all(np.diag(G) >= 0) and np.all(np.diag(G) <= 1 + 1e-8)
    assert np.linalg.eigvalsh(G).min() > -1e-10


@pytest.mark.parametrize("smooth", [False, True])
def test_gram_exact_vs_grid_order(smooth):
    # width 1/4 keeps the strip edges on cell boundaries for every q
    sw = SpaceWeight(ControlRegion.square_two_sides(0.25), smooth)
    b = square_modes(30)
    G = gram_matrix(b, sw).values
    errs = [np.abs(gram_matrix(b, sw, "grid", q).values - G).max() for q in (1, 2, 4)]
    orders = np.log2(np.array(errs[:-1]) / errs[1:])
    assert orders.min() >= 1.7


def test_gram_disc_polar_vs_grid():
    b = disc_modes(40)
    sw = SpaceWeight(ControlRegion.disc_strip(0.4), smooth=True)
    G = gram_matrix(b, sw).values
    Gg = gram_matrix(b, sw, "grid", q=16).values
    assert np.abs(G - Gg).max() < 1e-4


def test_gram_refuses_underresolved_grid():
    b = square_modes(400)
    b = type(b)(DomainSpec.square(8), b.omegas, b.labels, b.kind)
    with pytest.raises(ValueError, match="under-resolves"):
        gram_matrix(b, SpaceWeight(TWO_SIDES), "grid", q=1)
