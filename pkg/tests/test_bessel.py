import numpy as np
import pytest
from scipy.special import h1vp, hankel1, jv, jvp, yv, yvp

from helmray.bessel import (HankelRangeError, bessel_y01, hankel_ratio_value,
                            jn_with_deriv, yn_with_deriv)

Z_GRID = [0.3, 0.5, 1.0, 2.0, 5.0, 8.0, 11.5, 12.5, 20.0, 50.0, 100.0, 200.0]


@pytest.mark.parametrize("z", Z_GRID)
def test_hankel_ratio_against_scipy(z):
    for n in list(range(0, 20)) + [int(z) + 5, int(2 * z + 60)]:
        mine = hankel_ratio_value(n, z)
        with np.errstate(all="ignore"):
            ref = h1vp(n, z) / hankel1(n, z)
        if np.isfinite(ref):
            assert abs(mine - ref) <= 1e-10 * abs(ref), (n, z)


def test_ratio_even_in_order():
    for n in (1, 3, 8):
        assert hankel_ratio_value(-n, 3.3) == hankel_ratio_value(n, 3.3)


def test_ratio_large_argument_asymptote():
    # H_0'/H_0 -> i - 1/(2z) + O(z^-2)
    z = 1e4
    assert abs(hankel_ratio_value(0, z) - (1j - 1.0 / (2.0 * z))) <= 1e-6


def test_ratio_overflow_guard():
    with pytest.raises(HankelRangeError):
        hankel_ratio_value(10_000, 1.0)


def test_ratio_deep_evanescent_crosscheck():
    # regime where scipy's Hankel overflows: leading behavior is -n/z
    r = hankel_ratio_value(900, 2.0)
    assert r.imag == pytest.approx(0.0, abs=1e-12)
    assert r.real == pytest.approx(-450.0, rel=1e-2)


@pytest.mark.parametrize("z", Z_GRID)
def test_j_and_y_values(z):
    for n in range(0, min(int(2 * z) + 40, 120)):
        jref, jpref = jv(n, z), jvp(n, z)
        if max(abs(jref), abs(jpref)) > 1e-250:
            jn, jp = jn_with_deriv(n, z)
            scale = max(abs(jref), abs(jpref))
            assert abs(jn - jref) <= 1e-10 * scale
            assert abs(jp - jpref) <= 1e-10 * scale
        yref, ypref = yv(n, z), yvp(n, z)
        if np.isfinite(yref) and abs(yref) < 1e250:
            yn, yp = yn_with_deriv(n, z)
            scale = max(abs(yref), abs(ypref))
            assert abs(yn - yref) <= 1e-9 * scale
            assert abs(yp - ypref) <= 1e-9 * scale


def test_negative_order_signs():
    for n in (-3, -4, -7):
        jn, jp = jn_with_deriv(n, 2.5)
        assert jn == pytest.approx(jv(n, 2.5), abs=1e-14)
        assert jp == pytest.approx(jvp(n, 2.5), abs=1e-14)


def test_series_asymptotic_seam():
    # Y_0, Y_1 continuous across the internal switch at z = 12
    for z in (11.999, 12.001):
        y0, y1 = bessel_y01(z)
        assert y0 == pytest.approx(yv(0, z), rel=1e-11)
        assert y1 == pytest.approx(yv(1, z), rel=1e-11)
