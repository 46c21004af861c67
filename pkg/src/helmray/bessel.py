"""Cylinder-function evaluation for the modal radiation coefficients.

Self-contained double-precision scheme: J_n by normalized backward recurrence,
Y_0 and Y_1 by ascending series for small argument or phase-amplitude
asymptotics for large argument, Y_n by scaled forward recurrence.  The forward
recurrence carries a separate binary exponent, so the ratio H'/H stays
computable deep into the evanescent regime where Y_n itself would overflow.
"""

from __future__ import annotations

import math

EULER_GAMMA = 0.5772156649015328606


class HankelRangeError(Exception):
    """Requested order is far above the documented stability range."""


_SERIES_SWITCH = 12.0
_SCALE_BITS = 512
_SCALE = math.ldexp(1.0, _SCALE_BITS)


def bessel_j_array(nmax, z):
    """J_0(z) .. J_nmax(z) by backward recurrence, normalized by the even-order sum rule."""
    if z <= 0.0:
        raise ValueError("argument must be positive")
    nmax = int(nmax)
    # start above the Airy transition zone (width ~ z^{1/3}) and above the order,
    # with the classic sqrt margin, so the seed's contamination is fully damped
    m_start = (max(nmax, int(math.ceil(z))) + 26
               + int(math.ceil(8.0 * max(z, 1.0) ** (1.0 / 3.0)))
               + int(math.ceil(math.sqrt(40.0 * (nmax + 2)))))
    if m_start % 2:
        m_start += 1
    out = [0.0] * (nmax + 1)
    jp, jc = 0.0, 1e-280  # J_{m+1}, J_m with arbitrary seed scale
    norm = 0.0
    for m in range(m_start, 0, -1):
        jp, jc = jc, (2.0 * m / z) * jc - jp  # jc becomes J_{m-1}
        order = m - 1
        if order <= nmax:
            out[order] = jc
        if order > 0 and order % 2 == 0:
            norm += 2.0 * jc
        if abs(jc) > 1e250:
            jp *= 1e-250
            jc *= 1e-250
            norm *= 1e-250
            out = [v * 1e-250 for v in out]
    norm += jc  # jc is J_0 now
    return [v / norm for v in out]


def jn_with_deriv(n, z):
    """(J_n(z), J_n'(z)) for signed integer order."""
    m = abs(int(n))
    arr = bessel_j_array(max(m, 1), z)
    if m == 0:
        return arr[0], -arr[1]
    jn = arr[m]
    jp = arr[m - 1] - (m / z) * jn
    if int(n) < 0 and m % 2 == 1:
        return -jn, -jp
    return jn, jp


def _y01_series(z):
    """Ascending series for Y_0, Y_1; used for z <= 12 where cancellation is mild."""
    arr = bessel_j_array(1, z)
    j0, j1 = arr[0], arr[1]
    lz = math.log(0.5 * z)
    q = 0.25 * z * z

    # Y_0 = (2/pi)[(ln(z/2)+gamma) J_0 + sum_{m>=1} (-1)^{m+1} H_m q^m/(m!)^2]
    s0 = 0.0
    term = 1.0
    hm = 0.0
    for m in range(1, 400):
        term *= q / (m * m)
        hm += 1.0 / m
        contrib = -hm * term if m % 2 == 0 else hm * term
        s0 += contrib
        if abs(term) * (hm + 1.0) < 1e-19 * max(1.0, abs(s0)):
            break
    y0 = (2.0 / math.pi) * ((lz + EULER_GAMMA) * j0 + s0)

    # Y_1 = (2/pi) ln(z/2) J_1 - 2/(pi z)
    #       - (z/(2 pi)) sum_{m>=0} (H_m + H_{m+1} - 2 gamma)(-q)^m / (m! (m+1)!)
    s1 = 0.0
    term = 1.0
    hm = 0.0
    hm1 = 1.0
    for m in range(0, 400):
        s1 += (hm + hm1 - 2.0 * EULER_GAMMA) * term
        term *= -q / ((m + 1) * (m + 2))
        hm += 1.0 / (m + 1)
        hm1 += 1.0 / (m + 2)
        if abs(term) * (hm + hm1 + 2.0) < 1e-19 * max(1.0, abs(s1)):
            break
    y1 = (2.0 / math.pi) * lz * j1 - 2.0 / (math.pi * z) - (z / (2.0 * math.pi)) * s1
    return y0, y1


def _pq_asymptotic(nu, z):
    """Modulus-phase coefficients P, Q; series truncated at its smallest term."""
    mu = 4.0 * nu * nu
    p, q = 1.0, 0.0
    ak = 1.0
    prev = math.inf
    for k in range(1, 80):
        ak = ak * (mu - (2 * k - 1) ** 2) / (8.0 * k)
        term = ak / z**k
        if abs(term) >= prev:
            break
        sgn = -1.0 if (k % 4 in (2, 3)) else 1.0
        if k % 2 == 1:
            q += sgn * term
        else:
            p += sgn * term
        prev = abs(term)
        if abs(term) < 1e-18:
            break
    return p, q


def _jy_asymptotic(nu, z):
    p, q = _pq_asymptotic(nu, z)
    chi = z - (0.5 * nu + 0.25) * math.pi
    amp = math.sqrt(2.0 / (math.pi * z))
    c, s = math.cos(chi), math.sin(chi)
    return amp * (p * c - q * s), amp * (p * s + q * c)


def bessel_y01(z):
    """(Y_0(z), Y_1(z))."""
    if z <= 0.0:
        raise ValueError("argument must be positive")
    if z <= _SERIES_SWITCH:
        return _y01_series(z)
    return _jy_asymptotic(0.0, z)[1], _jy_asymptotic(1.0, z)[1]


def bessel_y_scaled(n, z):
    """(Y_n, Y_{n-1}, e) with true values equal to the returned pair times 2**e.

    Forward recurrence is stable for Y (the dominant solution); the shared
    exponent keeps the pair representable for orders where Y_n overflows.
    """
    n = int(n)
    if n < 1:
        raise ValueError("order must be >= 1")
    y0, y1 = bessel_y01(z)
    prev, cur = y0, y1
    e = 0
    for m in range(1, n):
        prev, cur = cur, (2.0 * m / z) * cur - prev
        if abs(cur) > _SCALE:
            prev /= _SCALE
            cur /= _SCALE
            e += _SCALE_BITS
    return cur, prev, e


def yn_with_deriv(n, z):
    """(Y_n(z), Y_n'(z)) for nonnegative order; overflows for n far above z."""
    n = int(n)
    if n == 0:
        y0, y1 = bessel_y01(z)
        return y0, -y1
    yn, ynm1, e = bessel_y_scaled(n, z)
    s = math.ldexp(1.0, e)
    return yn * s, (ynm1 - (n / z) * yn) * s


def hankel_ratio_value(n, z):
    """H_n^{(1)'}(z) / H_n^{(1)}(z), stable far into the evanescent regime n >> z."""
    if z <= 0.0:
        raise ValueError("argument must be positive")
    n = abs(int(n))  # H_{-n} equals H_n up to a constant phase, which cancels
    if n > 2.0 * z + 1200:
        raise HankelRangeError(
            f"order {n} beyond the guarded stability range for argument {z:g}")
    if n == 0:
        arr = bessel_j_array(1, z)
        y0, y1 = bessel_y01(z)
        return complex(-arr[1], -y1) / complex(arr[0], y0)
    arr = bessel_j_array(n, z)
    jn, jnm1 = arr[n], arr[n - 1]
    jp = jnm1 - (n / z) * jn
    yn, ynm1, e = bessel_y_scaled(n, z)
    yp = ynm1 - (n / z) * yn
    # divide through by 2**e; the J part may underflow harmlessly to zero
    num = complex(math.ldexp(jp, -e) if e else jp, yp)
    den = complex(math.ldexp(jn, -e) if e else jn, yn)
    return num / den
