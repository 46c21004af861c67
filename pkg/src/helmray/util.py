"""Shared numerics: smooth bumps, quadrature rules, parallel map, deterministic RNG."""

from __future__ import annotations

import csv
import hashlib
import io
import json
from concurrent.futures import ThreadPoolExecutor

import numpy as np


def bump(rho):
    """C-infinity bump on [-1, 1]: exp(1 - 1/(1-rho^2)) inside, 0 outside, value 1 at 0."""
    rho = np.asarray(rho, dtype=float)
    out = np.zeros_like(rho)
    m = np.abs(rho) < 1.0
    out[m] = np.exp(1.0 - 1.0 / (1.0 - rho[m] ** 2))
    return out


def bump_deriv(rho):
    """Derivative of :func:`bump`."""
    rho = np.asarray(rho, dtype=float)
    out = np.zeros_like(rho)
    m = np.abs(rho) < 1.0
    r = rho[m]
    out[m] = np.exp(1.0 - 1.0 / (1.0 - r**2)) * (-2.0 * r / (1.0 - r**2) ** 2)
    return out


def smoothstep(t):
    """C-infinity monotone step: 0 for t <= 0, 1 for t >= 1."""
    t = np.clip(np.asarray(t, dtype=float), 0.0, 1.0)
    with np.errstate(divide="ignore", over="ignore"):
        a = np.where(t > 0.0, np.exp(-1.0 / np.maximum(t, 1e-300)), 0.0)
        b = np.where(t < 1.0, np.exp(-1.0 / np.maximum(1.0 - t, 1e-300)), 0.0)
    return a / (a + b)


def quintic_step(t):
    """C^2 polynomial step t^3(10 - 15t + 6t^2) clamped to [0, 1]."""
    t = np.clip(np.asarray(t, dtype=float), 0.0, 1.0)
    return t**3 * (10.0 - 15.0 * t + 6.0 * t**2)


def quintic_step_d1(t):
    t = np.asarray(t, dtype=float)
    inside = (t > 0.0) & (t < 1.0)
    out = np.zeros_like(t)
    s = t[inside]
    out[inside] = 30.0 * s**2 * (1.0 - s) ** 2
    return out


def quintic_step_d2(t):
    t = np.asarray(t, dtype=float)
    inside = (t > 0.0) & (t < 1.0)
    out = np.zeros_like(t)
    s = t[inside]
    out[inside] = 60.0 * s * (1.0 - s) * (1.0 - 2.0 * s)
    return out


# Symmetric Gauss rules on the reference triangle, given as (barycentric coords, weights
# summing to 1).  Degree 2: 3 points; degree 4: 6 points.
_TRI_DEG2 = (
    np.array(
        [
            [2.0 / 3.0, 1.0 / 6.0, 1.0 / 6.0],
            [1.0 / 6.0, 2.0 / 3.0, 1.0 / 6.0],
            [1.0 / 6.0, 1.0 / 6.0, 2.0 / 3.0],
        ]
    ),
    np.full(3, 1.0 / 3.0),
)

_a1, _b1, _w1 = 0.108103018168070, 0.445948490915965, 0.223381589678011
_a2, _b2, _w2 = 0.816847572980459, 0.091576213509771, 0.109951743655322
_TRI_DEG4 = (
    np.array(
        [
            [_a1, _b1, _b1],
            [_b1, _a1, _b1],
            [_b1, _b1, _a1],
            [_a2, _b2, _b2],
            [_b2, _a2, _b2],
            [_b2, _b2, _a2],
        ]
    ),
    np.array([_w1, _w1, _w1, _w2, _w2, _w2]),
)


def triangle_rule(degree):
    """Barycentric points and unit weights for a symmetric triangle rule."""
    if degree <= 2:
        return _TRI_DEG2
    if degree <= 4:
        return _TRI_DEG4
    raise ValueError(f"no triangle rule of degree {degree}")


def gauss_legendre(n, a=0.0, b=1.0):
    """Gauss-Legendre nodes and weights on [a, b]."""
    x, w = np.polynomial.legendre.leggauss(n)
    xm, xr = 0.5 * (a + b), 0.5 * (b - a)
    return xm + xr * x, xr * w


def composite_gauss(f, a, b, panels=40, order=20):
    """Composite Gauss-Legendre quadrature of ``f`` on [a, b]."""
    edges = np.linspace(a, b, panels + 1)
    total = 0.0
    for lo, hi in zip(edges[:-1], edges[1:]):
        x, w = gauss_legendre(order, lo, hi)
        total += float(np.sum(w * f(x)))
    return total


def make_rng(seed):
    """Counter-based deterministic generator (Philox)."""
    return np.random.Generator(np.random.Philox(seed))


def power_sigma(apply_normal, m_dot, v0, rtol=1e-5, maxit=400):
    """Largest singular value via power iteration on the normal operator.

    ``apply_normal(v)`` must realize T*T v with the adjoint taken in the inner
    product ``m_dot``; returns (sigma, iterations, converged).
    """
    v = np.asarray(v0, dtype=complex)
    v = v / np.sqrt(m_dot(v, v).real)
    sigma_prev = None
    for it in range(1, maxit + 1):
        z = apply_normal(v)
        lam = m_dot(v, z).real
        sigma = np.sqrt(max(lam, 0.0))
        zn = np.sqrt(m_dot(z, z).real)
        if zn == 0.0:
            return 0.0, it, True
        v = z / zn
        if sigma_prev is not None and abs(sigma - sigma_prev) <= rtol * max(sigma, 1e-300):
            return float(sigma), it, True
        sigma_prev = sigma
    return float(sigma), maxit, False


def parallel_map(fn, items, jobs=1):
    """Ordered map, optionally over a worker pool. Results preserve input order,
    so reductions over them are deterministic regardless of job count."""
    items = list(items)
    if jobs <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(fn, items))


def fmt_float(x):
    """Shortest round-trip decimal form; deterministic for identical doubles."""
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, complex):
        return f"{fmt_float(x.real)}{'+' if x.imag >= 0 else '-'}{fmt_float(abs(x.imag))}j"
    return repr(float(x))


def write_csv(path, header, rows):
    """RFC-4180 CSV with deterministic float formatting."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for row in rows:
            w.writerow([c if isinstance(c, str) else fmt_float(c) for c in row])


def csv_bytes(header, rows):
    buf = io.StringIO(newline="")
    w = csv.writer(buf)
    w.writerow(header)
    for row in rows:
        w.writerow([c if isinstance(c, str) else fmt_float(c) for c in row])
    return buf.getvalue().encode()


def sha256_text(text):
    return hashlib.sha256(text.encode()).hexdigest()


def write_json(path, obj):
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True)
        fh.write("\n")
