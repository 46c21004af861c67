"""Closed-form reference fields: sound-soft disk scattering and point sources.

These are the oracle side of the validation pairs, so they deliberately use
scipy's cylinder functions rather than the in-package evaluation scheme.
"""

from __future__ import annotations

import numpy as np
from scipy.special import hankel1, jv

from .util import quintic_step, quintic_step_d1, quintic_step_d2


def _mie_orders(ka):
    return int(np.ceil(ka)) + max(18, int(np.ceil(6.0 * ka ** (1.0 / 3.0))))


def soft_disk_total_field(k, a, direction):
    """Total field (value, gradient) callables for a plane wave on a sound-soft disk.

    u = u_inc + u_scat with u = 0 on r = a; the scattered part is the outgoing
    modal series with coefficients -i^n J_n(ka)/H_n(ka).  Folding the +-n pairs
    gives u_scat = -q_0 H_0(kr) - 2 sum_{n>=1} q_n H_n(kr) cos(n psi) with
    q_n = i^n J_n(ka)/H_n(ka) and psi = theta - phi_d; the orders are generated
    by the (stable upward) two-term recurrence from scipy-seeded H_0, H_1.
    """
    d = np.asarray(direction, float)
    d = d / np.hypot(d[0], d[1])
    phi_d = np.arctan2(d[1], d[0])
    n_terms = _mie_orders(k * a)
    ns = np.arange(0, n_terms + 1)
    qn = (1j) ** ns * jv(ns, k * a) / hankel1(ns, k * a)

    def _scan(points, want_grad):
        pts = np.atleast_2d(np.asarray(points, float))
        r = np.hypot(pts[:, 0], pts[:, 1])
        th = np.arctan2(pts[:, 1], pts[:, 0])
        psi = th - phi_d
        kr = k * r
        h_prev = hankel1(0, kr)
        h_cur = hankel1(1, kr)
        uinc = np.exp(1j * k * (pts @ d))
        val = uinc - qn[0] * h_prev
        if want_grad:
            dr = -k * qn[0] * (-h_cur)          # H_0' = -H_1
            dth = np.zeros_like(val)
        for n in range(1, n_terms + 1):
            cosn = np.cos(n * psi)
            val = val - 2.0 * qn[n] * h_cur * cosn
            if want_grad:
                hp = h_prev - (n / kr) * h_cur  # H_n'
                dr = dr - 2.0 * k * qn[n] * hp * cosn
                dth = dth + 2.0 * qn[n] * h_cur * n * np.sin(n * psi)
            h_prev, h_cur = h_cur, (2.0 * n / kr) * h_cur - h_prev
        if not want_grad:
            return val
        ginc = 1j * k * d[None, :] * uinc[:, None]
        rhat = np.stack([np.cos(th), np.sin(th)], axis=1)
        that = np.stack([-np.sin(th), np.cos(th)], axis=1)
        return ginc + dr[:, None] * rhat + (dth / r)[:, None] * that

    def value(points):
        return _scan(points, want_grad=False)

    def gradient(points):
        return _scan(points, want_grad=True)

    return value, gradient


def point_source(k, x0):
    """Outgoing fundamental solution (i/4) H_0(k |x - x0|) and its gradient."""
    x0 = np.asarray(x0, float)

    def value(points):
        pts = np.atleast_2d(np.asarray(points, float))
        s = np.linalg.norm(pts - x0, axis=1)
        return 0.25j * hankel1(0, k * s)

    def gradient(points):
        pts = np.atleast_2d(np.asarray(points, float))
        dx = pts - x0
        s = np.linalg.norm(dx, axis=1)
        # H_0' = -H_1
        coef = -0.25j * k * hankel1(1, k * s) / s
        return coef[:, None] * dx

    return value, gradient


def manufactured_bubble(k, x0, r_flat, r_zero):
    """Compactly supported exact solution u = chi(r) (i/4) H_0(k|x - x0|).

    chi is a radial C^2 cutoff equal to 1 for r <= r_flat and 0 for r >= r_zero;
    the matching source is f = -(lap + k^2) u = -(2 grad chi . grad w + w lap chi)
    with w the point source, which must sit outside the support annulus.

    Returns (u, grad_u, f) callables.
    """
    if np.hypot(*np.asarray(x0, float)) <= r_zero:
        raise ValueError("source center must be outside the cutoff support")
    w, gw = point_source(k, x0)
    width = r_zero - r_flat

    def chi_parts(r):
        t = (r - r_flat) / width
        c = 1.0 - quintic_step(t)
        c1 = -quintic_step_d1(t) / width
        c2 = -quintic_step_d2(t) / width**2
        return c, c1, c2

    def u(points):
        pts = np.atleast_2d(np.asarray(points, float))
        r = np.hypot(pts[:, 0], pts[:, 1])
        c, _, _ = chi_parts(r)
        return c * w(pts)

    def grad_u(points):
        pts = np.atleast_2d(np.asarray(points, float))
        r = np.hypot(pts[:, 0], pts[:, 1])
        c, c1, _ = chi_parts(r)
        rhat = pts / np.maximum(r, 1e-300)[:, None]
        return c[:, None] * gw(pts) + (c1 * w(pts))[:, None] * rhat

    def f(points):
        pts = np.atleast_2d(np.asarray(points, float))
        r = np.hypot(pts[:, 0], pts[:, 1])
        c, c1, c2 = chi_parts(r)
        rhat = pts / np.maximum(r, 1e-300)[:, None]
        lap_chi = c2 + c1 / np.maximum(r, 1e-300)
        grad_dot = np.einsum("pa,pa->p", gw(pts), rhat) * c1
        return -(2.0 * grad_dot + w(pts) * lap_chi)

    return u, grad_u, f
