"""Fused stencil kernels used by the time integrators.

Each kernel works on 2-D arrays of shape ``(n2, n1)`` and writes into
preallocated output.  ``h`` is the column ``e^{2 x2}`` flattened to length n2.
"""

import numpy as np
from numba import njit


@njit(cache=True)
def tension_into(u1, u2, h, dx1, dx2, t1, t2):
    """Interior tension field; boundary entries of ``t1``, ``t2`` are not touched."""
    n2, n1 = u1.shape
    c1 = 0.5 / dx1
    c2 = 0.5 / dx2
    q1 = 1.0 / (dx1 * dx1)
    q2 = 1.0 / (dx2 * dx2)
    for j in range(1, n2 - 1):
        hj = h[j]
        for i in range(1, n1 - 1):
            c = u1[j, i]
            e, w, n, s = u1[j, i + 1], u1[j, i - 1], u1[j + 1, i], u1[j - 1, i]
            a1 = (e - w) * c1
            a2 = (n - s) * c2
            a11 = (e - 2.0 * c + w) * q1
            a22 = (n - 2.0 * c + s) * q2
            c = u2[j, i]
            e, w, n, s = u2[j, i + 1], u2[j, i - 1], u2[j + 1, i], u2[j - 1, i]
            b1 = (e - w) * c1
            b2 = (n - s) * c2
            b11 = (e - 2.0 * c + w) * q1
            b22 = (n - 2.0 * c + s) * q2
            t1[j, i] = hj * a11 + a22 - a2 - 2.0 * (hj * a1 * b1 + a2 * b2)
            t2[j, i] = hj * b11 + b22 - b2 + np.exp(-2.0 * c) * (hj * a1 * a1 + a2 * a2)


@njit(cache=True)
def tension_metric_into(u1, u2, h, dx1, dx2, t1, t2, G):
    """``tension_into`` that also stores ``G = e^{-2 u2}`` at every node."""
    n2, n1 = u1.shape
    for j in range(n2):
        for i in range(n1):
            G[j, i] = np.exp(-2.0 * u2[j, i])
    c1 = 0.5 / dx1
    c2 = 0.5 / dx2
    q1 = 1.0 / (dx1 * dx1)
    q2 = 1.0 / (dx2 * dx2)
    for j in range(1, n2 - 1):
        hj = h[j]
        for i in range(1, n1 - 1):
            c = u1[j, i]
            e, w, n, s = u1[j, i + 1], u1[j, i - 1], u1[j + 1, i], u1[j - 1, i]
            a1 = (e - w) * c1
            a2 = (n - s) * c2
            a11 = (e - 2.0 * c + w) * q1
            a22 = (n - 2.0 * c + s) * q2
            c = u2[j, i]
            e, w, n, s = u2[j, i + 1], u2[j, i - 1], u2[j + 1, i], u2[j - 1, i]
            b1 = (e - w) * c1
            b2 = (n - s) * c2
            b11 = (e - 2.0 * c + w) * q1
            b22 = (n - 2.0 * c + s) * q2
            t1[j, i] = hj * a11 + a22 - a2 - 2.0 * (hj * a1 * b1 + a2 * b2)
            t2[j, i] = hj * b11 + b22 - b2 + G[j, i] * (hj * a1 * a1 + a2 * a2)


@njit(cache=True)
def first_derivatives_into(f, dx1, dx2, d1, d2):
    """Central differences inside, 2nd-order one-sided stencils on the edges."""
    n2, n1 = f.shape
    c1 = 0.5 / dx1
    c2 = 0.5 / dx2
    for j in range(n2):
        d1[j, 0] = (-3.0 * f[j, 0] + 4.0 * f[j, 1] - f[j, 2]) * c1
        for i in range(1, n1 - 1):
            d1[j, i] = (f[j, i + 1] - f[j, i - 1]) * c1
        d1[j, n1 - 1] = (3.0 * f[j, n1 - 1] - 4.0 * f[j, n1 - 2] + f[j, n1 - 3]) * c1
    for i in range(n1):
        d2[0, i] = (-3.0 * f[0, i] + 4.0 * f[1, i] - f[2, i]) * c2
        d2[n2 - 1, i] = (3.0 * f[n2 - 1, i] - 4.0 * f[n2 - 2, i] + f[n2 - 3, i]) * c2
    for j in range(1, n2 - 1):
        for i in range(n1):
            d2[j, i] = (f[j + 1, i] - f[j - 1, i]) * c2


@njit(cache=True)
def energy_density_into(u1, u2, h, dx1, dx2, out):
    n2, n1 = u1.shape
    a1 = np.empty_like(u1)
    a2 = np.empty_like(u1)
    b1 = np.empty_like(u1)
    b2 = np.empty_like(u1)
    first_derivatives_into(u1, dx1, dx2, a1, a2)
    first_derivatives_into(u2, dx1, dx2, b1, b2)
    for j in range(n2):
        hj = h[j]
        for i in range(n1):
            g = np.exp(-2.0 * u2[j, i])
            out[j, i] = (hj * (g * a1[j, i] ** 2 + b1[j, i] ** 2)
                         + g * a2[j, i] ** 2 + b2[j, i] ** 2)


@njit(cache=True)
def _edge_density(u1, u2, hj, j, i, c1, c2):
    n2, n1 = u1.shape
    if i == 0:
        a1 = (-3.0 * u1[j, 0] + 4.0 * u1[j, 1] - u1[j, 2]) * c1
        b1 = (-3.0 * u2[j, 0] + 4.0 * u2[j, 1] - u2[j, 2]) * c1
    elif i == n1 - 1:
        a1 = (3.0 * u1[j, i] - 4.0 * u1[j, i - 1] + u1[j, i - 2]) * c1
        b1 = (3.0 * u2[j, i] - 4.0 * u2[j, i - 1] + u2[j, i - 2]) * c1
    else:
        a1 = (u1[j, i + 1] - u1[j, i - 1]) * c1
        b1 = (u2[j, i + 1] - u2[j, i - 1]) * c1
    if j == 0:
        a2 = (-3.0 * u1[0, i] + 4.0 * u1[1, i] - u1[2, i]) * c2
        b2 = (-3.0 * u2[0, i] + 4.0 * u2[1, i] - u2[2, i]) * c2
    elif j == n2 - 1:
        a2 = (3.0 * u1[j, i] - 4.0 * u1[j - 1, i] + u1[j - 2, i]) * c2
        b2 = (3.0 * u2[j, i] - 4.0 * u2[j - 1, i] + u2[j - 2, i]) * c2
    else:
        a2 = (u1[j + 1, i] - u1[j - 1, i]) * c2
        b2 = (u2[j + 1, i] - u2[j - 1, i]) * c2
    g = np.exp(-2.0 * u2[j, i])
    return hj * (g * a1 * a1 + b1 * b1) + g * a2 * a2 + b2 * b2


@njit(cache=True)
def tension_energy_into(u1, u2, h, dx1, dx2, w, t1, t2, dens, G):
    """Tension (interior) and energy density (all nodes) in one pass.

    ``G`` receives ``e^{-2 u2}`` on interior nodes.

    Returns ``(energy, l2_sq, sup_sq)``: the quadrature of ``dens / 2``, of the
    intrinsic ``|tau|^2`` and the max of ``|tau|^2``.  Sums run row by row in
    index order.
    """
    n2, n1 = u1.shape
    c1 = 0.5 / dx1
    c2 = 0.5 / dx2
    q1 = 1.0 / (dx1 * dx1)
    q2 = 1.0 / (dx2 * dx2)
    energy = 0.0
    l2 = 0.0
    sup = 0.0
    for j in range(n2):
        hj = h[j]
        row_e = 0.0
        row_t = 0.0
        if j == 0 or j == n2 - 1:
            for i in range(n1):
                d = _edge_density(u1, u2, hj, j, i, c1, c2)
                dens[j, i] = d
                row_e += d * w[j, i]
            energy += row_e
            continue
        d = _edge_density(u1, u2, hj, j, 0, c1, c2)
        dens[j, 0] = d
        row_e += d * w[j, 0]
        for i in range(1, n1 - 1):
            g = np.exp(-2.0 * u2[j, i])
            G[j, i] = g
            c = u1[j, i]
            e = u1[j, i + 1]
            ww = u1[j, i - 1]
            n = u1[j + 1, i]
            s = u1[j - 1, i]
            a1 = (e - ww) * c1
            a2 = (n - s) * c2
            a11 = (e - 2.0 * c + ww) * q1
            a22 = (n - 2.0 * c + s) * q2
            c = u2[j, i]
            e = u2[j, i + 1]
            ww = u2[j, i - 1]
            n = u2[j + 1, i]
            s = u2[j - 1, i]
            b1 = (e - ww) * c1
            b2 = (n - s) * c2
            b11 = (e - 2.0 * c + ww) * q1
            b22 = (n - 2.0 * c + s) * q2
            x = hj * a11 + a22 - a2 - 2.0 * (hj * a1 * b1 + a2 * b2)
            y = hj * b11 + b22 - b2 + g * (hj * a1 * a1 + a2 * a2)
            t1[j, i] = x
            t2[j, i] = y
            tt = g * x * x + y * y
            row_t += tt * w[j, i]
            sup = max(sup, tt)
            d = hj * (g * a1 * a1 + b1 * b1) + g * a2 * a2 + b2 * b2
            dens[j, i] = d
            row_e += d * w[j, i]
        d = _edge_density(u1, u2, hj, j, n1 - 1, c1, c2)
        dens[j, n1 - 1] = d
        row_e += d * w[j, n1 - 1]
        energy += row_e
        l2 += row_t
    return 0.5 * energy, l2, sup


@njit(cache=True)
def _frame_rate(G, t1, t2, E, out):
    # d_s E = -Gbar(tau, E); tau vanishes on the boundary, where G is not needed
    n2, n1 = G.shape
    for k in range(2):
        for j in range(n2):
            for i in range(n1):
                out[k, 0, j, i] = t1[j, i] * E[k, 1, j, i] + t2[j, i] * E[k, 0, j, i]
                out[k, 1, j, i] = -G[j, i] * t1[j, i] * E[k, 0, j, i]


@njit(cache=True)
def heat_advance(x, tau, E, transport, h, dx1, dx2, w, ds, nsteps, stop_sup_sq, diag):
    """Advance ``nsteps`` explicit midpoint steps of the heat flow in place.

    ``x`` and ``tau`` are ``(2, n2, n1)``; ``E`` is the frame ``(2, 2, n2, n1)``
    (ignored unless ``transport``).  After every step the row
    ``(energy, l2_sq, sup_sq)`` is written to ``diag``.  Stops early once
    ``sup_sq < stop_sup_sq``.  Returns the number of steps taken, negated when
    a non-finite state appeared.
    """
    n2 = x.shape[1]
    n1 = x.shape[2]
    xm = np.empty_like(x)
    taum = np.zeros_like(tau)
    dens = np.empty((n2, n1))
    r1 = np.empty_like(E)
    r2 = np.empty_like(E)
    Em = np.empty_like(E)
    G = np.zeros((n2, n1))
    Gm = np.zeros((n2, n1))
    for j in range(n2):
        for i in range(n1):
            G[j, i] = np.exp(-2.0 * x[1, j, i])
    half = 0.5 * ds
    for k in range(nsteps):
        for c in range(2):
            for j in range(n2):
                for i in range(n1):
                    xm[c, j, i] = x[c, j, i] + half * tau[c, j, i]
        tension_metric_into(xm[0], xm[1], h, dx1, dx2, taum[0], taum[1], Gm)
        if transport:
            _frame_rate(G, tau[0], tau[1], E, r1)
            for a in range(2):
                for c in range(2):
                    for j in range(n2):
                        for i in range(n1):
                            Em[a, c, j, i] = E[a, c, j, i] + half * r1[a, c, j, i]
            _frame_rate(Gm, taum[0], taum[1], Em, r2)
            for a in range(2):
                for c in range(2):
                    for j in range(n2):
                        for i in range(n1):
                            E[a, c, j, i] += ds * r2[a, c, j, i]
        for c in range(2):
            for j in range(n2):
                for i in range(n1):
                    x[c, j, i] += ds * taum[c, j, i]
        en, l2, sup = tension_energy_into(x[0], x[1], h, dx1, dx2, w, tau[0], tau[1], dens, G)
        diag[k, 0] = en
        diag[k, 1] = l2
        diag[k, 2] = sup
        if not (np.isfinite(en) and np.isfinite(l2)):
            return -(k + 1)
        if sup < stop_sup_sq:
            return k + 1
    return nsteps
