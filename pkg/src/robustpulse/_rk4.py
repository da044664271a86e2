"""Compiled RK4 kernels for ``x' = (G0 + a(t) Gr + b(t) Gi) x`` in real arithmetic.

``a`` and ``b`` hold, for every step, the drive at its start, midpoint and
end, with shape ``(B, N, 3)``. States are real ``(d, k)`` matrices;
complex systems are passed in their real block form.
"""

import numpy as np
from numba import njit


@njit(cache=True)
def _fill(m, g0, gr, gi, a, b):
    d = m.shape[0]
    for i in range(d):
        for j in range(d):
            m[i, j] = g0[i, j] + a * gr[i, j] + b * gi[i, j]


@njit(cache=True)
def _mul(out, m, x):
    """``out = m @ x``."""
    d, k = x.shape
    for i in range(d):
        for c in range(k):
            acc = 0.0
            for j in range(d):
                acc += m[i, j] * x[j, c]
            out[i, c] = acc


@njit(cache=True)
def _mtv(out, m, x):
    """``out = m.T @ x``."""
    d, k = x.shape
    for i in range(d):
        for c in range(k):
            acc = 0.0
            for j in range(d):
                acc += m[j, i] * x[j, c]
            out[i, c] = acc


@njit(cache=True)
def _bilinear(g, gr, gi, y):
    """``(sum g * (gr @ y), sum g * (gi @ y))``."""
    d, k = g.shape
    sa = 0.0
    sb = 0.0
    for i in range(d):
        for c in range(k):
            ta = 0.0
            tb = 0.0
            for j in range(d):
                ta += gr[i, j] * y[j, c]
                tb += gi[i, j] * y[j, c]
            sa += g[i, c] * ta
            sb += g[i, c] * tb
    return sa, sb


@njit(cache=True)
def _stages(x, m1, m2, m3, h, k1, y2, k2, y3, k3, y4, k4):
    d, kk = x.shape
    _mul(k1, m1, x)
    for i in range(d):
        for c in range(kk):
            y2[i, c] = x[i, c] + 0.5 * h * k1[i, c]
    _mul(k2, m2, y2)
    for i in range(d):
        for c in range(kk):
            y3[i, c] = x[i, c] + 0.5 * h * k2[i, c]
    _mul(k3, m2, y3)
    for i in range(d):
        for c in range(kk):
            y4[i, c] = x[i, c] + h * k3[i, c]
    _mul(k4, m3, y4)


@njit(cache=True)
def forward(a, b, g0, gr, gi, x0, h):
    """All step states, shape ``(B, N + 1, d, k)``."""
    n_batch, n_steps = a.shape[0], a.shape[1]
    d, kk = x0.shape
    states = np.empty((n_batch, n_steps + 1, d, kk))
    m1 = np.empty((d, d))
    m2 = np.empty((d, d))
    m3 = np.empty((d, d))
    k1 = np.empty((d, kk))
    k2 = np.empty((d, kk))
    k3 = np.empty((d, kk))
    k4 = np.empty((d, kk))
    y2 = np.empty((d, kk))
    y3 = np.empty((d, kk))
    y4 = np.empty((d, kk))
    for bi in range(n_batch):
        x = x0.copy()
        states[bi, 0] = x
        for n in range(n_steps):
            _fill(m1, g0, gr, gi, a[bi, n, 0], b[bi, n, 0])
            _fill(m2, g0, gr, gi, a[bi, n, 1], b[bi, n, 1])
            _fill(m3, g0, gr, gi, a[bi, n, 2], b[bi, n, 2])
            _stages(x, m1, m2, m3, h, k1, y2, k2, y3, k3, y4, k4)
            for i in range(d):
                for c in range(kk):
                    x[i, c] = x[i, c] + (h / 6.0) * (
                        k1[i, c] + 2.0 * k2[i, c] + 2.0 * k3[i, c] + k4[i, c]
                    )
            states[bi, n + 1] = x
    return states


@njit(cache=True)
def backward(a, b, g0, gr, gi, states, x_bar, h):
    """Gradients of ``sum_b <x_bar[b], x_N[b]>`` with respect to ``a`` and ``b``."""
    n_batch, n_steps = a.shape[0], a.shape[1]
    d, kk = x_bar.shape[1], x_bar.shape[2]
    ga = np.zeros((n_batch, n_steps, 3))
    gb = np.zeros((n_batch, n_steps, 3))
    m1 = np.empty((d, d))
    m2 = np.empty((d, d))
    m3 = np.empty((d, d))
    k1 = np.empty((d, kk))
    k2 = np.empty((d, kk))
    k3 = np.empty((d, kk))
    k4 = np.empty((d, kk))
    y2 = np.empty((d, kk))
    y3 = np.empty((d, kk))
    y4 = np.empty((d, kk))
    adj = np.empty((d, kk))
    xb = np.empty((d, kk))
    k1b = np.empty((d, kk))
    k2b = np.empty((d, kk))
    k3b = np.empty((d, kk))
    k4b = np.empty((d, kk))
    tmp = np.empty((d, kk))
    for bi in range(n_batch):
        for i in range(d):
            for c in range(kk):
                adj[i, c] = x_bar[bi, i, c]
        for n in range(n_steps - 1, -1, -1):
            x = states[bi, n]
            _fill(m1, g0, gr, gi, a[bi, n, 0], b[bi, n, 0])
            _fill(m2, g0, gr, gi, a[bi, n, 1], b[bi, n, 1])
            _fill(m3, g0, gr, gi, a[bi, n, 2], b[bi, n, 2])
            _stages(x, m1, m2, m3, h, k1, y2, k2, y3, k3, y4, k4)
            for i in range(d):
                for c in range(kk):
                    xb[i, c] = adj[i, c]
                    k1b[i, c] = (h / 6.0) * adj[i, c]
                    k2b[i, c] = (h / 3.0) * adj[i, c]
                    k3b[i, c] = (h / 3.0) * adj[i, c]
                    k4b[i, c] = (h / 6.0) * adj[i, c]
            # k4 = m3 y4, y4 = x + h k3
            s3a, s3b = _bilinear(k4b, gr, gi, y4)
            _mtv(tmp, m3, k4b)
            for i in range(d):
                for c in range(kk):
                    xb[i, c] += tmp[i, c]
                    k3b[i, c] += h * tmp[i, c]
            # k3 = m2 y3, y3 = x + h/2 k2
            s2a, s2b = _bilinear(k3b, gr, gi, y3)
            _mtv(tmp, m2, k3b)
            for i in range(d):
                for c in range(kk):
                    xb[i, c] += tmp[i, c]
                    k2b[i, c] += 0.5 * h * tmp[i, c]
            # k2 = m2 y2, y2 = x + h/2 k1
            ta, tb = _bilinear(k2b, gr, gi, y2)
            s2a += ta
            s2b += tb
            _mtv(tmp, m2, k2b)
            for i in range(d):
                for c in range(kk):
                    xb[i, c] += tmp[i, c]
                    k1b[i, c] += 0.5 * h * tmp[i, c]
            # k1 = m1 x
            s1a, s1b = _bilinear(k1b, gr, gi, x)
            _mtv(tmp, m1, k1b)
            for i in range(d):
                for c in range(kk):
                    adj[i, c] = xb[i, c] + tmp[i, c]
            ga[bi, n, 0] = s1a
            gb[bi, n, 0] = s1b
            ga[bi, n, 1] = s2a
            gb[bi, n, 1] = s2b
            ga[bi, n, 2] = s3a
            gb[bi, n, 2] = s3b
    return ga, gb
