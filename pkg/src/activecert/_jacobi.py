"""Cyclic Jacobi kernel for dense symmetric matrices.

Rotations are applied row by row over the strict upper triangle,
(0,1), (0,2), ..., (0,m-1), (1,2), ..., which makes the output a
deterministic function of the input.
"""
import numpy as np
from numba import njit


@njit(cache=True)
def _off_norm(a):
    m = a.shape[0]
    s = 0.0
    for i in range(m):
        for j in range(m):
            if i != j:
                s += a[i, j] * a[i, j]
    return np.sqrt(s)


@njit(cache=True)
def _frobenius(a):
    m = a.shape[0]
    s = 0.0
    for i in range(m):
        for j in range(m):
            s += a[i, j] * a[i, j]
    return np.sqrt(s)


@njit(cache=True)
def cyclic_jacobi(a_in, rel_tol, max_sweeps):
    """Diagonalize a symmetric matrix by cyclic Jacobi rotations.

    Returns ``(diag, V, sweeps, off, converged)`` where ``a_in = V diag V^T``
    up to rounding and ``off`` is the final off-diagonal Frobenius norm.
    """
    m = a_in.shape[0]
    a = a_in.copy()
    v = np.eye(m)
    frob = _frobenius(a)
    if frob == 0.0:
        return np.zeros(m), v, 0, 0.0, True

    target = rel_tol * frob
    off = _off_norm(a)
    sweeps = 0
    while off > target and sweeps < max_sweeps:
        for p in range(m - 1):
            for q in range(p + 1, m):
                apq = a[p, q]
                if apq == 0.0:
                    continue
                theta = (a[q, q] - a[p, p]) / (2.0 * apq)
                if abs(theta) > 1e150:
                    t = 0.5 / theta
                else:
                    t = 1.0 / (abs(theta) + np.sqrt(theta * theta + 1.0))
                    if theta < 0.0:
                        t = -t
                c = 1.0 / np.sqrt(t * t + 1.0)
                s = t * c
                for r in range(m):
                    arp = a[r, p]
                    arq = a[r, q]
                    a[r, p] = c * arp - s * arq
                    a[r, q] = s * arp + c * arq
                for r in range(m):
                    apr = a[p, r]
                    aqr = a[q, r]
                    a[p, r] = c * apr - s * aqr
                    a[q, r] = s * apr + c * aqr
                a[p, q] = 0.0
                a[q, p] = 0.0
                for r in range(m):
                    vrp = v[r, p]
                    vrq = v[r, q]
                    v[r, p] = c * vrp - s * vrq
                    v[r, q] = s * vrp + c * vrq
        sweeps += 1
        off = _off_norm(a)

    d = np.empty(m)
    for i in range(m):
        d[i] = a[i, i]
    return d, v, sweeps, off, off <= target
