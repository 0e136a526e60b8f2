"""Cyclic Jacobi kernels for dense complex matrices.

Two-sided rotations diagonalize Hermitian matrices; one-sided rotations
orthogonalize the columns of a general matrix, which yields its singular
value decomposition.  The sweep order is fixed (row-major over index
pairs) so repeated runs on identical input are bit-identical.
"""

import numpy as np
from numba import njit


@njit(cache=True)
def hermitian_sweeps(a, v, tol, max_sweeps):
    """Diagonalize Hermitian ``a`` in place; accumulate eigenvectors in ``v``.

    Returns the number of sweeps used, or -1 if the off-diagonal mass did
    not drop below ``tol`` within ``max_sweeps``.
    """
    n = a.shape[0]
    for sweep in range(max_sweeps):
        off = 0.0
        for p in range(n - 1):
            for q in range(p + 1, n):
                off += a[p, q].real ** 2 + a[p, q].imag ** 2
        if np.sqrt(2.0 * off) <= tol:
            return sweep
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = a[p, q]
                m = abs(apq)
                if m == 0.0:
                    continue
                ph = apq / m
                tau = (a[q, q].real - a[p, p].real) / (2.0 * m)
                if tau >= 0.0:
                    t = -1.0 / (tau + np.sqrt(1.0 + tau * tau))
                else:
                    t = 1.0 / (-tau + np.sqrt(1.0 + tau * tau))
                c = 1.0 / np.sqrt(1.0 + t * t)
                s = t * c
                for k in range(n):
                    akp = a[k, p]
                    akq = a[k, q]
                    a[k, p] = c * akp + s * np.conj(ph) * akq
                    a[k, q] = -s * ph * akp + c * akq
                for k in range(n):
                    apk = a[p, k]
                    aqk = a[q, k]
                    a[p, k] = c * apk + s * ph * aqk
                    a[q, k] = -s * np.conj(ph) * apk + c * aqk
                for k in range(n):
                    vkp = v[k, p]
                    vkq = v[k, q]
                    v[k, p] = c * vkp + s * np.conj(ph) * vkq
                    v[k, q] = -s * ph * vkp + c * vkq
    return -1


@njit(cache=True)
def onesided_sweeps(a, v, tol, max_sweeps):
    """Orthogonalize the columns of ``a`` in place by right rotations.

    ``v`` accumulates the rotations; on success the columns of ``a`` are
    pairwise orthogonal, so column norms are the singular values.  Columns
    whose norm falls under the floor (rounding noise relative to the
    largest column) are treated as zero: for proportional columns the
    relative criterion never drops, so the floor is what terminates.
    """
    m, n = a.shape
    for sweep in range(max_sweeps):
        col_max = 0.0
        for q in range(n):
            nrm = 0.0
            for k in range(m):
                nrm += a[k, q].real ** 2 + a[k, q].imag ** 2
            if nrm > col_max:
                col_max = nrm
        floor2 = col_max * 1e-28
        rotated = False
        for p in range(n - 1):
            for q in range(p + 1, n):
                app = 0.0
                aqq = 0.0
                apq = 0.0 + 0.0j
                for k in range(m):
                    app += a[k, p].real ** 2 + a[k, p].imag ** 2
                    aqq += a[k, q].real ** 2 + a[k, q].imag ** 2
                    apq += np.conj(a[k, p]) * a[k, q]
                mm = abs(apq)
                if mm == 0.0 or app <= floor2 or aqq <= floor2:
                    continue
                if mm <= tol * np.sqrt(app * aqq):
                    continue
                rotated = True
                ph = apq / mm
                tau = (aqq - app) / (2.0 * mm)
                if tau >= 0.0:
                    t = -1.0 / (tau + np.sqrt(1.0 + tau * tau))
                else:
                    t = 1.0 / (-tau + np.sqrt(1.0 + tau * tau))
                c = 1.0 / np.sqrt(1.0 + t * t)
                s = t * c
                for k in range(m):
                    akp = a[k, p]
                    akq = a[k, q]
                    a[k, p] = c * akp + s * np.conj(ph) * akq
                    a[k, q] = -s * ph * akp + c * akq
                for k in range(n):
                    vkp = v[k, p]
                    vkq = v[k, q]
                    v[k, p] = c * vkp + s * np.conj(ph) * vkq
                    v[k, q] = -s * ph * vkp + c * vkq
        if not rotated:
            return sweep
    return -1
