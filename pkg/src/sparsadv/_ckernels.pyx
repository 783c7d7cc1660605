# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled hot loops: one-sided Jacobi SVD and batch OMP.

Same call signatures and return conventions as ``_pykernels``.
"""

import numpy as np
cimport numpy as cnp
from libc.math cimport sqrt, fabs

cnp.import_array()

BACKEND = "cython"


def jacobi_orthogonalize(double[:, ::1] a_in, double tol, int max_sweeps):
    """Rotate the columns of a tall matrix until they are mutually orthogonal.

    Returns ``(W, V, sweeps)`` with ``W = A V`` column-orthogonal and ``V``
    orthogonal. ``sweeps`` is -1 when ``max_sweeps`` ran out.
    """
    cdef Py_ssize_t m = a_in.shape[0], n = a_in.shape[1]
    # column-major working copies so each column is contiguous
    w_np = np.asfortranarray(np.asarray(a_in).copy())
    v_np = np.asfortranarray(np.eye(n))
    cdef double[::1, :] w = w_np
    cdef double[::1, :] v = v_np
    cdef Py_ssize_t p, q, i
    cdef double alpha, beta, gamma, zeta, t, c, s, wp, wq
    cdef int sweep, rotated
    for sweep in range(max_sweeps):
        rotated = 0
        for p in range(n - 1):
            for q in range(p + 1, n):
                alpha = 0.0
                beta = 0.0
                gamma = 0.0
                for i in range(m):
                    alpha += w[i, p] * w[i, p]
                    beta += w[i, q] * w[i, q]
                    gamma += w[i, p] * w[i, q]
                if gamma == 0.0 or fabs(gamma) <= tol * sqrt(alpha * beta):
                    continue
                rotated += 1
                zeta = (beta - alpha) / (2.0 * gamma)
                if zeta >= 0:
                    t = 1.0 / (zeta + sqrt(1.0 + zeta * zeta))
                else:
                    t = -1.0 / (-zeta + sqrt(1.0 + zeta * zeta))
                c = 1.0 / sqrt(1.0 + t * t)
                s = c * t
                for i in range(m):
                    wp = w[i, p]
                    wq = w[i, q]
                    w[i, p] = c * wp - s * wq
                    w[i, q] = s * wp + c * wq
                for i in range(n):
                    wp = v[i, p]
                    wq = v[i, q]
                    v[i, p] = c * wp - s * wq
                    v[i, q] = s * wp + c * wq
        if rotated == 0:
            return np.ascontiguousarray(w_np), np.ascontiguousarray(v_np), sweep + 1
    return np.ascontiguousarray(w_np), np.ascontiguousarray(v_np), -1


def omp_batch(double[:, ::1] d, double[:, ::1] x, int max_atoms, double tol):
    """Orthogonal matching pursuit for each row of ``x``.

    Stops at ``max_atoms`` atoms, when the residual norm drops to ``tol``
    (pass a negative ``tol`` to disable), or when the residual vanishes.
    Returns ``(codes, n_atoms)``.
    """
    cdef Py_ssize_t m = d.shape[0], n = d.shape[1], nsig = x.shape[0]
    if x.shape[1] != m:
        raise ValueError("signal length does not match dictionary rows")
    if max_atoms > m:
        max_atoms = <int>m
    codes_np = np.zeros((nsig, n))
    counts_np = np.zeros(nsig, dtype=np.intp)
    cdef double[:, ::1] codes = codes_np
    cdef Py_ssize_t[::1] counts = counts_np
    dt_np = np.asfortranarray(np.asarray(d))
    cdef double[::1, :] dcol = dt_np
    q_np = np.zeros((max(max_atoms, 1), m))
    cdef double[:, ::1] qm = q_np
    r_np = np.zeros((max(max_atoms, 1), max(max_atoms, 1)))
    cdef double[:, ::1] rm = r_np
    res_np = np.zeros(m)
    cdef double[::1] res = res_np
    wvec_np = np.zeros(m)
    cdef double[::1] wv = wvec_np
    qtx_np = np.zeros(max(max_atoms, 1))
    cdef double[::1] qtx = qtx_np
    sel_np = np.zeros(max(max_atoms, 1), dtype=np.intp)
    cdef Py_ssize_t[::1] sel = sel_np
    blocked_np = np.zeros(n, dtype=np.uint8)
    cdef unsigned char[::1] blocked = blocked_np
    coef_np = np.zeros(max(max_atoms, 1))
    cdef double[::1] coef = coef_np

    cdef Py_ssize_t j, i, k, a, b, best
    cdef int rep
    cdef double xnorm2, rnorm2, corr, bestabs, proj, rho, acc, floor2
    for j in range(nsig):
        xnorm2 = 0.0
        for i in range(m):
            res[i] = x[j, i]
            xnorm2 += x[j, i] * x[j, i]
        for a in range(n):
            blocked[a] = 0
        rnorm2 = xnorm2
        floor2 = 1e-28 * xnorm2
        k = 0
        while k < max_atoms:
            if tol >= 0 and rnorm2 <= tol * tol:
                break
            if rnorm2 <= floor2 or rnorm2 == 0.0:
                break
            best = -1
            bestabs = 0.0
            for a in range(n):
                if blocked[a]:
                    continue
                corr = 0.0
                for i in range(m):
                    corr += dcol[i, a] * res[i]
                if fabs(corr) > bestabs:
                    bestabs = fabs(corr)
                    best = a
            if best < 0:
                break
            blocked[best] = 1
            for i in range(m):
                wv[i] = dcol[i, best]
            # two passes of modified Gram-Schmidt
            for b in range(k):
                rm[b, k] = 0.0
            for rep in range(2):
                for b in range(k):
                    proj = 0.0
                    for i in range(m):
                        proj += qm[b, i] * wv[i]
                    rm[b, k] += proj
                    for i in range(m):
                        wv[i] -= proj * qm[b, i]
            rho = 0.0
            for i in range(m):
                rho += wv[i] * wv[i]
            rho = sqrt(rho)
            if rho <= 1e-10:
                # atom lies in the span already chosen; skip it for good
                continue
            rm[k, k] = rho
            proj = 0.0
            acc = 0.0
            for i in range(m):
                qm[k, i] = wv[i] / rho
                proj += qm[k, i] * res[i]
                acc += qm[k, i] * x[j, i]
            qtx[k] = acc
            rnorm2 = 0.0
            for i in range(m):
                res[i] -= proj * qm[k, i]
                rnorm2 += res[i] * res[i]
            sel[k] = best
            k += 1
        # back substitution R c = Q^T x
        for a in range(k - 1, -1, -1):
            acc = qtx[a]
            for b in range(a + 1, k):
                acc -= rm[a, b] * coef[b]
            coef[a] = acc / rm[a, a]
        for a in range(k):
            codes[j, sel[a]] = coef[a]
        counts[j] = k
    return codes_np, counts_np
