# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled E-step kernel; same contract as ``_kernels_py.estep_rows``."""
from libc.math cimport exp, expm1, sqrt, isinf, fmin, fmax
from libc.stdlib cimport malloc, free
from scipy.special.cython_special cimport erfcx, ndtr
from scipy.linalg.cython_lapack cimport dpotrf, dpotri

NAME = "cython"

cdef double SQRT2 = 1.4142135623730951
cdef double INV_SQRT2PI = 0.3989422804014327
cdef double DEGENERATE_MASS = 1e-12


class KernelError(ArithmeticError):
    pass


cdef void std_moments(double alpha, double beta, double *mean, double *var) noexcept nogil:
    cdef bint flip = 0
    cdef double tmp, mass, d1, d2, e, one_minus_e, beta_e, half_gap, phi_a, phi_b, r, v
    if beta <= 0.0:
        tmp = alpha
        alpha = -beta
        beta = -tmp
        flip = 1
    if alpha >= 0.0:
        if isinf(beta):
            one_minus_e = 1.0
            beta_e = 0.0
            mass = 0.5 * erfcx(alpha / SQRT2)
        else:
            half_gap = 0.5 * (beta - alpha) * (beta + alpha)
            e = exp(-half_gap)
            one_minus_e = -expm1(-half_gap)
            beta_e = beta * e
            mass = 0.5 * (erfcx(alpha / SQRT2) - erfcx(beta / SQRT2) * e)
        d1 = one_minus_e * INV_SQRT2PI
        d2 = (alpha - beta_e) * INV_SQRT2PI
    else:
        mass = ndtr(beta) - ndtr(alpha)
        phi_a = 0.0 if isinf(alpha) else INV_SQRT2PI * exp(-0.5 * alpha * alpha)
        phi_b = 0.0 if isinf(beta) else INV_SQRT2PI * exp(-0.5 * beta * beta)
        d1 = phi_a - phi_b
        d2 = (alpha * phi_a if phi_a != 0.0 else 0.0) - (beta * phi_b if phi_b != 0.0 else 0.0)
    if not (mass > DEGENERATE_MASS):
        if alpha >= 0.0:
            r = alpha
        elif beta <= 0.0:
            r = beta
        else:
            r = 0.0
        mean[0] = -r if flip else r
        var[0] = 0.0
        return
    r = d1 / mass
    v = 1.0 + d2 / mass - r * r
    r = fmin(fmax(r, alpha), beta)
    v = fmin(fmax(v, 0.0), 1.0)
    mean[0] = -r if flip else r
    var[0] = v


def standard_moments(double alpha, double beta):
    """Exposed for cross-checking against the Python implementation."""
    cdef double m, v
    std_moments(alpha, beta, &m, &v)
    return m, v


cdef int spd_inverse(double *src, double *work, double *q, int k, double ridge, bint add_ridge) noexcept nogil:
    cdef int info = 0, a, b
    cdef char uplo = b'L'
    for a in range(k * k):
        work[a] = src[a]
    if add_ridge:
        for a in range(k):
            work[a * k + a] += ridge
    dpotrf(&uplo, &k, work, &k, &info)
    if info != 0:
        return info
    dpotri(&uplo, &k, work, &k, &info)
    if info != 0:
        return info
    for b in range(k):
        for a in range(b, k):
            q[a * k + b] = work[a + b * k]
            q[b * k + a] = work[a + b * k]
    return 0


cdef long estep_block(const double[:, ::1] sigma, double[:, ::1] z, double[:, ::1] var,
                      const unsigned char[:, ::1] obs, const unsigned char[::1] is_ord,
                      const double[:, ::1] lower, const double[:, ::1] upper,
                      Py_ssize_t start, Py_ssize_t stop, bint jacobi, double ridge,
                      double[:, ::1] G) noexcept nogil:
    cdef int p = <int>sigma.shape[0]
    cdef int k, m, a, b, c, r, s, oa, info
    cdef long ridged = 0
    cdef Py_ssize_t i
    cdef double acc, qaa, mu, sd, mn, vr, lo, hi
    cdef int *oidx = <int *>malloc(p * sizeof(int))
    cdef int *midx = <int *>malloc(p * sizeof(int))
    cdef double *A = <double *>malloc(p * p * sizeof(double))
    cdef double *W = <double *>malloc(p * p * sizeof(double))
    cdef double *Q = <double *>malloc(p * p * sizeof(double))
    cdef double *B = <double *>malloc(p * p * sizeof(double))
    cdef double *CMM = <double *>malloc(p * p * sizeof(double))
    cdef double *zo = <double *>malloc(p * sizeof(double))
    cdef double *zold = <double *>malloc(p * sizeof(double))
    cdef double *co = <double *>malloc(p * sizeof(double))
    cdef double *zm = <double *>malloc(p * sizeof(double))
    cdef double *src
    try:
        for i in range(start, stop):
            k = 0
            m = 0
            for a in range(p):
                if obs[i, a]:
                    oidx[k] = a
                    k += 1
                else:
                    midx[m] = a
                    m += 1
            if k == 0:
                for a in range(p):
                    z[i, a] = 0.0
                    var[i, a] = sigma[a, a]
                    for b in range(p):
                        G[a, b] += sigma[a, b]
                continue
            for a in range(k):
                for b in range(k):
                    A[a * k + b] = sigma[oidx[a], oidx[b]]
            info = spd_inverse(A, W, Q, k, ridge, 0)
            if info != 0:
                ridged += 1
                info = spd_inverse(A, W, Q, k, ridge, 1)
                if info != 0:
                    return -1 - i
            for a in range(k):
                zo[a] = z[i, oidx[a]]
                zold[a] = zo[a]
                co[a] = 0.0
            src = zold if jacobi else zo
            for a in range(k):
                oa = oidx[a]
                if not is_ord[oa]:
                    continue
                qaa = Q[a * k + a]
                acc = 0.0
                for b in range(k):
                    if b != a:
                        acc += Q[a * k + b] * src[b]
                mu = -acc / qaa
                sd = 1.0 / sqrt(qaa)
                lo = lower[i, oa]
                hi = upper[i, oa]
                std_moments((lo - mu) / sd, (hi - mu) / sd, &mn, &vr)
                zo[a] = fmin(fmax(mu + sd * mn, lo), hi)
                co[a] = vr / qaa
            for a in range(k):
                z[i, oidx[a]] = zo[a]
                var[i, oidx[a]] = co[a]
                for b in range(k):
                    G[oidx[a], oidx[b]] += zo[a] * zo[b]
                G[oidx[a], oidx[a]] += co[a]
            if m == 0:
                continue
            # B = Sigma_MO Q
            for r in range(m):
                for c in range(k):
                    acc = 0.0
                    for b in range(k):
                        acc += sigma[midx[r], oidx[b]] * Q[b * k + c]
                    B[r * k + c] = acc
                acc = 0.0
                for c in range(k):
                    acc += B[r * k + c] * zo[c]
                zm[r] = acc
            for r in range(m):
                for s in range(r, m):
                    acc = sigma[midx[r], midx[s]]
                    for c in range(k):
                        acc += B[r * k + c] * (co[c] * B[s * k + c] - sigma[oidx[c], midx[s]])
                    CMM[r * m + s] = acc
                    CMM[s * m + r] = acc
            for r in range(m):
                z[i, midx[r]] = zm[r]
                var[i, midx[r]] = CMM[r * m + r]
                for c in range(k):
                    acc = B[r * k + c] * co[c] + zm[r] * zo[c]
                    G[midx[r], oidx[c]] += acc
                    G[oidx[c], midx[r]] += acc
                for s in range(m):
                    G[midx[r], midx[s]] += CMM[r * m + s] + zm[r] * zm[s]
        return ridged
    finally:
        free(oidx); free(midx); free(A); free(W); free(Q); free(B); free(CMM)
        free(zo); free(zold); free(co); free(zm)


def estep_rows(const double[:, ::1] sigma, double[:, ::1] z, double[:, ::1] var,
               const unsigned char[:, ::1] obs, const unsigned char[::1] is_ord,
               const double[:, ::1] lower, const double[:, ::1] upper,
               Py_ssize_t start, Py_ssize_t stop, bint jacobi, double ridge,
               double[:, ::1] G):
    """Update rows ``start:stop`` of ``z``/``var`` in place and add their
    second-moment contributions into ``G``; returns the number of rows that
    needed a ridge. Runs without the GIL."""
    cdef long ret
    with nogil:
        ret = estep_block(sigma, z, var, obs, is_ord, lower, upper, start, stop, jacobi, ridge, G)
    if ret < 0:
        raise KernelError(f"row {-1 - ret}: observed correlation block is not positive definite even with ridge")
    return ret
