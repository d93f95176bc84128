"""Pure numpy E-step kernel; reference for, and fallback of, ``_kernels.pyx``."""
import numpy as np
from scipy.linalg import LinAlgError, cho_factor, cho_solve

from .truncnorm import standard_moments

NAME = "python"


class KernelError(ArithmeticError):
    pass


def _spd_inverse(a, ridge):
    k = a.shape[0]
    eye = np.eye(k)
    try:
        return cho_solve(cho_factor(a, lower=True), eye), False
    except LinAlgError:
        pass
    try:
        return cho_solve(cho_factor(a + ridge * eye, lower=True), eye), True
    except LinAlgError:
        raise KernelError("observed correlation block is not positive definite even with ridge") from None


def _row(sigma, zi, vi, oi, ordi, lo, hi, jacobi, ridge, G):
    obs = np.flatnonzero(oi)
    mis = np.flatnonzero(~oi)
    if obs.size == 0:
        zi[:] = 0.0
        vi[:] = np.diag(sigma)
        G += sigma
        return False
    q, ridged = _spd_inverse(sigma[np.ix_(obs, obs)], ridge)
    zo = zi[obs].copy()
    co = np.zeros(obs.size)
    src = zo.copy() if jacobi else zo
    for a in np.flatnonzero(ordi[obs]):
        qaa = q[a, a]
        s = q[a] @ src - qaa * src[a]
        mu = -s / qaa
        sd = 1.0 / np.sqrt(qaa)
        lo_a, hi_a = lo[obs[a]], hi[obs[a]]
        m, v, _ = standard_moments((lo_a - mu) / sd, (hi_a - mu) / sd)
        zo[a] = min(max(mu + sd * m, lo_a), hi_a)
        co[a] = v / qaa
    zi[obs] = zo
    vi[obs] = co
    G[np.ix_(obs, obs)] += np.outer(zo, zo) + np.diag(co)
    if mis.size:
        s_mo = sigma[np.ix_(mis, obs)]
        b = s_mo @ q
        zm = b @ zo
        cov_mo = b * co
        cov_mm = sigma[np.ix_(mis, mis)] - b @ s_mo.T + cov_mo @ b.T
        zi[mis] = zm
        vi[mis] = np.diag(cov_mm)
        cross = cov_mo + np.outer(zm, zo)
        G[np.ix_(mis, obs)] += cross
        G[np.ix_(obs, mis)] += cross.T
        G[np.ix_(mis, mis)] += cov_mm + np.outer(zm, zm)
    return ridged


def estep_rows(sigma, z, var, obs, is_ord, lower, upper, start, stop, jacobi, ridge, G):
    """Update rows ``start:stop`` of ``z``/``var`` in place and add their
    second-moment contributions into ``G``; returns the number of rows that
    needed a ridge."""
    obs = obs.astype(bool, copy=False)
    is_ord = is_ord.astype(bool, copy=False)
    ridged = 0
    for i in range(start, stop):
        try:
            ridged += _row(sigma, z[i], var[i], obs[i], is_ord, lower[i], upper[i], jacobi, ridge, G)
        except KernelError as exc:
            raise KernelError(f"row {i}: {exc}") from None
    return ridged
