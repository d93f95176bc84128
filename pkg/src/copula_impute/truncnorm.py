"""Truncated normal moments, the one-step conditional updates and a Gibbs sampler.

All ratio evaluations are done in a tail-scaled form: for an interval in the
upper tail the common factor ``exp(-alpha**2 / 2)`` is divided out of the
density difference and the probability mass (``erfcx`` keeps the scaled mass
finite), and lower-tail intervals are reflected onto the upper tail.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import erfcx, log_ndtr, ndtr, ndtri, ndtri_exp

SQRT2 = math.sqrt(2.0)
INV_SQRT2PI = 1.0 / math.sqrt(2.0 * math.pi)
#: scaled probability mass below which the interval is treated as a point
DEGENERATE_MASS = 1e-12


@dataclass(frozen=True)
class UnivariateTruncMoments:
    mean: float
    variance: float


def _upper_tail(alpha: float, beta: float):
    # 0 <= alpha < beta <= inf, everything scaled by exp(alpha^2 / 2)
    if math.isinf(beta):
        e = 0.0
        one_minus_e = 1.0
        beta_e = 0.0
        mass = 0.5 * float(erfcx(alpha / SQRT2))
    else:
        half_gap = 0.5 * (beta - alpha) * (beta + alpha)
        e = math.exp(-half_gap)
        one_minus_e = -math.expm1(-half_gap)
        beta_e = beta * e
        mass = 0.5 * (float(erfcx(alpha / SQRT2)) - float(erfcx(beta / SQRT2)) * e)
    return mass, one_minus_e * INV_SQRT2PI, (alpha - beta_e) * INV_SQRT2PI


def standard_moments(alpha: float, beta: float):
    """Mean and variance of N(0, 1) truncated to (alpha, beta].

    Returns ``(mean, variance, degenerate)``. When the (tail-scaled) mass is
    below :data:`DEGENERATE_MASS` the mean is the endpoint nearest 0 and the
    variance is 0.
    """
    flip = False
    if beta <= 0.0:
        alpha, beta = -beta, -alpha
        flip = True
    if alpha >= 0.0:
        mass, d1, d2 = _upper_tail(alpha, beta)
    else:
        mass = float(ndtr(beta) - ndtr(alpha))
        phi_a = INV_SQRT2PI * math.exp(-0.5 * alpha * alpha) if not math.isinf(alpha) else 0.0
        phi_b = INV_SQRT2PI * math.exp(-0.5 * beta * beta) if not math.isinf(beta) else 0.0
        d1 = phi_a - phi_b
        d2 = (alpha * phi_a if phi_a else 0.0) - (beta * phi_b if phi_b else 0.0)
    if not mass > DEGENERATE_MASS:
        mean = alpha if alpha >= 0.0 else (beta if beta <= 0.0 else 0.0)
        return (-mean if flip else mean), 0.0, True
    r = d1 / mass
    var = 1.0 + d2 / mass - r * r
    mean = min(max(r, alpha), beta)
    var = min(max(var, 0.0), 1.0)
    return (-mean if flip else mean), var, False


def univariate_moments(mu: float, sigma2: float, a: float, b: float) -> UnivariateTruncMoments:
    """Moments of N(mu, sigma2) truncated to (a, b]; endpoints may be infinite."""
    if not a < b:
        raise ValueError(f"empty truncation interval ({a}, {b}]")
    if not sigma2 > 0:
        raise ValueError("sigma2 must be positive")
    sigma = math.sqrt(sigma2)
    m, v, _ = standard_moments((a - mu) / sigma, (b - mu) / sigma)
    mean = min(max(mu + sigma * m, a), b)
    return UnivariateTruncMoments(mean, v * sigma2)


@dataclass
class TruncatedBoxProblem:
    """A normal vector over ``sigma`` with some dimensions pinned and the rest boxed.

    ``known`` maps dimension -> value for continuously observed coordinates.
    ``intervals`` maps dimension -> (lower, upper) for the truncated ones, and
    ``estimate`` holds the current mean estimate of each truncated dimension.
    """

    sigma: np.ndarray
    known: dict
    intervals: dict
    estimate: dict = field(default_factory=dict)
    ridge: float = 1e-8
    ridge_events: int = 0

    def __post_init__(self):
        self.sigma = np.asarray(self.sigma, dtype=float)
        p = self.sigma.shape[0]
        if self.sigma.shape != (p, p) or not np.allclose(self.sigma, self.sigma.T):
            raise ValueError("sigma must be square and symmetric")
        if np.any(np.diag(self.sigma) <= 0):
            raise ValueError("sigma must have a positive diagonal")
        if set(self.known) & set(self.intervals) or len(self.known) + len(self.intervals) != p:
            raise ValueError("every dimension must be either known or interval-constrained")
        for d, (lo, hi) in self.intervals.items():
            if not lo < hi:
                raise ValueError(f"dimension {d}: empty interval")
            if d not in self.estimate:
                s = math.sqrt(self.sigma[d, d])
                self.estimate[d] = s * standard_moments(lo / s, hi / s)[0]

    @property
    def ordinal_dims(self):
        return sorted(self.intervals)

    def stacked(self) -> np.ndarray:
        z = np.empty(self.sigma.shape[0])
        for d, v in self.known.items():
            z[d] = v
        for d, v in self.estimate.items():
            z[d] = v
        return z

    def conditional_params(self, j: int):
        """Mean and variance of coordinate j given all others at current values."""
        if j not in self.intervals:
            raise ValueError(f"dimension {j} is not interval-constrained")
        others = [d for d in range(self.sigma.shape[0]) if d != j]
        if not others:
            return 0.0, float(self.sigma[j, j])
        s_oo = self.sigma[np.ix_(others, others)]
        s_jo = self.sigma[j, others]
        try:
            coef = np.linalg.solve(s_oo, s_jo)
            if not np.all(np.isfinite(coef)):
                raise np.linalg.LinAlgError
        except np.linalg.LinAlgError:
            self.ridge_events += 1
            coef = np.linalg.solve(s_oo + self.ridge * np.eye(len(others)), s_jo)
        mu = float(coef @ self.stacked()[others])
        var = float(self.sigma[j, j] - coef @ s_jo)
        return mu, max(var, 1e-300)

    def moments(self, j: int) -> UnivariateTruncMoments:
        mu, var = self.conditional_params(j)
        lo, hi = self.intervals[j]
        return univariate_moments(mu, var, lo, hi)


def conditional_mean_update(problem: TruncatedBoxProblem, j: int) -> float:
    """Truncated mean of dimension j with every other coordinate at its estimate."""
    return problem.moments(j).mean


def conditional_var_update(problem: TruncatedBoxProblem, j: int) -> float:
    """Truncated variance of dimension j at the current estimates.

    Only the expected within-interval variance is kept; the spread of the
    conditional mean across the other coordinates is ignored.
    """
    return problem.moments(j).variance


def sweep(problem: TruncatedBoxProblem, jacobi: bool = False):
    """One pass of mean/variance updates over the truncated dimensions.

    In the default (Gauss-Seidel) order each update sees the estimates already
    refreshed earlier in the pass; ``jacobi=True`` uses only the values from
    before the pass. Returns ``{dim: (mean, variance)}`` and updates
    ``problem.estimate`` in place.
    """
    frozen = dict(problem.estimate)
    out = {}
    for d in problem.ordinal_dims:
        if jacobi:
            current = problem.estimate
            problem.estimate = frozen
            mom = problem.moments(d)
            problem.estimate = current
        else:
            mom = problem.moments(d)
        problem.estimate[d] = mom.mean
        out[d] = (mom.mean, mom.variance)
    return out


def sample_standard_truncated(alpha, beta, u):
    """Inverse-CDF draw from N(0, 1) on (alpha, beta] given uniforms ``u``.

    Vectorised; intervals in either tail are handled in log space.
    """
    alpha = np.asarray(alpha, dtype=float)
    beta = np.asarray(beta, dtype=float)
    u = np.asarray(u, dtype=float)
    alpha, beta, u = np.broadcast_arrays(alpha, beta, u)
    out = np.empty(alpha.shape)
    lower_tail = beta <= 0
    upper_tail = (alpha >= 0) & ~lower_tail
    central = ~(lower_tail | upper_tail)
    with np.errstate(divide="ignore", invalid="ignore"):
        if np.any(central):
            a, b, uu = alpha[central], beta[central], u[central]
            pa, pb = ndtr(a), ndtr(b)
            out[central] = ndtri(pa + uu * (pb - pa))
        for sel, sign in ((upper_tail, 1.0), (lower_tail, -1.0)):
            if not np.any(sel):
                continue
            # reflect the lower tail onto the upper tail
            a = alpha[sel] if sign > 0 else -beta[sel]
            b = beta[sel] if sign > 0 else -alpha[sel]
            uu = u[sel]
            la = log_ndtr(-a)
            lb = log_ndtr(-b)
            ratio = np.exp(lb - la)
            log_target = la + np.log1p(-uu * (1.0 - ratio))
            out[sel] = -sign * ndtri_exp(log_target)
    return np.clip(out, alpha, beta)


def gibbs_truncated(sigma_inv, z, free, lower, upper, sweeps, rng):
    """Gibbs sweeps over the ``free`` coordinates of batched latent vectors.

    ``sigma_inv`` is the precision matrix of the joint normal, ``z`` has shape
    ``(m, k)`` (one chain per row; fixed coordinates stay untouched) and
    ``lower``/``upper`` give the truncation bounds of each free coordinate.
    """
    z = np.array(z, dtype=float)
    m = z.shape[0]
    for _ in range(sweeps):
        for idx, d in enumerate(free):
            q = sigma_inv[d]
            qdd = q[d]
            mu = -(z @ q - qdd * z[:, d]) / qdd
            sd = 1.0 / math.sqrt(qdd)
            u = rng.random(m)
            draw = sample_standard_truncated((lower[idx] - mu) / sd, (upper[idx] - mu) / sd, u)
            z[:, d] = mu + sd * draw
            np.clip(z[:, d], lower[idx], upper[idx], out=z[:, d])
    return z


def sample_truncated_row(problem: TruncatedBoxProblem, sweeps: int = 20, seed: int = 0) -> np.ndarray:
    """One approximate draw of the truncated coordinates (ascending dimension order).

    The chain starts at the current mean estimates and runs ``sweeps`` Gibbs
    passes of univariate inverse-CDF draws.
    """
    return sample_truncated_rows(problem, 1, sweeps, seed)[0]


def sample_truncated_rows(problem: TruncatedBoxProblem, draws: int, sweeps: int = 20, seed: int = 0) -> np.ndarray:
    """``draws`` independent chains; returns an array of shape (draws, |D|)."""
    rng = np.random.default_rng(seed)
    free = problem.ordinal_dims
    p = problem.sigma.shape[0]
    try:
        prec = np.linalg.inv(problem.sigma)
    except np.linalg.LinAlgError:
        problem.ridge_events += 1
        prec = np.linalg.inv(problem.sigma + problem.ridge * np.eye(p))
    z0 = np.tile(problem.stacked(), (draws, 1))
    lo = np.array([problem.intervals[d][0] for d in free])
    hi = np.array([problem.intervals[d][1] for d in free])
    z = gibbs_truncated(prec, z0, free, lo, hi, sweeps, rng)
    return z[:, free]
