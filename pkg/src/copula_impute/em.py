"""Approximate EM for the copula correlation matrix of incomplete mixed data."""
from __future__ import annotations

import logging
import os
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from ._backend import get_kernel
from .marginals import fit_marginals, latent_inputs
from .truncnorm import standard_moments

logger = logging.getLogger(__name__)

THREADS_ENV = "COPULA_IMPUTE_THREADS"
#: rows per E-step work unit; fixed so the reduction order never depends on threads
CHUNK_ROWS = 256


class NumericalError(ArithmeticError):
    """The EM iterates became non-finite or a correlation block broke down."""


def default_threads() -> int:
    try:
        return max(1, int(os.environ.get(THREADS_ENV, "1")))
    except ValueError:
        return 1


@dataclass
class EmConfig:
    tol: float = 0.01
    max_iter: int = 50
    ridge: float = 1e-8
    update_mode: str = "gauss-seidel"
    threads: int = field(default_factory=default_threads)
    kernel: str | None = None

    def __post_init__(self):
        if self.update_mode not in ("gauss-seidel", "jacobi"):
            raise ValueError("update_mode must be 'gauss-seidel' or 'jacobi'")
        if self.max_iter < 1 or self.tol < 0 or self.threads < 1:
            raise ValueError("need max_iter >= 1, tol >= 0, threads >= 1")


@dataclass
class LatentRowState:
    """Conditional mean and (diagonal) conditional variance of one latent row."""

    mean: np.ndarray
    var_diag: np.ndarray


@dataclass
class LatentState:
    """Row states for a whole data matrix, stacked as n x p arrays."""

    mean: np.ndarray
    var: np.ndarray

    def row(self, i: int) -> LatentRowState:
        return LatentRowState(self.mean[i].copy(), self.var[i].copy())


@dataclass
class FitResult:
    sigma: np.ndarray
    marginals: list
    iterations: int
    sigma_change_trace: list
    converged: bool
    state: LatentState | None = None
    ridge_events: int = 0
    data: object = field(default=None, repr=False)


def project_elliptope(m) -> np.ndarray:
    """Rescale a symmetric matrix with positive diagonal to unit diagonal."""
    m = np.asarray(m, dtype=float)
    d = np.diag(m)
    if np.any(~(d > 0)):
        raise ValueError("diagonal must be strictly positive to rescale to a correlation matrix")
    s = 1.0 / np.sqrt(d)
    out = m * s[:, None] * s[None, :]
    out = 0.5 * (out + out.T)
    np.fill_diagonal(out, 1.0)
    return out


def is_correlation(m, tol: float = 1e-8) -> bool:
    m = np.asarray(m)
    return (
        m.ndim == 2
        and m.shape[0] == m.shape[1]
        and np.allclose(m, m.T, atol=1e-12, rtol=0)
        and np.all(np.diag(m) == 1.0)
        and np.linalg.eigvalsh(m).min() >= -tol
    )


def initial_ordinal_means(lower, upper, obs, is_ord):
    """Standard-normal truncated mean of every observed ordinal cell."""
    out = np.zeros(lower.shape)
    rows, cols = np.nonzero(obs & is_ord[None, :])
    cache = {}
    for i, j in zip(rows, cols):
        key = (lower[i, j], upper[i, j])
        if key not in cache:
            cache[key] = standard_moments(*key)[0]
        out[i, j] = cache[key]
    return out


@dataclass
class _Problem:
    """Arrays the E-step kernel reads, derived once from data + marginals."""

    obs: np.ndarray
    is_ord: np.ndarray
    lower: np.ndarray
    upper: np.ndarray
    z_fixed: np.ndarray

    @classmethod
    def build(cls, data, marginals):
        z, lower, upper = latent_inputs(data, marginals)
        return cls(
            np.ascontiguousarray(data.mask, dtype=np.uint8),
            np.ascontiguousarray(data.is_ordinal, dtype=np.uint8),
            np.ascontiguousarray(lower),
            np.ascontiguousarray(upper),
            z,
        )

    def initial_state(self) -> LatentState:
        obs = self.obs.astype(bool)
        is_ord = self.is_ord.astype(bool)
        mean = np.where(obs & ~is_ord[None, :], self.z_fixed, 0.0)
        mean += initial_ordinal_means(self.lower, self.upper, obs, is_ord)
        return LatentState(np.ascontiguousarray(mean), np.zeros(mean.shape))


def estep(problem: _Problem, sigma, state: LatentState, config: EmConfig):
    """Run one E-step, updating ``state`` in place.

    Returns ``(G_sum, ridged_rows)`` where ``G_sum`` is the (unnormalised) sum
    of per-row conditional second moments.
    """
    kernel = get_kernel(config.kernel)
    sigma = np.ascontiguousarray(sigma, dtype=float)
    n, p = state.mean.shape
    jacobi = config.update_mode == "jacobi"
    bounds = [(s, min(s + CHUNK_ROWS, n)) for s in range(0, n, CHUNK_ROWS)]

    def work(span):
        g = np.zeros((p, p))
        r = kernel.estep_rows(
            sigma, state.mean, state.var, problem.obs, problem.is_ord,
            problem.lower, problem.upper, span[0], span[1], jacobi, config.ridge, g,
        )
        return g, r

    try:
        if config.threads > 1 and len(bounds) > 1:
            with ThreadPoolExecutor(config.threads) as pool:
                parts = list(pool.map(work, bounds))
        else:
            parts = [work(b) for b in bounds]
    except ArithmeticError as exc:
        raise NumericalError(str(exc)) from None
    total = np.zeros((p, p))
    ridged = 0
    for g, r in parts:
        total += g
        ridged += r
    return total, ridged


def fit(data, config: EmConfig | None = None, sigma0=None) -> FitResult:
    """Estimate the copula correlation of ``data`` (a :class:`MixedDataMatrix`).

    Starts from the identity (or ``sigma0``) and alternates the approximate
    E-step with the rescaling to unit diagonal until the relative Frobenius
    change drops below ``config.tol`` or ``config.max_iter`` is reached.
    """
    config = config or EmConfig()
    n, p = data.n, data.p
    if n < p:
        warnings.warn(f"fewer rows ({n}) than columns ({p}); the correlation estimate may be poor", stacklevel=2)
    marginals = fit_marginals(data)
    problem = _Problem.build(data, marginals)
    state = problem.initial_state()
    sigma = np.eye(p) if sigma0 is None else project_elliptope(sigma0)
    trace = []
    ridged_total = 0
    converged = False
    it = 0
    for it in range(1, config.max_iter + 1):
        g, ridged = estep(problem, sigma, state, config)
        ridged_total += ridged
        g /= n
        if not np.all(np.isfinite(g)):
            raise NumericalError(f"non-finite second-moment estimate at iteration {it}")
        new = project_elliptope(g)
        change = np.linalg.norm(new - sigma) / np.linalg.norm(sigma)
        trace.append(float(change))
        sigma = new
        logger.debug("iteration %d: relative change %.3e", it, change)
        if change < config.tol:
            converged = True
            break
    if ridged_total:
        logger.info("%d row solves needed a ridge of %g", ridged_total, config.ridge)
    return FitResult(sigma, marginals, it, trace, converged, state, ridged_total, data)


def estep_row(values, mask, kinds, marginals, sigma, prev_state: LatentRowState | None = None,
              config: EmConfig | None = None):
    """E-step for a single row.

    ``values`` holds internal cell values (ordinal levels as 1..k), ``mask``
    the observed flags. Returns the new :class:`LatentRowState` and the row's
    p x p conditional second moment E[z z^T | observed cells].
    """
    from .data import MixedDataMatrix

    config = config or EmConfig()
    row = MixedDataMatrix(
        np.asarray(values, float)[None, :], np.asarray(mask, bool)[None, :], tuple(kinds),
        tuple(f"x{j}" for j in range(len(kinds))),
        tuple(tuple(range(1, k.levels + 1)) if k.ordinal else None for k in kinds),
    )
    problem = _Problem.build(row, marginals)
    state = problem.initial_state()
    if prev_state is not None:
        ord_obs = row.mask[0] & row.is_ordinal
        state.mean[0, ord_obs] = np.asarray(prev_state.mean)[ord_obs]
    g, _ = estep(problem, sigma, state, config)
    return state.row(0), g


def observed_loglik_continuous(sigma, z, mask) -> float:
    """Mean observed-data Gaussian log-likelihood of partially observed latent rows.

    Exact only when every observed column is continuous.
    """
    sigma = np.asarray(sigma)
    total = 0.0
    n = z.shape[0]
    patterns = {}
    for i in range(n):
        patterns.setdefault(mask[i].tobytes(), []).append(i)
    for rows in patterns.values():
        o = np.flatnonzero(mask[rows[0]])
        if o.size == 0:
            continue
        s = sigma[np.ix_(o, o)]
        _, logdet = np.linalg.slogdet(s)
        zo = z[np.ix_(rows, o)]
        quad = np.einsum("ij,ij->i", zo @ np.linalg.inv(s), zo)
        total += np.sum(-0.5 * (o.size * np.log(2 * np.pi) + logdet + quad))
    return total / n
