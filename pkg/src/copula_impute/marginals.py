"""Per-column monotone transforms between observed values and latent normals.

Continuous columns use the rescaled empirical CDF pushed through the normal
quantile function; ordinal columns use thresholds at the normal quantiles of
the cumulative level frequencies.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Union

import numpy as np
from scipy.special import ndtr, ndtri


class MarginalError(ValueError):
    """A column cannot support the requested marginal model."""


@dataclass(frozen=True, eq=False)
class ContinuousMarginal:
    sorted_observed: np.ndarray

    @property
    def n_obs(self) -> int:
        return self.sorted_observed.size

    def to_latent(self, x):
        return to_latent_continuous(self, x)

    def from_latent(self, z):
        return from_latent_continuous(self, z)


@dataclass(frozen=True, eq=False)
class OrdinalMarginal:
    cutoffs: np.ndarray
    level_count: int

    def apply(self, z):
        return cutoff_apply(self, z)

    def interval(self, level):
        return latent_interval(self, level)


MarginalModel = Union[ContinuousMarginal, OrdinalMarginal]


@dataclass(frozen=True)
class LatentInterval:
    lower: float
    upper: float

    def __post_init__(self):
        if not self.lower < self.upper:
            raise ValueError(f"empty interval ({self.lower}, {self.upper}]")

    def __contains__(self, z):
        return self.lower < z <= self.upper


def fit_continuous(column_observed) -> ContinuousMarginal:
    x = np.sort(np.asarray(column_observed, dtype=float))
    if x.size < 2 or x[0] == x[-1]:
        raise MarginalError("continuous column needs at least 2 distinct observed values (treat as Ordinal(1))")
    x.flags.writeable = False
    return ContinuousMarginal(x)


def to_latent_continuous(m: ContinuousMarginal, x):
    """Phi^-1(#{obs <= x} / (n + 1)); below the sample the count is floored at 1."""
    n = m.n_obs
    counts = np.searchsorted(m.sorted_observed, x, side="right")
    out = ndtri(np.maximum(counts, 1) / (n + 1.0))
    return out if np.ndim(out) else float(out)


def from_latent_continuous(m: ContinuousMarginal, z):
    """Empirical quantile at Phi(z), linear between order statistics.

    Order statistic ``i`` sits at probability ``i / (n + 1)``, which makes this
    an exact inverse of :func:`to_latent_continuous` on the observed values.
    """
    n = m.n_obs
    knots = np.arange(1, n + 1) / (n + 1.0)
    out = np.interp(ndtr(z), knots, m.sorted_observed)
    return out if np.ndim(out) else float(out)


def fit_ordinal(column_observed, k: int) -> OrdinalMarginal:
    levels = np.asarray(column_observed)
    if k < 1:
        raise MarginalError("level count must be positive")
    if levels.size and (levels.min() < 1 or levels.max() > k):
        raise MarginalError(f"levels must lie in 1..{k}")
    counts = np.bincount(levels.astype(int), minlength=k + 1)[1:]
    missing = np.flatnonzero(counts == 0)
    if missing.size:
        raise MarginalError(f"ordinal level(s) {list(missing + 1)} never observed; cutoffs would coincide")
    cum = np.cumsum(counts)[:-1]
    cutoffs = ndtri(cum / (levels.size + 1.0))
    cutoffs.flags.writeable = False
    return OrdinalMarginal(cutoffs, int(k))


def cutoff_apply(m: OrdinalMarginal, z):
    out = 1 + np.searchsorted(m.cutoffs, z, side="left")
    return out if np.ndim(out) else int(out)


def latent_interval(m: OrdinalMarginal, level: int) -> LatentInterval:
    if not 1 <= level <= m.level_count:
        raise MarginalError(f"level {level} outside 1..{m.level_count}")
    lo, hi = interval_bounds(m, np.array([level]))
    return LatentInterval(float(lo[0]), float(hi[0]))


def interval_bounds(m: OrdinalMarginal, levels):
    """Vectorised (lower, upper] bounds for an array of levels."""
    edges = np.concatenate(([-np.inf], m.cutoffs, [np.inf]))
    idx = np.asarray(levels, dtype=int)
    return edges[idx - 1], edges[idx]


def fit_marginals(data) -> list:
    """Fit one marginal per column of a :class:`MixedDataMatrix`."""
    out = []
    for j, kind in enumerate(data.kinds):
        col = data.observed_column(j)
        try:
            if kind.ordinal:
                out.append(fit_ordinal(col.astype(int), kind.levels))
            else:
                out.append(fit_continuous(col))
        except MarginalError as exc:
            raise MarginalError(f"column {data.column_names[j]!r}: {exc}") from None
    return out


def latent_inputs(data, marginals):
    """Latent point values and interval bounds for every observed cell.

    Returns ``(z, lower, upper)``: continuous cells carry their transformed
    value in ``z``; ordinal cells carry their (lower, upper] bounds; all other
    entries are NaN / +-inf.
    """
    n, p = data.values.shape
    z = np.full((n, p), np.nan)
    lower = np.full((n, p), -np.inf)
    upper = np.full((n, p), np.inf)
    for j, m in enumerate(marginals):
        obs = data.mask[:, j]
        col = data.values[obs, j]
        if isinstance(m, ContinuousMarginal):
            z[obs, j] = to_latent_continuous(m, col)
        else:
            lo, hi = interval_bounds(m, col.astype(int))
            lower[obs, j] = lo
            upper[obs, j] = hi
    return z, lower, upper
