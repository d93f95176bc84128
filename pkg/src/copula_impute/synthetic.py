"""Well-specified Gaussian copula datasets and MCAR masking."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import log_ndtr, ndtri

from .data import DataError, MixedDataMatrix, VariableKind
from .em import project_elliptope


@dataclass(frozen=True)
class Family:
    """Marginal family of one synthetic column.

    ``kind`` is ``"exponential"``, ``"binary"`` or ``"ordinal"``. ``masses``
    optionally fixes the level probabilities of binary/ordinal columns
    (equiprobable otherwise).
    """

    kind: str
    rate: float = 1.0
    levels: int = 2
    masses: tuple | None = None

    def __post_init__(self):
        if self.kind not in ("exponential", "binary", "ordinal"):
            raise ValueError(f"unknown family {self.kind!r}")
        if self.kind == "binary" and self.levels != 2:
            object.__setattr__(self, "levels", 2)
        if self.masses is not None:
            m = np.asarray(self.masses, float)
            if m.size != self.levels or np.any(m <= 0) or not np.isclose(m.sum(), 1.0):
                raise ValueError("masses must be positive, one per level, summing to 1")

    @property
    def ordinal(self) -> bool:
        return self.kind != "exponential"

    def cutoffs(self) -> np.ndarray:
        if not self.ordinal:
            return np.array([])
        masses = np.full(self.levels, 1.0 / self.levels) if self.masses is None else np.asarray(self.masses)
        return ndtri(np.cumsum(masses)[:-1])


def exponential(rate=1.0):
    return Family("exponential", rate=rate)


def binary(masses=None):
    return Family("binary", levels=2, masses=masses)


def ordinal(k, masses=None):
    return Family("ordinal", levels=k, masses=masses)


def default_families(p: int, levels: int = 5) -> list:
    """Thirds of exponential, binary and ``levels``-level ordinal columns (5/5/5 at p=15)."""
    n_exp = -(-p // 3)
    n_bin = -(-(p - n_exp) // 2)
    n_ord = p - n_exp - n_bin
    return [exponential()] * n_exp + [binary()] * n_bin + [ordinal(levels)] * n_ord


@dataclass
class SyntheticSpec:
    n: int
    families: list
    missing_ratio: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if not 0 <= self.missing_ratio < 1:
            raise ValueError("missing_ratio must lie in [0, 1)")
        if len(self.families) < 2:
            raise ValueError("need at least two columns")

    @property
    def p(self) -> int:
        return len(self.families)


def random_correlation(p: int, seed: int = 0) -> np.ndarray:
    """Normalised Gram matrix of a p x p standard normal draw."""
    rng = np.random.default_rng(seed)
    a = rng.standard_normal((p, p))
    return project_elliptope(a @ a.T)


def generate(sigma, spec: SyntheticSpec):
    """Draw ``spec.n`` rows; returns ``(data, latent_z, cutoffs)``.

    ``data`` is complete; ``cutoffs[j]`` is the true threshold vector of
    ordinal column j (empty for continuous columns). Ordinal labels are 1..k.
    """
    sigma = np.asarray(sigma, float)
    if sigma.shape != (spec.p, spec.p):
        raise ValueError("sigma dimension does not match the number of families")
    rng = np.random.default_rng(spec.seed)
    z = rng.multivariate_normal(np.zeros(spec.p), sigma, size=spec.n, method="cholesky")
    x = np.empty_like(z)
    kinds = []
    labels = []
    cutoffs = []
    for j, fam in enumerate(spec.families):
        cuts = fam.cutoffs()
        cutoffs.append(cuts)
        if fam.ordinal:
            x[:, j] = 1 + np.searchsorted(cuts, z[:, j], side="left")
            kinds.append(VariableKind.make_ordinal(fam.levels))
            labels.append(tuple(range(1, fam.levels + 1)))
        else:
            # exponential quantile of Phi(z): -log(1 - Phi(z)) / rate
            x[:, j] = -log_ndtr(-z[:, j]) / fam.rate
            kinds.append(VariableKind.continuous())
            labels.append(None)
    names = tuple(f"x{j + 1}" for j in range(spec.p))
    data = MixedDataMatrix(x, np.ones(x.shape, bool), tuple(kinds), names, tuple(labels))
    return data, z, cutoffs


def _column_ok(col_vals, keep, kind, required_levels):
    seen = col_vals[keep]
    if seen.size == 0:
        return False
    if kind.ordinal:
        return np.unique(seen).size == required_levels
    return np.unique(seen).size >= 2


def mask_mcar(data: MixedDataMatrix, ratio: float, seed: int = 0, max_attempts: int = 100) -> MixedDataMatrix:
    """Hide each currently observed cell independently with probability ``ratio``.

    A column's draw is repeated (up to ``max_attempts`` times) until every
    ordinal level that was observed stays observed and continuous columns keep
    two distinct values.
    """
    if not 0 <= ratio < 1:
        raise ValueError("ratio must lie in [0, 1)")
    if ratio == 0:
        return data
    rng = np.random.default_rng(seed)
    mask = data.mask.copy()
    for j, kind in enumerate(data.kinds):
        col = data.values[:, j]
        obs = data.mask[:, j]
        required = np.unique(col[obs]).size
        for _ in range(max_attempts):
            keep = obs & (rng.random(data.n) >= ratio)
            if _column_ok(col, keep, kind, required):
                mask[:, j] = keep
                break
        else:
            raise DataError(
                f"column {data.column_names[j]!r}: could not keep every level observed at ratio {ratio}; use a lower ratio"
            )
    return data.with_mask(mask)
