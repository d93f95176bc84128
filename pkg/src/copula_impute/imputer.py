"""Single and multiple imputation from a fitted copula model."""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import LinAlgError, cho_factor, cho_solve

from .data import DataError, MixedDataMatrix
from .em import EmConfig, FitResult, LatentState, _Problem, estep
from .marginals import ContinuousMarginal, cutoff_apply, from_latent_continuous
from .truncnorm import gibbs_truncated

logger = logging.getLogger(__name__)


@dataclass
class ImputationResult:
    completed: MixedDataMatrix
    imputed_mask: np.ndarray
    latent: np.ndarray | None = None
    diagnostics: dict = field(default_factory=dict)


@dataclass
class MultipleImputationResult:
    draws: list
    seed: int
    latent_draws: np.ndarray | None = field(default=None, repr=False)


def _check_compatible(data: MixedDataMatrix, model: FitResult):
    if data.p != len(model.marginals):
        raise DataError(f"data has {data.p} columns, model has {len(model.marginals)}")
    for j, (kind, m) in enumerate(zip(data.kinds, model.marginals)):
        if kind.ordinal == isinstance(m, ContinuousMarginal):
            raise DataError(f"column {data.column_names[j]!r}: kind {kind} does not match the fitted marginal")
        if kind.ordinal and kind.levels != m.level_count:
            raise DataError(
                f"column {data.column_names[j]!r}: {kind.levels} levels but the model has {m.level_count}"
            )


def _same_data(a, b) -> bool:
    return (
        a is b
        or (b is not None and a.values.shape == b.values.shape
            and np.array_equal(a.mask, b.mask)
            and np.array_equal(a.values, b.values, equal_nan=True))
    )


def latent_conditional_means(data: MixedDataMatrix, model: FitResult, config: EmConfig | None = None):
    """One E-step at the fitted correlation; returns the latent state.

    When ``data`` is the matrix the model was fitted on, the ordinal estimates
    from the last EM iteration are the starting point; otherwise they start
    from the univariate truncated means.
    """
    config = config or EmConfig()
    _check_compatible(data, model)
    problem = _Problem.build(data, model.marginals)
    state = problem.initial_state()
    if model.state is not None and _same_data(data, model.data):
        state = LatentState(model.state.mean.copy(), model.state.var.copy())
    estep(problem, model.sigma, state, config)
    return state, problem


def _to_observed(data, marginals, z, which):
    """Map latent values through the marginals at the cells flagged by ``which``."""
    values = np.array(data.values, dtype=float)
    for j, m in enumerate(marginals):
        rows = which[:, j]
        if not np.any(rows):
            continue
        if isinstance(m, ContinuousMarginal):
            values[rows, j] = from_latent_continuous(m, z[rows, j])
        else:
            values[rows, j] = cutoff_apply(m, z[rows, j])
    return values


def impute(data: MixedDataMatrix, model: FitResult, config: EmConfig | None = None) -> ImputationResult:
    """Fill every missing cell with the marginal transform of its conditional mean."""
    state, _ = latent_conditional_means(data, model, config)
    missing = ~data.mask
    values = _to_observed(data, model.marginals, state.mean, missing)
    empty_rows = np.flatnonzero(~data.mask.any(axis=1))
    if empty_rows.size:
        logger.warning("%d rows had no observed cells and were imputed from the prior", empty_rows.size)
    completed = data.with_values(values, np.ones(data.mask.shape, bool))
    return ImputationResult(
        completed,
        missing,
        state.mean,
        {"rows_without_observations": empty_rows.tolist()},
    )


def impute_multiple(data: MixedDataMatrix, model: FitResult, m: int = 5, seed: int = 0,
                    sweeps: int = 20, config: EmConfig | None = None) -> MultipleImputationResult:
    """Draw ``m`` completions by conditional sampling.

    Per row: Gibbs-sample the latent ordinal coordinates inside their
    intervals (starting from the conditional means), then draw the missing
    coordinates from the normal conditional on the sampled observed ones.
    Each row has its own generator seeded by ``(seed, row)``.
    """
    if m < 2:
        raise ValueError("multiple imputation needs m >= 2")
    state, problem = latent_conditional_means(data, model, config)
    ridge = (config or EmConfig()).ridge
    sigma = model.sigma
    n, p = data.n, data.p
    obs_all = data.mask
    is_ord = data.is_ordinal
    z_draws = np.repeat(state.mean[None, :, :], m, axis=0)
    for i in range(n):
        o = np.flatnonzero(obs_all[i])
        mis = np.flatnonzero(~obs_all[i])
        if mis.size == 0 and not np.any(is_ord[o]):
            continue
        rng = np.random.default_rng([seed, i])
        zo = np.tile(state.mean[i, o], (m, 1))
        if o.size:
            s_oo = sigma[np.ix_(o, o)]
            try:
                fac = cho_factor(s_oo, lower=True)
            except LinAlgError:
                fac = cho_factor(s_oo + ridge * np.eye(o.size), lower=True)
            prec = cho_solve(fac, np.eye(o.size))
            free = np.flatnonzero(is_ord[o])
            if free.size:
                lo = problem.lower[i, o[free]]
                hi = problem.upper[i, o[free]]
                zo = gibbs_truncated(prec, zo, free, lo, hi, sweeps, rng)
            if mis.size:
                b = sigma[np.ix_(mis, o)] @ prec
                cond = sigma[np.ix_(mis, mis)] - b @ sigma[np.ix_(o, mis)]
                mean_m = zo @ b.T
        else:
            cond = sigma[np.ix_(mis, mis)]
            mean_m = np.zeros((m, mis.size))
        if mis.size:
            cond = 0.5 * (cond + cond.T)
            w, v = np.linalg.eigh(cond)
            root = v * np.sqrt(np.clip(w, 0.0, None))
            eps = rng.standard_normal((m, mis.size))
            z_draws[:, i, mis] = mean_m + eps @ root.T
        z_draws[:, i, o] = zo
    missing = ~data.mask
    draws = []
    for d in range(m):
        values = _to_observed(data, model.marginals, z_draws[d], missing)
        draws.append(ImputationResult(data.with_values(values, np.ones(data.mask.shape, bool)), missing, z_draws[d]))
    return MultipleImputationResult(draws, seed, z_draws)

