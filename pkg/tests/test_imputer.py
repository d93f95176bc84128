from statistics import NormalDist

import numpy as np
import pytest

from copula_impute import synthetic
from copula_impute.data import DataError, MixedDataMatrix, VariableKind
from copula_impute.em import EmConfig, FitResult, fit
from copula_impute.imputer import impute, impute_multiple
from copula_impute.marginals import cutoff_apply, fit_marginals, from_latent_continuous

C = VariableKind.continuous()


def _identity_model(data):
    return FitResult(np.eye(data.p), fit_marginals(data), 1, [0.0], True)


def test_identity_model_imputes_medians(mixed_small):
    _, masked, _ = mixed_small
    model = _identity_model(masked)
    out = impute(masked, model)
    for j, m in enumerate(model.marginals):
        miss = ~masked.mask[:, j]
        expected = cutoff_apply(m, 0.0) if masked.kinds[j].ordinal else from_latent_continuous(m, 0.0)
        assert np.all(out.completed.values[miss, j] == expected)


def test_high_correlation_tracks_extreme():
    rng = np.random.default_rng(3)
    n = 50
    z = rng.multivariate_normal([0, 0], [[1, 0.99], [0.99, 1]], size=n)
    raw = np.column_stack([np.exp(z[:, 0]), 10 + z[:, 1]])
    top = int(np.argmax(raw[:, 0]))
    mask = np.ones((n, 2), bool)
    mask[top, 1] = False
    data = MixedDataMatrix.from_raw(raw, mask, [C, C])
    model = FitResult(np.array([[1.0, 0.99], [0.99, 1.0]]), fit_marginals(data), 1, [0.0], True)
    got = impute(data, model).completed.values[top, 1]
    # brute force: latent score of the column-1 maximum, conditional mean, then the interpolated quantile
    n1 = n
    z1 = NormalDist().inv_cdf(n1 / (n1 + 1))
    prob = NormalDist().cdf(0.99 * z1)
    col2 = np.sort(raw[mask[:, 1], 1])
    pos = prob * (col2.size + 1)
    lo = int(np.floor(pos))
    expected = col2[-1] if pos >= col2.size else col2[lo - 1] + (pos - lo) * (col2[lo] - col2[lo - 1])
    assert got == pytest.approx(expected, abs=1e-12)
    assert got >= col2[-3]


def test_observed_cells_bit_exact_and_ranges(mixed_small):
    _, masked, _ = mixed_small
    model = fit(masked)
    out = impute(masked, model)
    done = out.completed
    assert done.mask.all()
    np.testing.assert_array_equal(done.values[masked.mask], masked.values[masked.mask])
    np.testing.assert_array_equal(out.imputed_mask, ~masked.mask)
    for j, kind in enumerate(masked.kinds):
        col = done.values[:, j]
        obs = masked.observed_column(j)
        if kind.ordinal:
            assert set(np.unique(col)) <= set(range(1, kind.levels + 1))
        else:
            assert col.min() >= obs.min() and col.max() <= obs.max()


def test_complete_matrix_unchanged(mixed_small):
    complete, _, _ = mixed_small
    model = fit(complete, EmConfig(max_iter=3))
    out = impute(complete, model)
    np.testing.assert_array_equal(out.completed.values, complete.values)


def test_ordinal_relabel_invariance(mixed_small):
    _, masked, _ = mixed_small
    raw = masked.decoded()
    relabeled = raw.copy()
    relabeled[:, 4] = relabeled[:, 4] ** 2 * 10  # levels 1..4 -> 10, 40, 90, 160
    a = impute(masked, fit(masked)).completed
    other = MixedDataMatrix.from_raw(relabeled, masked.mask, masked.kinds, masked.column_names)
    b = impute(other, fit(other)).completed
    np.testing.assert_array_equal(a.values, b.values)
    np.testing.assert_array_equal(b.decoded()[:, 4], a.decoded()[:, 4] ** 2 * 10)


def test_empty_row_uses_prior(mixed_small):
    _, masked, _ = mixed_small
    mask = masked.mask.copy()
    mask[7] = False
    data = masked.with_mask(mask)
    model = fit(data)
    out = impute(data, model)
    assert out.diagnostics["rows_without_observations"] == [7]
    for j, m in enumerate(model.marginals):
        expected = cutoff_apply(m, 0.0) if data.kinds[j].ordinal else from_latent_continuous(m, 0.0)
        assert out.completed.values[7, j] == expected


def test_incompatible_model(mixed_small):
    _, masked, _ = mixed_small
    model = fit(masked)
    sub = MixedDataMatrix.from_raw(masked.decoded()[:, :3], masked.mask[:, :3], masked.kinds[:3])
    with pytest.raises(DataError):
        impute(sub, model)


def test_multiple_contracts(mixed_small):
    _, masked, _ = mixed_small
    model = fit(masked)
    a = impute_multiple(masked, model, m=4, seed=7)
    b = impute_multiple(masked, model, m=4, seed=7)
    c = impute_multiple(masked, model, m=4, seed=8)
    assert len(a.draws) == 4 and a.seed == 7
    for d in a.draws:
        np.testing.assert_array_equal(d.completed.values[masked.mask], masked.values[masked.mask])
    for da, db in zip(a.draws, b.draws):
        np.testing.assert_array_equal(da.completed.values, db.completed.values)
    assert not np.array_equal(a.draws[0].completed.values, c.draws[0].completed.values)
    # draws differ from each other on missing continuous cells
    miss = ~masked.mask[:, 0]
    assert not np.array_equal(a.draws[0].completed.values[miss, 0], a.draws[1].completed.values[miss, 0])
    # ordinal latent draws respect their intervals
    from copula_impute.em import _Problem

    prob = _Problem.build(masked, model.marginals)
    ord_obs = masked.mask & masked.is_ordinal[None, :]
    for zd in a.latent_draws:
        assert np.all((zd[ord_obs] > prob.lower[ord_obs]) & (zd[ord_obs] <= prob.upper[ord_obs]))
    with pytest.raises(ValueError):
        impute_multiple(masked, model, m=1)


def test_multiple_mean_matches_conditional_mean(mixed_small):
    _, masked, _ = mixed_small
    model = fit(masked)
    rows = np.arange(40)
    sub = MixedDataMatrix(masked.values[rows], masked.mask[rows], masked.kinds, masked.column_names, masked.labels)
    single = impute(sub, model)
    multi = impute_multiple(sub, model, m=1000, seed=3)
    zd = multi.latent_draws
    cont_miss = ~sub.mask & ~sub.is_ordinal[None, :]
    mean = zd.mean(axis=0)[cont_miss]
    se = zd.std(axis=0, ddof=1)[cont_miss] / np.sqrt(zd.shape[0])
    target = single.latent[cont_miss]
    assert cont_miss.sum() >= 10
    assert np.all(np.abs(mean - target) <= 3 * se)
