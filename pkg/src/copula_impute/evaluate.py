"""Imputation and correlation-recovery metrics, and a masked-holdout driver."""
from __future__ import annotations

import csv
import logging
import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .data import DataError, MixedDataMatrix

logger = logging.getLogger(__name__)

TYPES = ("continuous", "binary", "ordinal")


@dataclass
class MetricReport:
    smae_by_type: dict
    mae: float
    rmse: float
    per_column_smae: np.ndarray
    corr_rel_error: float | None = None
    extra: dict = field(default_factory=dict)

    def as_row(self) -> dict:
        row = {f"smae_{t}": self.smae_by_type.get(t, math.nan) for t in TYPES}
        row.update(mae=self.mae, rmse=self.rmse)
        if self.corr_rel_error is not None:
            row["corr_rel_error"] = self.corr_rel_error
        row.update(self.extra)
        return row


def smae(imputed, truth, observed_median) -> float:
    """Scaled MAE: L1 error of ``imputed`` over L1 error of the median fill.

    Returns NaN when the median reproduces ``truth`` exactly (undefined).
    """
    imputed = np.asarray(imputed, float)
    truth = np.asarray(truth, float)
    if imputed.shape != truth.shape or imputed.size == 0:
        raise ValueError("imputed and truth must be non-empty and the same length")
    denom = np.abs(observed_median - truth).sum()
    if denom == 0:
        return math.nan
    return float(np.abs(imputed - truth).sum() / denom)


def corr_rel_error(estimate, truth) -> float:
    estimate = np.asarray(estimate, float)
    truth = np.asarray(truth, float)
    if estimate.shape != truth.shape:
        raise ValueError("correlation matrices differ in shape")
    return float(np.linalg.norm(estimate - truth) / np.linalg.norm(truth))


def column_median(values, ordinal: bool) -> float:
    """Median of observed values; for ordinals the lower middle element."""
    v = np.sort(np.asarray(values, float))
    if v.size == 0:
        raise ValueError("no observed values")
    if ordinal:
        return float(v[(v.size - 1) // 2])
    return float(np.median(v))


def score(imputed: np.ndarray, truth: np.ndarray, test_mask: np.ndarray, train: MixedDataMatrix,
          sigma_hat=None, sigma_true=None) -> MetricReport:
    """Score imputations on the cells flagged by ``test_mask``.

    ``imputed`` and ``truth`` are on the original scale (decoded labels);
    column medians come from the observed cells of ``train``.
    """
    test_mask = np.asarray(test_mask, bool)
    if not test_mask.any():
        raise DataError("empty test set: no held-out cells to score")
    train_decoded = train.decoded()
    per_col = np.full(train.p, math.nan)
    buckets = {t: [] for t in TYPES}
    for j, kind in enumerate(train.kinds):
        rows = test_mask[:, j]
        if not rows.any():
            continue
        med = column_median(train_decoded[train.mask[:, j], j], kind.ordinal)
        per_col[j] = smae(imputed[rows, j], truth[rows, j], med)
        if math.isnan(per_col[j]):
            warnings.warn(f"column {train.column_names[j]!r}: SMAE undefined (median is exact)", stacklevel=2)
            continue
        buckets[kind.type_name].append(per_col[j])
    err = imputed[test_mask] - truth[test_mask]
    cre = None
    if sigma_true is not None and sigma_hat is not None:
        cre = corr_rel_error(sigma_hat, sigma_true)
    return MetricReport(
        {t: float(np.mean(v)) for t, v in buckets.items() if v},
        float(np.mean(np.abs(err))),
        float(np.sqrt(np.mean(err ** 2))),
        per_col,
        cre,
    )


def holdout_experiment(data: MixedDataMatrix, mask_ratio: float, repeats: int = 1, seed: int = 0,
                       config=None, sigma_true=None, test_mask=None) -> list:
    """Mask extra observed cells, fit, impute and score, ``repeats`` times.

    Repeat ``r`` uses seed ``seed + r`` for its mask. With an explicit
    ``test_mask`` the same cells are held out on every repeat. Failures of a
    repeat are logged and recorded as ``None`` rather than aborting the run.
    """
    from .em import fit
    from .imputer import impute
    from .synthetic import mask_mcar

    if test_mask is None and mask_ratio <= 0:
        raise DataError("empty test set: mask_ratio must be positive")
    truth = data.decoded()
    reports = []
    for r in range(repeats):
        try:
            if test_mask is None:
                train = mask_mcar(data, mask_ratio, seed + r)
                held = data.mask & ~train.mask
            else:
                held = np.asarray(test_mask, bool) & data.mask
                train = data.with_mask(data.mask & ~held)
            model = fit(train, config)
            completed = impute(train, model, config).completed.decoded()
            rep = score(completed, truth, held, train, model.sigma, sigma_true)
            rep.extra = {"repeat": r, "iterations": model.iterations}
            reports.append(rep)
        except (ArithmeticError, ValueError) as exc:
            logger.error("repeat %d failed: %s", r, exc)
            reports.append(None)
    return reports


def summarize(reports) -> dict:
    """Mean and standard deviation of each metric over successful repeats."""
    rows = [r.as_row() for r in reports if r is not None]
    if not rows:
        return {}
    keys = [k for k in rows[0] if k not in ("repeat", "iterations")]
    out = {}
    for k in keys:
        vals = np.array([row.get(k, math.nan) for row in rows], float)
        vals = vals[~np.isnan(vals)]
        if vals.size:
            out[k] = (float(vals.mean()), float(vals.std(ddof=1)) if vals.size > 1 else 0.0)
    return out


def write_report(reports, path) -> None:
    """Per-repeat metrics as CSV."""
    rows = [r.as_row() for r in reports if r is not None]
    keys = []
    for row in rows:
        keys += [k for k in row if k not in keys]
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.DictWriter(fh, fieldnames=keys)
        writer.writeheader()
        for row in rows:
            writer.writerow(row)


def format_report(reports) -> str:
    """Aligned ``metric  mean(sd)`` table."""
    summary = summarize(reports)
    width = max((len(k) for k in summary), default=6)
    lines = [f"{'metric'.ljust(width)}  mean(sd)"]
    for k, (mu, sd) in summary.items():
        lines.append(f"{k.ljust(width)}  {mu:.3f}({sd:.3f})")
    return "\n".join(lines)
