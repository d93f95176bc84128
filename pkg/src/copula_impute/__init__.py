"""Gaussian copula imputation for incomplete mixed continuous/ordinal data.

Typical use::

    from copula_impute import read_csv, fit, impute
    data = read_csv("survey.csv")
    model = fit(data)
    completed = impute(data, model).completed
"""
from ._backend import BACKEND
from .data import ColumnSchema, MixedDataMatrix, VariableKind, read_csv, read_schema, write_csv
from .em import EmConfig, FitResult, NumericalError, estep_row, fit, project_elliptope
from .evaluate import MetricReport, corr_rel_error, holdout_experiment, smae
from .imputer import ImputationResult, MultipleImputationResult, impute, impute_multiple
from .marginals import (
    ContinuousMarginal,
    OrdinalMarginal,
    cutoff_apply,
    fit_continuous,
    fit_ordinal,
    from_latent_continuous,
    latent_interval,
    to_latent_continuous,
)
from .truncnorm import univariate_moments

__all__ = [
    "BACKEND", "ColumnSchema", "MixedDataMatrix", "VariableKind", "read_csv", "read_schema", "write_csv",
    "EmConfig", "FitResult", "NumericalError", "estep_row", "fit", "project_elliptope",
    "MetricReport", "corr_rel_error", "holdout_experiment", "smae",
    "ImputationResult", "MultipleImputationResult", "impute", "impute_multiple",
    "ContinuousMarginal", "OrdinalMarginal", "cutoff_apply", "fit_continuous", "fit_ordinal",
    "from_latent_continuous", "latent_interval", "to_latent_continuous", "univariate_moments",
]
