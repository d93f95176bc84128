"""Save and load a fitted model as a correlation CSV plus a JSON marginals file."""
from __future__ import annotations

import csv
import json
from pathlib import Path

import numpy as np

from .data import DataError, VariableKind
from .em import FitResult
from .marginals import ContinuousMarginal, OrdinalMarginal

SIGMA_FILE = "sigma.csv"
MARGINALS_FILE = "marginals.json"


def write_matrix(matrix, names, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(names)
        for row in np.asarray(matrix):
            writer.writerow(repr(float(v)) for v in row)


def read_matrix(path):
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    names = rows[0]
    mat = np.array([[float(v) for v in r] for r in rows[1:] if r])
    if mat.shape != (len(names), len(names)):
        raise DataError(f"{path}: expected a {len(names)}x{len(names)} matrix")
    return names, mat


def save_model(model: FitResult, names, labels, directory) -> tuple:
    """Write ``sigma.csv`` and ``marginals.json`` into ``directory``."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    write_matrix(model.sigma, names, directory / SIGMA_FILE)
    columns = []
    for name, m, lab in zip(names, model.marginals, labels):
        if isinstance(m, ContinuousMarginal):
            columns.append({"name": name, "kind": "continuous", "sorted_observed": m.sorted_observed.tolist()})
        else:
            columns.append({
                "name": name, "kind": "ordinal", "levels": m.level_count,
                "cutoffs": m.cutoffs.tolist(), "labels": list(lab),
            })
    meta = {"iterations": model.iterations, "converged": model.converged,
            "sigma_change_trace": model.sigma_change_trace, "columns": columns}
    with open(directory / MARGINALS_FILE, "w", encoding="utf-8") as fh:
        json.dump(meta, fh, indent=1)
    return directory / SIGMA_FILE, directory / MARGINALS_FILE


def load_model(sigma_path, marginals_path):
    """Return ``(model, names, kinds, labels)`` from files written by :func:`save_model`."""
    names, sigma = read_matrix(sigma_path)
    with open(marginals_path, encoding="utf-8") as fh:
        meta = json.load(fh)
    cols = meta["columns"]
    if [c["name"] for c in cols] != names:
        raise DataError("marginals file and correlation matrix name different columns")
    marginals, kinds, labels = [], [], []
    for c in cols:
        if c["kind"] == "continuous":
            marginals.append(ContinuousMarginal(np.asarray(c["sorted_observed"], float)))
            kinds.append(VariableKind.continuous())
            labels.append(None)
        else:
            marginals.append(OrdinalMarginal(np.asarray(c["cutoffs"], float), int(c["levels"])))
            kinds.append(VariableKind.make_ordinal(int(c["levels"])))
            labels.append(tuple(c["labels"]))
    model = FitResult(sigma, marginals, meta.get("iterations", 0), meta.get("sigma_change_trace", []),
                      meta.get("converged", False))
    return model, names, kinds, labels
