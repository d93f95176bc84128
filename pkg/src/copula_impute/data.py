"""Mixed continuous/ordinal data with an explicit missingness mask, plus CSV I/O."""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

DEFAULT_MISSING_MARKERS = ("", "NA")


class DataError(ValueError):
    """Malformed input data (parse errors, ragged rows, schema mismatch)."""


@dataclass(frozen=True)
class VariableKind:
    """Continuous, or Ordinal with ``levels`` categories (binary is Ordinal(2))."""

    ordinal: bool
    levels: int = 0

    def __post_init__(self):
        if self.ordinal and self.levels < 1:
            raise ValueError("ordinal kind needs at least one level")

    @classmethod
    def continuous(cls) -> "VariableKind":
        return cls(False, 0)

    @classmethod
    def make_ordinal(cls, levels: int) -> "VariableKind":
        return cls(True, int(levels))

    @property
    def is_binary(self) -> bool:
        return self.ordinal and self.levels == 2

    @property
    def type_name(self) -> str:
        """Metric bucket: ``continuous``, ``binary`` or ``ordinal``."""
        if not self.ordinal:
            return "continuous"
        return "binary" if self.levels == 2 else "ordinal"

    def __str__(self):
        return f"Ordinal({self.levels})" if self.ordinal else "Continuous"


@dataclass
class ColumnSchema:
    """Per-column kind overrides and the ordinal auto-detection threshold.

    Columns not named in ``overrides`` are Ordinal when they have at most
    ``threshold`` distinct observed values, Continuous otherwise.
    """

    overrides: dict = field(default_factory=dict)
    threshold: int = 20
    missing_markers: tuple = DEFAULT_MISSING_MARKERS

    def __post_init__(self):
        if self.threshold < 2:
            raise ValueError("ordinal detection threshold must be >= 2")
        for name, kind in self.overrides.items():
            if kind not in ("continuous", "ordinal"):
                raise ValueError(f"unknown kind {kind!r} for column {name!r}")


def read_schema(path, threshold: int = 20) -> ColumnSchema:
    """Parse ``column=<name> kind=<continuous|ordinal>`` lines.

    Blank lines and ``#`` comments are skipped.
    """
    overrides = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            fields = {}
            for token in line.split():
                key, sep, value = token.partition("=")
                if not sep:
                    raise DataError(f"{path}:{lineno}: expected key=value, got {token!r}")
                fields[key] = value
            if "column" not in fields or "kind" not in fields:
                raise DataError(f"{path}:{lineno}: need both column= and kind=")
            overrides[fields["column"]] = fields["kind"].lower()
    return ColumnSchema(overrides=overrides, threshold=threshold)


@dataclass(frozen=True, eq=False)
class MixedDataMatrix:
    """n x p cells, observed mask (True = observed) and per-column kinds.

    Ordinal cells are stored as level indices ``1..k``; ``labels[j]`` holds the
    sorted original label values so that level ``l`` decodes to
    ``labels[j][l - 1]``. Continuous columns have ``labels[j] is None``.
    Masked cells hold NaN.
    """

    values: np.ndarray
    mask: np.ndarray
    kinds: tuple
    column_names: tuple
    labels: tuple

    def __post_init__(self):
        values = np.array(self.values, dtype=float)
        mask = np.array(self.mask, dtype=bool)
        if values.ndim != 2 or values.shape != mask.shape:
            raise DataError("values and mask must be matching 2-d arrays")
        p = values.shape[1]
        if not (len(self.kinds) == len(self.column_names) == len(self.labels) == p):
            raise DataError("kinds, column_names and labels must have one entry per column")
        values[~mask] = np.nan
        if not np.all(np.isfinite(values[mask])):
            raise DataError("observed cells must be finite")
        for j, kind in enumerate(self.kinds):
            if not kind.ordinal:
                continue
            col = values[mask[:, j], j]
            if col.size and (np.any(col != np.round(col)) or col.min() < 1 or col.max() > kind.levels):
                raise DataError(
                    f"column {self.column_names[j]!r}: ordinal cells must be level indices in 1..{kind.levels}"
                )
            if self.labels[j] is None or len(self.labels[j]) != kind.levels:
                raise DataError(f"column {self.column_names[j]!r}: label table must have {kind.levels} entries")
        values.flags.writeable = False
        mask.flags.writeable = False
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "mask", mask)
        object.__setattr__(self, "kinds", tuple(self.kinds))
        object.__setattr__(self, "column_names", tuple(self.column_names))
        object.__setattr__(
            self, "labels", tuple(None if lab is None else tuple(float(v) for v in lab) for lab in self.labels)
        )

    @property
    def n(self) -> int:
        return self.values.shape[0]

    @property
    def p(self) -> int:
        return self.values.shape[1]

    @property
    def is_ordinal(self) -> np.ndarray:
        return np.array([k.ordinal for k in self.kinds], dtype=bool)

    @classmethod
    def from_raw(
        cls,
        raw: np.ndarray,
        mask: np.ndarray | None = None,
        kinds: Sequence[VariableKind] | None = None,
        column_names: Sequence[str] | None = None,
        labels: Sequence | None = None,
        threshold: int = 20,
    ) -> "MixedDataMatrix":
        """Build from raw numeric values, encoding ordinal columns to levels.

        ``mask`` defaults to ``~isnan(raw)``. When ``kinds`` is omitted each
        column is auto-detected with ``threshold``. ``labels`` fixes the label
        table of ordinal columns (needed to encode data against a previously
        fitted model); by default it is the sorted distinct observed values.
        """
        raw = np.asarray(raw, dtype=float)
        if raw.ndim != 2:
            raise DataError("raw data must be 2-d")
        if mask is None:
            mask = ~np.isnan(raw)
        mask = np.asarray(mask, dtype=bool)
        n, p = raw.shape
        names = tuple(column_names) if column_names is not None else tuple(f"x{j + 1}" for j in range(p))
        if kinds is None:
            kinds = [detect_kind(raw[mask[:, j], j], threshold) for j in range(p)]
        values = np.full((n, p), np.nan)
        table = []
        out_kinds = []
        for j, kind in enumerate(kinds):
            col = raw[:, j]
            obs = mask[:, j]
            if not kind.ordinal:
                values[obs, j] = col[obs]
                table.append(None)
                out_kinds.append(kind)
                continue
            lab = np.unique(col[obs]) if labels is None or labels[j] is None else np.asarray(labels[j], float)
            if lab.size == 0:
                raise DataError(f"column {names[j]!r}: ordinal column has no observed values")
            idx = np.searchsorted(lab, col[obs])
            idx_c = np.minimum(idx, lab.size - 1)
            bad = lab[idx_c] != col[obs]
            if np.any(bad):
                row = int(np.flatnonzero(obs)[np.argmax(bad)])
                raise DataError(f"column {names[j]!r}, row {row + 1}: value {col[row]!r} not in label table")
            values[obs, j] = idx_c + 1
            table.append(tuple(lab))
            out_kinds.append(VariableKind.make_ordinal(lab.size))
        return cls(values, mask, tuple(out_kinds), names, tuple(table))

    def decoded(self) -> np.ndarray:
        """Cell values on the original scale (ordinal levels mapped to labels)."""
        out = np.array(self.values, dtype=float)
        for j, lab in enumerate(self.labels):
            if lab is None:
                continue
            obs = self.mask[:, j]
            out[obs, j] = np.asarray(lab)[self.values[obs, j].astype(int) - 1]
        return out

    def with_values(self, values: np.ndarray, mask: np.ndarray | None = None) -> "MixedDataMatrix":
        """Copy with new internal values (and optionally a new mask)."""
        return MixedDataMatrix(
            values, self.mask if mask is None else mask, self.kinds, self.column_names, self.labels
        )

    def with_mask(self, mask: np.ndarray) -> "MixedDataMatrix":
        return MixedDataMatrix(self.values, mask, self.kinds, self.column_names, self.labels)

    def observed_column(self, j: int) -> np.ndarray:
        return self.values[self.mask[:, j], j]


def detect_kind(observed: np.ndarray, threshold: int = 20) -> VariableKind:
    """Integer-valued columns with at most ``threshold`` distinct values are
    ordinal; anything else is continuous. A single distinct value is always
    Ordinal(1) since no continuous transform can be fitted to it."""
    distinct = np.unique(observed)
    if distinct.size <= 1:
        return VariableKind.make_ordinal(1)
    if distinct.size <= threshold and np.all(distinct == np.round(distinct)):
        return VariableKind.make_ordinal(distinct.size)
    return VariableKind.continuous()


def _parse_cell(text: str, markers: Iterable[str]) -> float:
    if text.strip() in markers:
        return math.nan
    return float(text)


def read_csv_raw(path, missing_markers=DEFAULT_MISSING_MARKERS):
    """Header and an n x p float array (NaN for missing) from a CSV file."""
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise DataError(f"{path}: empty file (header row required)")
    header = [h.strip() for h in rows[0]]
    p = len(header)
    body = [r for r in rows[1:] if r]
    raw = np.full((len(body), p), np.nan)
    for i, row in enumerate(body):
        if len(row) != p:
            raise DataError(f"{path}: row {i + 1} has {len(row)} fields, header has {p}")
        for j, cell in enumerate(row):
            try:
                raw[i, j] = _parse_cell(cell, missing_markers)
            except ValueError:
                raise DataError(f"{path}: non-numeric cell {cell!r} at row {i + 1}, column {header[j]!r}") from None
    return header, raw


def read_csv(path, schema: ColumnSchema | None = None) -> MixedDataMatrix:
    """Read a header-first CSV; empty cells and ``NA`` are missing.

    Kinds come from ``schema.overrides`` when given, else from the distinct
    value count rule. Ordinal values are remapped to levels ``1..k`` in
    numeric order and the original labels kept for :func:`write_csv`.
    """
    schema = schema or ColumnSchema()
    header, raw = read_csv_raw(path, schema.missing_markers)
    unknown = set(schema.overrides) - set(header)
    if unknown:
        raise DataError(f"{path}: schema names unknown columns {sorted(unknown)}")
    mask = ~np.isnan(raw)
    kinds = []
    for j, name in enumerate(header):
        override = schema.overrides.get(name)
        if override == "continuous":
            kinds.append(VariableKind.continuous())
        elif override == "ordinal":
            kinds.append(VariableKind.make_ordinal(max(np.unique(raw[mask[:, j], j]).size, 1)))
        else:
            kinds.append(detect_kind(raw[mask[:, j], j], schema.threshold))
    return MixedDataMatrix.from_raw(raw, mask, kinds, header)


def _format(value: float) -> str:
    if value == int(value) and abs(value) < 1e15:
        return str(int(value))
    return repr(float(value))


def write_csv(data: MixedDataMatrix, path) -> None:
    """Write ``data`` with ordinal columns decoded back to their labels.

    Masked cells are written as empty fields. Floats use ``repr`` so values
    round-trip exactly.
    """
    decoded = data.decoded()
    path = Path(path)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(data.column_names)
        for i in range(data.n):
            writer.writerow(
                _format(decoded[i, j]) if data.mask[i, j] else "" for j in range(data.p)
            )
