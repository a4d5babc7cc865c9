"""Tabular observation data: CSV loading, validation, and column views.

The CSV dialect is fixed: comma-separated, UTF-8, header row, '.' decimal,
no quoting of numerics. Missing values are rejected rather than imputed.
Columns mapped to binary roles (treatment, instrument, time, dataset
indicator) must contain only 0/1 values; entries within 1e-12 of 0 or 1 are
snapped to guard against float round-trip noise.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, fields

import numpy as np

from .errors import SchemaError, ValidationError, DataError

BINARY_SNAP_TOL = 1e-12

# roles whose columns must be 0/1 indicators
_BINARY_ROLES = ("treatment", "instrument", "time", "dataset_indicator")


@dataclass(frozen=True)
class ColumnMapping:
    """Assignment of dataset columns to observation roles.

    ``covariates`` is the full adjustment set X; ``target_covariates`` is the
    subvector V the target function is defined on and must be a subset of
    ``covariates``. ``numerator``/``denominator`` name directly observed
    signal columns and are only used by the RAW estimand.
    """

    covariates: tuple = ()
    target_covariates: tuple = ()
    outcome: str | None = None
    treatment: str | None = None
    instrument: str | None = None
    time: str | None = None
    dataset_indicator: str | None = None
    numerator: str | None = None
    denominator: str | None = None

    def __post_init__(self):
        object.__setattr__(self, "covariates", tuple(self.covariates))
        object.__setattr__(self, "target_covariates", tuple(self.target_covariates))
        missing = [v for v in self.target_covariates if v not in self.covariates]
        if missing:
            raise SchemaError(
                f"target_covariates must be a subset of covariates; "
                f"not in covariates: {missing}")

    def binary_columns(self) -> list:
        return [getattr(self, role) for role in _BINARY_ROLES
                if getattr(self, role) is not None]

    def mapped_columns(self) -> list:
        cols = list(self.covariates)
        for f in fields(self):
            if f.name in ("covariates", "target_covariates"):
                continue
            value = getattr(self, f.name)
            if value is not None and value not in cols:
                cols.append(value)
        return cols

    def to_dict(self) -> dict:
        out = {"covariates": list(self.covariates),
               "target_covariates": list(self.target_covariates)}
        for f in fields(self):
            if f.name in out:
                continue
            value = getattr(self, f.name)
            if value is not None:
                out[f.name] = value
        return out

    @classmethod
    def from_dict(cls, d: dict) -> "ColumnMapping":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise SchemaError(f"unknown mapping fields: {sorted(unknown)}")
        return cls(**d)


class ColumnFrame:
    """Immutable in-memory table of named float64 columns of equal length."""

    def __init__(self, columns: dict):
        if not columns:
            raise ValidationError("a frame needs at least one column")
        self._columns = {}
        n = None
        for name, values in columns.items():
            arr = np.asarray(values, dtype=float)
            if arr.ndim != 1:
                raise ValidationError(f"column {name!r} is not 1-dimensional")
            if n is None:
                n = arr.shape[0]
            elif arr.shape[0] != n:
                raise ValidationError(
                    f"column {name!r} has length {arr.shape[0]}, expected {n}")
            if not np.all(np.isfinite(arr)):
                bad = int(np.flatnonzero(~np.isfinite(arr))[0])
                raise ValidationError(
                    f"column {name!r} has a non-finite value at row {bad}")
            arr = arr.copy()
            arr.setflags(write=False)
            self._columns[name] = arr
        if n == 0:
            raise ValidationError("a frame needs at least one row")
        self.n_rows = n

    @property
    def column_names(self) -> list:
        return list(self._columns)

    def column(self, name: str) -> np.ndarray:
        try:
            return self._columns[name]
        except KeyError:
            raise SchemaError(f"unknown column {name!r}") from None

    def __contains__(self, name: str) -> bool:
        return name in self._columns

    def subvector(self, names) -> np.ndarray:
        """Dense N x q matrix of the named columns, in the given order."""
        names = list(names)
        if not names:
            return np.empty((self.n_rows, 0))
        return np.column_stack([self.column(name) for name in names])


def subvector(frame: ColumnFrame, names) -> np.ndarray:
    return frame.subvector(names)


def _snap_binary(values: np.ndarray, name: str) -> np.ndarray:
    snapped = values.copy()
    near0 = np.abs(values) <= BINARY_SNAP_TOL
    near1 = np.abs(values - 1.0) <= BINARY_SNAP_TOL
    snapped[near0] = 0.0
    snapped[near1] = 1.0
    bad = ~(near0 | near1)
    if bad.any():
        row = int(np.flatnonzero(bad)[0])
        raise ValidationError(
            f"column {name!r} is mapped to a binary role but has value "
            f"{values[row]!r} at row {row}")
    return snapped


def load_csv(path, mapping: ColumnMapping) -> ColumnFrame:
    """Load and validate a CSV file against a column mapping."""
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DataError(f"{path}: file is empty") from None
        header = [h.strip() for h in header]
        if len(set(header)) != len(header):
            dupes = sorted({h for h in header if header.count(h) > 1})
            raise SchemaError(f"{path}: duplicate column names {dupes}")
        raw = [[] for _ in header]
        for r, row in enumerate(reader):
            if not row:
                continue
            if len(row) != len(header):
                raise DataError(
                    f"{path}: row {r} has {len(row)} fields, expected {len(header)}")
            for c, cell in enumerate(row):
                text = cell.strip()
                if text == "":
                    raise ValidationError(
                        f"{path}: missing value at row {r}, column {header[c]!r}")
                try:
                    raw[c].append(float(text))
                except ValueError:
                    raise DataError(
                        f"{path}: non-numeric cell {cell!r} at row {r}, "
                        f"column {header[c]!r}") from None
    if not raw or not raw[0]:
        raise DataError(f"{path}: no data rows")

    missing = [c for c in mapping.mapped_columns() if c not in header]
    if missing:
        raise SchemaError(f"{path}: mapped columns not in file: {missing}")

    columns = {}
    for name, values in zip(header, raw):
        arr = np.asarray(values, dtype=float)
        if not np.all(np.isfinite(arr)):
            bad = int(np.flatnonzero(~np.isfinite(arr))[0])
            raise ValidationError(
                f"{path}: non-finite value in column {name!r} at row {bad}")
        columns[name] = arr
    for name in mapping.binary_columns():
        columns[name] = _snap_binary(columns[name], name)
    return ColumnFrame(columns)


def save_csv(frame: ColumnFrame, path) -> None:
    """Write a frame to CSV with full round-trip float precision."""
    names = frame.column_names
    cols = [frame.column(n) for n in names]
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(names)
        for i in range(frame.n_rows):
            writer.writerow([repr(float(col[i])) for col in cols])
