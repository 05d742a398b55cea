"""Frozen file contracts shared with the simulation CLI.

Every reader validates the header against the frozen column list and fails
with a diagnostic naming the offending column; silent coercion would defeat
the point of a contract.
"""
from __future__ import annotations

import csv
import json
from pathlib import Path

import numpy as np

COLUMNS = {
    "curves": ["T", "msq", "msq_err", "binder", "binder_err", "energy", "cv"],
    "oracle": ["T", "msq", "binder", "energy", "cv"],
    "error_scaling": ["n_mc", "sz2", "sz2_err"],
    "echo": ["t", "re_g", "im_g"],
    "wd": ["omega_shifted", "weight"],
}


class SchemaError(ValueError):
    """Input file violates a frozen contract; the message names the column."""


def read_table(path: str | Path, kind: str) -> dict[str, np.ndarray]:
    path = Path(path)
    expected = COLUMNS[kind]
    if not path.exists():
        raise SchemaError(f"{path}: file does not exist")
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise SchemaError(f"{path}: empty file, expected header {expected}") from None
        for col in expected:
            if col not in header:
                raise SchemaError(f"{path}: missing column {col!r} (header {header})")
        for col in header:
            if col not in expected:
                raise SchemaError(f"{path}: unexpected column {col!r} (contract {expected})")
        if header != expected:
            raise SchemaError(f"{path}: column order {header} differs from contract {expected}")
        rows = []
        for line_no, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(expected):
                raise SchemaError(f"{path}:{line_no}: {len(row)} fields, expected {len(expected)}")
            try:
                rows.append([float(x) if x != "" else np.nan for x in row])
            except ValueError as exc:
                raise SchemaError(f"{path}:{line_no}: non-numeric field ({exc})") from None
    if not rows:
        raise SchemaError(f"{path}: no data rows")
    data = np.asarray(rows, dtype=float)
    return {col: data[:, i] for i, col in enumerate(expected)}


def read_p_cut(summary_path: str | Path) -> float:
    """The cut used by a run, from its summary JSON."""
    path = Path(summary_path)
    if not path.exists():
        raise SchemaError(f"{path}: file does not exist")
    try:
        doc = json.loads(path.read_text())
        return float(doc["spectral"]["p_cut"])
    except (json.JSONDecodeError, KeyError, TypeError) as exc:
        raise SchemaError(f"{path}: missing field spectral.p_cut ({exc})") from None
