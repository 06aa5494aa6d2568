"""File formats: allocation/stake CSVs, number parsing and JSON output."""

from __future__ import annotations

import csv
import json
import math
from fractions import Fraction
from pathlib import Path

import numpy as np

from .errors import ModelError
from .model import AllocationMatrix, StakeTable


class InputError(ModelError):
    pass


def parse_number(value):
    """Parse ``"0.25"``, ``"1/3"``, ints or floats; fractions stay exact."""
    if isinstance(value, bool):
        raise InputError(f"expected a number, got {value!r}")
    if isinstance(value, (int, float, Fraction)):
        return value
    text = str(value).strip()
    try:
        if "/" in text:
            num, den = text.split("/", 1)
            return Fraction(int(num.strip()), int(den.strip()))
        if text.lstrip("+-").isdigit():
            return int(text)
        out = float(text)
    except (ValueError, ZeroDivisionError):
        raise InputError(f"not a number: {value!r}") from None
    if not math.isfinite(out):
        raise InputError(f"not a finite number: {value!r}")
    return out


def _open_csv(path):
    path = Path(path)
    if not path.is_file():
        raise InputError(f"file not found: {path}")
    with path.open(newline="", encoding="utf-8") as fh:
        rows = [row for row in csv.reader(fh) if row and any(c.strip() for c in row)]
    if not rows:
        raise InputError(f"{path}: empty file")
    return path, rows


def read_allocation_csv(path):
    """Read an allocation matrix: header ``validator,<ssp ids...>``, one row per validator.

    Returns ``(matrix, validator_ids, ssp_ids)``.
    """
    path, rows = _open_csv(path)
    header = [c.strip() for c in rows[0]]
    if len(header) < 2:
        raise InputError(f"{path}:1: need a validator column and at least one SSP column")
    ids, values = [], []
    for line, row in enumerate(rows[1:], start=2):
        if len(row) != len(header):
            raise InputError(f"{path}:{line}: expected {len(header)} fields, got {len(row)}")
        ids.append(row[0].strip())
        try:
            values.append([float(parse_number(c)) for c in row[1:]])
        except InputError as exc:
            raise InputError(f"{path}:{line}: {exc}") from None
    if not values:
        raise InputError(f"{path}: no validator rows")
    return AllocationMatrix(np.array(values)), ids, header[1:]


def read_stakes_csv(path):
    """Read ``validator,stake`` rows; returns ``(stake table, ids)``."""
    path, rows = _open_csv(path)
    start = 1 if rows[0][-1].strip().lower() in ("stake", "sigma") else 0
    ids, stakes = [], []
    for line, row in enumerate(rows[start:], start=start + 1):
        if len(row) == 1:
            ids.append(str(len(ids)))
            cell = row[0]
        elif len(row) == 2:
            ids.append(row[0].strip())
            cell = row[1]
        else:
            raise InputError(f"{path}:{line}: expected 'validator,stake'")
        try:
            stakes.append(float(parse_number(cell)))
        except InputError as exc:
            raise InputError(f"{path}:{line}: {exc}") from None
    try:
        return StakeTable(stakes), ids
    except ValueError as exc:
        raise InputError(f"{path}: {exc}") from None


def write_matrix_csv(path, matrix, row_ids, col_ids, corner="validator", fmt=repr) -> None:
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow([corner, *col_ids])
        for rid, row in zip(row_ids, np.asarray(matrix)):
            writer.writerow([rid, *(fmt(float(x)) for x in row)])


def _jsonable(obj):
    if isinstance(obj, Fraction):
        return float(obj)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.floating):
        return float(obj)
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, (set, frozenset, tuple)):
        return list(obj)
    raise TypeError(f"not JSON serializable: {type(obj).__name__}")


def _finite(obj):
    if isinstance(obj, float) and not math.isfinite(obj):
        return None
    if isinstance(obj, dict):
        return {k: _finite(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_finite(v) for v in obj]
    return obj


def write_json(path, payload) -> None:
    """Write deterministic JSON (sorted keys; non-finite floats become null)."""
    text = json.dumps(_finite(json.loads(json.dumps(payload, default=_jsonable))), indent=2, sort_keys=True)
    Path(path).write_text(text + "\n", encoding="utf-8")
