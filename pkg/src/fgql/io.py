"""File formats: CSV datasets, group specifications, flat config files and JSON documents."""

from __future__ import annotations

import csv
import hashlib
import json
import math
from importlib import resources
from pathlib import Path

import numpy as np

SCHEMA_VERSION = "1.0"


class InputError(ValueError):
    """Malformed user input (bad CSV, group spec or config)."""


def format_float(v: float) -> str:
    # repr is the shortest string that round-trips exactly
    return repr(float(v))


def write_csv(path, names, y, X, response_name: str = "y") -> None:
    X = np.asarray(X, float)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow([response_name, *names])
        for yi, row in zip(np.asarray(y, float), X):
            writer.writerow([format_float(yi), *(format_float(v) for v in row)])


def _is_number(text: str) -> bool:
    try:
        float(text)
    except ValueError:
        return False
    return True


def read_csv(path):
    """Return ``(column_names, y, X)``; the first column is the response."""
    try:
        with open(path, newline="") as fh:
            rows = list(csv.reader(fh))
    except OSError as exc:
        raise InputError(f"cannot read {path}: {exc}") from None
    if not rows:
        raise InputError(f"{path}: empty file (a header row is required)")
    header = [h.strip() for h in rows[0]]
    if len(header) < 2:
        raise InputError(f"{path}: need a response column and at least one feature column")
    if len(set(header)) != len(header):
        raise InputError(f"{path}: duplicate column names in header")
    if all(_is_number(h) for h in header):
        raise InputError(f"{path}: first row looks numeric; a header row is required")
    body = [r for r in rows[1:] if r and any(c.strip() for c in r)]
    if not body:
        raise InputError(f"{path}: no data rows")
    values = np.empty((len(body), len(header)))
    for i, row in enumerate(body, start=2):
        if len(row) != len(header):
            raise InputError(f"{path}: line {i} has {len(row)} fields, expected {len(header)}")
        for k, cell in enumerate(row):
            try:
                values[i - 2, k] = float(cell)
            except ValueError:
                raise InputError(
                    f"{path}: line {i}, column {header[k]!r}: not a number: {cell!r}") from None
    if not np.all(np.isfinite(values)):
        raise InputError(f"{path}: non-finite values are not allowed")
    return header[1:], values[:, 0], values[:, 1:]


def parse_group_spec(text: str) -> dict[str, int]:
    """Parse ``name=group_id`` entries separated by newlines or commas."""
    spec = {}
    for raw in text.replace(",", "\n").splitlines():
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise InputError(f"group spec entry {line!r} is not of the form column=group_id")
        name, gid = (s.strip() for s in line.rsplit("=", 1))
        try:
            spec[name] = int(gid)
        except ValueError:
            raise InputError(f"group id for column {name!r} is not an integer: {gid!r}") from None
    return spec


def read_group_spec(path) -> dict[str, int]:
    return parse_group_spec(Path(path).read_text())


def write_group_spec(path, names, group_ids) -> None:
    Path(path).write_text("".join(f"{n}={g}\n" for n, g in zip(names, group_ids)))


def arrange_groups(names, X, spec: dict[str, int]):
    """Order columns by group id and return ``(ordered_names, X, group_sizes, group_ids)``.

    Group ids must form the contiguous range ``1..p``; their order defines
    which groups are fused.  Columns keep their file order within a group.
    """
    missing = [n for n in names if n not in spec]
    if missing:
        raise InputError(f"no group id for column {missing[0]!r}")
    unknown = [n for n in spec if n not in names]
    if unknown:
        raise InputError(f"group spec names unknown column {unknown[0]!r}")
    ids = sorted(set(spec.values()))
    if ids != list(range(1, len(ids) + 1)):
        raise InputError(f"group ids must be the contiguous range 1..p, got {ids}")
    order = sorted(range(len(names)), key=lambda k: spec[names[k]])
    ordered = [names[k] for k in order]
    sizes = tuple(sum(1 for n in names if spec[n] == g) for g in ids)
    return ordered, np.asarray(X)[:, order], sizes, [spec[n] for n in ordered]


def read_config(path) -> dict[str, str]:
    """Flat ``key=value`` file; ``#`` starts a comment."""
    out = {}
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise InputError(f"cannot read config {path}: {exc}") from None
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise InputError(f"{path}:{lineno}: expected key=value, got {line!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        out[key.replace("-", "_")] = value
    return out


def sha256_of(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def _clean(obj):
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        return v if math.isfinite(v) else None
    return obj


def dumps_json(document: dict) -> str:
    doc = {"schema_version": SCHEMA_VERSION, **_clean(document)}
    return json.dumps(doc, indent=2, sort_keys=True) + "\n"


def write_json(path, document: dict) -> None:
    Path(path).write_text(dumps_json(document))


def load_schema(name: str) -> dict:
    """Shipped JSON schema: ``fit_result``, ``truth`` or ``study_report``."""
    text = resources.files("fgql").joinpath("schemas", f"{name}.schema.json").read_text()
    return json.loads(text)
