"""CSV/JSON emission and policy-file round trips.

Floats are written with ``repr`` so every value reads back bit-exactly.
"""

from __future__ import annotations

import csv
import json
import math
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import ValidationError
from .ssp import CostVector, Policy, SspModel

__all__ = [
    "write_csv",
    "write_json",
    "policy_columns",
    "policy_rows",
    "value_columns",
    "value_rows",
    "read_policy",
    "fmt",
]


def fmt(v):
    if isinstance(v, (bool, np.bool_)):
        return str(int(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def write_csv(path: Path, columns: Sequence[str], rows: Iterable[Sequence]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for row in rows:
            w.writerow([fmt(v) for v in row])
    return path


def _clean(obj):
    if isinstance(obj, dict):
        return {k: _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if math.isfinite(v) else None
    if isinstance(obj, np.integer):
        return int(obj)
    return obj


def write_json(path: Path, payload) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(_clean(payload), indent=2, sort_keys=True) + "\n")
    return path


def _cells(model: SspModel):
    """Global-index order: level-major, then stage, then step."""
    M1 = model.M + 1
    for lev in range(model.levels):
        for k in range(model.N + 1):
            for x in range(M1):
                yield lev, k, x


def policy_columns(model: SspModel) -> tuple[str, ...]:
    base = ("k", "x", "i", "action", "R_of_action")
    return ("w",) + base if model.levels > 1 else base


def policy_rows(model: SspModel, mu: Policy):
    rates = model.rates
    for lev, k, x in _cells(model):
        a = int(mu.table[k, model.row(lev, x)])
        row = (k, x, model.state_index(x, k, lev), a, float(rates[a - 1]))
        yield ((lev - model.initial_level,) + row) if model.levels > 1 else row


def value_columns(model: SspModel) -> tuple[str, ...]:
    base = ("i", "x", "k", "J", "J_E", "J_I", "J_0")
    return ("w",) + base if model.levels > 1 else base


def value_rows(model: SspModel, cost: CostVector):
    for lev, k, x in _cells(model):
        r = model.row(lev, x)
        row = (
            model.state_index(x, k, lev),
            x,
            k,
            float(cost.J[k, r]),
            float(cost.J_E[k, r]),
            float(cost.J_I[k, r]),
            float(cost.J_0[k, r]),
        )
        yield ((lev - model.initial_level,) + row) if model.levels > 1 else row


def read_policy(path: Path, model: SspModel) -> Policy:
    """Read a policy CSV written by :func:`policy_rows` (or hand-made with the same columns)."""
    try:
        with Path(path).open(newline="") as fh:
            rows = list(csv.DictReader(fh))
    except OSError as exc:
        raise ValidationError(f"cannot read policy {path}: {exc}") from exc
    table = np.zeros((model.N + 1, model.width), dtype=np.int32)
    seen = np.zeros_like(table, dtype=bool)
    try:
        for row in rows:
            k, x, a = int(row["k"]), int(row["x"]), int(row["action"])
            w = int(row["w"]) if model.levels > 1 else 0
            lev = w + model.initial_level
            if not (0 <= k <= model.N and 0 <= x <= model.M and 0 <= lev < model.levels):
                raise ValidationError(f"policy cell (w={w}, x={x}, k={k}) outside the model")
            if not 1 <= a <= model.m:
                raise ValidationError(f"policy action {a} outside 1..{model.m}")
            r = model.row(lev, x)
            table[k, r] = a
            seen[k, r] = True
    except (KeyError, ValueError) as exc:
        raise ValidationError(f"malformed policy file {path}: {exc!r}") from exc
    if not seen[:-1].all():
        raise ValidationError(f"policy file {path} does not cover every state")
    table[-1] = 1
    return Policy(table)
