"""Classification metrics and history serialization.

History files are the plotting contract. Both formats carry the fields of
:class:`MetricsRecord` in declaration order; floats are written with
``repr`` so they parse back to the identical double.
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import asdict, dataclass, fields

import numpy as np


@dataclass(frozen=True)
class ConfusionCounts:
    tp: int
    fp: int
    tn: int
    fn: int

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.tn + self.fn


@dataclass(frozen=True)
class MetricsRecord:
    round: int
    scope: str
    accuracy: float
    precision: float
    recall: float
    f1: float
    mse_loss: float


FIELDS = [f.name for f in fields(MetricsRecord)]


def confusion(labels, predictions) -> ConfusionCounts:
    """Counts with fraud (label 1) as the positive class."""
    y = np.asarray(labels).astype(int).reshape(-1)
    p = np.asarray(predictions).astype(int).reshape(-1)
    if y.shape != p.shape:
        raise ValueError(f"{y.size} labels but {p.size} predictions")
    if y.size == 0:
        raise ValueError("need at least one sample")
    return ConfusionCounts(
        tp=int(np.sum((y == 1) & (p == 1))),
        fp=int(np.sum((y == 0) & (p == 1))),
        tn=int(np.sum((y == 0) & (p == 0))),
        fn=int(np.sum((y == 1) & (p == 0))),
    )


def _ratio(num: int, den: int) -> float:
    return num / den if den else 0.0


def derive_metrics(c: ConfusionCounts, mse: float, round_index: int = 0, scope: str = "global") -> MetricsRecord:
    """Accuracy, precision, recall and F1; zero denominators give 0."""
    if c.total <= 0:
        raise ValueError("confusion counts are empty")
    precision = _ratio(c.tp, c.tp + c.fp)
    recall = _ratio(c.tp, c.tp + c.fn)
    f1 = 2 * precision * recall / (precision + recall) if precision + recall > 0 else 0.0
    return MetricsRecord(
        round=int(round_index),
        scope=str(scope),
        accuracy=(c.tp + c.tn) / c.total,
        precision=precision,
        recall=recall,
        f1=f1,
        mse_loss=float(mse),
    )


def _cell(value) -> str:
    return repr(float(value)) if isinstance(value, float) else str(value)


def export_history(history, fmt: str = "csv") -> bytes:
    """Serialize records to CSV (header + one row each) or a JSON array."""
    history = list(history)
    if not history:
        raise ValueError("history is empty")
    if fmt == "csv":
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(FIELDS)
        for rec in history:
            writer.writerow([_cell(getattr(rec, name)) for name in FIELDS])
        return buf.getvalue().encode("utf-8")
    if fmt == "json":
        rows = [{name: getattr(rec, name) for name in FIELDS} for rec in history]
        return (json.dumps(rows, indent=1) + "\n").encode("utf-8")
    raise ValueError(f"unknown history format {fmt!r} (expected 'csv' or 'json')")


def import_history(payload: bytes, fmt: str = "csv") -> list[MetricsRecord]:
    text = payload.decode("utf-8")
    if fmt == "csv":
        rows = list(csv.DictReader(io.StringIO(text)))
    elif fmt == "json":
        rows = json.loads(text)
    else:
        raise ValueError(f"unknown history format {fmt!r} (expected 'csv' or 'json')")
    out = []
    for row in rows:
        out.append(
            MetricsRecord(
                round=int(row["round"]),
                scope=str(row["scope"]),
                **{k: float(row[k]) for k in FIELDS[2:]},
            )
        )
    return out


def record_dict(rec: MetricsRecord) -> dict:
    return asdict(rec)
