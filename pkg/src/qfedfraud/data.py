"""Transaction ingestion, preprocessing and synthetic fraud data.

CSV input is comma separated with a header row, UTF-8, and empty cells
meaning missing. A column is numeric when every non-empty cell parses as a
finite float; otherwise it is categorical and its cells are kept as strings.

Preprocessing is fitted on a training table and then applied unchanged to
any other table (validation, test), so no statistic ever leaks from held-out
rows. The fitted recipe:

1. drop columns whose missing fraction exceeds ``missing_threshold``;
2. impute numerics with the training median, categoricals with a sentinel;
3. one-hot encode categoricals, standardize numerics;
4. drop zero-variance columns and keep the ``target_dim`` columns with the
   largest absolute point-biserial correlation to the label.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .training import Batch

LABEL = "isFraud"
KEY = "TransactionID"
MISSING = "<missing>"


class CSVFormatError(ValueError):
    def __init__(self, message: str, line: int | None = None, column: str | int | None = None):
        self.line = line
        self.column = column
        where = []
        if line is not None:
            where.append(f"line {line}")
        if column is not None:
            where.append(f"column {column}")
        prefix = ", ".join(where)
        super().__init__(f"{prefix}: {message}" if prefix else message)


class DuplicateKeyError(ValueError):
    pass


@dataclass
class RawTable:
    """Rectangular table of numeric (float, NaN = missing) and categorical
    (object, ``None`` = missing) columns."""

    columns: list[str]
    cells: dict[str, np.ndarray]
    kinds: dict[str, str]
    key: str | None = None

    def __post_init__(self):
        lengths = {len(self.cells[c]) for c in self.columns}
        if len(lengths) > 1:
            raise ValueError(f"ragged table, column lengths {sorted(lengths)}")
        if self.key is not None:
            if self.key not in self.cells:
                raise ValueError(f"key column {self.key!r} not in table")
            _check_unique(self.cells[self.key], self.key)

    @property
    def n_rows(self) -> int:
        return len(self.cells[self.columns[0]]) if self.columns else 0

    def __len__(self) -> int:
        return self.n_rows

    def take(self, idx) -> "RawTable":
        idx = np.asarray(idx, dtype=int)
        return RawTable(
            list(self.columns),
            {c: self.cells[c][idx] for c in self.columns},
            dict(self.kinds),
            self.key,
        )

    def missing_fraction(self, column: str) -> float:
        return float(np.mean(_missing_mask(self.cells[column], self.kinds[column])))


def _missing_mask(values: np.ndarray, kind: str) -> np.ndarray:
    if kind == "numeric":
        return np.isnan(values)
    return np.array([v is None for v in values], dtype=bool)


def _check_unique(values: np.ndarray, name: str) -> None:
    seen = set()
    for v in values:
        if v in seen:
            raise DuplicateKeyError(f"duplicate value {v!r} in key column {name!r}")
        seen.add(v)


def _parse_float(text: str) -> float | None:
    try:
        value = float(text)
    except ValueError:
        return None
    return value if math.isfinite(value) else None


def _infer_column(raw: list[str]) -> tuple[str, np.ndarray]:
    present = [v for v in raw if v != ""]
    parsed = [_parse_float(v) for v in present]
    if all(p is not None for p in parsed):
        out = np.array([_parse_float(v) if v != "" else np.nan for v in raw], dtype=float)
        return "numeric", out
    return "categorical", np.array([v if v != "" else None for v in raw], dtype=object)


def read_csv(path, key: str | None = None) -> RawTable:
    path = Path(path)
    try:
        with path.open(newline="", encoding="utf-8") as fh:
            reader = csv.reader(fh, strict=True)
            try:
                header = next(reader)
            except StopIteration:
                raise CSVFormatError("empty file", line=1) from None
            if len(set(header)) != len(header):
                raise CSVFormatError("duplicate column names in header", line=1)
            columns: list[list[str]] = [[] for _ in header]
            for row in reader:
                if not row:
                    continue
                if len(row) != len(header):
                    raise CSVFormatError(
                        f"expected {len(header)} cells, got {len(row)}",
                        line=reader.line_num,
                        column=len(row) + 1 if len(row) < len(header) else len(header) + 1,
                    )
                for col, cell in zip(columns, row):
                    col.append(cell.strip())
    except csv.Error as exc:
        raise CSVFormatError(str(exc), line=reader.line_num) from exc
    except UnicodeDecodeError as exc:
        raise CSVFormatError(f"not valid UTF-8 ({exc.reason})") from exc
    cells, kinds = {}, {}
    for name, raw in zip(header, columns):
        kinds[name], cells[name] = _infer_column(raw)
    if key is not None and key not in cells:
        raise CSVFormatError(f"join key {key!r} missing from {path.name}", line=1)
    return RawTable(list(header), cells, kinds, key)


def write_csv(table: RawTable, path) -> None:
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(table.columns)
        for i in range(table.n_rows):
            row = []
            for c in table.columns:
                v = table.cells[c][i]
                if table.kinds[c] == "numeric":
                    row.append("" if np.isnan(v) else _fmt_number(v))
                else:
                    row.append("" if v is None else v)
            writer.writerow(row)


def _fmt_number(v: float) -> str:
    return str(int(v)) if float(v).is_integer() and abs(v) < 1e15 else repr(float(v))


def load_and_join(transactions_csv, identity_csv=None, key: str = KEY) -> RawTable:
    """Read transactions and, optionally, left-join identity rows on ``key``."""
    if identity_csv is None:
        return read_csv(transactions_csv)
    trans = read_csv(transactions_csv, key=key)
    ident = read_csv(identity_csv, key=key)
    lookup = {v: i for i, v in enumerate(ident.cells[key])}
    rows = np.array([lookup.get(v, -1) for v in trans.cells[key]])
    matched = rows >= 0
    columns = list(trans.columns)
    cells = dict(trans.cells)
    kinds = dict(trans.kinds)
    for c in ident.columns:
        if c == key:
            continue
        name = c if c not in cells else f"{c}_identity"
        src = ident.cells[c]
        if ident.kinds[c] == "numeric":
            out = np.full(trans.n_rows, np.nan)
        else:
            out = np.full(trans.n_rows, None, dtype=object)
        out[matched] = src[rows[matched]]
        columns.append(name)
        cells[name] = out
        kinds[name] = ident.kinds[c]
    return RawTable(columns, cells, kinds, key)


@dataclass
class Dataset:
    features: np.ndarray
    labels: np.ndarray
    feature_names: list[str]
    scaler_mean: np.ndarray
    scaler_std: np.ndarray

    def __post_init__(self):
        self.features = np.atleast_2d(np.asarray(self.features, dtype=float))
        self.labels = np.asarray(self.labels, dtype=int).reshape(-1)
        if self.features.shape[0] != self.labels.shape[0]:
            raise ValueError("features and labels differ in length")

    def __len__(self) -> int:
        return self.labels.shape[0]

    def take(self, idx) -> "Dataset":
        idx = np.asarray(idx, dtype=int)
        return Dataset(
            self.features[idx], self.labels[idx], list(self.feature_names),
            self.scaler_mean, self.scaler_std,
        )

    def to_batch(self) -> Batch:
        return Batch(self.features, self.labels)


@dataclass
class Preprocessor:
    """Preprocessing recipe fitted on a training table."""

    label: str
    numeric: dict[str, tuple[float, float, float]] = field(default_factory=dict)
    categorical: dict[str, list[str]] = field(default_factory=dict)
    selected: list[str] = field(default_factory=list)
    correlations: dict[str, float] = field(default_factory=dict)

    def _expand(self, table: RawTable) -> tuple[list[str], np.ndarray]:
        names, cols = [], []
        for c, (median, mean, std) in self.numeric.items():
            v = np.where(np.isnan(table.cells[c]), median, table.cells[c])
            names.append(c)
            cols.append((v - mean) / std)
        for c, levels in self.categorical.items():
            raw = [MISSING if v is None else v for v in table.cells[c]]
            known = set(levels)
            raw = [v if v in known else MISSING for v in raw]
            for level in levels:
                names.append(f"{c}={level}")
                cols.append(np.array([v == level for v in raw], dtype=float))
        matrix = np.column_stack(cols) if cols else np.zeros((table.n_rows, 0))
        return names, matrix

    def transform(self, table: RawTable) -> Dataset:
        if self.label not in table.cells:
            raise ValueError(f"label column {self.label!r} not in table")
        names, matrix = self._expand(table)
        pos = {n: i for i, n in enumerate(names)}
        idx = [pos[n] for n in self.selected]
        mean = np.array([self.numeric[n][1] if n in self.numeric else 0.0 for n in self.selected])
        std = np.array([self.numeric[n][2] if n in self.numeric else 1.0 for n in self.selected])
        return Dataset(matrix[:, idx], _labels(table, self.label), list(self.selected), mean, std)


def _labels(table: RawTable, label: str) -> np.ndarray:
    y = table.cells[label]
    if table.kinds[label] != "numeric" or np.any(np.isnan(y)) or not np.all((y == 0) | (y == 1)):
        raise ValueError(f"label column {label!r} must hold only 0/1 values")
    return y.astype(int)


def point_biserial(x: np.ndarray, y: np.ndarray) -> float:
    """Pearson correlation of a feature with a binary label (0 if undefined)."""
    xs, ys = x - x.mean(), y - y.mean()
    denom = math.sqrt(float(xs @ xs) * float(ys @ ys))
    return float(xs @ ys) / denom if denom > 0 else 0.0


def fit_preprocessor(
    table: RawTable, target_dim: int = 8, missing_threshold: float = 0.5, label: str = LABEL
) -> Preprocessor:
    if label not in table.cells:
        raise ValueError(f"label column {label!r} not in table")
    y = _labels(table, label)
    prep = Preprocessor(label)
    skip = {label, table.key, KEY}
    for c in table.columns:
        if c in skip or table.missing_fraction(c) > missing_threshold:
            continue
        values = table.cells[c]
        if table.kinds[c] == "numeric":
            present = values[~np.isnan(values)]
            median = float(np.median(present)) if present.size else 0.0
            filled = np.where(np.isnan(values), median, values)
            std = float(filled.std())
            if std > 0:
                prep.numeric[c] = (median, float(filled.mean()), std)
        else:
            prep.categorical[c] = sorted({v for v in values if v is not None} | {MISSING})
    names, matrix = prep._expand(table)
    keep = [i for i in range(len(names)) if matrix[:, i].std() > 0]
    if len(keep) < target_dim:
        raise ValueError(
            f"only {len(keep)} non-constant features survive preprocessing, need {target_dim}"
        )
    scores = {names[i]: point_biserial(matrix[:, i], y.astype(float)) for i in keep}
    ranked = sorted(keep, key=lambda i: -abs(scores[names[i]]))  # stable: ties keep column order
    prep.selected = [names[i] for i in ranked[:target_dim]]
    prep.correlations = scores
    return prep


def preprocess(
    table: RawTable, target_dim: int = 8, missing_threshold: float = 0.5, label: str = LABEL
) -> Dataset:
    """Fit the recipe on ``table`` and return it transformed."""
    return fit_preprocessor(table, target_dim, missing_threshold, label).transform(table)


def balance_upsample(dataset: Dataset, seed: int) -> Dataset:
    """Resample the minority class with replacement until classes are equal, then shuffle."""
    rng = np.random.default_rng(seed)
    pos = np.flatnonzero(dataset.labels == 1)
    neg = np.flatnonzero(dataset.labels == 0)
    if pos.size == 0 or neg.size == 0:
        raise ValueError("both classes must be present to upsample")
    minority, majority = (pos, neg) if pos.size < neg.size else (neg, pos)
    extra = rng.choice(minority, size=majority.size - minority.size, replace=True)
    idx = np.concatenate([majority, minority, extra])
    return dataset.take(idx[rng.permutation(idx.size)])


def train_size(n: int, train_fraction: float) -> int:
    # floor, with slack for products like 0.29 * 100 = 28.999999999999996
    return int(math.floor(train_fraction * n + 1e-9))


def split(data, train_fraction: float, seed: int):
    """Seeded shuffle into (train, validation) row subsets of a table or dataset."""
    if not 0.0 < train_fraction < 1.0:
        raise ValueError(f"train_fraction must lie in (0, 1), got {train_fraction}")
    n = len(data)
    order = np.random.default_rng(seed).permutation(n)
    k = train_size(n, train_fraction)
    return data.take(order[:k]), data.take(order[k:])


@dataclass
class PreparedData:
    train: Dataset
    validation: Dataset
    preprocessor: Preprocessor


def prepare(
    table: RawTable,
    target_dim: int = 8,
    missing_threshold: float = 0.5,
    train_fraction: float = 0.8,
    seed: int = 0,
    upsample: bool = True,
    label: str = LABEL,
) -> PreparedData:
    """Split, fit preprocessing on the train rows only, and upsample the train side."""
    train_raw, val_raw = split(table, train_fraction, seed)
    prep = fit_preprocessor(train_raw, target_dim, missing_threshold, label)
    train = prep.transform(train_raw)
    val = prep.transform(val_raw)
    if upsample and 0 < train.labels.sum() < len(train):
        train = balance_upsample(train, seed)
    return PreparedData(train, val, prep)


def synth_fraud(
    n_samples: int,
    n_informative: int = 6,
    class_sep: float = 2.0,
    fraud_rate: float = 0.5,
    seed: int = 0,
    n_features: int = 10,
    missing_rate: float = 0.02,
) -> RawTable:
    """Transaction-like table with a known amount of class signal.

    Fraud rows are centred at ``+class_sep`` and legitimate rows at
    ``-class_sep`` along each of ``n_informative`` unit-variance numeric
    columns. The remaining ``n_features - n_informative`` numeric columns,
    an amount column, two categoricals and a mostly-empty column carry no
    signal. The number of fraud rows is exactly ``round(fraud_rate * n)``.
    """
    if not 0.0 < fraud_rate < 1.0:
        raise ValueError(f"fraud_rate must lie in (0, 1), got {fraud_rate}")
    if not 0 <= n_informative <= n_features:
        raise ValueError(f"n_informative={n_informative} exceeds the feature budget {n_features}")
    if n_samples < 2:
        raise ValueError("n_samples must be at least 2")
    if not 0.0 <= missing_rate < 1.0:
        raise ValueError("missing_rate must lie in [0, 1)")
    rng = np.random.default_rng(seed)
    n_fraud = int(round(fraud_rate * n_samples))
    labels = np.zeros(n_samples, dtype=float)
    labels[rng.choice(n_samples, size=n_fraud, replace=False)] = 1.0
    sign = 2.0 * labels - 1.0

    columns = [KEY, LABEL]
    cells: dict[str, np.ndarray] = {
        KEY: np.arange(1, n_samples + 1, dtype=float),
        LABEL: labels,
    }
    kinds = {KEY: "numeric", LABEL: "numeric"}

    def add(name, values, kind):
        columns.append(name)
        cells[name] = values
        kinds[name] = kind

    for j in range(n_features):
        values = rng.normal(size=n_samples)
        if j < n_informative:
            values = values + sign * class_sep
        add(f"V{j + 1}", values, "numeric")
    add("TransactionAmt", np.round(rng.lognormal(3.5, 1.0, size=n_samples), 2), "numeric")
    add("card_type", rng.choice(np.array(["visa", "mastercard", "amex", "discover"], dtype=object), size=n_samples), "categorical")
    add("DeviceType", rng.choice(np.array(["mobile", "desktop"], dtype=object), size=n_samples), "categorical")
    sparse = rng.normal(size=n_samples)
    sparse[rng.random(n_samples) < 0.8] = np.nan
    add("dist2", sparse, "numeric")

    for name in columns[2:]:
        hole = rng.random(n_samples) < missing_rate
        if kinds[name] == "numeric":
            cells[name] = np.where(hole, np.nan, cells[name])
        else:
            cells[name] = cells[name].copy()
            cells[name][hole] = None
    return RawTable(columns, cells, kinds, KEY)


def write_dataset_cache(dataset: Dataset, path) -> None:
    """Columnar text cache: two ``#`` lines of scaler stats, a header, then rows."""
    with Path(path).open("w", encoding="utf-8", newline="") as fh:
        fh.write("# mean," + ",".join(repr(float(v)) for v in dataset.scaler_mean) + "\n")
        fh.write("# std," + ",".join(repr(float(v)) for v in dataset.scaler_std) + "\n")
        fh.write(",".join(list(dataset.feature_names) + [LABEL]) + "\n")
        for row, y in zip(dataset.features, dataset.labels):
            fh.write(",".join(repr(float(v)) for v in row) + f",{int(y)}\n")


def read_dataset_cache(path) -> Dataset:
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    mean = np.array([float(v) for v in lines[0].split(",")[1:]])
    std = np.array([float(v) for v in lines[1].split(",")[1:]])
    header = lines[2].split(",")
    rows = np.array([[float(v) for v in line.split(",")] for line in lines[3:] if line])
    rows = rows.reshape(-1, len(header))
    return Dataset(rows[:, :-1], rows[:, -1].astype(int), header[:-1], mean, std)
