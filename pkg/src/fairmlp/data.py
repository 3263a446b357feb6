"""Dataset ingestion, encoding, stratified batching, and CV splits.

CSV in, numpy out. Categorical columns become one-hot blocks over the
lexicographically sorted vocabulary observed at fit time; numeric
columns are z-scored with population statistics. Batching is stratified
so that every mini-batch contains the sensitive groups (and, when
requested, label classes) that the active constraint needs — the
constraint formulas are undefined on single-group batches.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field

import numpy as np

from .errors import DataError, ParameterError, SchemaError, ShapeError
from .fairloss import ConstraintKind
from .numcore import Rng


@dataclass
class SchemaConfig:
    """Names the columns of a CSV and how to binarize label/attribute."""

    numeric: list[str]
    categorical: list[str]
    label: str
    positive_label: str
    sensitive: str
    protected_value: str
    missing_token: str = "?"

    def __post_init__(self):
        names = self.numeric + self.categorical
        if len(set(names)) != len(names):
            raise SchemaError("feature column names must be unique")

    @property
    def used_columns(self) -> list[str]:
        return self.numeric + self.categorical + [self.label, self.sensitive]

    def to_json(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.__dict__, fh, indent=2, sort_keys=True)

    @classmethod
    def from_json(cls, path) -> "SchemaConfig":
        with open(path, "r", encoding="utf-8") as fh:
            raw = json.load(fh)
        try:
            return cls(**raw)
        except TypeError as exc:
            raise SchemaError(f"bad schema file {path}: {exc}")


def adult_schema() -> SchemaConfig:
    """Preset for the UCI census-income CSV (header row expected).

    Sex is the sensitive attribute (protected = Female) and is excluded
    from the feature columns; income > 50K is the positive label.
    """
    return SchemaConfig(
        numeric=["age", "fnlwgt", "education-num", "capital-gain",
                 "capital-loss", "hours-per-week"],
        categorical=["workclass", "education", "marital-status", "occupation",
                     "relationship", "race", "native-country"],
        label="income",
        positive_label=">50K",
        sensitive="sex",
        protected_value="Female",
        missing_token="?",
    )


BUILTIN_SCHEMAS = {"adult": adult_schema}


def resolve_schema(name_or_path: str) -> SchemaConfig:
    """A builtin preset name, or a path to a schema JSON file."""
    if name_or_path in BUILTIN_SCHEMAS:
        return BUILTIN_SCHEMAS[name_or_path]()
    return SchemaConfig.from_json(name_or_path)


@dataclass
class RawTable:
    """Parsed CSV restricted to the schema's columns, missing rows dropped."""

    header: list[str]
    rows: list[list[str]]
    n_dropped: int

    def column(self, name: str) -> list[str]:
        j = self.header.index(name)
        return [row[j] for row in self.rows]


def load_csv(path, schema: SchemaConfig) -> RawTable:
    """Read a header CSV, keeping schema columns and dropping any row that
    has the missing-value token in a used column."""
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = [cell.strip() for cell in next(reader)]
        except StopIteration:
            raise SchemaError(f"{path} is empty")
        missing = [c for c in schema.used_columns if c not in header]
        if missing:
            raise SchemaError(f"{path} lacks required columns: {missing}")
        idx = [header.index(c) for c in schema.used_columns]
        rows, n_dropped = [], 0
        for raw in reader:
            if not raw or all(not cell.strip() for cell in raw):
                continue
            cells = [raw[j].strip() for j in idx]
            if schema.missing_token in cells:
                n_dropped += 1
                continue
            rows.append(cells)
    return RawTable(header=list(schema.used_columns), rows=rows, n_dropped=n_dropped)


@dataclass
class Encoder:
    """Feature encoding learned from a training split.

    numeric_stats maps column -> (mean, population std); vocabulary maps
    column -> sorted category list. Transforming a table with unseen
    categories yields all-zero one-hot blocks for those cells.
    """

    numeric_stats: dict = field(default_factory=dict)
    vocabulary: dict = field(default_factory=dict)
    feature_names: list[str] = field(default_factory=list)

    def to_json(self, path) -> None:
        payload = {
            "numeric_stats": {k: list(v) for k, v in self.numeric_stats.items()},
            "vocabulary": self.vocabulary,
            "feature_names": self.feature_names,
        }
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(payload, fh, sort_keys=True)

    @classmethod
    def from_json(cls, path) -> "Encoder":
        with open(path, "r", encoding="utf-8") as fh:
            payload = json.load(fh)
        return cls(
            numeric_stats={k: tuple(v) for k, v in payload["numeric_stats"].items()},
            vocabulary=payload["vocabulary"],
            feature_names=payload["feature_names"],
        )


@dataclass
class Dataset:
    """Encoded design matrix plus binary attribute/label vectors."""

    X: np.ndarray
    a: np.ndarray
    y: np.ndarray
    feature_names: list[str]
    encoder: Encoder

    def __post_init__(self):
        if self.X.ndim != 2:
            raise ShapeError("X must be 2-D")
        n = self.X.shape[0]
        if self.a.shape != (n,) or self.y.shape != (n,):
            raise ShapeError("a and y must match the number of rows of X")
        if n == 0:
            raise DataError("dataset is empty")
        if not np.all(np.isfinite(self.X)):
            raise DataError("encoded features contain NaN/Inf")

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def d(self) -> int:
        return self.X.shape[1]

    def subset(self, idx) -> "Dataset":
        idx = np.asarray(idx)
        return Dataset(self.X[idx], self.a[idx], self.y[idx],
                       self.feature_names, self.encoder)


def fit_encoder(table: RawTable, schema: SchemaConfig) -> Encoder:
    """Learn per-column statistics and vocabularies from a table."""
    if not table.rows:
        raise DataError("cannot fit an encoder on an empty table")
    enc = Encoder()
    for col in schema.numeric:
        try:
            values = np.asarray([float(v) for v in table.column(col)])
        except ValueError as exc:
            raise DataError(f"non-numeric value in column {col!r}: {exc}")
        enc.numeric_stats[col] = (float(values.mean()), float(values.std()))
        enc.feature_names.append(col)
    for col in schema.categorical:
        vocab = sorted(set(table.column(col)))
        enc.vocabulary[col] = vocab
        enc.feature_names.extend(f"{col}={v}" for v in vocab)
    return enc


def encode(table: RawTable, schema: SchemaConfig,
           encoder: Encoder | None = None) -> Dataset:
    """Encode a table; fits an encoder from the table itself unless one
    (from the training split) is supplied."""
    if not table.rows:
        raise DataError("cannot encode an empty table")
    if encoder is None:
        encoder = fit_encoder(table, schema)
    n = len(table.rows)
    blocks = []
    for col in schema.numeric:
        mean, std = encoder.numeric_stats[col]
        values = np.asarray([float(v) for v in table.column(col)])
        # zero-variance columns encode to all zeros
        z = (values - mean) / std if std > 0 else np.zeros(n)
        blocks.append(z.reshape(n, 1))
    for col in schema.categorical:
        vocab = encoder.vocabulary[col]
        pos = {v: j for j, v in enumerate(vocab)}
        block = np.zeros((n, len(vocab)))
        for i, v in enumerate(table.column(col)):
            j = pos.get(v)
            if j is not None:  # unseen category -> all-zero row
                block[i, j] = 1.0
        blocks.append(block)
    X = np.hstack(blocks) if blocks else np.zeros((n, 0))
    y = np.asarray([1 if v == schema.positive_label else 0
                    for v in table.column(schema.label)], dtype=np.int64)
    a = np.asarray([1 if v == schema.protected_value else 0
                    for v in table.column(schema.sensitive)], dtype=np.int64)
    return Dataset(X=X, a=a, y=y, feature_names=list(encoder.feature_names),
                   encoder=encoder)


def extract_labels(table: RawTable, schema: SchemaConfig) -> tuple[np.ndarray, np.ndarray]:
    """(a, y) binary vectors straight from the raw cells, no encoding."""
    a = np.asarray([1 if v == schema.protected_value else 0
                    for v in table.column(schema.sensitive)], dtype=np.int64)
    y = np.asarray([1 if v == schema.positive_label else 0
                    for v in table.column(schema.label)], dtype=np.int64)
    return a, y


def save_dataset_cache(dataset: Dataset, matrix_path, encoder_path) -> None:
    """Cache an encoded dataset as a plain-text CSV plus encoder JSON.

    The CSV holds one header row (feature names plus 'a' and 'y') and
    repr-formatted float cells, so reloading is bit-exact.
    """
    dataset.encoder.to_json(encoder_path)
    with open(matrix_path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(list(dataset.feature_names) + ["a", "y"])
        for i in range(dataset.n):
            writer.writerow([repr(float(v)) for v in dataset.X[i]]
                            + [int(dataset.a[i]), int(dataset.y[i])])


def load_dataset_cache(matrix_path, encoder_path) -> Dataset:
    """Reload a dataset written by save_dataset_cache."""
    encoder = Encoder.from_json(encoder_path)
    with open(matrix_path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        rows = list(reader)
    if header[-2:] != ["a", "y"]:
        raise SchemaError(f"{matrix_path} is not a dataset cache")
    X = np.asarray([[float(v) for v in row[:-2]] for row in rows])
    a = np.asarray([int(row[-2]) for row in rows], dtype=np.int64)
    y = np.asarray([int(row[-1]) for row in rows], dtype=np.int64)
    return Dataset(X=X, a=a, y=y, feature_names=header[:-2], encoder=encoder)


def _joint_cells(a: np.ndarray, y: np.ndarray) -> dict[tuple[int, int], np.ndarray]:
    return {(ga, gy): np.where((a == ga) & (y == gy))[0]
            for ga in (0, 1) for gy in (0, 1)}


def kfold(dataset: Dataset, k: int, seed: int) -> list[np.ndarray]:
    """k disjoint, exhaustive folds stratified by the joint (a, y) cell.

    Every nonempty cell must have at least k rows (so each fold receives
    one), which guarantees both groups and both classes in every fold.
    """
    if k < 2:
        raise ParameterError(f"k must be >= 2, got {k}")
    a, y = dataset.a, dataset.y
    if a.sum() < 1 or (1 - a).sum() < 1 or y.sum() < 1 or (1 - y).sum() < 1:
        raise DataError("dataset must contain both groups and both classes")
    cells = _joint_cells(a, y)
    for cell, idx in cells.items():
        if 0 < idx.size < k:
            raise DataError(
                f"cell (a={cell[0]}, y={cell[1]}) has {idx.size} rows, needs >= {k}")
    rng = Rng(seed)
    folds: list[list[int]] = [[] for _ in range(k)]
    for cell in sorted(cells):
        order = rng.shuffled(cells[cell])
        for pos, row in enumerate(order):
            folds[pos % k].append(int(row))
    return [np.asarray(sorted(f), dtype=np.int64) for f in folds]


def holdout_split(dataset_or_labels, test_fraction: float, seed: int,
                  labels: tuple[np.ndarray, np.ndarray] | None = None):
    """Stratified (train_idx, test_idx) split by joint (a, y) cell.

    Accepts either a Dataset or, via ``labels``, raw (a, y) vectors so a
    split can be made before encoding.
    """
    if labels is not None:
        a, y = labels
        n = a.shape[0]
    else:
        a, y = dataset_or_labels.a, dataset_or_labels.y
        n = dataset_or_labels.n
    if not (0.0 < test_fraction < 1.0):
        raise ParameterError("test_fraction must be in (0, 1)")
    if a.sum() < 1 or (1 - a).sum() < 1 or y.sum() < 1 or (1 - y).sum() < 1:
        raise DataError("dataset must contain both groups and both classes")
    rng = Rng(seed)
    test: list[int] = []
    cells = _joint_cells(a, y)
    for cell in sorted(cells):
        idx = cells[cell]
        if idx.size == 0:
            continue
        if idx.size < 2:
            raise DataError(
                f"cell (a={cell[0]}, y={cell[1]}) needs >= 2 rows to split")
        order = rng.shuffled(idx)
        n_test = max(1, int(round(idx.size * test_fraction)))
        n_test = min(n_test, idx.size - 1)  # keep at least one row in train
        test.extend(int(i) for i in order[:n_test])
    test_idx = np.asarray(sorted(test), dtype=np.int64)
    mask = np.ones(n, dtype=bool)
    mask[test_idx] = False
    return np.where(mask)[0], test_idx


def _required_cells(a: np.ndarray, y: np.ndarray, need_groups: bool,
                    need_classes: bool) -> list[np.ndarray]:
    required = []
    if need_groups:
        required += [np.where(a == 1)[0], np.where(a == 0)[0]]
    if need_classes:
        required += [np.where(y == 1)[0], np.where(y == 0)[0]]
    return required


def epoch_batches(a: np.ndarray, y: np.ndarray, size: int, rng: Rng,
                  need_groups: bool = True,
                  need_classes: bool = False) -> list[np.ndarray]:
    """One epoch of exactly-``size`` index batches covering all rows.

    Every batch is guaranteed to intersect each required cell. Full
    batches are seeded with one fresh row per cell and then filled in
    shuffled order; when the row count is not a multiple of ``size``,
    the final batch takes the leftovers and is topped up by resampling
    (without replacement) rows already placed in earlier batches, with
    missing cells refilled first.
    """
    n = a.shape[0]
    if size < 2:
        raise ParameterError(f"batch size must be >= 2, got {size}")
    if size > n:
        raise DataError(f"batch size {size} exceeds dataset size {n}")
    n_batches = -(-n // size)
    divisible = n % size == 0
    n_seeded = n_batches if divisible else n_batches - 1
    required = _required_cells(a, y, need_groups, need_classes)
    for cell in required:
        if cell.size == 0:
            raise DataError("dataset lacks a group/class the constraint needs")
        if cell.size < max(n_seeded, 1):
            raise DataError(
                f"a required cell has {cell.size} rows but {n_batches} batches "
                "are needed; reduce the batch count or rebalance the data")

    batches: list[list[int]] = [[] for _ in range(n_batches)]
    batch_sets: list[set] = [set() for _ in range(n_batches)]
    used = np.zeros(n, dtype=bool)
    # give each full batch one row from every required cell it does not
    # already intersect (cells overlap, so a row can cover several)
    for cell in required:
        cell_set = {int(r) for r in cell}
        order = (int(r) for r in rng.shuffled(cell))
        for b in range(n_seeded):
            if batch_sets[b] & cell_set:
                continue
            row = next((r for r in order if not used[r]), None)
            if row is None:
                raise DataError(
                    "stratification cells overlap too much to seed batches")
            batches[b].append(row)
            batch_sets[b].add(row)
            used[row] = True
            if len(batches[b]) > size:
                raise DataError(
                    f"batch size {size} cannot hold the required cells")

    pool = rng.shuffled(np.where(~used)[0])
    at = 0
    for b in range(n_seeded):
        take = size - len(batches[b])
        batches[b].extend(int(r) for r in pool[at:at + take])
        at += take

    if not divisible:
        # leftovers start the final batch; resample the rest from earlier rows
        final = [int(r) for r in pool[at:]]
        in_final = set(final)
        for cell in required:
            if not any(int(r) in in_final for r in cell):
                fill = next(int(r) for r in rng.shuffled(cell)
                            if int(r) not in in_final)
                final.append(fill)
                in_final.add(fill)
        short = size - len(final)
        if short < 0:
            raise DataError("dataset too small to stratify the final batch")
        if short > 0:
            earlier = {int(r) for b in batches[:-1] for r in b}
            candidates = np.asarray(sorted(earlier - in_final), dtype=np.int64)
            if candidates.size < short:
                raise DataError("dataset too small to fill the final batch")
            final.extend(int(r) for r in rng.choice(candidates, size=short,
                                                    replace=False))
        batches[-1] = final
    return [np.asarray(b, dtype=np.int64) for b in batches]


def batch_iter(dataset: Dataset, size: int, seed: int, kind: ConstraintKind,
               require_classes: bool = False):
    """Infinite generator of epochs; each item is one epoch's batch list,
    reshuffled epoch to epoch. Group stratification follows the
    constraint; pass ``require_classes`` for class-sensitive objectives."""
    rng = Rng(seed)
    while True:
        yield epoch_batches(dataset.a, dataset.y, size, rng,
                            need_groups=True, need_classes=require_classes)
