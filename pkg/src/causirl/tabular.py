"""Loaders and preprocessing for the UCI Adult and German Credit files.

The column layout of each dataset (which columns are categorical, where the
target and the sensitive attribute come from) lives in the JSON files under
``causirl/schemas``. Nothing is downloaded here; see ``causirl fetch``.
"""
import csv
import json
import os
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np

from .errors import DegenerateColumnError, InputError, ParseError
from .rng import substream

DATA_DIR_ENV = "CAUSIRL_DATA_DIR"


def load_schema(name):
    text = resources.files("causirl").joinpath("schemas", f"{name}.json").read_text()
    return json.loads(text)


def default_data_dir():
    return Path(os.environ.get(DATA_DIR_ENV, "data/uci"))


@dataclass
class TabularDataset:
    name: str
    columns: dict  # column name -> 1-d array (str for categorical, float for continuous)
    target: np.ndarray  # 1 = positive class
    sensitive: np.ndarray  # 1 = minority group (female)
    split: np.ndarray  # "train" | "test"
    schema: dict = field(repr=False, default=None)

    def __len__(self):
        return len(self.target)

    def subset(self, mask_or_idx):
        return TabularDataset(
            self.name,
            {k: v[mask_or_idx] for k, v in self.columns.items()},
            self.target[mask_or_idx],
            self.sensitive[mask_or_idx],
            self.split[mask_or_idx],
            self.schema,
        )

    def train(self):
        return self.subset(self.split == "train")

    def test(self):
        return self.subset(self.split == "test")

    def majority_fractions(self):
        """Majority-class fractions of the target and of the sensitive attribute."""
        t = self.target.mean()
        s = self.sensitive.mean()
        return max(t, 1 - t), max(s, 1 - s)


def _assemble(name, schema, records, targets, sensitive, split):
    cols = {}
    for j, col in enumerate(schema["columns"]):
        values = [r[j] for r in records]
        if col["kind"] == "continuous":
            cols[col["name"]] = np.array(values, dtype=float)
        else:
            cols[col["name"]] = np.array(values, dtype=object)
    return TabularDataset(
        name,
        cols,
        np.array(targets, dtype=np.int64),
        np.array(sensitive, dtype=np.int64),
        np.array(split, dtype=object),
        schema,
    )


def _parse_adult_file(path, split, schema, sink):
    ncols = len(schema["columns"])
    sens_idx = [c["name"] for c in schema["columns"]].index(schema["sensitive"]["column"])
    smap = schema["sensitive"]["map"]
    pos, neg = schema["target"]["positive"], schema["target"]["negative"]
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line or line.startswith("|"):
                continue
            fields = [f.strip() for f in line.split(",")]
            if len(fields) != ncols + 1:
                raise ParseError(f"{path}: expected {ncols + 1} fields, got {len(fields)}", lineno)
            if any(f == schema["missing"] for f in fields):
                continue
            label = fields[-1].rstrip(".")
            if label not in (pos, neg):
                raise ParseError(f"{path}: unknown income label {fields[-1]!r}", lineno)
            record = fields[:-1]
            for j, col in enumerate(schema["columns"]):
                if col["kind"] == "continuous":
                    try:
                        record[j] = float(record[j])
                    except ValueError:
                        raise ParseError(f"{path}: column {col['name']} is not numeric: {record[j]!r}", lineno)
            if record[sens_idx] not in smap:
                raise ParseError(f"{path}: unknown sex {record[sens_idx]!r}", lineno)
            sink.append((record, int(label == pos), smap[record[sens_idx]], split))


def load_adult(data_path, test_path):
    """Read ``adult.data`` and ``adult.test``; rows with a "?" are dropped."""
    schema = load_schema("adult")
    rows = []
    _parse_adult_file(data_path, "train", schema, rows)
    _parse_adult_file(test_path, "test", schema, rows)
    if not rows:
        raise InputError("no rows loaded")
    records, t, s, split = zip(*rows)
    return _assemble("adult", schema, records, t, s, split)


def load_german(path, test_fraction=0.2, seed=0):
    """Read ``german.data``; the train/test split is seeded and stratified by target."""
    schema = load_schema("german")
    cols = schema["columns"]
    codes = schema["target"]["codes"]
    smap = schema["sensitive"]["map"]
    sens_idx = [c["name"] for c in cols].index(schema["sensitive"]["column"])
    records, targets, sensitive = [], [], []
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            fields = line.split()
            if not fields:
                continue
            if len(fields) != len(cols) + 1:
                raise ParseError(f"{path}: expected {len(cols) + 1} fields, got {len(fields)}", lineno)
            record = fields[:-1]
            for j, col in enumerate(cols):
                if col["kind"] == "continuous":
                    try:
                        record[j] = float(record[j])
                    except ValueError:
                        raise ParseError(f"{path}: column {col['name']} is not numeric: {record[j]!r}", lineno)
                elif record[j] not in col["codes"]:
                    raise ParseError(f"{path}: unknown code {record[j]!r} for {col['name']}", lineno)
            if fields[-1] not in codes:
                raise ParseError(f"{path}: unknown label {fields[-1]!r}", lineno)
            records.append(record)
            targets.append(int(codes[fields[-1]] == schema["target"]["positive"]))
            sensitive.append(smap[record[sens_idx]])
    targets = np.array(targets)
    split = np.full(len(records), "train", dtype=object)
    rng = substream(seed, "german_split")
    for cls in (0, 1):
        idx = np.flatnonzero(targets == cls)
        n_test = int(round(test_fraction * len(idx)))
        split[rng.permutation(idx)[:n_test]] = "test"
    return _assemble("german", schema, records, targets, sensitive, split)


@dataclass
class Preprocessor:
    """Frozen one-hot vocabularies and standardization statistics."""

    blocks: list  # (name, kind, categories-or-(mean, std))
    include_sensitive: bool = True
    unseen: int = field(default=0, compare=False)

    @property
    def feature_names(self):
        names = []
        for name, kind, info in self.blocks:
            if kind == "continuous":
                names.append(name)
            else:
                names.extend(f"{name}={c}" for c in info)
        return names

    @property
    def n_features(self):
        return len(self.feature_names)


def fit_preprocessor(train, include_sensitive=True):
    """Fit one-hot maps and z-score statistics on the training split only."""
    if len(train) == 0:
        raise InputError("empty training split")
    schema = train.schema
    skip = None if include_sensitive else schema["sensitive_block"]
    blocks = []
    for col in schema["columns"]:
        name = col["name"]
        if name == skip:
            continue
        values = train.columns[name]
        if col["kind"] == "continuous":
            mean = float(values.mean())
            std = float(values.std())
            if not std > 0:
                raise DegenerateColumnError(f"column {name!r} is constant on the training split")
            blocks.append((name, "continuous", (mean, std)))
        else:
            blocks.append((name, "categorical", tuple(sorted(set(values)))))
    return Preprocessor(blocks, include_sensitive)


def apply_preprocessor(p, dataset):
    """Return ``(X, target, sensitive)``; unseen categories become an all-zero block."""
    parts = []
    for name, kind, info in p.blocks:
        if name not in dataset.columns:
            raise InputError(f"dataset has no column {name!r}")
        values = dataset.columns[name]
        if kind == "continuous":
            mean, std = info
            parts.append(((values.astype(float) - mean) / std)[:, None])
        else:
            index = {c: i for i, c in enumerate(info)}
            block = np.zeros((len(values), len(info)))
            for r, v in enumerate(values):
                i = index.get(v)
                if i is None:
                    p.unseen += 1
                else:
                    block[r, i] = 1.0
            parts.append(block)
    X = np.concatenate(parts, axis=1) if parts else np.zeros((len(dataset), 0))
    return X, dataset.target.copy(), dataset.sensitive.copy()


def export_csv(p, dataset, path):
    """Write the preprocessed features with target, sensitive and split columns."""
    X, t, s = apply_preprocessor(p, dataset)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(p.feature_names + ["target", "sensitive", "split"])
        for row, ti, si, sp in zip(X, t, s, dataset.split):
            w.writerow([repr(float(x)) for x in row] + [int(ti), int(si), sp])
