"""Datasets of labeled counter measurements: persistence, splitting,
z-score normalization, and binary relabeling.

On disk a dataset is a comma-separated text table whose header is the
event schema followed by ``label`` and ``tag`` columns, plus a
``<path>.meta`` sidecar of ``key = value`` lines. Integer counts are
stored as integers; transformed features round-trip through full-precision
decimal text.
"""

import warnings

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin

from .errors import DatasetFormatError, HpcIdError, SchemaMismatchError
from .validation import as_float_matrix, check_n_features

RESERVED_COLUMNS = ("label", "tag")


class Dataset:
    """Feature matrix + labels + per-row tags + acquisition metadata.

    Instances are immutable after construction; the row matrix is marked
    read-only so they can be shared freely.
    """

    def __init__(self, schema, rows, labels, tags, meta=None):
        self.schema = [str(s) for s in schema]
        for name in self.schema:
            if name in RESERVED_COLUMNS or "," in name:
                raise HpcIdError(f"illegal event name {name!r}")
        if len(set(self.schema)) != len(self.schema):
            raise HpcIdError("duplicate event names in schema")
        rows = np.asarray(rows, dtype=np.float64)
        if rows.ndim != 2:
            raise HpcIdError(f"rows must be 2-dimensional, got shape {rows.shape}")
        if rows.shape[1] != len(self.schema):
            raise HpcIdError(
                f"row width {rows.shape[1]} does not match schema length {len(self.schema)}"
            )
        if not np.all(np.isfinite(rows)):
            raise HpcIdError("rows contain non-finite values")
        labels = np.asarray(labels, dtype=np.int64)
        if labels.shape != (rows.shape[0],):
            raise HpcIdError("labels length does not match row count")
        tags = [str(t) for t in tags]
        if len(tags) != rows.shape[0]:
            raise HpcIdError("tags length does not match row count")
        for t in tags:
            if "," in t or "\n" in t:
                raise HpcIdError(f"illegal tag {t!r}")
        rows = rows.copy()
        rows.setflags(write=False)
        labels = labels.copy()
        labels.setflags(write=False)
        self.rows = rows
        self.labels = labels
        self.tags = tags
        self.meta = {str(k): str(v) for k, v in (meta or {}).items()}

    def __len__(self):
        return self.rows.shape[0]

    @property
    def n_features(self):
        return len(self.schema)

    @property
    def class_table(self):
        """Sorted distinct labels present in the dataset."""
        return sorted(int(c) for c in np.unique(self.labels))

    def __eq__(self, other):
        if not isinstance(other, Dataset):
            return NotImplemented
        return (
            self.schema == other.schema
            and np.array_equal(self.rows, other.rows)
            and np.array_equal(self.labels, other.labels)
            and self.tags == other.tags
            and self.meta == other.meta
        )

    def with_meta(self, **extra):
        meta = dict(self.meta)
        meta.update({k: str(v) for k, v in extra.items()})
        return Dataset(self.schema, self.rows, self.labels, self.tags, meta)

    def select_rows(self, indices):
        indices = np.asarray(indices, dtype=np.int64)
        return Dataset(
            self.schema,
            self.rows[indices],
            self.labels[indices],
            [self.tags[i] for i in indices],
            self.meta,
        )

    def select_features(self, names):
        """Restrict to ``names``, preserving the original schema order."""
        missing = [n for n in names if n not in self.schema]
        if missing:
            raise SchemaMismatchError(f"events not in schema: {missing}")
        keep = [i for i, n in enumerate(self.schema) if n in set(names)]
        return Dataset(
            [self.schema[i] for i in keep],
            self.rows[:, keep],
            self.labels,
            self.tags,
            self.meta,
        )


def _format_value(v):
    f = float(v)
    if f.is_integer() and abs(f) < 2**53:
        return str(int(f))
    return repr(f)


def save(dataset: Dataset, path):
    """Write the table and its ``.meta`` sidecar."""
    with open(path, "w") as fh:
        fh.write(",".join(dataset.schema + list(RESERVED_COLUMNS)) + "\n")
        for row, label, tag in zip(dataset.rows, dataset.labels, dataset.tags):
            cells = [_format_value(v) for v in row]
            cells.append(str(int(label)))
            cells.append(tag)
            fh.write(",".join(cells) + "\n")
    with open(str(path) + ".meta", "w") as fh:
        for key in sorted(dataset.meta):
            fh.write(f"{key} = {dataset.meta[key]}\n")


def load(path) -> Dataset:
    """Read a dataset; header order defines schema order."""
    try:
        with open(path) as fh:
            lines = fh.read().splitlines()
    except OSError as exc:
        raise DatasetFormatError(f"cannot read dataset {path!r}: {exc}") from exc
    if not lines:
        raise DatasetFormatError("empty dataset file", line=1)
    header = [c.strip() for c in lines[0].split(",")]
    if len(header) < 3 or header[-2:] != list(RESERVED_COLUMNS):
        raise DatasetFormatError(
            "header must end with 'label' and 'tag' columns", line=1
        )
    schema = header[:-2]
    n_cols = len(header)
    rows, labels, tags = [], [], []
    for lineno, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        cells = line.split(",")
        if len(cells) != n_cols:
            raise DatasetFormatError(
                f"expected {n_cols} columns, found {len(cells)}", line=lineno
            )
        values = []
        for col, cell in enumerate(cells[:-2], start=1):
            try:
                values.append(float(cell))
            except ValueError:
                raise DatasetFormatError(
                    f"non-numeric feature value {cell.strip()!r}", line=lineno, column=col
                ) from None
        try:
            labels.append(int(cells[-2]))
        except ValueError:
            raise DatasetFormatError(
                f"non-integer label {cells[-2].strip()!r}", line=lineno, column=n_cols - 1
            ) from None
        tags.append(cells[-1])
        rows.append(values)
    meta = {}
    try:
        with open(str(path) + ".meta") as fh:
            for raw in fh.read().splitlines():
                if not raw.strip() or raw.lstrip().startswith("#"):
                    continue
                if "=" not in raw:
                    raise DatasetFormatError(f"bad metadata line {raw!r}")
                key, _, value = raw.partition("=")
                meta[key.strip()] = value.strip()
    except OSError:
        meta = {}
    if not rows:
        raise DatasetFormatError("dataset has a header but no rows", line=2)
    return Dataset(schema, np.array(rows), labels, tags, meta)


# ---------------------------------------------------------------------------
# Splitting


def split(dataset: Dataset, ratio=0.80, seed=0, stratified=True):
    """Disjoint, exhaustive train/test partition, deterministic under seed.

    Stratified by default: each class keeps the global ratio to within one
    row, with at least one row on each side.
    """
    n = len(dataset)
    if not (0.0 < ratio < 1.0):
        raise HpcIdError(f"split ratio must be in (0, 1), got {ratio}")
    counts = {c: int((dataset.labels == c).sum()) for c in dataset.class_table}
    thin = [c for c, k in counts.items() if k < 2]
    if thin:
        raise HpcIdError(f"classes with fewer than 2 rows cannot be split: {thin}")
    rng = np.random.default_rng(seed)
    train_idx = []
    if stratified:
        for c in dataset.class_table:
            idx = np.flatnonzero(dataset.labels == c)
            idx = rng.permutation(idx)
            k = int(round(ratio * len(idx)))
            k = min(max(k, 1), len(idx) - 1)
            train_idx.extend(idx[:k].tolist())
    else:
        idx = rng.permutation(n)
        k = min(max(int(round(ratio * n)), 1), n - 1)
        train_idx = idx[:k].tolist()
    train_mask = np.zeros(n, dtype=bool)
    train_mask[train_idx] = True
    train = dataset.select_rows(np.flatnonzero(train_mask))
    test = dataset.select_rows(np.flatnonzero(~train_mask))
    split_meta = {"split_ratio": repr(float(ratio)), "split_seed": str(seed)}
    return (
        train.with_meta(split="train", **split_meta),
        test.with_meta(split="test", **split_meta),
    )


# ---------------------------------------------------------------------------
# Z-score normalization


class Normalizer(BaseEstimator, TransformerMixin):
    """Per-feature z-score transform fitted on training data only.

    Uses the population standard deviation so the fitted set has unit
    variance exactly. Constant features get a substituted std of 1 (with a
    warning) and therefore transform to all zeros.
    """

    def fit(self, X, y=None):
        X = as_float_matrix(X)
        if X.shape[0] == 0:
            raise HpcIdError("cannot fit normalizer on an empty matrix")
        self.means_ = X.mean(axis=0)
        stds = X.std(axis=0)  # population std
        constant = stds == 0.0
        if constant.any():
            warnings.warn(
                f"{int(constant.sum())} constant feature(s) normalized to zeros",
                RuntimeWarning,
                stacklevel=2,
            )
        self.stds_ = np.where(constant, 1.0, stds)
        self.constant_mask_ = constant
        self.fitted_on_ = X.shape[0]
        return self

    def transform(self, X):
        X = as_float_matrix(X)
        check_n_features(X, len(self.means_), "matrix to normalize")
        return (X - self.means_) / self.stds_

    def inverse_transform(self, X):
        X = as_float_matrix(X)
        check_n_features(X, len(self.means_), "matrix to denormalize")
        return X * self.stds_ + self.means_


def fit_normalizer(train: Dataset) -> Normalizer:
    norm = Normalizer().fit(train.rows)
    norm.schema_ = list(train.schema)
    return norm


def apply_normalizer(norm: Normalizer, dataset: Dataset) -> Dataset:
    if getattr(norm, "schema_", None) is not None and norm.schema_ != dataset.schema:
        raise SchemaMismatchError(
            f"normalizer fitted on schema {norm.schema_}, dataset has {dataset.schema}"
        )
    return Dataset(
        dataset.schema,
        norm.transform(dataset.rows),
        dataset.labels,
        dataset.tags,
        dataset.meta,
    ).with_meta(normalized="true")


# ---------------------------------------------------------------------------
# Binary relabeling


def relabel_binary(dataset: Dataset, positive_tags, negative_tags=None) -> Dataset:
    """Label rows 1 when their tag is in ``positive_tags`` (the unpatched
    side), else 0. With ``negative_tags`` given, tags in neither set are an
    error instead of defaulting to 0. Row order is preserved.
    """
    positive = set(positive_tags)
    negative = None if negative_tags is None else set(negative_tags)
    labels = np.zeros(len(dataset), dtype=np.int64)
    for i, tag in enumerate(dataset.tags):
        if tag in positive:
            labels[i] = 1
        elif negative is not None and tag not in negative:
            raise HpcIdError(f"tag {tag!r} is in neither the positive nor negative set")
    present = set(int(v) for v in np.unique(labels))
    if present != {0, 1}:
        raise HpcIdError(
            f"binary relabeling produced a single class {sorted(present)}; "
            "need both patched and unpatched rows"
        )
    return Dataset(dataset.schema, dataset.rows, labels, dataset.tags, dataset.meta).with_meta(
        task="binary",
        positive_tags=";".join(sorted(positive)),
        class_table="0,1",
        class_names="patched;unpatched",
    )
