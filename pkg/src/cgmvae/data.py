"""Multi-label dataset loading, splitting, normalization, and batching.

Two on-disk formats are supported:

* ``dense-csv``: two headerless files, ``X.csv`` (N rows of D floats) and
  ``Y.csv`` (N rows of L 0/1 integers).
* ``sparse-multilabel``: one text file with a ``#L=<L> D=<D>`` header line;
  each data line is comma-separated positive label indices (possibly empty),
  one space, then space-separated ``featureIndex:value`` pairs, 0-based.

Features are stored raw; per-feature z-scoring statistics come from the
training rows only and are applied at batch/prediction time.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import rng
from .errors import ConfigError, DatasetParseError

TRAIN, VAL, TEST = 0, 1, 2
_SPLIT_NAMES = {"train": TRAIN, "val": VAL, "test": TEST}


@dataclass
class Dataset:
    """Aligned feature matrix, binary label matrix, split tags, and norm stats."""

    features: np.ndarray            # (N, D) float64, raw
    labels: np.ndarray              # (N, L) int8 in {0, 1}
    split: np.ndarray               # (N,) int8 in {TRAIN, VAL, TEST}
    label_names: list[str] | None = None
    feature_mean: np.ndarray = field(default=None, repr=False)
    feature_std: np.ndarray = field(default=None, repr=False)

    def __post_init__(self):
        if self.features.shape[0] != self.labels.shape[0]:
            raise DatasetParseError(
                f"feature rows ({self.features.shape[0]}) != label rows ({self.labels.shape[0]})"
            )
        if self.feature_mean is None:
            self._refresh_norm_stats()

    def _refresh_norm_stats(self):
        rows = self.features[self.split == TRAIN]
        if rows.shape[0] == 0:
            rows = self.features
        self.feature_mean = rows.mean(axis=0)
        std = rows.std(axis=0)
        std[std == 0.0] = 1.0  # constant features pass through unscaled
        self.feature_std = std

    @property
    def n_samples(self) -> int:
        return self.features.shape[0]

    @property
    def n_features(self) -> int:
        return self.features.shape[1]

    @property
    def n_labels(self) -> int:
        return self.labels.shape[1]

    @property
    def empty_label_mask(self) -> np.ndarray:
        """Rows whose label vector is all zero; kept, but some loss terms skip them."""
        return self.labels.sum(axis=1) == 0

    def rows(self, split_name: str) -> np.ndarray:
        """Row indices of one split, in stored order."""
        if split_name not in _SPLIT_NAMES:
            raise ConfigError(f"unknown split {split_name!r}; expected train/val/test")
        return np.flatnonzero(self.split == _SPLIT_NAMES[split_name])

    def normalized(self, row_indices: np.ndarray) -> np.ndarray:
        """Z-scored feature rows using train-split statistics."""
        return (self.features[row_indices] - self.feature_mean) / self.feature_std


@dataclass
class Batch:
    features: np.ndarray   # (B, D), normalized
    labels: np.ndarray     # (B, L)
    row_indices: np.ndarray


def parse_dense_matrix(path: str, kind: str) -> np.ndarray:
    rows = []
    width = None
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            parts = line.split(",")
            if width is None:
                width = len(parts)
            elif len(parts) != width:
                raise DatasetParseError(
                    f"{kind} row has {len(parts)} fields, expected {width}", line=lineno
                )
            try:
                rows.append([float(p) for p in parts])
            except ValueError as e:
                raise DatasetParseError(f"{kind} value not numeric: {e}", line=lineno) from None
    if not rows:
        raise DatasetParseError(f"{kind} file {path} is empty")
    return np.asarray(rows, dtype=np.float64)


def _validate_binary(y: np.ndarray, path: str) -> np.ndarray:
    bad = ~np.isin(y, (0.0, 1.0))
    if np.any(bad):
        row = int(np.argwhere(bad)[0, 0]) + 1
        raise DatasetParseError(f"label matrix in {path} contains non-binary values", line=row)
    return y.astype(np.int8)


def load_dense(x_path: str, y_path: str, label_names: list[str] | None = None) -> Dataset:
    """Load the dense-csv pair; labels must be strictly 0/1."""
    x = parse_dense_matrix(x_path, "feature")
    y = _validate_binary(parse_dense_matrix(y_path, "label"), y_path)
    if x.shape[0] != y.shape[0]:
        raise DatasetParseError(
            f"{x_path} has {x.shape[0]} rows but {y_path} has {y.shape[0]}"
        )
    if label_names is not None and len(label_names) != y.shape[1]:
        raise DatasetParseError(
            f"{len(label_names)} label names for {y.shape[1]} label columns"
        )
    split = np.zeros(x.shape[0], dtype=np.int8)
    return Dataset(features=x, labels=y, split=split, label_names=label_names)


def load_sparse(path: str) -> Dataset:
    """Load the sparse-multilabel format (one file, explicit L/D header)."""
    xs, ys = [], []
    L = D = None
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.rstrip("\n")
            if lineno == 1:
                if not line.startswith("#"):
                    raise DatasetParseError("missing '#L=<L> D=<D>' header", line=1)
                try:
                    fields = dict(p.split("=") for p in line.lstrip("#").split())
                    L, D = int(fields["L"]), int(fields["D"])
                except (ValueError, KeyError):
                    raise DatasetParseError(f"bad header {line!r}", line=1) from None
                continue
            if not line.strip():
                continue
            label_part, _, feat_part = line.partition(" ")
            y = np.zeros(L, dtype=np.int8)
            if label_part:
                for tok in label_part.split(","):
                    try:
                        idx = int(tok)
                    except ValueError:
                        raise DatasetParseError(f"bad label index {tok!r}", line=lineno) from None
                    if not 0 <= idx < L:
                        raise DatasetParseError(f"label index {idx} outside [0, {L})", line=lineno)
                    y[idx] = 1
            x = np.zeros(D, dtype=np.float64)
            for tok in feat_part.split():
                try:
                    idx_s, val_s = tok.split(":")
                    idx, val = int(idx_s), float(val_s)
                except ValueError:
                    raise DatasetParseError(f"bad feature pair {tok!r}", line=lineno) from None
                if not 0 <= idx < D:
                    raise DatasetParseError(f"feature index {idx} outside [0, {D})", line=lineno)
                x[idx] = val
            xs.append(x)
            ys.append(y)
    if not xs:
        raise DatasetParseError(f"no data lines in {path}")
    return Dataset(
        features=np.vstack(xs),
        labels=np.vstack(ys),
        split=np.zeros(len(xs), dtype=np.int8),
    )


def load(path_or_paths, fmt: str = "dense-csv") -> Dataset:
    """Dispatch on format: ``dense-csv`` takes (x_path, y_path), ``sparse-multilabel`` one path."""
    if fmt == "dense-csv":
        x_path, y_path = path_or_paths
        return load_dense(x_path, y_path)
    if fmt == "sparse-multilabel":
        return load_sparse(path_or_paths)
    raise ConfigError(f"unknown dataset format {fmt!r}")


def split(ds: Dataset, fractions=(0.8, 0.1, 0.1), seed: int = 0) -> Dataset:
    """Assign train/val/test tags by a seeded permutation.

    Boundaries sit at floor(N * cumulative fraction), so N=2407 under the
    default 80/10/10 yields 1925/241/241.
    """
    if abs(float(np.sum(fractions)) - 1.0) > 1e-9:
        raise ConfigError(f"split fractions must sum to 1, got {fractions}")
    n = ds.n_samples
    perm = rng.stream(seed, "split").permutation(n)
    n_train = int(np.floor(n * fractions[0]))
    n_val_end = int(np.floor(n * (fractions[0] + fractions[1])))
    tags = np.empty(n, dtype=np.int8)
    tags[perm[:n_train]] = TRAIN
    tags[perm[n_train:n_val_end]] = VAL
    tags[perm[n_val_end:]] = TEST
    for name, code in _SPLIT_NAMES.items():
        if not np.any(tags == code):
            raise ConfigError(f"split produced an empty {name} set (N={n}, fractions={fractions})")
    return Dataset(
        features=ds.features,
        labels=ds.labels,
        split=tags,
        label_names=ds.label_names,
    )


def apply_split_manifest(ds: Dataset, path: str) -> Dataset:
    """Override random splitting with a file of N tags in {0,1,2}."""
    tags = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            if line not in ("0", "1", "2"):
                raise DatasetParseError(f"split tag must be 0, 1 or 2, got {line!r}", line=lineno)
            tags.append(int(line))
    if len(tags) != ds.n_samples:
        raise DatasetParseError(
            f"split manifest has {len(tags)} tags for {ds.n_samples} rows"
        )
    return Dataset(
        features=ds.features,
        labels=ds.labels,
        split=np.asarray(tags, dtype=np.int8),
        label_names=ds.label_names,
    )


def subsample_train(ds: Dataset, fraction: float, seed: int = 0) -> Dataset:
    """Keep a seeded random floor(fraction * n_train) of training rows.

    Validation and test rows are untouched; norm stats are recomputed on the
    surviving training rows.
    """
    if not 0.0 < fraction <= 1.0:
        raise ConfigError(f"train fraction must be in (0, 1], got {fraction}")
    if fraction == 1.0:
        return ds
    train_rows = np.flatnonzero(ds.split == TRAIN)
    n_keep = int(np.floor(fraction * train_rows.size))
    if n_keep == 0:
        raise ConfigError(
            f"train fraction {fraction} keeps no rows of {train_rows.size}"
        )
    perm = rng.stream(seed, "subsample").permutation(train_rows.size)
    drop = np.sort(train_rows[perm[n_keep:]])
    keep_mask = np.ones(ds.n_samples, dtype=bool)
    keep_mask[drop] = False
    return Dataset(
        features=ds.features[keep_mask],
        labels=ds.labels[keep_mask],
        split=ds.split[keep_mask],
        label_names=ds.label_names,
    )


def batches(ds: Dataset, split_name: str, batch_size: int, seed: int, epoch: int):
    """Seeded shuffled mini-batches for one epoch; the short final batch is kept.

    The epoch index is folded into the shuffle stream, so every epoch draws a
    fresh order that is still reproducible from (seed, epoch).
    """
    if batch_size < 1:
        raise ConfigError(f"batch size must be >= 1, got {batch_size}")
    row_idx = ds.rows(split_name)
    order = rng.stream(seed, "shuffle", epoch).permutation(row_idx.size)
    shuffled = row_idx[order]
    for start in range(0, shuffled.size, batch_size):
        rows = shuffled[start:start + batch_size]
        yield Batch(
            features=ds.normalized(rows),
            labels=ds.labels[rows].astype(np.float64),
            row_indices=rows,
        )
