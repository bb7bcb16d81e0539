"""Synthetic Gaussian-cluster datasets and round-trip CSV I/O.

CSV schema: header ``f0,...,f{d-1},label`` with an optional trailing
``clean_label`` column.  Floats are written with repr so a load of a save is
bit-exact.
"""

from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.spatial.distance import pdist

from .errors import ContractViolation, CsvFormatError


@dataclass
class Dataset:
    X: np.ndarray
    y: np.ndarray
    n_classes: int
    y_clean: Optional[np.ndarray] = None
    split: str = "train"

    @property
    def n_samples(self):
        return self.X.shape[0]

    @property
    def n_features(self):
        return self.X.shape[1]

    def onehot(self):
        out = np.zeros((self.n_samples, self.n_classes))
        out[np.arange(self.n_samples), self.y] = 1.0
        return out

    def with_labels(self, y):
        return Dataset(self.X, np.asarray(y, dtype=np.int64), self.n_classes,
                       self.y_clean, self.split)

    def validate(self):
        if self.n_samples == 0:
            raise ContractViolation("dataset is empty")
        for arr in (self.y,) + ((self.y_clean,) if self.y_clean is not None else ()):
            if arr.shape != (self.n_samples,):
                raise ContractViolation("label array does not match sample count")
            if arr.min() < 0 or arr.max() >= self.n_classes:
                raise ContractViolation("labels outside [0, n_classes)")
        return self


def make_gaussian_clusters(n_samples, n_classes, n_features, separation,
                           within_std, seed):
    """K Gaussian blobs with centers rescaled to pairwise distance ≥ separation;
    returns an 80/20 train/test split, both carrying clean labels."""
    if n_classes < 2 or n_features < 1:
        raise ContractViolation("need at least 2 classes and 1 feature")
    if n_samples < 5 * n_classes:
        raise ContractViolation("need at least 5 samples per class")
    if separation <= 0 or within_std <= 0:
        raise ContractViolation("separation and within_std must be positive")
    rng = np.random.default_rng(seed)
    centers = rng.normal(size=(n_classes, n_features))
    min_dist = pdist(centers).min()
    if min_dist <= 0:
        raise ContractViolation(
            f"could not place {n_classes} distinct centers in {n_features}-d")
    if min_dist < separation:
        centers *= separation / min_dist
    labels = np.repeat(np.arange(n_classes), -(-n_samples // n_classes))[:n_samples]
    labels = labels[rng.permutation(n_samples)].astype(np.int64)
    X = centers[labels] + rng.normal(0.0, within_std, size=(n_samples, n_features))
    n_test = max(1, round(0.2 * n_samples))
    order = rng.permutation(n_samples)
    test_idx, train_idx = order[:n_test], order[n_test:]
    train = Dataset(X[train_idx], labels[train_idx], n_classes,
                    labels[train_idx].copy(), "train")
    test = Dataset(X[test_idx], labels[test_idx], n_classes,
                   labels[test_idx].copy(), "test")
    return train.validate(), test.validate()


def save_csv(dataset, path):
    d = dataset.n_features
    cols = [f"f{j}" for j in range(d)] + ["label"]
    if dataset.y_clean is not None:
        cols.append("clean_label")
    with open(path, "w") as fh:
        fh.write(",".join(cols) + "\n")
        for i in range(dataset.n_samples):
            row = [repr(float(v)) for v in dataset.X[i]]
            row.append(str(int(dataset.y[i])))
            if dataset.y_clean is not None:
                row.append(str(int(dataset.y_clean[i])))
            fh.write(",".join(row) + "\n")


def load_csv(path, n_classes=None, split="train"):
    with open(path) as fh:
        lines = fh.read().splitlines()
    if not lines:
        raise CsvFormatError("empty file", line=1)
    header = lines[0].split(",")
    n_label_cols = 2 if header and header[-1] == "clean_label" else 1
    d = len(header) - n_label_cols
    expected = [f"f{j}" for j in range(d)] + ["label"]
    if n_label_cols == 2:
        expected.append("clean_label")
    if header != expected or d < 1:
        raise CsvFormatError(
            f"bad header {lines[0]!r}, expected f0..f{{d-1}},label[,clean_label]",
            line=1)
    if len(lines) == 1:
        raise CsvFormatError("no data rows", line=1)
    X, y, y_clean = [], [], []
    for lineno, text in enumerate(lines[1:], start=2):
        parts = text.split(",")
        if len(parts) != len(header):
            raise CsvFormatError(
                f"expected {len(header)} fields, got {len(parts)}", line=lineno)
        try:
            X.append([float(v) for v in parts[:d]])
            y.append(int(parts[d]))
            if n_label_cols == 2:
                y_clean.append(int(parts[d + 1]))
        except ValueError as exc:
            raise CsvFormatError(f"unparseable value: {exc}", line=lineno) from None
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.int64)
    y_clean_arr = np.asarray(y_clean, dtype=np.int64) if y_clean else None
    if n_classes is None:
        n_classes = int(max(y.max(), y_clean_arr.max() if y_clean_arr is not None
                            else 0)) + 1
    return Dataset(X, y, n_classes, y_clean_arr, split).validate()
