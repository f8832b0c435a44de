"""Labelled datasets, the synthetic cluster benchmark, and CSV I/O.

Features are stored ``(dim, num_samples)`` to match the network's
samples-as-columns convention.
"""

import csv
import hashlib
from dataclasses import dataclass, field

import numpy as np

from .tensor import as_matrix


class DataError(ValueError):
    """Malformed or inconsistent dataset input."""


@dataclass
class Dataset:
    features: np.ndarray
    labels: np.ndarray
    num_classes: int
    is_test: np.ndarray = None
    class_values: list = None
    scaling: dict = field(default=None, repr=False)

    def __post_init__(self):
        self.features = as_matrix(self.features, "features")
        self.labels = np.asarray(self.labels, dtype=np.int64).reshape(-1)
        n = self.features.shape[1]
        if self.labels.shape[0] != n:
            raise DataError(f"{self.labels.shape[0]} labels for {n} samples")
        if self.is_test is None:
            self.is_test = np.zeros(n, dtype=bool)
        self.is_test = np.asarray(self.is_test, dtype=bool).reshape(-1)
        if self.is_test.shape[0] != n:
            raise DataError("split tags must cover every sample")
        if self.labels.size and (self.labels.min() < 0 or self.labels.max() >= self.num_classes):
            raise DataError(f"labels must lie in [0, {self.num_classes})")
        if self.class_values is None:
            self.class_values = list(range(self.num_classes))

    @property
    def dim(self):
        return self.features.shape[0]

    @property
    def num_samples(self):
        return self.features.shape[1]

    def subset(self, mask):
        mask = np.asarray(mask)
        return Dataset(self.features[:, mask], self.labels[mask], self.num_classes,
                       self.is_test[mask], self.class_values, self.scaling)

    def train(self):
        return self.subset(~self.is_test)

    def test(self):
        return self.subset(self.is_test)

    def fingerprint(self):
        h = hashlib.sha256()
        h.update(np.ascontiguousarray(self.features).tobytes())
        h.update(self.labels.astype("<i8").tobytes())
        h.update(self.is_test.astype(np.uint8).tobytes())
        return h.hexdigest()


def gen_synthetic_clusters(m, dim, per_class, spread, seed=0, test_fraction=0.25):
    """Gaussian blobs around random unit-norm centres.

    Class ``c`` has per-coordinate standard deviation ``spread * (1 + c/m)``,
    so higher class indices are more spread out. The last
    ``round(per_class * test_fraction)`` samples of each class form the test
    split.
    """
    if m < 2 or dim < 2:
        raise DataError("need m >= 2 classes and dim >= 2")
    if per_class < 1:
        raise DataError("per_class must be positive")
    if spread < 0:
        raise DataError("spread must be nonnegative")
    if not 0 <= test_fraction < 1:
        raise DataError("test_fraction must lie in [0, 1)")
    rng = np.random.default_rng(seed)
    centers = rng.standard_normal((dim, m))
    centers /= np.linalg.norm(centers, axis=0, keepdims=True)
    n_test = int(round(per_class * test_fraction))
    feats, labels, tags = [], [], []
    for c in range(m):
        sigma = spread * (1.0 + c / m)
        noise = rng.standard_normal((dim, per_class))
        feats.append(centers[:, [c]] + sigma * noise)
        labels.append(np.full(per_class, c))
        tag = np.zeros(per_class, dtype=bool)
        tag[per_class - n_test:] = True
        tags.append(tag)
    return Dataset(np.hstack(feats), np.concatenate(labels), m, np.concatenate(tags))


def class_priority(data):
    """Classes by descending trace of their training-feature covariance.

    Ties keep ascending class order.
    """
    train = data.train()
    traces = []
    for c in range(data.num_classes):
        block = train.features[:, train.labels == c]
        if block.shape[1] == 0:
            raise DataError(f"class {c} has no training samples")
        traces.append(float(np.var(block, axis=1).sum()))
    return sorted(range(data.num_classes), key=lambda c: (-traces[c], c))


def standardize(data, eps=1e-12):
    """Standardize with train-split statistics; constant dimensions become 0."""
    train = data.features[:, ~data.is_test]
    mean = train.mean(axis=1)
    std = train.std(axis=1)
    dead = std < eps
    scale = np.where(dead, 1.0, std)
    feats = (data.features - mean[:, None]) / scale[:, None]
    feats[dead, :] = 0.0
    scaling = {"mean": mean, "std": std, "dead": dead}
    return Dataset(feats, data.labels, data.num_classes, data.is_test, data.class_values, scaling)


def _is_number(cell):
    try:
        float(cell)
    except ValueError:
        return False
    return True


def load_csv(path, label_column=None, split_column="split", header=None, standardize_features=True):
    """Read a comma-separated file into a :class:`Dataset`.

    ``label_column`` is a column index or (with a header) a name; by default
    the column headed ``label``, else the last one. A column
    named by ``split_column`` holding ``train``/``test`` tags is used when
    present; otherwise every row is training data. Labels are re-indexed
    densely in sorted order of the training labels.
    """
    with open(path, newline="") as fh:
        rows = [(i + 1, row) for i, row in enumerate(csv.reader(fh)) if row and any(c.strip() for c in row)]
    if not rows:
        raise DataError(f"{path}: no data rows")
    names = None
    if header is None:
        header = not all(_is_number(c) for c in rows[0][1])
    if header:
        names = [c.strip() for c in rows[0][1]]
        rows = rows[1:]
        if not rows:
            raise DataError(f"{path}: header but no data rows")
    width = len(rows[0][1]) if names is None else len(names)

    def _resolve(col):
        if isinstance(col, str) and not col.lstrip("-").isdigit():
            if names is None or col not in names:
                raise DataError(f"{path}: no column named {col!r}")
            return names.index(col)
        idx = int(col)
        if not -width <= idx < width:
            raise DataError(f"{path}: column index {idx} out of range for {width} columns")
        return idx % width

    if label_column is None:
        label_column = "label" if names is not None and "label" in names else -1
    label_idx = _resolve(label_column)
    split_idx = None
    if split_column is not None and names is not None and split_column in names:
        split_idx = names.index(split_column)

    feats, raw_labels, tags = [], [], []
    for lineno, row in rows:
        if len(row) != width:
            raise DataError(f"{path}:{lineno}: expected {width} fields, found {len(row)}")
        vals = []
        for j, cell in enumerate(row):
            if j == label_idx or j == split_idx:
                continue
            try:
                vals.append(float(cell))
            except ValueError:
                raise DataError(f"{path}:{lineno}: non-numeric cell {cell!r} in column {j}") from None
        try:
            raw_labels.append(int(row[label_idx].strip()))
        except ValueError:
            raise DataError(f"{path}:{lineno}: label {row[label_idx]!r} is not an integer") from None
        if split_idx is not None:
            tag = row[split_idx].strip().lower()
            if tag not in ("train", "test"):
                raise DataError(f"{path}:{lineno}: split tag must be train or test, got {tag!r}")
            tags.append(tag == "test")
        else:
            tags.append(False)
        feats.append(vals)

    is_test = np.array(tags, dtype=bool)
    raw_labels = np.array(raw_labels, dtype=np.int64)
    classes = sorted(set(raw_labels[~is_test].tolist()))
    if not classes:
        raise DataError(f"{path}: no training rows")
    index = {v: i for i, v in enumerate(classes)}
    labels = []
    for (lineno, _), lab in zip(rows, raw_labels):
        if lab not in index:
            raise DataError(f"{path}:{lineno}: label {lab} never appears in the training split")
        labels.append(index[lab])
    data = Dataset(np.array(feats, dtype=np.float64).T.reshape(len(feats[0]), len(feats)),
                   labels, len(classes), is_test, classes)
    return standardize(data) if standardize_features else data


def write_csv(data, path):
    """Write ``data`` with header ``f0..f{d-1},label,split``; floats round-trip exactly."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow([f"f{i}" for i in range(data.dim)] + ["label", "split"])
        for b in range(data.num_samples):
            w.writerow([repr(float(v)) for v in data.features[:, b]]
                       + [data.class_values[data.labels[b]], "test" if data.is_test[b] else "train"])
