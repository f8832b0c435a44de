"""Argmax and k-NN classification on network outputs and head embeddings."""

from dataclasses import dataclass

import numpy as np

from .nn import forward
from .tensor import ShapeError, as_matrix

_CHUNK_ELEMS = 4_000_000


@dataclass
class ReferenceBank:
    """Transformed training representations (one column each) and their labels."""

    embeddings: np.ndarray
    labels: np.ndarray
    num_classes: int = None

    def __post_init__(self):
        self.embeddings = as_matrix(self.embeddings, "embeddings")
        self.labels = np.asarray(self.labels, dtype=np.int64).reshape(-1)
        if self.embeddings.shape[1] != self.labels.shape[0]:
            raise ShapeError(f"bank has {self.embeddings.shape[1]} columns but {self.labels.shape[0]} labels")
        if self.num_classes is None:
            self.num_classes = int(self.labels.max()) + 1 if self.labels.size else 0

    def __len__(self):
        return self.labels.shape[0]


def predict_argmax(net, x):
    scores = forward(net, x).activations[-1]
    # np.argmax returns the first maximum, i.e. the lowest class index on ties
    return np.argmax(scores, axis=0)


def embed(net, head, x):
    """``A @ x_l`` where ``x_l`` is the attach-layer activation."""
    trace = forward(net, x)
    return head.transform @ trace.activations[head.attach_layer]


def build_bank(net, head, x, labels, num_classes=None):
    return ReferenceBank(embed(net, head, x), labels, num_classes or head.num_classes)


def _check_query(bank, query, k):
    if len(bank) == 0:
        raise ValueError("reference bank is empty")
    if not 1 <= k <= len(bank):
        raise ValueError(f"k must lie in [1, {len(bank)}], got {k}")
    query = as_matrix(query, "query")
    if query.shape[0] != bank.embeddings.shape[0]:
        raise ShapeError(f"query dimension {query.shape[0]} != bank dimension {bank.embeddings.shape[0]}")
    return query


def neighbours(bank, query, k, exclude=None):
    """Indices and distances of the k nearest bank columns, one row per query.

    Equal distances are resolved toward the lower bank index. ``exclude``
    optionally gives, per query, one bank index to skip (leave-one-out).
    """
    query = _check_query(bank, query, k)
    nq = query.shape[1]
    idx = np.empty((nq, k), dtype=np.int64)
    dist = np.empty((nq, k))
    emb = bank.embeddings
    chunk = max(1, _CHUNK_ELEMS // max(1, emb.size))
    for lo in range(0, nq, chunk):
        hi = min(nq, lo + chunk)
        diff = emb[:, None, :] - query[:, lo:hi, None]
        d2 = np.sum(diff * diff, axis=0)
        if exclude is not None:
            d2[np.arange(hi - lo), np.asarray(exclude)[lo:hi]] = np.inf
        order = np.argsort(d2, axis=1, kind="stable")[:, :k]
        idx[lo:hi] = order
        dist[lo:hi] = np.sqrt(np.take_along_axis(d2, order, axis=1))
    return idx, dist


def knn_predict(bank, query, k, exclude=None):
    """Majority vote among the k nearest neighbours; vote ties go to the smaller class."""
    idx, _ = neighbours(bank, query, k, exclude)
    votes = np.zeros((idx.shape[0], bank.num_classes), dtype=np.int64)
    np.add.at(votes, (np.arange(idx.shape[0])[:, None], bank.labels[idx]), 1)
    # argmax picks the first (smallest) class among tied vote counts
    return np.argmax(votes, axis=1)


def knn_probabilities(bank, query, k, bandwidth=None, floor=1e-6, num_classes=None):
    """Gaussian-kernel class probabilities from the k nearest neighbours.

    A class seen among the neighbours scores ``exp(-d_c**2 / (2 h**2))`` with
    ``d_c`` its closest neighbour's distance; unseen classes score ``floor``.
    Scores are L1-normalised. ``h`` defaults to the query's mean neighbour
    distance. Accepts one query column or a matrix of them and returns an
    ``(m, num_queries)`` array.
    """
    if bandwidth is not None and bandwidth <= 0:
        raise ValueError("bandwidth must be positive")
    if floor < 0:
        raise ValueError("floor must be nonnegative")
    m = num_classes or bank.num_classes
    idx, dist = neighbours(bank, query, k)
    out = np.empty((m, idx.shape[0]))
    for j in range(idx.shape[0]):
        h = bandwidth
        if h is None:
            h = float(dist[j].mean())
            if h <= 0:
                h = 1.0
        w = np.full(m, float(floor))
        for c in np.unique(bank.labels[idx[j]]):
            d_c = dist[j][bank.labels[idx[j]] == c].min()
            w[c] = np.exp(-d_c * d_c / (2.0 * h * h))
        total = w.sum()
        if total <= 0:
            # every kernel weight underflowed and floor is 0: fall back to nearest class
            w[bank.labels[idx[j, 0]]] = 1.0
            total = 1.0
        out[:, j] = w / total
    return out
