"""Label-consistency head attached to a hidden layer.

Each neuron of the supervised layer is owned by one class. The head keeps a
square linear map ``A`` and penalises the distance between ``A @ x_l`` and the
binary code that switches on exactly the neurons owned by the sample's class.
"""

from dataclasses import dataclass

import numpy as np

from .tensor import ShapeError, as_matrix


@dataclass(frozen=True)
class NeuronAllocation:
    owner: np.ndarray  # owner[j] = class index of neuron j
    num_classes: int

    @property
    def num_neurons(self):
        return int(self.owner.shape[0])

    def counts(self):
        return np.bincount(self.owner, minlength=self.num_classes)

    def neurons_of(self, c):
        return np.flatnonzero(self.owner == c)


def allocate_neurons(num_neurons, num_classes, class_priority=None):
    """Split ``num_neurons`` into contiguous per-class blocks.

    Every class gets ``num_neurons // num_classes`` neurons; the remainder goes
    one apiece to the leading classes of ``class_priority``. Blocks are laid out
    in class-index order, so a class with a surplus neuron simply has a longer
    block.
    """
    num_neurons = int(num_neurons)
    num_classes = int(num_classes)
    if num_classes < 1:
        raise ValueError("need at least one class")
    if num_neurons < num_classes:
        raise ValueError(f"cannot allocate {num_neurons} neurons to {num_classes} classes")
    if class_priority is None:
        class_priority = list(range(num_classes))
    class_priority = [int(c) for c in class_priority]
    if sorted(class_priority) != list(range(num_classes)):
        raise ValueError("class_priority must be a permutation of 0..num_classes-1")

    base, surplus = divmod(num_neurons, num_classes)
    counts = np.full(num_classes, base, dtype=np.int64)
    counts[class_priority[:surplus]] += 1
    owner = np.repeat(np.arange(num_classes, dtype=np.int64), counts)
    owner.setflags(write=False)
    return NeuronAllocation(owner, num_classes)


@dataclass
class LabelConsistencyHead:
    attach_layer: int
    transform: np.ndarray
    alpha: float
    allocation: NeuronAllocation

    def __post_init__(self):
        self.transform = as_matrix(self.transform, "transform")
        n = self.allocation.num_neurons
        if self.transform.shape != (n, n):
            raise ShapeError(f"transform must be {n}x{n}, got {self.transform.shape}")
        if self.alpha < 0:
            raise ValueError("alpha must be nonnegative")
        self.alpha = float(self.alpha)
        self.attach_layer = int(self.attach_layer)

    @property
    def num_neurons(self):
        return self.allocation.num_neurons

    @property
    def num_classes(self):
        return self.allocation.num_classes

    def copy(self):
        return LabelConsistencyHead(self.attach_layer, self.transform.copy(), self.alpha, self.allocation)


def make_head(attach_layer, num_neurons, num_classes, alpha=0.05, class_priority=None):
    """Head with an identity transform."""
    alloc = allocate_neurons(num_neurons, num_classes, class_priority)
    return LabelConsistencyHead(attach_layer, np.eye(num_neurons), alpha, alloc)


def build_ideal_codes(labels, allocation):
    """Binary ``(N_l, B)`` matrix; column b is on at neurons owned by ``labels[b]``."""
    labels = np.asarray(labels, dtype=np.int64).reshape(-1)
    if labels.size and (labels.min() < 0 or labels.max() >= allocation.num_classes):
        raise ValueError(f"label out of range [0, {allocation.num_classes})")
    return (allocation.owner[:, None] == labels[None, :]).astype(np.float64)


def _check(x_l, q, head):
    x_l = as_matrix(x_l, "x_l")
    q = as_matrix(q, "q")
    n = head.num_neurons
    if x_l.shape[0] != n or q.shape[0] != n:
        raise ShapeError(f"head expects {n} rows; got x_l {x_l.shape}, q {q.shape}")
    if x_l.shape[1] != q.shape[1]:
        raise ShapeError(f"batch width mismatch: x_l {x_l.shape[1]} vs q {q.shape[1]}")
    return x_l, q


def residual(x_l, q, head):
    x_l, q = _check(x_l, q, head)
    return head.transform @ x_l - q


def representation_error(x_l, q, head):
    """Batch mean of ``||q - A x_l||^2``."""
    r = residual(x_l, q, head)
    return float(np.sum(r * r) / r.shape[1])


def grad_x(x_l, q, head):
    """``alpha`` times d(representation_error)/d(x_l), in the shape of ``x_l``."""
    r = residual(x_l, q, head)
    return (2.0 * head.alpha / r.shape[1]) * (head.transform.T @ r)


def grad_A(x_l, q, head):
    """``alpha`` times d(representation_error)/dA."""
    x_l = as_matrix(x_l, "x_l")
    r = residual(x_l, q, head)
    return (2.0 * head.alpha / r.shape[1]) * (r @ x_l.T)


def combined_loss(lc, lr, alpha):
    return float(lc) + float(alpha) * float(lr)
