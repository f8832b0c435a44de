"""Mini-batch SGD with momentum for baseline, LCNN-1 and LCNN-2 training."""

import csv
import logging
import time
from dataclasses import asdict, dataclass, field

import numpy as np

from .classify import ReferenceBank, knn_predict
from .head import build_ideal_codes, combined_loss, grad_A, grad_x, representation_error
from .nn import backward, forward, softmax_xent
from .tensor import ShapeError

log = logging.getLogger(__name__)

BASELINE = "baseline"
LCNN1 = "lcnn1"
LCNN2 = "lcnn2"
MODES = (BASELINE, LCNN1, LCNN2)

RECORD_COLUMNS = ("epoch", "loss", "loss_c", "loss_r", "train_err", "test_err")


class TrainingDiverged(FloatingPointError):
    pass


@dataclass
class TrainConfig:
    mode: str = LCNN2
    alpha: float = 0.05
    learning_rate: float = 0.05
    momentum: float = 0.9
    batch_size: int = 32
    epochs: int = 30
    seed: int = 0
    knn_k: int = 5
    weight_decay: float = 0.0
    lr_decay: float = 1.0
    lr_decay_every: int = 0

    def __post_init__(self):
        self.mode = str(self.mode).lower().replace("-", "")
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}, got {self.mode!r}")
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")
        if self.batch_size < 1:
            raise ValueError("batch_size must be at least 1")
        if self.epochs < 0:
            raise ValueError("epochs must be nonnegative")
        if self.alpha < 0:
            raise ValueError("alpha must be nonnegative")
        if not 0 <= self.momentum < 1:
            raise ValueError("momentum must lie in [0, 1)")

    @property
    def effective_alpha(self):
        """Weight on the representation error actually used for this mode."""
        if self.mode == BASELINE:
            return 0.0
        if self.mode == LCNN1:
            return 1.0
        return float(self.alpha)

    def lr_at(self, epoch):
        if self.lr_decay_every > 0:
            return self.learning_rate * self.lr_decay ** (epoch // self.lr_decay_every)
        return self.learning_rate

    def to_dict(self):
        return asdict(self)


@dataclass
class TrainRecord:
    loss: list = field(default_factory=list)
    loss_c: list = field(default_factory=list)
    loss_r: list = field(default_factory=list)
    train_err: list = field(default_factory=list)
    test_err: list = field(default_factory=list)
    wall_time: float = 0.0

    def __len__(self):
        return len(self.loss)

    def rows(self):
        for i in range(len(self)):
            yield (i + 1, self.loss[i], self.loss_c[i], self.loss_r[i], self.train_err[i], self.test_err[i])

    def same_metrics(self, other):
        """Bitwise equality of every per-epoch column (wall time ignored)."""
        cols = RECORD_COLUMNS[1:]
        return all(np.array_equal(np.asarray(getattr(self, c)), np.asarray(getattr(other, c)), equal_nan=True)
                   for c in cols)

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(RECORD_COLUMNS)
            for row in self.rows():
                w.writerow([row[0]] + [repr(float(v)) for v in row[1:]])

    @classmethod
    def from_csv(cls, path):
        rec = cls()
        with open(path, newline="") as fh:
            reader = csv.DictReader(fh)
            for row in reader:
                for c in RECORD_COLUMNS[1:]:
                    getattr(rec, c).append(float(row[c]))
        return rec


def epochs_to_threshold(train_err, threshold):
    """Index of the first epoch whose training error is at most ``threshold``, else None."""
    if isinstance(train_err, TrainRecord):
        train_err = train_err.train_err
    for i, err in enumerate(train_err):
        if err <= threshold:
            return i
    return None


def _error_rates(net, head, mode, train, test, k):
    """Training and test error; LCNN-1 has no trained output layer so it uses k-NN."""
    tr_trace = forward(net, train.features)
    if mode == LCNN1:
        bank = ReferenceBank(head.transform @ tr_trace.activations[head.attach_layer], train.labels,
                             head.num_classes)
        kk = min(k, len(bank) - 1) if len(bank) > 1 else 1
        exclude = np.arange(len(bank)) if len(bank) > 1 else None
        train_pred = knn_predict(bank, bank.embeddings, kk, exclude=exclude)
        test_err = float("nan")
        if test.num_samples:
            te = head.transform @ forward(net, test.features).activations[head.attach_layer]
            test_err = float(np.mean(knn_predict(bank, te, min(k, len(bank))) != test.labels))
    else:
        train_pred = np.argmax(tr_trace.activations[-1], axis=0)
        test_err = float("nan")
        if test.num_samples:
            test_pred = np.argmax(forward(net, test.features).activations[-1], axis=0)
            test_err = float(np.mean(test_pred != test.labels))
    return tr_trace, float(np.mean(train_pred != train.labels)), test_err


def _check_dims(net, head, data, mode):
    if data.dim != net.input_dim:
        raise ShapeError(f"data has {data.dim} features, network expects {net.input_dim}")
    if not 1 <= head.attach_layer <= net.n_layers:
        raise ShapeError(f"attach layer {head.attach_layer} outside 1..{net.n_layers}")
    width = net.widths[head.attach_layer]
    if head.num_neurons != width:
        raise ShapeError(f"head covers {head.num_neurons} neurons but layer {head.attach_layer} has {width}")
    if head.num_classes != data.num_classes:
        raise ShapeError(f"head allocates {head.num_classes} classes, data has {data.num_classes}")
    if mode != LCNN1 and net.output_dim != data.num_classes:
        raise ShapeError(f"network emits {net.output_dim} scores for {data.num_classes} classes")


def train(net, head, data, cfg, callback=None):
    """Train copies of ``net`` and ``head`` on ``data.train()``.

    Returns ``(net, head, record)``. The inputs are not modified. Epoch
    statistics are measured on the full training and test splits after each
    epoch. ``callback(epoch, net, head)`` runs after each epoch if given.
    """
    mode = cfg.mode
    _check_dims(net, head, data, mode)
    net = net.copy()
    head = head.copy()
    head.alpha = cfg.effective_alpha
    alpha = head.alpha
    train_set, test_set = data.train(), data.test()
    n_train = train_set.num_samples
    if n_train == 0:
        raise ValueError("no training samples")
    l = head.attach_layer
    n = net.n_layers
    codes = build_ideal_codes(train_set.labels, head.allocation)

    params = [p for _, p in net.parameters()] + [head.transform]
    velocity = [np.zeros_like(p) for p in params]
    rng = np.random.default_rng(cfg.seed)
    record = TrainRecord()
    start = time.perf_counter()

    for epoch in range(cfg.epochs):
        lr = cfg.lr_at(epoch)
        perm = rng.permutation(n_train)
        for b, lo in enumerate(range(0, n_train, cfg.batch_size)):
            cols = perm[lo:lo + cfg.batch_size]
            xb = train_set.features[:, cols]
            yb = train_set.labels[cols]
            trace = forward(net, xb)
            if mode == LCNN1:
                lc, g_out = 0.0, np.zeros_like(trace.activations[n])
            else:
                lc, g_out = softmax_xent(trace.activations[n], yb)
            inject = None
            g_a = None
            if alpha > 0:
                q = codes[:, cols]
                x_l = trace.activations[l]
                lr_val = representation_error(x_l, q, head)
                if not np.isfinite(lr_val):
                    raise TrainingDiverged(f"non-finite representation error at epoch {epoch + 1}, batch {b + 1}")
                inject = {l: grad_x(x_l, q, head)}
                g_a = grad_A(x_l, q, head)
            if not np.isfinite(lc):
                raise TrainingDiverged(f"non-finite classification loss at epoch {epoch + 1}, batch {b + 1}")
            grads = backward(net, trace, g_out, inject)
            flat = []
            for layer, dw, db in zip(net.layers, grads.weights, grads.biases):
                if cfg.weight_decay:
                    dw = dw + cfg.weight_decay * layer.weight
                flat += [dw, db]
            flat.append(g_a)
            for p, v, g in zip(params, velocity, flat):
                if g is None:
                    continue
                v *= cfg.momentum
                v -= lr * g
                p += v

        tr_trace, train_err, test_err = _error_rates(net, head, mode, train_set, test_set, cfg.knn_k)
        loss_c, _ = softmax_xent(tr_trace.activations[n], train_set.labels) if net.output_dim == data.num_classes \
            else (float("nan"), None)
        loss_r = representation_error(tr_trace.activations[l], codes, head)
        loss = combined_loss(0.0 if mode == LCNN1 else loss_c, loss_r, alpha)
        if not np.isfinite(loss):
            raise TrainingDiverged(f"non-finite epoch loss at epoch {epoch + 1}")
        record.loss.append(loss)
        record.loss_c.append(loss_c)
        record.loss_r.append(loss_r)
        record.train_err.append(train_err)
        record.test_err.append(test_err)
        log.debug("epoch %d loss %.6f train_err %.4f test_err %.4f", epoch + 1, loss, train_err, test_err)
        if callback is not None:
            callback(epoch, net, head)

    record.wall_time = time.perf_counter() - start
    return net, head, record
