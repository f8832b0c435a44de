"""scikit-learn compatible wrapper around LCNN training.

``X`` follows the scikit-learn convention ``(n_samples, n_features)``; the
core library works on ``(n_features, n_samples)`` internally.
"""

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin, TransformerMixin
from sklearn.utils.multiclass import check_classification_targets
from sklearn.utils.validation import check_is_fitted, validate_data

from .classify import ReferenceBank, embed, knn_predict, knn_probabilities
from .data import Dataset, class_priority
from .head import make_head
from .nn import forward, init_network, softmax
from .optim import LCNN1, MODES, TrainConfig, train


class LCNNClassifier(ClassifierMixin, TransformerMixin, BaseEstimator):
    """Feed-forward ReLU network trained with a label-consistency head.

    Inputs are used as given; standardise them first (for example with
    ``StandardScaler``), since the defaults assume unit-scale features.

    Parameters
    ----------
    hidden_layer_sizes : tuple of int
        Hidden widths. The supervised layer must have at least as many
        neurons as there are classes.
    attach_layer : int or None
        1-based index of the supervised hidden layer; defaults to the last.
    mode : {"baseline", "lcnn1", "lcnn2"}
        Classification loss only, representation error only, or both.
    scheme : {"argmax", "knn"}
        How ``predict`` classifies. ``lcnn1`` always uses ``knn``.
    transform
        ``transform(X)`` returns the transformed supervised-layer
        representation, one row per sample.
    """

    def __init__(self, hidden_layer_sizes=(64, 64, 64, 64, 40), attach_layer=None, mode="lcnn2", alpha=0.3,
                 learning_rate=0.1, momentum=0.5, batch_size=64, epochs=20, weight_decay=0.01,
                 scheme="argmax", knn_k=5, random_state=0):
        self.hidden_layer_sizes = hidden_layer_sizes
        self.attach_layer = attach_layer
        self.mode = mode
        self.alpha = alpha
        self.learning_rate = learning_rate
        self.momentum = momentum
        self.batch_size = batch_size
        self.epochs = epochs
        self.weight_decay = weight_decay
        self.scheme = scheme
        self.knn_k = knn_k
        self.random_state = random_state

    def fit(self, X, y):
        X, y = validate_data(self, X, y, dtype=np.float64)
        check_classification_targets(y)
        self.classes_, y_idx = np.unique(y, return_inverse=True)
        m = len(self.classes_)
        if m < 2:
            raise ValueError(f"LCNNClassifier needs at least two classes; got {m} class")
        if str(self.mode).lower().replace("-", "") not in MODES:
            raise ValueError(f"mode must be one of {MODES}")
        if self.scheme not in ("argmax", "knn"):
            raise ValueError("scheme must be 'argmax' or 'knn'")
        hidden = [int(h) for h in self.hidden_layer_sizes]
        if not hidden:
            raise ValueError("need at least one hidden layer")
        attach = len(hidden) if self.attach_layer is None else int(self.attach_layer)
        if not 1 <= attach <= len(hidden):
            raise ValueError(f"attach_layer must lie in 1..{len(hidden)}")
        if hidden[attach - 1] < m:
            raise ValueError(f"attach layer has {hidden[attach - 1]} neurons for {m} classes")
        seed = 0 if self.random_state is None else int(self.random_state)

        data = Dataset(X.T, y_idx, m)
        net = init_network([X.shape[1]] + hidden + [m], seed=seed)
        head = make_head(attach, hidden[attach - 1], m, self.alpha, class_priority(data))
        cfg = TrainConfig(mode=self.mode, alpha=self.alpha, learning_rate=self.learning_rate,
                          momentum=self.momentum, batch_size=self.batch_size, epochs=self.epochs,
                          seed=seed, knn_k=self.knn_k, weight_decay=self.weight_decay)
        self.net_, self.head_, self.record_ = train(net, head, data, cfg)
        self.bank_ = ReferenceBank(embed(self.net_, self.head_, data.features), y_idx, m)
        self.mode_ = cfg.mode
        return self

    def _scheme(self):
        return "knn" if self.mode_ == LCNN1 else self.scheme

    def _k(self):
        return min(int(self.knn_k), len(self.bank_))

    def transform(self, X):
        check_is_fitted(self)
        X = validate_data(self, X, dtype=np.float64, reset=False)
        return embed(self.net_, self.head_, X.T).T

    def predict(self, X):
        check_is_fitted(self)
        X = validate_data(self, X, dtype=np.float64, reset=False)
        if self._scheme() == "knn":
            idx = knn_predict(self.bank_, embed(self.net_, self.head_, X.T), self._k())
        else:
            idx = np.argmax(forward(self.net_, X.T).activations[-1], axis=0)
        return self.classes_[idx]

    def predict_proba(self, X):
        check_is_fitted(self)
        X = validate_data(self, X, dtype=np.float64, reset=False)
        if self._scheme() == "knn":
            q = embed(self.net_, self.head_, X.T)
            return knn_probabilities(self.bank_, q, self._k(), num_classes=len(self.classes_)).T
        return softmax(forward(self.net_, X.T).activations[-1]).T
