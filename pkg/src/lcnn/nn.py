"""Feed-forward affine/ReLU networks with explicit backpropagation.

Batches are stored samples-as-columns: an input batch is ``(input_dim, B)``
and layer ``i`` maps ``x[i-1]`` to ``x[i] = F(W[i] @ x[i-1] + b[i])``.
"""

from dataclasses import dataclass, field

import numpy as np

from .tensor import ShapeError, as_matrix

RELU = "relu"
IDENTITY = "identity"
ACTIVATIONS = (RELU, IDENTITY)


@dataclass
class Layer:
    weight: np.ndarray
    bias: np.ndarray
    activation: str = RELU

    def __post_init__(self):
        self.weight = as_matrix(self.weight, "weight")
        self.bias = np.ascontiguousarray(self.bias, dtype=np.float64).reshape(-1)
        if self.bias.shape[0] != self.weight.shape[0]:
            raise ShapeError(f"bias length {self.bias.shape[0]} does not match weight rows {self.weight.shape[0]}")
        if self.activation not in ACTIVATIONS:
            raise ValueError(f"unknown activation {self.activation!r}")

    @property
    def in_dim(self):
        return self.weight.shape[1]

    @property
    def out_dim(self):
        return self.weight.shape[0]

    def copy(self):
        return Layer(self.weight.copy(), self.bias.copy(), self.activation)


@dataclass
class Network:
    layers: list

    def __post_init__(self):
        if not self.layers:
            raise ValueError("a network needs at least one layer")
        for i in range(1, len(self.layers)):
            prev, cur = self.layers[i - 1], self.layers[i]
            if cur.in_dim != prev.out_dim:
                raise ShapeError(f"layer {i + 1} expects {cur.in_dim} inputs but layer {i} emits {prev.out_dim}")

    @property
    def input_dim(self):
        return self.layers[0].in_dim

    @property
    def output_dim(self):
        return self.layers[-1].out_dim

    @property
    def n_layers(self):
        return len(self.layers)

    @property
    def widths(self):
        return [self.input_dim] + [layer.out_dim for layer in self.layers]

    def copy(self):
        return Network([layer.copy() for layer in self.layers])

    def parameters(self):
        """Yield ``(name, array)`` for every trainable block, in a fixed order."""
        for i, layer in enumerate(self.layers, start=1):
            yield f"W{i}", layer.weight
            yield f"b{i}", layer.bias


@dataclass
class ForwardTrace:
    activations: list  # x[0] .. x[n]
    pre_activations: list  # z[1] .. z[n], stored at index i-1


@dataclass
class Gradients:
    weights: list
    biases: list
    inputs: list = field(default_factory=list)  # dL/dx[i] for i = 0..n


def init_network(widths, seed=0, output_activation=IDENTITY):
    """Glorot-uniform weights and zero biases; ReLU on every hidden layer."""
    if len(widths) < 2:
        raise ValueError("widths must list the input dimension and at least one layer width")
    rng = np.random.default_rng(seed)
    layers = []
    for i, (fan_in, fan_out) in enumerate(zip(widths[:-1], widths[1:])):
        s = np.sqrt(6.0 / (fan_in + fan_out))
        w = rng.uniform(-s, s, size=(fan_out, fan_in))
        act = output_activation if i == len(widths) - 2 else RELU
        layers.append(Layer(w, np.zeros(fan_out), act))
    return Network(layers)


def _apply(activation, z):
    if activation == RELU:
        return np.maximum(z, 0.0)
    return z.copy()


def forward(net, x):
    x = as_matrix(x, "input")
    if x.shape[0] != net.input_dim:
        raise ShapeError(f"input has {x.shape[0]} rows, network expects {net.input_dim}")
    acts = [x]
    pres = []
    for layer in net.layers:
        z = layer.weight @ acts[-1] + layer.bias[:, None]
        pres.append(z)
        acts.append(_apply(layer.activation, z))
    return ForwardTrace(acts, pres)


def softmax(logits):
    logits = as_matrix(logits, "logits")
    shifted = logits - logits.max(axis=0, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=0, keepdims=True)


def softmax_xent(logits, labels):
    """Mean softmax cross-entropy over batch columns and its gradient w.r.t. ``logits``."""
    logits = as_matrix(logits, "logits")
    labels = np.asarray(labels, dtype=np.int64).reshape(-1)
    m, batch = logits.shape
    if labels.shape[0] != batch:
        raise ShapeError(f"{labels.shape[0]} labels for {batch} logit columns")
    if labels.size and (labels.min() < 0 or labels.max() >= m):
        raise ValueError(f"label out of range [0, {m})")
    shifted = logits - logits.max(axis=0, keepdims=True)
    log_z = np.log(np.exp(shifted).sum(axis=0))
    cols = np.arange(batch)
    loss = float(np.mean(log_z - shifted[labels, cols]))
    grad = np.exp(shifted - log_z)
    grad[labels, cols] -= 1.0
    grad /= batch
    return loss, grad


def backward(net, trace, out_grad, inject=None):
    """Backpropagate ``out_grad`` (dL/dx[n]) through ``net``.

    ``inject`` maps a layer index ``i`` (0..n) to an extra gradient added to
    dL/dx[i] before it flows further down; this is how auxiliary losses on
    hidden activations enter.
    """
    n = net.n_layers
    if len(trace.activations) != n + 1 or len(trace.pre_activations) != n:
        raise ShapeError(f"trace holds {len(trace.activations)} activations, network has {n} layers")
    out_grad = as_matrix(out_grad, "out_grad")
    if out_grad.shape != trace.activations[n].shape:
        raise ShapeError(f"out_grad shape {out_grad.shape} != output shape {trace.activations[n].shape}")
    inject = inject or {}

    def _with_extra(i, g):
        extra = inject.get(i)
        if extra is None:
            return g
        extra = as_matrix(extra, "injected gradient")
        if extra.shape != g.shape:
            raise ShapeError(f"injected gradient at layer {i} has shape {extra.shape}, expected {g.shape}")
        return g + extra

    dx = [None] * (n + 1)
    dws = [None] * n
    dbs = [None] * n
    g = _with_extra(n, out_grad)
    dx[n] = g
    for i in range(n, 0, -1):
        layer = net.layers[i - 1]
        if layer.activation == RELU:
            dz = g * (trace.pre_activations[i - 1] > 0.0)
        else:
            dz = g
        dws[i - 1] = dz @ trace.activations[i - 1].T
        dbs[i - 1] = dz.sum(axis=1)
        g = _with_extra(i - 1, layer.weight.T @ dz)
        dx[i - 1] = g
    return Gradients(dws, dbs, dx)
