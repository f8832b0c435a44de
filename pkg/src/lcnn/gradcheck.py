"""Central finite-difference check of the full LCNN-2 objective.

Every weight, bias and head-transform entry of a small random network is
perturbed in turn; the analytic gradient from :func:`lcnn.nn.backward`
(with the representation-error term injected at the attach layer) plus
:func:`lcnn.head.grad_A` must agree with the numerical one.
"""

from dataclasses import dataclass, field

import numpy as np

from .head import LabelConsistencyHead, allocate_neurons, build_ideal_codes, grad_A, grad_x, representation_error
from .nn import RELU, backward, forward, init_network, softmax_xent

DEFAULT_SIZES = (6, 5, 4, 3)


@dataclass
class GradcheckReport:
    max_rel_error: dict = field(default_factory=dict)
    tolerance: float = 1e-5
    points: int = 0

    @property
    def passed(self):
        return all(err <= self.tolerance for err in self.max_rel_error.values())

    def lines(self):
        for name, err in self.max_rel_error.items():
            yield f"{name},{err:.3e},{'pass' if err <= self.tolerance else 'FAIL'}"


def total_loss(net, head, x, labels, codes):
    trace = forward(net, x)
    lc, _ = softmax_xent(trace.activations[-1], labels)
    return lc + head.alpha * representation_error(trace.activations[head.attach_layer], codes, head)


def analytic_gradients(net, head, x, labels, codes, _sign_flip=False):
    """Gradient blocks keyed ``W{i}``, ``b{i}`` and ``A``."""
    trace = forward(net, x)
    _, g_out = softmax_xent(trace.activations[-1], labels)
    x_l = trace.activations[head.attach_layer]
    gx = grad_x(x_l, codes, head)
    if _sign_flip:
        gx = -gx
    grads = backward(net, trace, g_out, {head.attach_layer: gx})
    out = {}
    for i, (dw, db) in enumerate(zip(grads.weights, grads.biases), start=1):
        out[f"W{i}"] = dw
        out[f"b{i}"] = db
    out["A"] = grad_A(x_l, codes, head)
    return out


def _near_kink(net, x, margin):
    trace = forward(net, x)
    return any(np.any(np.abs(z) < margin)
               for z, layer in zip(trace.pre_activations, net.layers) if layer.activation == RELU)


def random_problem(rng, sizes, attach_layer, alpha, batch, kink_margin=1e-4):
    """Random network, head, inputs and labels with no ReLU input near zero."""
    m = sizes[-1]
    while True:
        net = init_network(list(sizes), seed=int(rng.integers(2**31)))
        for layer in net.layers:
            layer.bias[:] = rng.uniform(-0.5, 0.5, size=layer.bias.shape)
        x = rng.standard_normal((sizes[0], batch))
        if not _near_kink(net, x, kink_margin):
            break
    labels = rng.integers(0, m, size=batch)
    n_l = sizes[attach_layer]
    alloc = allocate_neurons(n_l, m, list(rng.permutation(m)))
    a = np.eye(n_l) + 0.3 * rng.standard_normal((n_l, n_l))
    head = LabelConsistencyHead(attach_layer, a, alpha, alloc)
    return net, head, x, labels, build_ideal_codes(labels, alloc)


def gradcheck(seed=0, sizes=DEFAULT_SIZES, attach_layer=None, alpha=0.5, points=20, batch=4,
              step=1e-6, tolerance=1e-5, _sign_flip=False):
    """Compare analytic and central-difference gradients at ``points`` random problems.

    Relative error per entry is ``|analytic - numeric| / max(1, |numeric|)``;
    the report keeps the worst value per parameter block.
    """
    sizes = tuple(int(s) for s in sizes)
    if len(sizes) < 3:
        raise ValueError("sizes needs an input width, at least one hidden width and an output width")
    if sizes[-1] < 2:
        raise ValueError("need at least two classes")
    if attach_layer is None:
        attach_layer = len(sizes) - 2
    if not 1 <= attach_layer <= len(sizes) - 2:
        raise ValueError(f"attach layer must be a hidden layer in 1..{len(sizes) - 2}")
    if sizes[attach_layer] < sizes[-1]:
        raise ValueError("attach layer must have at least as many neurons as classes")
    rng = np.random.default_rng(seed)
    report = GradcheckReport(tolerance=tolerance, points=points)
    for _ in range(points):
        net, head, x, labels, codes = random_problem(rng, sizes, attach_layer, alpha, batch)
        analytic = analytic_gradients(net, head, x, labels, codes, _sign_flip)
        blocks = dict(net.parameters())
        blocks["A"] = head.transform
        for name, param in blocks.items():
            flat = param.reshape(-1)
            ana = analytic[name].reshape(-1)
            worst = report.max_rel_error.get(name, 0.0)
            for k in range(flat.size):
                orig = flat[k]
                flat[k] = orig + step
                up = total_loss(net, head, x, labels, codes)
                flat[k] = orig - step
                down = total_loss(net, head, x, labels, codes)
                flat[k] = orig
                num = (up - down) / (2 * step)
                worst = max(worst, abs(ana[k] - num) / max(1.0, abs(num)))
            report.max_rel_error[name] = float(worst)
    return report
