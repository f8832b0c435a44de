"""Versioned little-endian binary model files.

Layout (all integers ``<u4``, all scalars ``<f8``)::

    magic  b"LCNNMODL"
    version, n_layers
    per layer: in_dim, out_dim, activation (0 identity, 1 relu),
               weight (row-major, out_dim*in_dim), bias (out_dim)
    has_head (0/1)
    if has_head: attach_layer, alpha, num_neurons, num_classes,
                 owner (num_neurons x u4), transform (row-major)
"""

import struct

import numpy as np

from .head import LabelConsistencyHead, NeuronAllocation
from .nn import IDENTITY, RELU, Layer, Network

MAGIC = b"LCNNMODL"
VERSION = 1
_ACT_TAG = {IDENTITY: 0, RELU: 1}
_TAG_ACT = {v: k for k, v in _ACT_TAG.items()}


class ModelFormatError(ValueError):
    pass


def _u32(*vals):
    return struct.pack("<" + "I" * len(vals), *vals)


def _f64(arr):
    return np.ascontiguousarray(arr, dtype="<f8").tobytes()


def dumps(net, head=None):
    parts = [MAGIC, _u32(VERSION, net.n_layers)]
    for layer in net.layers:
        parts.append(_u32(layer.in_dim, layer.out_dim, _ACT_TAG[layer.activation]))
        parts.append(_f64(layer.weight))
        parts.append(_f64(layer.bias))
    if head is None:
        parts.append(_u32(0))
    else:
        parts.append(_u32(1, head.attach_layer))
        parts.append(struct.pack("<d", head.alpha))
        parts.append(_u32(head.num_neurons, head.num_classes))
        parts.append(np.ascontiguousarray(head.allocation.owner, dtype="<u4").tobytes())
        parts.append(_f64(head.transform))
    return b"".join(parts)


class _Reader:
    def __init__(self, buf):
        self.buf = buf
        self.pos = 0

    def take(self, n):
        if self.pos + n > len(self.buf):
            raise ModelFormatError(f"truncated model file at byte {self.pos}")
        out = self.buf[self.pos:self.pos + n]
        self.pos += n
        return out

    def u32(self, count=1):
        vals = struct.unpack("<" + "I" * count, self.take(4 * count))
        return vals if count > 1 else vals[0]

    def f64(self, count):
        return np.frombuffer(self.take(8 * count), dtype="<f8").astype(np.float64)


def loads(buf):
    r = _Reader(buf)
    if r.take(len(MAGIC)) != MAGIC:
        raise ModelFormatError("not a model file (bad magic)")
    version, n_layers = r.u32(2)
    if version != VERSION:
        raise ModelFormatError(f"unsupported model format version {version}")
    layers = []
    for _ in range(n_layers):
        in_dim, out_dim, tag = r.u32(3)
        if tag not in _TAG_ACT:
            raise ModelFormatError(f"unknown activation tag {tag}")
        w = r.f64(in_dim * out_dim).reshape(out_dim, in_dim)
        b = r.f64(out_dim)
        layers.append(Layer(w, b, _TAG_ACT[tag]))
    net = Network(layers)
    head = None
    if r.u32():
        attach = r.u32()
        (alpha,) = struct.unpack("<d", r.take(8))
        n, m = r.u32(2)
        owner = np.frombuffer(r.take(4 * n), dtype="<u4").astype(np.int64)
        owner.setflags(write=False)
        transform = r.f64(n * n).reshape(n, n)
        head = LabelConsistencyHead(attach, transform, alpha, NeuronAllocation(owner, m))
    if r.pos != len(buf):
        raise ModelFormatError(f"{len(buf) - r.pos} trailing bytes after model")
    return net, head


def save_model(path, net, head=None):
    with open(path, "wb") as fh:
        fh.write(dumps(net, head))


def load_model(path):
    with open(path, "rb") as fh:
        return loads(fh.read())
