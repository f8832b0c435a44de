"""Discriminability diagnostics for hidden representations.

``class_profiles`` summarises each class by its mean representation and the
Shannon entropy of that mean; ``neuron_profiles`` gives every neuron's
distribution of activation mass over classes.
"""

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .tensor import ShapeError, as_matrix


@dataclass
class ClassProfile:
    class_id: int
    count: int
    mean_representation: np.ndarray
    entropy_bits: float

    @property
    def empty(self):
        return self.count == 0


@dataclass
class NeuronProfile:
    neuron_id: int
    owner_class: int
    class_distribution: np.ndarray
    peakedness: float

    @property
    def dead(self):
        return not np.any(self.class_distribution)


def entropy_bits(v):
    """Entropy in bits of a nonnegative vector after L1 normalisation; NaN if it has no mass."""
    v = np.asarray(v, dtype=np.float64)
    total = v.sum()
    if total <= 0:
        return float("nan")
    p = v / total
    p = p[p > 0]
    return float(max(0.0, -np.sum(p * np.log2(p))))


def _prepare(representations, labels):
    reps = as_matrix(representations, "representations")
    labels = np.asarray(labels, dtype=np.int64).reshape(-1)
    if reps.shape[1] != labels.shape[0]:
        raise ShapeError(f"{reps.shape[1]} representation columns for {labels.shape[0]} labels")
    return reps, labels


def class_profiles(representations, labels, clamp_negative=True, num_classes=None):
    reps, labels = _prepare(representations, labels)
    m = num_classes if num_classes is not None else (int(labels.max()) + 1 if labels.size else 0)
    out = []
    for c in range(m):
        block = reps[:, labels == c]
        if block.shape[1] == 0:
            out.append(ClassProfile(c, 0, np.zeros(reps.shape[0]), float("nan")))
            continue
        mean = block.mean(axis=1)
        measure = np.maximum(mean, 0.0) if clamp_negative else mean
        if not clamp_negative and np.any(measure < 0):
            raise ValueError(f"class {c} mean has negative entries; pass clamp_negative=True")
        out.append(ClassProfile(c, block.shape[1], mean, entropy_bits(measure)))
    return out


def neuron_profiles(representations, labels, allocation):
    """Per-neuron class distribution of (nonnegative) activation mass."""
    reps, labels = _prepare(representations, labels)
    if reps.shape[0] != allocation.num_neurons:
        raise ShapeError(f"{reps.shape[0]} neurons but allocation covers {allocation.num_neurons}")
    m = allocation.num_classes
    mass = np.zeros((reps.shape[0], m))
    clamped = np.maximum(reps, 0.0)
    for c in range(m):
        mass[:, c] = clamped[:, labels == c].sum(axis=1)
    out = []
    for j in range(reps.shape[0]):
        total = mass[j].sum()
        dist = mass[j] / total if total > 0 else np.zeros(m)
        out.append(NeuronProfile(j, int(allocation.owner[j]), dist, float(dist.max())))
    return out


def mean_peakedness(profiles):
    vals = [p.peakedness for p in profiles if not p.dead]
    return float(np.mean(vals)) if vals else float("nan")


def _summary_path(path):
    path = Path(path)
    return path.with_name(path.stem + "_summary.txt")


def export_report(profiles, path):
    """Write class or neuron profiles as CSV plus a ``<stem>_summary.txt`` key=value file."""
    path = Path(path)
    profiles = list(profiles)
    neuron = bool(profiles) and isinstance(profiles[0], NeuronProfile)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        if neuron:
            m = len(profiles[0].class_distribution)
            w.writerow(["neuron_id", "owner_class", "peakedness", "dead"] + [f"p{c}" for c in range(m)])
            for p in profiles:
                w.writerow([p.neuron_id, p.owner_class, repr(p.peakedness), int(p.dead)]
                           + [repr(float(v)) for v in p.class_distribution])
        else:
            dim = len(profiles[0].mean_representation) if profiles else 0
            w.writerow(["class_id", "count", "entropy_bits"] + [f"mean{j}" for j in range(dim)])
            for p in profiles:
                w.writerow([p.class_id, p.count, repr(p.entropy_bits)]
                           + [repr(float(v)) for v in p.mean_representation])
    with open(_summary_path(path), "w") as fh:
        if neuron:
            fh.write(f"kind=neuron\nneurons={len(profiles)}\n")
            fh.write(f"dead={sum(p.dead for p in profiles)}\n")
            fh.write(f"mean_peakedness={mean_peakedness(profiles)!r}\n")
        else:
            ent = [p.entropy_bits for p in profiles if not p.empty and np.isfinite(p.entropy_bits)]
            fh.write(f"kind=class\nclasses={len(profiles)}\n")
            fh.write(f"empty={sum(p.empty for p in profiles)}\n")
            fh.write(f"mean_entropy_bits={(float(np.mean(ent)) if ent else float('nan'))!r}\n")
    return path


def read_report(path):
    """Parse a CSV written by :func:`export_report` back into profiles."""
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows or len(rows) == 1:
        return []
    header, body = rows[0], rows[1:]
    if header[0] == "neuron_id":
        return [NeuronProfile(int(r[0]), int(r[1]), np.array([float(v) for v in r[4:]]), float(r[2]))
                for r in body]
    return [ClassProfile(int(r[0]), int(r[1]), np.array([float(v) for v in r[3:]]), float(r[2])) for r in body]


def write_class_means(profiles, path):
    """One row per class, one column per neuron: plot-ready mean representations."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        dim = len(profiles[0].mean_representation) if profiles else 0
        w.writerow(["class_id"] + [f"n{j}" for j in range(dim)])
        for p in profiles:
            w.writerow([p.class_id] + [repr(float(v)) for v in p.mean_representation])
