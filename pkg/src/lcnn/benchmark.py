"""Desk-scale baseline vs LCNN comparison on synthetic clusters.

Run ``python -m lcnn.benchmark`` for a per-seed table. Baseline and LCNN
runs for a seed share the dataset, the initial network and the shuffling
seed, so the only difference is the training objective.
"""

import argparse
import time
from dataclasses import dataclass, field

import numpy as np

from .analysis import class_profiles, mean_peakedness, neuron_profiles
from .classify import ReferenceBank, embed, knn_predict, predict_argmax
from .data import class_priority, gen_synthetic_clusters
from .head import make_head
from .nn import forward, init_network
from .optim import BASELINE, LCNN1, LCNN2, TrainConfig, epochs_to_threshold, train

WIDTHS = (32, 64, 64, 64, 64, 40, 10)
DATA = dict(m=10, dim=32, per_class=200, spread=0.2)
TRAIN = dict(alpha=0.3, learning_rate=0.1, momentum=0.5, batch_size=64, epochs=20, weight_decay=0.01)
KS = (1, 3, 5, 7, 9)


@dataclass
class ModeResult:
    mode: str
    test_acc: float
    epochs_to_10pct: object
    class_entropy: np.ndarray
    knn_acc: dict = field(default_factory=dict)
    peakedness: float = float("nan")
    record: object = None
    net: object = field(default=None, repr=False)
    head: object = field(default=None, repr=False)


@dataclass
class SeedResult:
    seed: int
    modes: dict


def run_seed(seed, modes=(BASELINE, LCNN2), widths=WIDTHS, data_kw=None, train_kw=None, ks=KS, threshold=0.1):
    data_kw = dict(DATA, **(data_kw or {}))
    train_kw = dict(TRAIN, **(train_kw or {}))
    data = gen_synthetic_clusters(seed=seed, **data_kw)
    widths = list(widths)
    widths[0], widths[-1] = data.dim, data.num_classes
    net0 = init_network(widths, seed=seed)
    attach = len(widths) - 2
    head0 = make_head(attach, widths[attach], data.num_classes, train_kw["alpha"], class_priority(data))
    train_set, test_set = data.train(), data.test()
    out = {}
    for mode in modes:
        cfg = TrainConfig(mode=mode, seed=seed, **train_kw)
        net, head, rec = train(net0, head0, data, cfg)
        reps = forward(net, test_set.features).activations[attach]
        peak = mean_peakedness(neuron_profiles(reps, test_set.labels, head.allocation))
        ent = np.array([p.entropy_bits for p in class_profiles(reps, test_set.labels, num_classes=data.num_classes)])
        bank = ReferenceBank(embed(net, head, train_set.features), train_set.labels, data.num_classes)
        queries = embed(net, head, test_set.features)
        knn = {k: float(np.mean(knn_predict(bank, queries, k) == test_set.labels)) for k in ks}
        if mode == LCNN1:
            acc = knn[ks[0]]
        else:
            acc = float(np.mean(predict_argmax(net, test_set.features) == test_set.labels))
        out[mode] = ModeResult(mode, acc, epochs_to_threshold(rec, threshold), ent, knn, peak, rec, net, head)
    return SeedResult(seed, out)


def run(seeds=range(10), **kw):
    return [run_seed(s, **kw) for s in seeds]


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--seeds", type=int, default=10)
    ap.add_argument("--modes", default="baseline,lcnn1,lcnn2")
    args = ap.parse_args(argv)
    modes = tuple(args.modes.split(","))
    t0 = time.perf_counter()
    results = run(range(args.seeds), modes=modes)
    print("seed," + ",".join(f"{m}_acc,{m}_epochs_to_10pct,{m}_mean_entropy,{m}_knn5" for m in modes))
    for r in results:
        cells = []
        for m in modes:
            res = r.modes[m]
            cells += [f"{res.test_acc:.4f}", str(res.epochs_to_10pct), f"{np.nanmean(res.class_entropy):.4f}",
                      f"{res.knn_acc.get(5, float('nan')):.4f}"]
        print(f"{r.seed}," + ",".join(cells))
    print(f"# {time.perf_counter() - t0:.1f}s")


if __name__ == "__main__":
    main()
