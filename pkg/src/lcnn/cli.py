"""``lcnn`` command line: gen-data, train, eval, gradcheck, analyze.

Failures print one line ``error: <category>: <message>`` to stderr and exit
nonzero.
"""

import argparse
import csv
import json
import logging
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .analysis import class_profiles, export_report, mean_peakedness, neuron_profiles, write_class_means
from .classify import ReferenceBank, embed, knn_predict, knn_probabilities
from .data import DataError, class_priority, gen_synthetic_clusters, load_csv, write_csv
from .gradcheck import DEFAULT_SIZES, gradcheck
from .head import make_head
from .nn import forward, init_network, softmax
from .optim import BASELINE, TrainConfig, TrainingDiverged, train
from .serialize import ModelFormatError, load_model, save_model
from .tensor import ShapeError

log = logging.getLogger("lcnn")

# config-file key -> (TrainConfig field or None, parser)
CONFIG_KEYS = {
    "mode": ("mode", str),
    "alpha": ("alpha", float),
    "lr": ("learning_rate", float),
    "momentum": ("momentum", float),
    "batch": ("batch_size", int),
    "epochs": ("epochs", int),
    "seed": ("seed", int),
    "knn_k": ("knn_k", int),
    "weight_decay": ("weight_decay", float),
    "lr_decay": ("lr_decay", float),
    "lr_decay_every": ("lr_decay_every", int),
    "attach_layer": (None, int),
    "widths": (None, lambda s: [int(v) for v in s.replace(" ", "").split(",") if v]),
}
DEFAULT_WIDTHS = [64, 64, 64, 64, 40]
TRAIN_DEFAULTS = dict(mode="lcnn2", alpha=0.3, learning_rate=0.1, momentum=0.5, batch_size=64, epochs=20,
                      weight_decay=0.01)


class CLIError(Exception):
    def __init__(self, category, message):
        super().__init__(message)
        self.category = category


def read_config(path):
    """Parse ``key = value`` lines; ``#`` starts a comment."""
    out = {}
    try:
        lines = Path(path).read_text().splitlines()
    except OSError as exc:
        raise CLIError("io", f"cannot read config {path}: {exc.strerror}") from None
    for lineno, line in enumerate(lines, start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise CLIError("config", f"{path}:{lineno}: expected key=value")
        key, value = (s.strip() for s in line.split("=", 1))
        if key not in CONFIG_KEYS:
            raise CLIError("config", f"{path}:{lineno}: unknown key {key!r} (known: {', '.join(CONFIG_KEYS)})")
        try:
            out[key] = CONFIG_KEYS[key][1](value)
        except ValueError:
            raise CLIError("config", f"{path}:{lineno}: bad value {value!r} for {key}") from None
    return out


def _load_data(path):
    try:
        return load_csv(path)
    except OSError as exc:
        raise CLIError("io", f"cannot read dataset {path}: {exc.strerror}") from None


def _load_model(path):
    try:
        return load_model(path)
    except OSError as exc:
        raise CLIError("io", f"cannot read model {path}: {exc.strerror}") from None


def _outdir(path):
    p = Path(path)
    try:
        p.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise CLIError("io", f"cannot create {p}: {exc.strerror}") from None
    return p


def cmd_gen_data(args):
    data = gen_synthetic_clusters(args.classes, args.dim, args.per_class, args.spread, args.seed, args.test_fraction)
    out = Path(args.out)
    if out.parent and not out.parent.exists():
        _outdir(out.parent)
    write_csv(data, out)
    print(f"wrote {data.num_samples} samples ({data.num_classes} classes, dim {data.dim}) to {out}")


def _train_settings(args):
    settings = dict(TRAIN_DEFAULTS)
    settings["widths"] = list(DEFAULT_WIDTHS)
    settings["attach_layer"] = None
    given = set()
    if args.config:
        for key, value in read_config(args.config).items():
            settings[CONFIG_KEYS[key][0] or key] = value
            given.add(key)
    for key in CONFIG_KEYS:
        value = getattr(args, key, None)
        if value is not None:
            settings[CONFIG_KEYS[key][0] or key] = value
            given.add(key)
    return settings, given


def cmd_train(args):
    settings, given = _train_settings(args)
    widths = settings.pop("widths")
    attach = settings.pop("attach_layer")
    settings["mode"] = str(settings["mode"]).lower().replace("-", "")
    if settings["mode"] == BASELINE and "alpha" in given and settings["alpha"] != 0:
        print(f"warning: alpha={settings['alpha']} is ignored in baseline mode; training with alpha=0",
              file=sys.stderr)
    if settings["mode"] == BASELINE:
        settings["alpha"] = 0.0
    try:
        cfg = TrainConfig(**settings)
    except ValueError as exc:
        raise CLIError("config", str(exc)) from None

    data = _load_data(args.data)
    out = _outdir(args.out)
    if args.init_model:
        net, head = _load_model(args.init_model)
        if head is None:
            raise CLIError("model", f"{args.init_model} has no label-consistency head")
    else:
        if attach is None:
            attach = len(widths)
        if not 1 <= attach <= len(widths):
            raise CLIError("config", f"attach_layer must lie in 1..{len(widths)}")
        net = init_network([data.dim] + widths + [data.num_classes], seed=cfg.seed)
        head = make_head(attach, widths[attach - 1], data.num_classes, cfg.alpha, class_priority(data))
    if args.save_init:
        save_model(args.save_init, net, head)

    net, head, record = train(net, head, data, cfg)
    model_path = out / "model.bin"
    record_path = out / "record.csv"
    save_model(model_path, net, head)
    record.to_csv(record_path)
    manifest = {
        "version": __version__,
        "command": "train",
        "mode": cfg.mode,
        "seed": cfg.seed,
        "config": cfg.to_dict(),
        "widths": net.widths,
        "attach_layer": head.attach_layer,
        "dataset": str(args.data),
        "dataset_fingerprint": data.fingerprint(),
        "init_model": str(args.init_model) if args.init_model else None,
        "artifacts": {"model": str(model_path), "record": str(record_path)},
        "metrics": {
            "final_loss": record.loss[-1] if len(record) else None,
            "final_train_err": record.train_err[-1] if len(record) else None,
            "final_test_err": record.test_err[-1] if len(record) else None,
        },
        "wall_time_s": record.wall_time,
    }
    with open(out / "manifest.json", "w") as fh:
        json.dump(manifest, fh, indent=2, default=float)
    m = manifest["metrics"]
    print(f"{cfg.mode}: {len(record)} epochs, train_err={m['final_train_err']}, test_err={m['final_test_err']}")


def _split(data, which):
    if which == "train":
        return data.train(), np.flatnonzero(~data.is_test)
    if which == "test":
        return data.test(), np.flatnonzero(data.is_test)
    return data, np.arange(data.num_samples)


def _check_model_data(net, head, data):
    if net.input_dim != data.dim:
        raise CLIError("shape", f"model expects {net.input_dim} features, dataset has {data.dim}")
    if head is not None and head.num_classes != data.num_classes:
        raise CLIError("shape", f"model head knows {head.num_classes} classes, dataset has {data.num_classes}")


def evaluate(net, head, data, scheme, k, split="test"):
    """Return ``(sample_ids, predicted, true, probabilities)`` for one split."""
    subset, ids = _split(data, split)
    if subset.num_samples == 0:
        raise CLIError("data", f"the {split} split is empty")
    if scheme == "knn":
        if head is None:
            raise CLIError("model", "k-NN needs a model with a label-consistency head")
        train_set = data.train()
        bank = ReferenceBank(embed(net, head, train_set.features), train_set.labels, data.num_classes)
        if not 1 <= k <= len(bank):
            raise CLIError("config", f"k must lie in 1..{len(bank)}")
        q = embed(net, head, subset.features)
        pred = knn_predict(bank, q, k)
        proba = knn_probabilities(bank, q, k, num_classes=data.num_classes)
    else:
        if net.output_dim != data.num_classes:
            raise CLIError("shape", f"model emits {net.output_dim} scores for {data.num_classes} classes")
        scores = forward(net, subset.features).activations[-1]
        pred = np.argmax(scores, axis=0)
        proba = softmax(scores)
    return ids, pred, subset.labels, proba


def metrics_rows(pred, true, m):
    rows = [("accuracy", repr(float(np.mean(pred == true)))), ("n", str(len(true)))]
    for c in range(m):
        sel = true == c
        acc = float(np.mean(pred[sel] == c)) if sel.any() else float("nan")
        rows.append((f"class_{c}_accuracy", repr(acc)))
    conf = np.zeros((m, m), dtype=np.int64)
    np.add.at(conf, (true, pred), 1)
    for t in range(m):
        for p in range(m):
            rows.append((f"confusion_{t}_{p}", str(int(conf[t, p]))))
    return rows


def cmd_eval(args):
    net, head = _load_model(args.model)
    data = _load_data(args.data)
    _check_model_data(net, head, data)
    scheme = args.scheme
    ids, pred, true, proba = evaluate(net, head, data, scheme, args.k, args.split)
    out = _outdir(args.out)
    with open(out / f"metrics_{scheme}.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["metric", "value"])
        w.writerows(metrics_rows(pred, true, data.num_classes))
    with open(out / f"predictions_{scheme}.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["sample_id", "predicted", "true", "correct"])
        for i, p, t in zip(ids, pred, true):
            w.writerow([int(i), data.class_values[p], data.class_values[t], int(p == t)])
    with open(out / f"probabilities_{scheme}.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["sample_id"] + [f"p_{c}" for c in data.class_values])
        for j, i in enumerate(ids):
            w.writerow([int(i)] + [repr(float(v)) for v in proba[:, j]])
    print(f"{scheme}: accuracy={float(np.mean(pred == true)):.4f} on {len(true)} {args.split} samples")


def cmd_gradcheck(args):
    sizes = [int(s) for s in args.sizes.split(",")] if args.sizes else list(DEFAULT_SIZES)
    try:
        report = gradcheck(seed=args.seed, sizes=sizes, attach_layer=args.attach_layer, alpha=args.alpha,
                           points=args.points, _sign_flip=args.inject_sign_flip)
    except ValueError as exc:
        raise CLIError("config", str(exc)) from None
    print("block,max_rel_error,status")
    for line in report.lines():
        print(line)
    print("PASS" if report.passed else "FAIL")
    if not report.passed:
        worst = max(report.max_rel_error, key=report.max_rel_error.get)
        raise CLIError("gradcheck", f"block {worst} exceeds tolerance {report.tolerance:g}")


def cmd_analyze(args):
    net, head = _load_model(args.model)
    if head is None:
        raise CLIError("model", "analysis needs a model with a label-consistency head")
    data = _load_data(args.data)
    _check_model_data(net, head, data)
    subset, _ = _split(data, args.split)
    reps = forward(net, subset.features).activations[head.attach_layer]
    out = _outdir(args.out)
    cp = class_profiles(reps, subset.labels, num_classes=data.num_classes)
    npf = neuron_profiles(reps, subset.labels, head.allocation)
    export_report(cp, out / "class_profiles.csv")
    export_report(npf, out / "neuron_profiles.csv")
    write_class_means(cp, out / "class_means.csv")
    ent = [p.entropy_bits for p in cp if not p.empty]
    print(f"mean class entropy {np.nanmean(ent):.4f} bits, mean neuron peakedness {mean_peakedness(npf):.4f}")


def build_parser():
    ap = argparse.ArgumentParser(prog="lcnn", description="Label-consistent neural network training and analysis.")
    ap.add_argument("--version", action="version", version=__version__)
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen-data", help="write a synthetic Gaussian-cluster dataset as CSV")
    g.add_argument("--classes", type=int, default=10)
    g.add_argument("--dim", type=int, default=32)
    g.add_argument("--per-class", type=int, default=200)
    g.add_argument("--spread", type=float, default=0.2)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--test-fraction", type=float, default=0.25)
    g.add_argument("--out", required=True)
    g.set_defaults(func=cmd_gen_data)

    t = sub.add_parser("train", help="train a network in baseline, lcnn1 or lcnn2 mode")
    t.add_argument("--config", help="key=value config file; flags override it")
    t.add_argument("--data", required=True)
    t.add_argument("--out", required=True, help="output directory")
    t.add_argument("--mode", choices=["baseline", "lcnn1", "lcnn2"])
    t.add_argument("--alpha", type=float)
    t.add_argument("--lr", type=float)
    t.add_argument("--momentum", type=float)
    t.add_argument("--batch", type=int)
    t.add_argument("--epochs", type=int)
    t.add_argument("--seed", type=int)
    t.add_argument("--knn-k", dest="knn_k", type=int)
    t.add_argument("--weight-decay", dest="weight_decay", type=float)
    t.add_argument("--lr-decay", dest="lr_decay", type=float)
    t.add_argument("--lr-decay-every", dest="lr_decay_every", type=int)
    t.add_argument("--attach-layer", dest="attach_layer", type=int)
    t.add_argument("--widths", type=CONFIG_KEYS["widths"][1], help="hidden widths, e.g. 64,64,40")
    t.add_argument("--init-model", help="start from this model file instead of a fresh network")
    t.add_argument("--save-init", help="write the initial model here before training")
    t.set_defaults(func=cmd_train)

    e = sub.add_parser("eval", help="evaluate a model with argmax or k-NN")
    e.add_argument("--model", required=True)
    e.add_argument("--data", required=True)
    e.add_argument("--scheme", choices=["argmax", "knn"], default="argmax")
    e.add_argument("--k", type=int, default=5)
    e.add_argument("--split", choices=["train", "test", "all"], default="test")
    e.add_argument("--out", required=True, help="output directory")
    e.set_defaults(func=cmd_eval)

    c = sub.add_parser("gradcheck", help="finite-difference check of all gradient blocks")
    c.add_argument("--seed", type=int, default=0)
    c.add_argument("--sizes", help=f"layer widths incl. input and output (default {','.join(map(str, DEFAULT_SIZES))})")
    c.add_argument("--attach-layer", dest="attach_layer", type=int)
    c.add_argument("--alpha", type=float, default=0.5)
    c.add_argument("--points", type=int, default=20)
    c.add_argument("--inject-sign-flip", action="store_true", help=argparse.SUPPRESS)
    c.set_defaults(func=cmd_gradcheck)

    a = sub.add_parser("analyze", help="entropy and neuron class-distribution reports")
    a.add_argument("--model", required=True)
    a.add_argument("--data", required=True)
    a.add_argument("--split", choices=["train", "test", "all"], default="test")
    a.add_argument("--out", required=True)
    a.set_defaults(func=cmd_analyze)
    return ap


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, format="%(message)s")
    try:
        args.func(args)
    except CLIError as exc:
        category, msg = exc.category, str(exc)
    except DataError as exc:
        category, msg = "data", str(exc)
    except ModelFormatError as exc:
        category, msg = "model", str(exc)
    except ShapeError as exc:
        category, msg = "shape", str(exc)
    except TrainingDiverged as exc:
        category, msg = "numeric", str(exc)
    except OSError as exc:
        category, msg = "io", f"{exc.filename or ''}: {exc.strerror or exc}"
    else:
        return 0
    print(f"error: {category}: {' '.join(msg.split())}", file=sys.stderr)
    return 1


if __name__ == "__main__":
    sys.exit(main())
