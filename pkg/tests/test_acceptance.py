"""Exit criteria for the package, one test (or group) per criterion."""

import time

import numpy as np
import pytest

from lcnn.benchmark import KS, TRAIN, WIDTHS, DATA
from lcnn.classify import ReferenceBank, knn_predict, knn_probabilities
from lcnn.cli import main
from lcnn.data import class_priority, gen_synthetic_clusters
from lcnn.gradcheck import gradcheck
from lcnn.head import allocate_neurons, build_ideal_codes, make_head
from lcnn.nn import init_network
from lcnn.optim import TrainConfig, train
from lcnn.serialize import dumps, load_model, save_model
from oracles import brute_knn

BLOCK_CODES = np.array([
    [1, 1, 0, 0, 0, 0],
    [1, 1, 0, 0, 0, 0],
    [0, 0, 1, 1, 0, 0],
    [0, 0, 1, 1, 0, 0],
    [0, 0, 1, 1, 0, 0],
    [0, 0, 0, 0, 1, 1],
    [0, 0, 0, 0, 1, 1],
], dtype=float)


@pytest.mark.criterion("1")
def test_gradient_oracle(record_property):
    t0 = time.perf_counter()
    report = gradcheck(seed=2024, points=20, tolerance=1e-5, step=1e-6)
    elapsed = time.perf_counter() - t0
    worst = max(report.max_rel_error.values())
    record_property("detail", f"max rel err {worst:.2e} over {sorted(report.max_rel_error)}, {elapsed:.2f}s")
    assert {"W1", "b1", "W2", "b2", "W3", "b3", "A"} == set(report.max_rel_error)
    assert worst <= 1e-5
    assert elapsed < 10


@pytest.mark.criterion("2")
def test_worked_ideal_code_matrix(record_property):
    # labels 1..3 shifted to 0-based; the middle class varies most
    alloc = allocate_neurons(7, 3, [1, 0, 2])
    q = build_ideal_codes(np.array([1, 1, 2, 2, 3, 3]) - 1, alloc)
    record_property("detail", f"owners {alloc.owner.tolist()}")
    np.testing.assert_array_equal(q, BLOCK_CODES)


@pytest.mark.criterion("3")
def test_alpha_zero_degeneracy(record_property):
    data = gen_synthetic_clusters(seed=0, **DATA)
    net = init_network(list(WIDTHS), seed=0)
    attach = len(WIDTHS) - 2
    head = make_head(attach, WIDTHS[attach], DATA["m"], 0.0, class_priority(data))
    kw = dict(TRAIN, alpha=0.0, epochs=5, seed=0)
    nb, hb, rb = train(net, head, data, TrainConfig(mode="baseline", **kw))
    nl, hl, rl = train(net, head, data, TrainConfig(mode="lcnn2", **kw))
    record_property("detail", f"{len(rb)} epochs compared")
    assert rb.same_metrics(rl)
    assert dumps(nb, hb) == dumps(nl, hl)


def _modes(results):
    return [r.modes["baseline"] for r in results], [r.modes["lcnn2"] for r in results]


@pytest.mark.criterion("4a")
def test_benchmark_test_accuracy(benchmark_results, record_property):
    results, _ = benchmark_results
    base, lcnn = _modes(results)
    diffs = np.array([l.test_acc - b.test_acc for b, l in zip(base, lcnn)]) * 100
    wins = int(np.sum(diffs > 0))
    record_property("detail", f"diff (pts) per seed {np.round(diffs, 1).tolist()}, wins {wins}/10")
    assert np.all(diffs >= -1.0)
    assert wins >= 6


@pytest.mark.criterion("4b")
def test_benchmark_convergence(benchmark_results, record_property):
    results, _ = benchmark_results
    base, lcnn = _modes(results)
    ok = 0
    pairs = []
    for b, l in zip(base, lcnn):
        pairs.append((b.epochs_to_10pct, l.epochs_to_10pct))
        if l.epochs_to_10pct is not None and (b.epochs_to_10pct is None or l.epochs_to_10pct <= b.epochs_to_10pct):
            ok += 1
    record_property("detail", f"(baseline, lcnn2) epochs to 10% train err {pairs}; lcnn2 <= baseline on {ok}/10")
    assert ok >= 8


@pytest.mark.criterion("4c")
def test_benchmark_entropy(benchmark_results, record_property):
    results, _ = benchmark_results
    base, lcnn = _modes(results)
    eb = np.mean([b.class_entropy for b in base], axis=0)
    el = np.mean([l.class_entropy for l in lcnn], axis=0)
    lower = int(np.sum(el < eb))
    record_property("detail", f"mean entropy baseline {eb.mean():.3f} vs lcnn2 {el.mean():.3f} bits; "
                              f"lower on {lower}/10 classes")
    assert lower >= 8


@pytest.mark.criterion("4d")
def test_benchmark_knn_vs_argmax(benchmark_results, record_property):
    results, _ = benchmark_results
    _, lcnn = _modes(results)
    gaps = np.array([[abs(l.knn_acc[k] - l.test_acc) for k in KS] for l in lcnn]) * 100
    record_property("detail", f"max |knn - argmax| {gaps.max():.1f} pts over k in {list(KS)} and 10 seeds")
    assert gaps.max() <= 5.0


@pytest.mark.criterion("4e")
def test_benchmark_runtime(benchmark_results, record_property):
    _, elapsed = benchmark_results
    record_property("detail", f"{elapsed:.1f}s for 10 seeds x 2 modes")
    assert elapsed < 300


@pytest.mark.criterion("5")
def test_knn_oracle_equivalence(record_property):
    rng = np.random.default_rng(55)
    mismatches = 0
    worst_sum_err = 0.0
    for i in range(50):
        n = int(rng.integers(5, 101))
        nq = int(rng.integers(1, 21))
        k = int(rng.choice([1, 3, 5]))
        dim = int(rng.integers(1, 6))
        emb = rng.standard_normal((dim, n))
        if i % 2:
            emb = np.round(emb, 1)  # provoke exact distance ties
        labels = rng.integers(0, int(rng.integers(2, 6)), n)
        q = rng.standard_normal((dim, nq))
        bank = ReferenceBank(emb, labels)
        expected = [brute_knn(emb.T.tolist(), labels.tolist(), q[:, j].tolist(), k) for j in range(nq)]
        mismatches += int(knn_predict(bank, q, k).tolist() != expected)
        p = knn_probabilities(bank, q, k)
        assert np.all(p >= 0)
        worst_sum_err = max(worst_sum_err, float(np.max(np.abs(p.sum(axis=0) - 1.0))))
    record_property("detail", f"{mismatches} mismatching instances of 50; max |sum p - 1| {worst_sum_err:.1e}")
    assert mismatches == 0
    assert worst_sum_err <= 1e-12


@pytest.mark.criterion("6")
def test_allocation_exhaustive(record_property):
    checked = 0
    for n in range(1, 65):
        for m in range(1, n + 1):
            for prio in (list(range(m)), list(range(m))[::-1]):
                alloc = allocate_neurons(n, m, prio)
                counts = np.bincount(alloc.owner, minlength=m)
                base = n // m
                assert alloc.owner.shape == (n,)
                assert np.all((counts == base) | (counts == base + 1))
                assert int(np.sum(counts == base + 1)) == (n - m * base if n % m else 0)
                assert set(np.flatnonzero(counts == base + 1).tolist()) == set(prio[: n % m])
                checked += 1
    record_property("detail", f"{checked} (N_l, m, priority) cases")


@pytest.mark.criterion("7")
def test_serialization_and_eval_reproducible(tmp_path, record_property):
    data_path = tmp_path / "d.csv"
    assert main(["gen-data", "--classes", "4", "--dim", "8", "--per-class", "40", "--out", str(data_path)]) == 0
    assert main(["train", "--data", str(data_path), "--out", str(tmp_path / "run"), "--widths", "16,12",
                 "--epochs", "5"]) == 0
    model = tmp_path / "run" / "model.bin"
    net, head = load_model(model)
    save_model(tmp_path / "again.bin", net, head)
    assert (tmp_path / "again.bin").read_bytes() == model.read_bytes()
    outputs = []
    for i, path in enumerate((model, tmp_path / "again.bin")):
        for scheme in ("argmax", "knn"):
            assert main(["eval", "--model", str(path), "--data", str(data_path), "--scheme", scheme,
                         "--out", str(tmp_path / f"ev{i}")]) == 0
        outputs.append([(tmp_path / f"ev{i}" / f"{kind}_{s}.csv").read_bytes()
                        for kind in ("metrics", "predictions", "probabilities") for s in ("argmax", "knn")])
    record_property("detail", f"model {model.stat().st_size} bytes; 6 eval outputs compared")
    assert outputs[0] == outputs[1]
