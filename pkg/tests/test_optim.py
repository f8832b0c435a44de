import math

import numpy as np
import pytest

from lcnn.data import Dataset, class_priority, gen_synthetic_clusters
from lcnn.head import LabelConsistencyHead, allocate_neurons, make_head
from lcnn.nn import IDENTITY, RELU, Layer, Network, init_network
from lcnn.optim import TrainConfig, TrainingDiverged, TrainRecord, epochs_to_threshold, train
from lcnn.serialize import dumps
from lcnn.tensor import ShapeError


def _hand_step(W1, b1, W2, b2, A, x, y, alpha, lr, q):
    """One SGD step on a 2-2-2 net written out entry by entry."""
    z1 = [b1[i] + W1[i][0] * x[0] + W1[i][1] * x[1] for i in range(2)]
    h = [max(z, 0.0) for z in z1]
    z2 = [b2[i] + W2[i][0] * h[0] + W2[i][1] * h[1] for i in range(2)]
    mx = max(z2)
    e = [math.exp(z - mx) for z in z2]
    p = [v / sum(e) for v in e]
    dz2 = [p[i] - (1.0 if i == y else 0.0) for i in range(2)]
    r = [A[i][0] * h[0] + A[i][1] * h[1] - q[i] for i in range(2)]
    dh = [W2[0][j] * dz2[0] + W2[1][j] * dz2[1] + 2 * alpha * (A[0][j] * r[0] + A[1][j] * r[1]) for j in range(2)]
    dz1 = [dh[i] if z1[i] > 0 else 0.0 for i in range(2)]
    new = {
        "W1": [[W1[i][j] - lr * dz1[i] * x[j] for j in range(2)] for i in range(2)],
        "b1": [b1[i] - lr * dz1[i] for i in range(2)],
        "W2": [[W2[i][j] - lr * dz2[i] * h[j] for j in range(2)] for i in range(2)],
        "b2": [b2[i] - lr * dz2[i] for i in range(2)],
        "A": [[A[i][j] - lr * 2 * alpha * r[i] * h[j] for j in range(2)] for i in range(2)],
    }
    return new


def test_single_step_matches_hand_oracle():
    W1 = [[0.5, -0.3], [0.8, 0.2]]
    b1 = [0.1, -0.05]
    W2 = [[0.4, -0.6], [-0.2, 0.7]]
    b2 = [0.0, 0.1]
    A = [[1.1, 0.2], [-0.1, 0.9]]
    x, y, alpha, lr = [1.0, 0.5], 1, 0.3, 0.1
    net = Network([Layer(W1, b1, RELU), Layer(W2, b2, IDENTITY)])
    head = LabelConsistencyHead(1, A, alpha, allocate_neurons(2, 2))
    data = Dataset(np.array(x).reshape(2, 1), [y], 2)
    cfg = TrainConfig(mode="lcnn2", alpha=alpha, learning_rate=lr, momentum=0.9, batch_size=1, epochs=1)
    net2, head2, _ = train(net, head, data, cfg)
    want = _hand_step(W1, b1, W2, b2, A, x, y, alpha, lr, q=[0.0, 1.0])
    np.testing.assert_allclose(net2.layers[0].weight, want["W1"], rtol=1e-13)
    np.testing.assert_allclose(net2.layers[0].bias, want["b1"], rtol=1e-13)
    np.testing.assert_allclose(net2.layers[1].weight, want["W2"], rtol=1e-13)
    np.testing.assert_allclose(net2.layers[1].bias, want["b2"], rtol=1e-13)
    np.testing.assert_allclose(head2.transform, want["A"], rtol=1e-13)
    # inputs untouched
    assert net.layers[0].weight.tolist() == W1


@pytest.fixture(scope="module")
def clusters():
    data = gen_synthetic_clusters(3, 8, 60, 0.2, seed=4)
    net = init_network([8, 16, 12, 3], seed=4)
    head = make_head(2, 12, 3, 0.05, class_priority(data))
    return data, net, head


def test_alpha_zero_lcnn2_equals_baseline(clusters):
    data, net, head = clusters
    common = dict(alpha=0.0, epochs=5, seed=11)
    nb, hb, rb = train(net, head, data, TrainConfig(mode="baseline", **common))
    nl, hl, rl = train(net, head, data, TrainConfig(mode="lcnn2", **common))
    assert rb.same_metrics(rl)
    assert dumps(nb, hb) == dumps(nl, hl)
    np.testing.assert_array_equal(hl.transform, head.transform)


def test_baseline_ignores_alpha(clusters):
    data, net, head = clusters
    _, hb, rb = train(net, head, data, TrainConfig(mode="baseline", alpha=0.5, epochs=3, seed=1))
    _, _, r0 = train(net, head, data, TrainConfig(mode="lcnn2", alpha=0.0, epochs=3, seed=1))
    assert hb.alpha == 0.0
    assert rb.same_metrics(r0)


def test_training_is_deterministic(clusters):
    data, net, head = clusters
    cfg = TrainConfig(mode="lcnn2", alpha=0.05, epochs=4, seed=3)
    n1, h1, r1 = train(net, head, data, cfg)
    n2, h2, r2 = train(net, head, data, cfg)
    assert r1.same_metrics(r2)
    assert dumps(n1, h1) == dumps(n2, h2)


def test_loss_decomposition(clusters):
    data, net, head = clusters
    _, _, rec = train(net, head, data, TrainConfig(mode="lcnn2", alpha=0.05, epochs=6, seed=0))
    assert len(rec) == 6
    for total, lc, lr in zip(rec.loss, rec.loss_c, rec.loss_r):
        assert abs(total - (lc + 0.05 * lr)) <= 1e-12


def test_lcnn2_reaches_low_training_error(clusters):
    data, net, head = clusters
    cfg = TrainConfig(mode="lcnn2", alpha=0.05, epochs=30, seed=0, learning_rate=0.05, momentum=0.9)
    _, _, rec = train(net, head, data, cfg)
    assert rec.train_err[-1] < 0.05


def test_lcnn1_leaves_output_layer_untouched(clusters):
    data, net, head = clusters
    net1, head1, rec = train(net, head, data, TrainConfig(mode="lcnn1", epochs=3, seed=0))
    np.testing.assert_array_equal(net1.layers[-1].weight, net.layers[-1].weight)
    assert not np.array_equal(net1.layers[0].weight, net.layers[0].weight)
    assert head1.alpha == 1.0
    assert all(l == r for l, r in zip(rec.loss, rec.loss_r))


def test_nonfinite_loss_aborts_with_location(clusters):
    data, net, head = clusters
    feats = data.features.copy()
    feats[0, 5] = np.nan
    bad = Dataset(feats, data.labels, data.num_classes, data.is_test)
    cfg = TrainConfig(mode="lcnn2", epochs=3, seed=0, batch_size=1000)
    with pytest.raises(TrainingDiverged, match=r"epoch 1, batch 1"):
        train(net, head, bad, cfg)


def test_dimension_checks(clusters):
    data, net, head = clusters
    with pytest.raises(ShapeError):
        train(init_network([7, 12, 3], seed=0), make_head(1, 12, 3), data, TrainConfig())
    with pytest.raises(ShapeError):
        train(net, make_head(2, 10, 3), data, TrainConfig())
    with pytest.raises(ShapeError):
        train(init_network([8, 16, 12, 4], seed=0), head, data, TrainConfig())


def test_config_validation():
    with pytest.raises(ValueError):
        TrainConfig(mode="lcnn3")
    with pytest.raises(ValueError):
        TrainConfig(learning_rate=0)
    with pytest.raises(ValueError):
        TrainConfig(batch_size=0)
    assert TrainConfig(mode="LCNN-2").mode == "lcnn2"
    cfg = TrainConfig(learning_rate=1.0, lr_decay=0.5, lr_decay_every=2)
    assert [cfg.lr_at(e) for e in range(5)] == [1.0, 1.0, 0.5, 0.5, 0.25]


def test_epochs_to_threshold():
    assert epochs_to_threshold([0.9, 0.4, 0.1], 0.5) == 1
    assert epochs_to_threshold([0.9, 0.4, 0.1], 0.05) is None
    rec = TrainRecord(train_err=[0.3, 0.2, 0.09])
    assert epochs_to_threshold(rec, 0.1) == 2


def test_record_csv_round_trip(tmp_path, clusters):
    data, net, head = clusters
    _, _, rec = train(net, head, data, TrainConfig(epochs=3, seed=0))
    path = tmp_path / "rec.csv"
    rec.to_csv(path)
    assert path.read_text().splitlines()[0] == "epoch,loss,loss_c,loss_r,train_err,test_err"
    assert TrainRecord.from_csv(path).same_metrics(rec)
