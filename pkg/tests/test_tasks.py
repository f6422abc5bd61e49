import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dsfl.errors import InvalidInputError
from dsfl.tasks import (Shard, digit_prototypes, evaluate, load_csv_dataset, loss_and_grad,
                        make_task, predict, task_from_data)


def _fd_grad(task, shard, w, batch, h=1e-6):
    g = np.zeros_like(w)
    for j in range(w.size):
        e = np.zeros_like(w)
        e[j] = h
        g[j] = (loss_and_grad(task, shard, w + e, batch)[0]
                - loss_and_grad(task, shard, w - e, batch)[0]) / (2 * h)
    return g


def test_quadratic_optimum_solves_normal_equations():
    task = make_task("quadratic", 4, rng=np.random.default_rng(7), dim=4, n_samples=40)
    assert np.linalg.norm(task.A @ task.w_star - task.b) <= 1e-10
    _, g = loss_and_grad(task, None, task.w_star)
    assert np.linalg.norm(g) <= 1e-10
    assert evaluate(task, task.w_star)["dist_to_opt"] == 0.0


def test_quadratic_spd_and_constants():
    task = make_task("quadratic", 10, rng=np.random.default_rng(3))
    eig = np.linalg.eigvalsh(task.A)
    np.testing.assert_allclose(task.A, task.A.T)
    assert eig[0] > 0
    assert task.mu == pytest.approx(eig[0]) and task.lip == pytest.approx(eig[-1])


def test_iid_split_sizes():
    task = make_task("quadratic", 10, rng=np.random.default_rng(0), n_samples=100)
    assert [len(s) for s in task.shards] == [10] * 10
    stacked = np.vstack([s.X for s in task.shards])
    assert sorted(map(tuple, stacked)) == sorted(map(tuple, task.X_train))


def _entropy(labels):
    _, counts = np.unique(labels, return_counts=True)
    p = counts / counts.sum()
    return float(-(p * np.log(p)).sum())


def test_non_iid_lowers_label_entropy():
    iid = make_task("logistic", 10, iid=True, rng=np.random.default_rng(11))
    non = make_task("logistic", 10, iid=False, rng=np.random.default_rng(11))
    h_iid = np.mean([_entropy(s.y) for s in iid.shards])
    h_non = np.mean([_entropy(s.y) for s in non.shards])
    assert h_non < h_iid


def test_non_iid_digits_two_labels_per_shard():
    for seed in range(10):
        task = make_task("tiny_digits", 10, iid=False, rng=np.random.default_rng(seed))
        assert max(len(np.unique(s.y)) for s in task.shards) <= 2


def test_too_few_samples():
    with pytest.raises(InvalidInputError):
        make_task("quadratic", 10, rng=np.random.default_rng(0), n_samples=5)
    with pytest.raises(InvalidInputError):
        make_task("cnn", 10, rng=np.random.default_rng(0))


def test_logistic_zero_weights_loss_ln2():
    task = make_task("logistic", 5, rng=np.random.default_rng(2), l2_reg=0.0)
    y = task.shards[0].y
    batch = np.concatenate([np.flatnonzero(y == 0)[:5], np.flatnonzero(y == 1)[:5]])
    loss, _ = loss_and_grad(task, 0, np.zeros(task.dim), batch)
    assert loss == pytest.approx(np.log(2), rel=1e-12)


@pytest.mark.parametrize("kind", ["quadratic", "logistic", "tiny_digits"])
def test_gradient_matches_finite_differences(kind):
    rng = np.random.default_rng(99)
    task = make_task(kind, 5, rng=rng, dim=6, n_samples=200, n_test=20)
    for _ in range(20):
        w = rng.normal(size=task.dim) * 0.5
        batch = rng.choice(len(task.shards[1]), size=8, replace=False)
        _, g = loss_and_grad(task, 1, w, batch)
        fd = _fd_grad(task, 1, w, batch)
        assert np.max(np.abs(g - fd)) <= 1e-5 * max(1.0, np.max(np.abs(fd)))


def test_chance_accuracy_on_digits():
    task = make_task("tiny_digits", 10, rng=np.random.default_rng(4), n_test=2000)
    accs = [evaluate(task, np.random.default_rng(s).normal(size=task.dim))["accuracy"]
            for s in range(5)]
    assert abs(np.mean(accs) - 0.1) <= 0.05


def test_accuracy_matches_bruteforce_argmax():
    task = make_task("tiny_digits", 10, rng=np.random.default_rng(6), n_test=300)
    w = np.random.default_rng(1).normal(size=task.dim)
    W = w.reshape(task.X_test.shape[1], task.n_classes)
    hits = 0
    for x, y in zip(task.X_test, task.y_test):
        scores = [sum(x[i] * W[i, c] for i in range(len(x))) for c in range(task.n_classes)]
        hits += int(np.argmax(scores) == y)
    assert evaluate(task, w)["accuracy"] == hits / len(task.y_test)
    assert (predict(task, w) == np.argmax(task.X_test @ W, axis=1)).all()


def test_digit_prototypes_distinct():
    protos = digit_prototypes().reshape(10, -1)
    assert len({tuple(p) for p in protos}) == 10


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_strong_convexity_and_smoothness(seed):
    rng = np.random.default_rng(seed)
    task = make_task("quadratic", 5, rng=np.random.default_rng(17), dim=5, n_samples=60)
    w = task.w_star + rng.normal(size=5) * rng.uniform(0.01, 10)
    f = loss_and_grad(task, None, w)[0]
    assert f - task.f_star >= 0.5 * task.mu * np.sum((w - task.w_star) ** 2) * (1 - 1e-9)
    u, v = rng.normal(size=(2, 5)) * 3
    gu = loss_and_grad(task, None, u)[1]
    gv = loss_and_grad(task, None, v)[1]
    assert np.linalg.norm(gu - gv) <= 1.01 * task.lip * np.linalg.norm(u - v)


def test_logistic_optimum_is_stationary():
    task = make_task("logistic", 10, rng=np.random.default_rng(8))
    _, g = loss_and_grad(task, None, task.w_star)
    assert np.linalg.norm(g) < 1e-10


def test_csv_import(tmp_path):
    path = tmp_path / "d.csv"
    path.write_text("x1,x2,label\n0.5,1.0,1\n-0.5,-1.0,0\n1.5,0.2,1\n-2,0.1,0\n")
    X, y = load_csv_dataset(path)
    assert X.shape == (4, 2) and list(y) == [1, 0, 1, 0]
    task = task_from_data("logistic", X, y, 2, rng=np.random.default_rng(0))
    assert task.dim == 3 and task.n_shards == 2
    bad = tmp_path / "bad.csv"
    bad.write_text("1,2\n3,x\n")
    with pytest.raises(InvalidInputError):
        load_csv_dataset(bad)


def test_shard_object_and_batch():
    task = make_task("quadratic", 2, rng=np.random.default_rng(0), dim=3, n_samples=10)
    sh = Shard(task.shards[0].X, task.shards[0].y)
    a = loss_and_grad(task, sh, np.ones(3), [0, 2])
    b = loss_and_grad(task, 0, np.ones(3), [0, 2])
    assert a[0] == b[0]
    with pytest.raises(InvalidInputError):
        loss_and_grad(task, 0, np.ones(3), [])
