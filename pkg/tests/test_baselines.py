import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from dsfl.analysis import lsfl_recover_updates
from dsfl.baselines import coord_median, fedavg, krum, krum_index, krum_scores, lsfl_round, trimmed_mean
from dsfl.errors import InvalidInputError
from dsfl.model_core import mean_vectors

update_sets = st.integers(1, 12).flatmap(
    lambda n: arrays(np.float64, (n, 4), elements=st.floats(-1e3, 1e3)))


def test_fedavg(rng):
    np.testing.assert_array_equal(fedavg([[1.0], [3.0]]), [2.0])
    np.testing.assert_array_equal(fedavg([[4.0, 5.0]]), [4.0, 5.0])
    X = list(rng.normal(size=(9, 6)))
    np.testing.assert_array_equal(fedavg(X), mean_vectors(X))
    with pytest.raises(InvalidInputError):
        fedavg([])


def test_coord_median(rng):
    np.testing.assert_array_equal(coord_median([[1.0], [2.0], [100.0]]), [2.0])
    np.testing.assert_array_equal(coord_median([[7.0, 1.0]] * 4), [7.0, 1.0])
    X = rng.normal(size=(8, 5))
    for j in range(5):
        col = sorted(X[:, j])
        assert coord_median(list(X))[j] == (col[3] + col[4]) / 2


def test_trimmed_mean():
    X = [[1.0], [2.0], [3.0], [4.0], [100.0]]
    assert trimmed_mean(X, 0.2)[0] == 3.0
    np.testing.assert_array_equal(trimmed_mean(X, 0.0), fedavg(X))
    with pytest.raises(InvalidInputError):
        trimmed_mean(X, 0.5)
    # 0.4 of 2 rounds down to no trimming at all
    np.testing.assert_array_equal(trimmed_mean([[1.0], [2.0]], 0.4), [1.5])


@settings(max_examples=100, deadline=None)
@given(update_sets, st.floats(0, 0.45))
def test_robust_outputs_bounded_and_permutation_invariant(X, frac):
    lo, hi = X.min(axis=0), X.max(axis=0)
    perm = np.random.default_rng(0).permutation(len(X))
    for agg in (coord_median, lambda u: trimmed_mean(u, frac)):
        out = agg(list(X))
        assert (out >= lo - 1e-9).all() and (out <= hi + 1e-9).all()
        np.testing.assert_allclose(agg(list(X[perm])), out, rtol=1e-12, atol=1e-9)
    np.testing.assert_allclose(fedavg(list(X[perm])), fedavg(list(X)), rtol=1e-12, atol=1e-9)


def _krum_oracle(X, f):
    n = len(X)
    best, best_score = None, None
    for i in range(n):
        d = sorted(float(((X[i] - X[j]) ** 2).sum()) for j in range(n) if j != i)
        score = sum(d[: n - f - 2])
        if best_score is None or score < best_score - 1e-12:
            best, best_score = i, score
    return best


def test_krum_picks_cluster_member():
    X = np.array([[0.0, 0.0], [0.1, 0.0], [0.0, 0.1], [0.1, 0.1], [50.0, 50.0]])
    idx = krum_index(list(X), 1)
    assert idx == _krum_oracle(X, 1) and idx != 4
    np.testing.assert_array_equal(krum(list(X), 1), X[idx])
    assert krum_index([[1.0, 2.0]] * 6, 1) == 0
    with pytest.raises(InvalidInputError):
        krum(list(X), 2)


def test_krum_outlier_never_selected_and_scores_match():
    for seed in range(50):
        rng = np.random.default_rng(seed)
        X = rng.normal(size=(10, 4))
        X[[2, 6]] = rng.normal(30, 1, size=(2, 4))
        idx = krum_index(list(X), 2)
        assert idx not in (2, 6)
        assert idx == _krum_oracle(X, 2)
        perm = rng.permutation(10)
        np.testing.assert_array_equal(krum(list(X[perm]), 2), X[idx])
    s = krum_scores(list(X), 2)
    assert s.shape == (10,)


def test_lsfl_round_algebra(rng):
    updates = list(rng.normal(size=(10, 32)))
    out = lsfl_round(updates, 20.0, rng)
    assert np.max(np.abs(out.global_model - np.mean(updates, axis=0))) <= 1e-9
    d, s2 = out.d_report, out.sp_shares
    for i in range(10):
        np.testing.assert_allclose(d[i] - d[0], 0.5 * (s2[i] - s2[0]), atol=1e-12)
    rec = lsfl_recover_updates(d, out.tp_shares, s2[0], 0)
    assert max(np.max(np.abs(r - u)) for r, u in zip(rec, updates[1:])) <= 1e-6
