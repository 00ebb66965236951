
import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from sklearn.metrics import cohen_kappa_score, f1_score

from roadsonar import ParameterError
from roadsonar.evaluation import (
    FoldPlan,
    cohens_kappa_weighted,
    evaluate,
    f1_weighted,
    filter_rare_classes,
    merge_damage_label,
    split_dataset,
    stratification_key,
    sync_join,
    youden_threshold,
    youden_thresholds,
)


def rand_labels(r, n, c, p=0.4):
    return (r.random((n, c)) < p).astype(np.uint8)


def confusion(tp, fp, fn, tn):
    t = np.array([1] * tp + [0] * fp + [1] * fn + [0] * tn)
    p = np.array([1] * tp + [1] * fp + [0] * fn + [0] * tn)
    return t[:, None], p[:, None]


def youden_brute(scores, y):
    """Try every score and +-inf as a threshold; best J, ties to the higher threshold."""
    P, N = y.sum(), (1 - y).sum()
    best = None
    for t in sorted(set(scores) | {np.inf}):
        pred = scores >= t
        j = (pred & (y == 1)).sum() / P - (pred & (y == 0)).sum() / N
        if best is None or j >= best[1] - 1e-15:
            best = (t, j)
    return best


# sync join


def test_sync_join_nearest_either_side():
    pairs = sync_join([1.000], [0.990, 1.200])
    assert [(i, j) for i, j, _ in pairs] == [(0, 0)]
    assert pairs[0][2] == pytest.approx(-0.010)


def test_sync_join_cutoff():
    assert sync_join([1.000], [1.151]) == []
    assert len(sync_join([1.000], [1.150])) == 1


def test_sync_join_empty_warns():
    with pytest.warns(RuntimeWarning):
        assert sync_join([1.0, 2.0], []) == []


def test_sync_join_tie_prefers_earlier():
    assert sync_join([1.0], [0.9, 1.1])[0][1] == 0


def test_sync_join_unsorted():
    with pytest.raises(ParameterError):
        sync_join([2.0, 1.0], [1.0])


@given(st.lists(st.floats(0, 100), min_size=1, max_size=20),
       st.lists(st.floats(0, 100), min_size=1, max_size=20))
def test_sync_join_matches_brute_force(ref, other):
    ref, other = sorted(ref), sorted(other)
    got = {i: j for i, j, _ in sync_join(ref, other)}
    for i, t in enumerate(ref):
        d = [abs(o - t) for o in other]
        j = int(np.argmin(d))
        if d[j] <= 0.150:
            assert abs(other[got[i]] - t) == d[j]
        else:
            assert i not in got


# labels


def test_merge_damage_label():
    assert merge_damage_label("Asphalt - Alligator Crack") == ("Asphalt", "Alligator Crack")
    assert merge_damage_label("Concrete") == ("Concrete", None)


def test_filter_rare_classes_boundary():
    Y = np.zeros((250, 3), np.uint8)
    Y[:99, 0] = 1
    Y[:100, 1] = 1
    Y[:150, 2] = 1
    out = filter_rare_classes(Y, ["a", "b", "c"])
    assert out.class_names == ["b", "c"]
    assert out.removed == {"a": 99}
    assert out.Y.shape == (250, 2)


def test_stratification_key():
    assert stratification_key([1, 0, 1]) == 5
    assert stratification_key([0] * 62) == 0
    with pytest.raises(ParameterError):
        stratification_key([0] * 63)
    with pytest.raises(ParameterError):
        stratification_key([2, 0])


# split


def check_plan(plan, Y, n_folds=10):
    n = Y.shape[0]
    assert len(plan.test) == int(np.floor(0.1 * n + 0.5))
    rest = np.setdiff1d(np.arange(n), plan.test)
    vals = [v for _, v in plan.folds]
    assert len(vals) == n_folds
    assert np.array_equal(np.sort(np.concatenate(vals)), rest)
    for train, val in plan.folds:
        assert not np.intersect1d(train, val).size and not np.intersect1d(train, plan.test).size
        assert np.array_equal(np.sort(np.concatenate([train, val])), rest)
    sizes = [len(v) for v in vals]
    assert max(sizes) - min(sizes) <= 1
    keys = np.array([stratification_key(r) for r in Y])
    for k in np.unique(keys[rest]):
        counts = [np.sum(keys[v] == k) for v in vals]
        assert max(counts) - min(counts) <= 1


def test_split_examples():
    r = np.random.default_rng(0)
    Y = rand_labels(r, 1000, 3)
    plan = split_dataset(Y, seed=4)
    assert len(plan.test) == 100
    check_plan(plan, Y)


def test_split_deterministic_and_seed_dependent():
    Y = rand_labels(np.random.default_rng(1), 200, 2)
    a, b, c = split_dataset(Y, 3), split_dataset(Y, 3), split_dataset(Y, 4)
    assert a.to_json() == b.to_json()
    assert a.to_json() != c.to_json()


def test_split_too_small():
    with pytest.raises(ParameterError):
        split_dataset(np.ones((9, 1), np.uint8))
    with pytest.raises(ParameterError):
        split_dataset(np.ones((15, 1), np.uint8))


@given(st.integers(0, 2**31), st.integers(20, 300))
def test_split_property(seed, n):
    Y = rand_labels(np.random.default_rng(seed), n, 3)
    check_plan(split_dataset(Y, seed), Y)


def test_fold_plan_json(tmp_path):
    Y = rand_labels(np.random.default_rng(2), 100, 2)
    plan = split_dataset(Y, 0)
    plan.save(tmp_path / "p.json")
    back = FoldPlan.load(tmp_path / "p.json")
    assert back.to_json() == plan.to_json()


# metrics


def test_f1_example():
    t, p = confusion(8, 2, 4, 10)
    f1, w, support = f1_weighted(t, p)
    assert f1[0] == pytest.approx(16 / 22, abs=1e-12)
    assert support[0] == 12


def test_kappa_example():
    t, p = confusion(40, 20, 10, 30)
    po = 0.7
    pe = (60 * 50 + 40 * 50) / 100**2
    k, w, _ = cohens_kappa_weighted(t, p)
    assert k[0] == pytest.approx((po - pe) / (1 - pe), abs=1e-12)
    assert w == pytest.approx(k[0], abs=1e-12)


def test_metrics_match_sklearn(rng):
    for _ in range(50):
        t, p = rand_labels(rng, 60, 4), rand_labels(rng, 60, 4)
        t[0] = 1
        f1, w, _ = f1_weighted(t, p)
        assert f1 == pytest.approx(f1_score(t, p, average=None, zero_division=0), abs=1e-12)
        assert w == pytest.approx(f1_score(t, p, average="weighted", zero_division=0), abs=1e-12)
        k, _, _ = cohens_kappa_weighted(t, p)
        ref = [cohen_kappa_score(t[:, c], p[:, c]) for c in range(4)]
        assert k == pytest.approx(ref, abs=1e-12)


def test_kappa_constant_agreement_zero():
    t = np.ones((5, 1), np.uint8)
    k, _, _ = cohens_kappa_weighted(t, t)
    assert k[0] == 0.0


def test_evaluate_report(rng):
    t = rand_labels(rng, 30, 2)
    s = rng.random((30, 2))
    rep = evaluate(t, s, [0.5, 0.5], ["a", "b"])
    f1, w, _ = f1_weighted(t, (s >= 0.5).astype(np.uint8))
    assert rep.f1_weighted == w
    assert rep.to_json()["class_names"] == ["a", "b"]


# youden


def test_youden_example():
    thr, j = youden_threshold([0.1, 0.4, 0.35, 0.8], [0, 1, 0, 1])
    assert thr == pytest.approx(0.375)
    assert j == 1.0


def test_youden_identical_scores():
    thr, j = youden_threshold([0.3, 0.3, 0.3], [0, 1, 1])
    assert thr > 0.3 and j == 0.0


def test_youden_degenerate():
    with pytest.raises(ParameterError):
        youden_threshold([0.1, 0.2], [1, 1])
    with pytest.raises(ParameterError, match="Crack"):
        youden_thresholds(np.zeros((3, 1)), np.ones((3, 1), np.uint8), ["Crack"])


@given(st.integers(0, 2**31))
def test_youden_matches_brute_force(seed):
    r = np.random.default_rng(seed)
    n = int(r.integers(2, 30))
    s = np.round(r.random(n), 1)  # coarse grid forces ties
    y = r.integers(0, 2, n)
    y[0], y[1] = 0, 1
    thr, j = youden_threshold(s, y)
    bt, bj = youden_brute(s, y)
    assert j == pytest.approx(bj, abs=1e-12)
    pred = s >= thr
    assert np.array_equal(pred, s >= bt)


@given(st.integers(0, 2**31))
def test_youden_monotone_invariance(seed):
    r = np.random.default_rng(seed)
    s = r.random(25)
    y = r.integers(0, 2, 25)
    y[:2] = [0, 1]
    t1, j1 = youden_threshold(s, y)
    t2, j2 = youden_threshold(np.exp(3 * s), y)
    assert j1 == j2
    assert np.array_equal(s >= t1, np.exp(3 * s) >= t2)
