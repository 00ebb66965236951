import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from sklearn.linear_model import LogisticRegression

from roadsonar import DegenerateInputError, ParameterError
from roadsonar.ml import (
    MODELS,
    OvRDecisionTree,
    OvRLogisticRegression,
    OvRRandomForest,
    ScalingSpec,
    balanced_class_weights,
    load_model,
    predict_scores,
    rbf_gamma,
    resolve_cnn_scaling,
    save_model,
    train_forest_ovr,
    train_logreg_ovr,
    train_tree_ovr,
)
from roadsonar.ml.logistic import fit_binary_logistic, objective


def blobs(seed=0, n=60, F=4, C=3):
    r = np.random.default_rng(seed)
    y = r.integers(0, C, n)
    y[:C] = np.arange(C)
    X = r.normal(size=(n, F)) + 2.0 * np.eye(C, F)[y]
    return X, np.eye(C, dtype=np.uint8)[y]


XOR_X = np.array([[0.0, 0.0], [0.0, 1.0], [1.0, 0.0], [1.0, 1.0]])
XOR_Y = np.array([[0], [1], [1], [0]], dtype=np.uint8)


# formulas


def test_balanced_weights_examples():
    Y = np.array([[1, 1], [0, 1], [0, 1], [0, 0]])
    assert np.allclose(balanced_class_weights(Y), [2.0, 2 / 3], rtol=0, atol=1e-15)
    assert np.allclose(balanced_class_weights(np.eye(4)), 1.0)
    assert np.allclose(balanced_class_weights(np.vstack([Y, Y])), balanced_class_weights(Y))


def test_balanced_weights_zero_class_named():
    with pytest.raises(ParameterError, match="Crack"):
        balanced_class_weights(np.array([[1, 0], [1, 0]]), ["Pothole", "Crack"])


@given(st.integers(0, 10_000))
def test_balanced_weights_identity(seed):
    r = np.random.default_rng(seed)
    Y = r.integers(0, 2, (r.integers(2, 40), r.integers(1, 6)))
    Y[0] = 1
    w = balanced_class_weights(Y)
    assert (w * Y.sum(0)).sum() == pytest.approx(Y.shape[0], rel=1e-12)


def test_rbf_gamma_examples(rng):
    assert rbf_gamma(np.array([[1.0], [-1.0]])) == pytest.approx(1.0)
    X = rng.normal(size=(50, 256))
    X = (X - X.mean()) / X.std() * np.sqrt(0.5)
    assert rbf_gamma(X) == pytest.approx(1 / 128, rel=1e-12)
    assert rbf_gamma(2 * X) == pytest.approx(rbf_gamma(X) / 4, rel=1e-12)
    with pytest.raises(DegenerateInputError):
        rbf_gamma(np.ones((3, 2)))


def test_scaling_examples():
    net = resolve_cnn_scaling(ScalingSpec(1.2, 1.1, 1.15, 2, 3, 16, 1))
    assert np.allclose(net.raw, (4.32, 19.36, 1.3225), rtol=0, atol=1e-12)
    assert (net.depth, net.width, net.downsample_interval, net.residual_blocks) == (4, 19, 1, 3)
    base = resolve_cnn_scaling(ScalingSpec(phi=0))
    assert (base.depth, base.width, base.downsample_interval) == (3, 16, 1)


@given(st.floats(0, 5), st.floats(0, 5))
def test_scaling_monotone_in_phi(p, dp):
    a = resolve_cnn_scaling(ScalingSpec(phi=p)).raw
    b = resolve_cnn_scaling(ScalingSpec(phi=p + dp)).raw
    assert all(y >= x for x, y in zip(a, b))


def test_scaling_rejects_bad_spec():
    with pytest.raises(ParameterError):
        ScalingSpec(alpha=0.9)
    with pytest.raises(ParameterError):
        ScalingSpec(d0=0)


# logistic regression


def test_logistic_matches_sklearn_oracle():
    X, Y = blobs(1, n=80)
    ours = OvRLogisticRegression(C=0.5, tol=1e-10).fit(X, Y)
    for c in range(Y.shape[1]):
        y = Y[:, c]
        w = balanced_class_weights(np.column_stack([1 - y, y]))[y]
        ref = LogisticRegression(C=0.5, tol=1e-12, max_iter=10_000).fit(X, y, sample_weight=w)
        assert np.allclose(ours.coef_[c], ref.coef_[0], atol=1e-5)
        assert ours.intercept_[c] == pytest.approx(ref.intercept_[0], abs=1e-5)


def test_logistic_separable_toy():
    X = np.array([[-2.0, 0], [-1.5, 1], [1.5, 0], [2.0, -1]])
    Y = np.array([[0], [0], [1], [1]], dtype=np.uint8)
    m = train_logreg_ovr(X, Y, C_reg=10.0)
    assert np.array_equal(m.predict(X), Y)


def test_logistic_objective_not_worse_than_zero():
    X, Y = blobs(2)
    y = Y[:, 0].astype(float)
    w = np.ones(y.size)
    coef, b, _ = fit_binary_logistic(X, y, w, 0.01)
    assert objective(coef, b, X, y, w, 0.01) <= objective(np.zeros(X.shape[1]), 0.0, X, y, w, 0.01)


def test_logistic_norm_shrinks_with_c():
    X, Y = blobs(3)
    norms = [np.linalg.norm(train_logreg_ovr(X, Y, C_reg=c).coef_) for c in (0.01, 0.001, 0.0001)]
    assert norms[0] > norms[1] > norms[2]


def test_logistic_weight_scaling_invariance():
    X, Y = blobs(4)
    sw = np.ones(X.shape[0])
    a = OvRLogisticRegression(C=0.01, tol=1e-10).fit(X, Y, sw)
    b = OvRLogisticRegression(C=0.01 / 3, tol=1e-10).fit(X, Y, 3 * sw)
    assert np.allclose(a.predict_proba(X), b.predict_proba(X), atol=1e-6)


@given(st.integers(0, 1000))
def test_logistic_scores_monotone_in_linear_score(seed):
    X, Y = blobs(seed)
    m = OvRLogisticRegression().fit(X, Y)
    z, p = m.decision_function(X), m.predict_proba(X)
    for c in range(Y.shape[1]):
        o = np.argsort(z[:, c])
        assert np.all(np.diff(p[o, c]) >= 0)
        assert np.all((p >= 0) & (p <= 1))


# trees


def test_tree_xor():
    m = train_tree_ovr(XOR_X, XOR_Y)
    assert np.array_equal(m.predict(XOR_X), XOR_Y)
    assert m.trees_[0].depth >= 2


def test_logistic_cannot_fit_xor():
    m = train_logreg_ovr(XOR_X, XOR_Y, C_reg=100.0)
    assert not np.array_equal(m.predict(XOR_X), XOR_Y)


@given(st.integers(0, 10_000))
def test_tree_pure_on_consistent_data(seed):
    r = np.random.default_rng(seed)
    X = r.normal(size=(40, 3))
    Y = r.integers(0, 2, (40, 2)).astype(np.uint8)
    Y[0], Y[1] = 0, 1
    assert np.array_equal(OvRDecisionTree().fit(X, Y).predict(X), Y)


def test_tree_single_leaf_for_constant_feature_split():
    # all samples share x, so no split exists and the root stays a leaf
    X = np.zeros((6, 2))
    Y = np.array([[0], [1], [0], [1], [0], [1]], dtype=np.uint8)
    assert OvRDecisionTree().fit(X, Y).trees_[0].node_count == 1


def test_degenerate_column_rejected():
    X, Y = blobs(0)
    Y[:, 1] = 0
    for cls in MODELS.values():
        with pytest.raises(ParameterError, match="'1'"):
            cls().fit(X, Y)


# forest


def test_forest_degenerate_equals_tree():
    X, Y = blobs(5, n=80)
    f = OvRRandomForest(n_estimators=1, bootstrap=False, max_features=None, random_state=0).fit(X, Y)
    t = OvRDecisionTree().fit(X, Y)
    Xq = np.random.default_rng(9).normal(size=(200, X.shape[1])) * 2
    assert np.array_equal(f.predict(Xq), t.predict(Xq))


def test_forest_deterministic_and_bounded():
    X, Y = blobs(6)
    a = train_forest_ovr(X, Y, n_trees=20, seed=3).predict_proba(X)
    b = train_forest_ovr(X, Y, n_trees=20, seed=3).predict_proba(X)
    assert np.array_equal(a, b)
    assert np.all((a >= 0) & (a <= 1))


def test_forest_unanimous_training_point():
    X = np.array([[0.0], [0.1], [5.0], [5.1]] * 5)
    Y = np.array([[0], [0], [1], [1]] * 5, dtype=np.uint8)
    s = OvRRandomForest(n_estimators=30, random_state=0).fit(X, Y).predict_proba(X)
    assert np.all(s[Y[:, 0] == 1] == 1.0)


def test_forest_synthetic_held_out():
    X, Y = blobs(7, n=300, F=6)
    m = OvRRandomForest(n_estimators=50, random_state=0).fit(X[:270], Y[:270])
    from roadsonar.evaluation import f1_weighted

    assert f1_weighted(Y[270:], m.predict(X[270:]))[1] >= 0.7


# api and persistence


def test_predict_shape_check_and_thresholds():
    X, Y = blobs(8)
    m = OvRLogisticRegression().fit(X, Y)
    with pytest.raises(ParameterError):
        m.predict(X[:, :2])
    m.set_thresholds([0.0, 1.1, 0.5])
    P = m.predict(X)
    assert P[:, 0].all() and not P[:, 1].any()
    with pytest.raises(ParameterError):
        m.set_thresholds([0.5])
    assert np.array_equal(predict_scores(m, X), m.predict_proba(X))


def test_estimators_clone():
    from sklearn.base import clone

    for cls in MODELS.values():
        m = cls(class_names=["a", "b"])
        assert clone(m).get_params() == m.get_params()


@pytest.mark.parametrize("name", sorted(MODELS))
def test_persist_round_trip(tmp_path, name):
    X, Y = blobs(9)
    params = {"n_estimators": 5, "random_state": 1} if name == "forest" else {}
    m = MODELS[name](class_names=["a", "b", "c"], **params).fit(X, Y)
    m.set_thresholds([0.3, 0.4, 0.6])
    save_model(m, tmp_path / "m.npz")
    back = load_model(tmp_path / "m.npz")
    assert np.array_equal(back.predict_proba(X), m.predict_proba(X))
    assert np.array_equal(back.thresholds_, m.thresholds_)
    assert back.class_names == ["a", "b", "c"]
