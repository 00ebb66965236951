"""One-vs-rest multilabel classifiers and the closed-form model helpers."""

from .formulas import (
    ScaledNetwork,
    ScalingSpec,
    balanced_class_weights,
    binary_balanced_weights,
    rbf_gamma,
    resolve_cnn_scaling,
)
from .logistic import OvRLogisticRegression
from .persist import load_model, save_model
from .tree import OvRDecisionTree, OvRRandomForest

MODELS = {
    "logreg": OvRLogisticRegression,
    "tree": OvRDecisionTree,
    "forest": OvRRandomForest,
}


def train_logreg_ovr(X, Y, C_reg=0.01, class_weight="balanced", sample_weight=None):
    return OvRLogisticRegression(C=C_reg, class_weight=class_weight).fit(X, Y, sample_weight)


def train_tree_ovr(X, Y, class_weight="balanced", sample_weight=None):
    return OvRDecisionTree(class_weight=class_weight).fit(X, Y, sample_weight)


def train_forest_ovr(X, Y, class_weight="balanced", n_trees=100, seed=0, **kwargs):
    return OvRRandomForest(
        n_estimators=n_trees, class_weight=class_weight, random_state=seed, **kwargs
    ).fit(X, Y)


def predict_scores(model, X):
    return model.predict_proba(X)


__all__ = [
    "MODELS",
    "OvRDecisionTree",
    "OvRLogisticRegression",
    "OvRRandomForest",
    "ScaledNetwork",
    "ScalingSpec",
    "balanced_class_weights",
    "binary_balanced_weights",
    "load_model",
    "predict_scores",
    "rbf_gamma",
    "resolve_cnn_scaling",
    "save_model",
    "train_forest_ovr",
    "train_logreg_ovr",
    "train_tree_ovr",
]
