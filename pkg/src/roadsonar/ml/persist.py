"""Model files: an ``.npz`` array bundle plus a JSON sidecar with hyperparameters."""

import json
from pathlib import Path

import numpy as np

from .._validation import ParameterError
from .logistic import OvRLogisticRegression
from .tree import OvRDecisionTree, OvRRandomForest, TreeArrays

FORMAT_VERSION = 1
_KINDS = {
    "logreg": OvRLogisticRegression,
    "tree": OvRDecisionTree,
    "forest": OvRRandomForest,
}
_TREE_FIELDS = ("feature", "threshold", "left", "right", "value")


def _kind(model):
    for k, cls in _KINDS.items():
        if type(model) is cls:
            return k
    raise ParameterError(f"cannot persist {type(model).__name__}")


def _pack_trees(trees, prefix, arrays):
    offsets = np.cumsum([0] + [t.node_count for t in trees])
    arrays[f"{prefix}offsets"] = offsets
    for name in _TREE_FIELDS:
        arrays[f"{prefix}{name}"] = np.concatenate([getattr(t, name) for t in trees])


def _unpack_trees(data, prefix):
    off = data[f"{prefix}offsets"]
    return [
        TreeArrays(*(data[f"{prefix}{name}"][off[i] : off[i + 1]] for name in _TREE_FIELDS))
        for i in range(off.size - 1)
    ]


def sidecar_path(path):
    path = Path(path)
    return path.with_name(path.name + ".json")


def save_model(model, path):
    kind = _kind(model)
    arrays = {"format_version": np.array(FORMAT_VERSION), "thresholds": model.thresholds_}
    if kind == "logreg":
        arrays["coef"] = model.coef_
        arrays["intercept"] = model.intercept_
    elif kind == "tree":
        _pack_trees(model.trees_, "t_", arrays)
    else:
        for c, trees in enumerate(model.estimators_):
            _pack_trees(trees, f"c{c}_", arrays)
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp.npz")
    np.savez(tmp, **arrays)
    tmp.replace(path)
    params = {k: v for k, v in model.get_params().items() if k != "class_names"}
    meta = {
        "format_version": FORMAT_VERSION,
        "kind": kind,
        "params": params,
        "class_names": model.class_names,
        "n_features": int(model.n_features_in_),
        "n_classes": int(model.n_classes_),
        "thresholds": [float(t) for t in model.thresholds_],
    }
    sidecar_path(path).write_text(json.dumps(meta, indent=1, sort_keys=True) + "\n")


def load_model(path):
    meta = json.loads(sidecar_path(path).read_text())
    if meta.get("format_version") != FORMAT_VERSION:
        raise ParameterError(f"{path}: unsupported model format {meta.get('format_version')}")
    model = _KINDS[meta["kind"]](**meta["params"], class_names=meta["class_names"])
    with np.load(path) as data:
        model.thresholds_ = data["thresholds"].astype(float)
        if meta["kind"] == "logreg":
            model.coef_ = data["coef"]
            model.intercept_ = data["intercept"]
        elif meta["kind"] == "tree":
            model.trees_ = _unpack_trees(data, "t_")
        else:
            model.estimators_ = [_unpack_trees(data, f"c{c}_") for c in range(meta["n_classes"])]
    model.n_features_in_ = meta["n_features"]
    model.n_classes_ = meta["n_classes"]
    return model
