"""Cross-validated experiment protocol: repeated 10-fold runs with a held-out test set.

Per fold the vector pipeline is fitted on the training part only, every
enabled model is trained, per-class thresholds are calibrated with Youden's J
on the validation part and the same thresholds score train, validation and
test. Seeds: the fold plan comes from the root seed; repetition ``r`` trains
its models with seed ``root + r``.
"""

import json
import logging
import time
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ._validation import ParameterError
from .evaluation import FoldPlan, evaluate, filter_rare_classes, split_dataset, youden_thresholds
from .features import VectorPipeline, subset
from .ml import MODELS
from .simulate import DAMAGES, MATERIALS

log = logging.getLogger(__name__)

TASKS = {"material": MATERIALS, "damage": DAMAGES}
TABLE_COLUMNS = (
    ("test", "kappa", "Test κ"),
    ("validation", "kappa", "Validation κ"),
    ("train", "kappa", "Training κ"),
    ("test", "f1", "Test F1"),
    ("validation", "f1", "Validation F1"),
    ("train", "f1", "Training F1"),
)


def task_labels(manifest, task, min_count=100):
    """Label matrix for one task, rare classes removed."""
    if task not in TASKS:
        raise ParameterError(f"unknown task {task!r}; expected one of {sorted(TASKS)}")
    names = [c for c in TASKS[task] if c in manifest.class_names]
    if not names:
        raise ParameterError(f"manifest has no {task} labels")
    Y, names = manifest.label_matrix(names)
    labels = filter_rare_classes(Y, names, min_count)
    if not labels.class_names:
        raise ParameterError(f"no {task} class reaches {min_count} samples: {labels.removed}")
    return labels


def build_model(name, params, seed, class_names):
    if name not in MODELS:
        raise ParameterError(f"unknown model {name!r}; expected one of {sorted(MODELS)}")
    params = dict(params or {})
    cls = MODELS[name]
    if "random_state" in cls().get_params():
        params.setdefault("random_state", seed)
    return cls(class_names=list(class_names), **params)


@dataclass
class RunRecord:
    model: str
    repeat: int
    seed: int
    fold: int
    metrics: dict  # split name -> MetricsReport json

    def to_json(self):
        return {
            "model": self.model,
            "repeat": self.repeat,
            "seed": self.seed,
            "fold": self.fold,
            "metrics": self.metrics,
        }


@dataclass
class ExperimentResult:
    task: str
    class_names: list
    runs: list = field(default_factory=list)
    skipped: list = field(default_factory=list)

    def models(self):
        return list(dict.fromkeys(r.model for r in self.runs))

    def runs_for(self, model):
        return [r for r in self.runs if r.model == model]

    def aggregate(self):
        """``{model: {column label: (mean, std)}}`` over all recorded runs (std with ddof=0)."""
        out = {}
        for m in self.models():
            runs = self.runs_for(m)
            cols = {}
            for split, metric, label in TABLE_COLUMNS:
                v = np.array([r.metrics[split][f"{metric}_weighted"] for r in runs])
                cols[label] = (float(v.mean()), float(v.std()))
            out[m] = cols
        return out

    def table(self):
        labels = [c[2] for c in TABLE_COLUMNS]
        agg = self.aggregate()
        width = max([len("Model")] + [len(m) for m in agg])
        head = f"{'Model':<{width}} | " + " | ".join(f"{lab:>13}" for lab in labels)
        lines = [head, "-" * len(head)]
        for m, cols in agg.items():
            cells = [f"{100 * mu:6.2f}±{100 * sd:5.2f}" for mu, sd in (cols[lab] for lab in labels)]
            lines.append(f"{m:<{width}} | " + " | ".join(f"{c:>13}" for c in cells))
        return "\n".join(lines) + "\n"

    def to_json(self):
        return {
            "task": self.task,
            "class_names": self.class_names,
            "aggregate": {
                m: {k: {"mean": mu, "std": sd} for k, (mu, sd) in cols.items()}
                for m, cols in self.aggregate().items()
            },
            "runs": [r.to_json() for r in self.runs],
            "skipped": self.skipped,
        }

    def write(self, out_dir):
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        _atomic_write(out_dir / f"{self.task}_report.json", json.dumps(self.to_json(), indent=1) + "\n")
        _atomic_write(out_dir / f"{self.task}_table.txt", self.table())


def _atomic_write(path, text):
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(text)
    tmp.replace(path)


def _degenerate(Y, parts):
    """Name the first class lacking positives or negatives in any part, else None."""
    for part_name, idx in parts:
        col = Y[idx].sum(axis=0)
        for c, count in enumerate(col):
            if count == 0 or count == len(idx):
                return part_name, c
    return None


def run_fold(scapes, Y, class_names, train, val, test, models, seed, pipeline_params=None):
    """One fold: fit the vector pipeline, train, calibrate and score every model.

    Returns ``{model: {split: MetricsReport}}``.
    """
    pipe = VectorPipeline(**(pipeline_params or {}))
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        X_train = pipe.fit_transform(subset(scapes, train))
    X_val = pipe.transform(subset(scapes, val))
    X_test = pipe.transform(subset(scapes, test)) if len(test) else np.empty((0, X_train.shape[1]))
    out = {}
    for name, params in models.items():
        model = build_model(name, params, seed, class_names).fit(X_train, Y[train])
        thr = youden_thresholds(model.predict_proba(X_val), Y[val], class_names)
        model.set_thresholds(thr)
        reports = {}
        for split, X, idx in (("train", X_train, train), ("validation", X_val, val), ("test", X_test, test)):
            if len(idx):
                reports[split] = evaluate(Y[idx], model.predict_proba(X), thr, class_names)
        out[name] = reports
    return out


def run_experiment(
    scapes,
    Y,
    class_names,
    task="material",
    seed=0,
    n_repeats=2,
    n_folds=10,
    test_fraction=0.1,
    models=None,
    pipeline_params=None,
    plan=None,
    progress=None,
):
    """Repeated k-fold protocol. ``models`` maps model name -> constructor params."""
    models = {"logreg": {}, "tree": {}, "forest": {}} if models is None else models
    Y = np.asarray(Y, dtype=np.uint8)
    if len(scapes) != Y.shape[0]:
        raise ParameterError(f"{len(scapes)} energyscapes but {Y.shape[0]} label rows")
    plan = split_dataset(Y, seed, n_folds, test_fraction) if plan is None else plan
    result = ExperimentResult(task, list(class_names))
    for r in range(n_repeats):
        run_seed = seed + r
        for k, (train, val) in enumerate(plan.folds):
            bad = _degenerate(Y, [("train", train), ("validation", val)])
            if bad:
                part, c = bad
                msg = f"repeat {r} fold {k}: class {class_names[c]!r} is single-valued in {part}; fold skipped"
                warnings.warn(msg, RuntimeWarning, stacklevel=2)
                result.skipped.append({"repeat": r, "fold": k, "reason": msg})
                continue
            t0 = time.perf_counter()
            reports = run_fold(scapes, Y, class_names, train, val, plan.test, models, run_seed, pipeline_params)
            dt = time.perf_counter() - t0
            for name, rep in reports.items():
                result.runs.append(
                    RunRecord(name, r, run_seed, k, {s: m.to_json() for s, m in rep.items()})
                )
            log.info("repeat %d fold %d done in %.1f s", r, k, dt)
            if progress:
                progress(r, k)
    return result


__all__ = [
    "ExperimentResult",
    "FoldPlan",
    "RunRecord",
    "TABLE_COLUMNS",
    "TASKS",
    "build_model",
    "run_experiment",
    "run_fold",
    "task_labels",
]
