"""Dataset assembly and splitting, multilabel metrics and Youden-J calibration."""

import json
import logging
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ._validation import ParameterError, check_binary_matrix

log = logging.getLogger(__name__)

SYNC_TOLERANCE = 0.150
MIN_CLASS_COUNT = 100
N_FOLDS = 10
TEST_FRACTION = 0.1


# time synchronisation ----------------------------------------------------------


def sync_join(ref_times, other_times, tol=SYNC_TOLERANCE):
    """Pair each reference timestamp with the nearest ``other`` timestamp.

    The nearest sample may precede the reference. Pairs further apart than
    ``tol`` seconds are dropped; on an exact tie the earlier sample wins.
    Returns a list of ``(ref_index, other_index, dt)`` with ``dt = other - ref``.
    """
    ref = np.asarray(ref_times, dtype=float)
    other = np.asarray(other_times, dtype=float)
    for name, t in (("reference", ref), ("other", other)):
        if not np.all(np.isfinite(t)) or np.any(np.diff(t) < 0):
            raise ParameterError(f"{name} timestamps must be finite and sorted ascending")
    if other.size == 0:
        warnings.warn("sync_join: the other stream is empty", RuntimeWarning, stacklevel=2)
        return []
    pos = np.searchsorted(other, ref)
    before = np.clip(pos - 1, 0, other.size - 1)
    after = np.clip(pos, 0, other.size - 1)
    d_before = np.abs(ref - other[before])
    d_after = np.abs(other[after] - ref)
    pick = np.where(d_after < d_before, after, before)
    pairs = []
    for i, j in enumerate(pick):
        dt = other[j] - ref[i]
        if abs(dt) <= tol:
            pairs.append((i, int(j), float(dt)))
    return pairs


# label handling ----------------------------------------------------------------


def merge_damage_label(label, separator=" - "):
    """``"Asphalt - Alligator Crack"`` -> ``("Asphalt", "Alligator Crack")``.

    Labels without a separator are a bare material or damage and come back as
    ``(label, None)``.
    """
    if separator in label:
        material, damage = label.split(separator, 1)
        return material.strip(), damage.strip()
    return label.strip(), None


@dataclass
class LabelSet:
    Y: np.ndarray
    class_names: list
    counts: dict = field(default_factory=dict)
    removed: dict = field(default_factory=dict)


def filter_rare_classes(Y, class_names, min_count=MIN_CLASS_COUNT):
    """Drop label columns with fewer than ``min_count`` positives.

    Rows left without any label stay in as all-negative rows.
    """
    Y = check_binary_matrix(Y)
    counts = Y.sum(axis=0)
    keep = counts >= min_count
    kept_names = [n for n, k in zip(class_names, keep) if k]
    removed = {n: int(c) for n, c, k in zip(class_names, counts, keep) if not k}
    if removed:
        log.info("removed classes below %d samples: %s", min_count, removed)
    return LabelSet(
        Y[:, keep],
        kept_names,
        {n: int(c) for n, c, k in zip(class_names, counts, keep) if k},
        removed,
    )


def stratification_key(row):
    """Read a label row as a binary number, class 0 being the least significant bit."""
    row = np.asarray(row).ravel()
    if row.size > 62:
        raise ParameterError(f"label rows wider than 62 classes overflow the key ({row.size})")
    if not np.all((row == 0) | (row == 1)):
        raise ParameterError("label row must be binary")
    return int(sum(int(b) << i for i, b in enumerate(row)))


# splitting ---------------------------------------------------------------------


@dataclass
class FoldPlan:
    test: np.ndarray
    folds: list  # [(train_idx, val_idx), ...]

    def to_json(self):
        return {
            "test": self.test.tolist(),
            "folds": [{"train": tr.tolist(), "validation": va.tolist()} for tr, va in self.folds],
        }

    @classmethod
    def from_json(cls, doc):
        return cls(
            np.array(doc["test"], dtype=int),
            [(np.array(f["train"], dtype=int), np.array(f["validation"], dtype=int)) for f in doc["folds"]],
        )

    def save(self, path):
        path = Path(path)
        tmp = path.with_name(path.name + ".tmp")
        tmp.write_text(json.dumps(self.to_json()) + "\n")
        tmp.replace(path)

    @classmethod
    def load(cls, path):
        return cls.from_json(json.loads(Path(path).read_text()))


def split_dataset(Y, seed=0, n_folds=N_FOLDS, test_fraction=TEST_FRACTION):
    """Uniform (unstratified) test draw, then stratified folds over the rest.

    Within every stratification key the remaining samples are shuffled and
    dealt round-robin to the folds, continuing from where the previous key
    stopped, so per-key fold counts differ by at most one and so do fold sizes.
    """
    Y = check_binary_matrix(Y)
    n = Y.shape[0]
    if n < n_folds:
        raise ParameterError(f"{n} samples cannot fill {n_folds} folds")
    if n < 2 * n_folds:
        raise ParameterError(f"need at least {2 * n_folds} samples, got {n}")
    rng = np.random.default_rng(seed)
    perm = rng.permutation(n)
    n_test = int(np.floor(n * test_fraction + 0.5))
    test = np.sort(perm[:n_test])
    rest = np.sort(perm[n_test:])
    keys = np.array([stratification_key(Y[i]) for i in rest])
    assign = np.empty(rest.size, dtype=int)
    cursor = 0
    for key in np.unique(keys):
        members = np.flatnonzero(keys == key)
        members = members[rng.permutation(members.size)]
        assign[members] = (cursor + np.arange(members.size)) % n_folds
        cursor = (cursor + members.size) % n_folds
    folds = []
    for k in range(n_folds):
        val = rest[assign == k]
        train = rest[assign != k]
        folds.append((train, val))
    return FoldPlan(test, folds)


# metrics -----------------------------------------------------------------------


def _counts(y_true, y_pred):
    t = check_binary_matrix(y_true).astype(bool)
    p = check_binary_matrix(y_pred).astype(bool)
    if t.shape != p.shape:
        raise ParameterError(f"shape mismatch {t.shape} vs {p.shape}")
    tp = (t & p).sum(0).astype(float)
    fp = (~t & p).sum(0).astype(float)
    fn = (t & ~p).sum(0).astype(float)
    tn = (~t & ~p).sum(0).astype(float)
    return tp, fp, fn, tn


def _weighted(values, support):
    total = support.sum()
    return float(values @ support / total) if total > 0 else 0.0


def f1_weighted(y_true, y_pred):
    """Per-class F1 and its average weighted by the number of true positives per class.

    Returns ``(per_class, weighted, support)``.
    """
    tp, fp, fn, _ = _counts(y_true, y_pred)
    denom = 2 * tp + fp + fn
    f1 = np.divide(2 * tp, denom, out=np.zeros_like(tp), where=denom > 0)
    support = tp + fn
    return f1, _weighted(f1, support), support


def cohens_kappa_weighted(y_true, y_pred):
    """Binary Cohen's kappa per label, averaged with the same support weights as F1.

    A label whose chance agreement is 1 gets kappa 0.
    """
    tp, fp, fn, tn = _counts(y_true, y_pred)
    n = tp + fp + fn + tn
    p_o = (tp + tn) / n
    p_e = ((tp + fp) * (tp + fn) + (fn + tn) * (fp + tn)) / n**2
    kappa = np.divide(p_o - p_e, 1 - p_e, out=np.zeros_like(p_o), where=p_e < 1)
    support = tp + fn
    return kappa, _weighted(kappa, support), support


@dataclass
class MetricsReport:
    class_names: list
    f1: np.ndarray
    kappa: np.ndarray
    f1_weighted: float
    kappa_weighted: float
    support: np.ndarray
    thresholds: np.ndarray

    def to_json(self):
        return {
            "class_names": list(self.class_names),
            "f1": [float(v) for v in self.f1],
            "kappa": [float(v) for v in self.kappa],
            "f1_weighted": self.f1_weighted,
            "kappa_weighted": self.kappa_weighted,
            "support": [int(v) for v in self.support],
            "thresholds": [float(v) for v in self.thresholds],
        }


def evaluate(y_true, scores, thresholds, class_names):
    y_pred = (np.asarray(scores) >= np.asarray(thresholds)).astype(np.uint8)
    f1, f1w, support = f1_weighted(y_true, y_pred)
    kappa, kw, _ = cohens_kappa_weighted(y_true, y_pred)
    return MetricsReport(list(class_names), f1, kappa, f1w, kw, support, np.asarray(thresholds, float))


# threshold calibration ---------------------------------------------------------


def youden_threshold(scores, y_true):
    """Threshold maximising ``TPR - FPR`` for one label.

    Candidates are the midpoints between consecutive distinct scores plus one
    value below and one above every score; a sample is positive when its score
    is ``>=`` the threshold. Ties go to the higher threshold. Returns
    ``(threshold, J)``.
    """
    s = np.asarray(scores, dtype=float).ravel()
    y = np.asarray(y_true).ravel().astype(bool)
    P, N = int(y.sum()), int((~y).sum())
    if P == 0 or N == 0:
        raise ParameterError("Youden calibration needs positive and negative samples")
    u = np.unique(s)
    candidates = np.concatenate([[u[0] - 1.0], (u[:-1] + u[1:]) / 2.0, [u[-1] + 1.0]])
    order = np.argsort(s)
    s_sorted, y_sorted = s[order], y[order]
    # samples at or above each candidate
    first = np.searchsorted(s_sorted, candidates, side="left")
    pos_above = np.concatenate([np.cumsum(y_sorted[::-1])[::-1], [0]])[first]
    neg_above = np.concatenate([np.cumsum(~y_sorted[::-1])[::-1], [0]])[first]
    # J * P * N in integers, so ties are exact
    j_scaled = pos_above.astype(np.int64) * N - neg_above.astype(np.int64) * P
    best = np.flatnonzero(j_scaled == j_scaled.max())[-1]
    return float(candidates[best]), float(j_scaled[best] / (P * N))


def youden_thresholds(scores, Y, class_names=None):
    scores = np.atleast_2d(np.asarray(scores, dtype=float))
    Y = check_binary_matrix(Y)
    if scores.shape != Y.shape:
        raise ParameterError(f"scores {scores.shape} and labels {Y.shape} differ in shape")
    out = []
    for c in range(Y.shape[1]):
        try:
            out.append(youden_threshold(scores[:, c], Y[:, c])[0])
        except ParameterError:
            name = class_names[c] if class_names is not None else c
            raise ParameterError(
                f"class {name!r} has a single-valued validation column"
            ) from None
    return np.array(out)
