import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin
from sklearn.utils.validation import check_array, check_is_fitted

from .._validation import ParameterError, check_binary_matrix
from .formulas import binary_balanced_weights


class OvRClassifier(ClassifierMixin, BaseEstimator):
    """Shared one-vs-rest plumbing: per-class thresholds and score checks.

    Subclasses implement ``_fit_column`` and ``predict_proba``.
    """

    def _validate_fit(self, X, Y):
        X = check_array(X, dtype=np.float64)
        Y = check_binary_matrix(Y)
        if Y.shape[0] != X.shape[0]:
            raise ParameterError(f"X has {X.shape[0]} rows but Y has {Y.shape[0]}")
        names = getattr(self, "class_names", None) or [str(i) for i in range(Y.shape[1])]
        for c in range(Y.shape[1]):
            pos = int(Y[:, c].sum())
            if pos == 0 or pos == Y.shape[0]:
                raise ParameterError(
                    f"class {names[c]!r} needs both positive and negative samples "
                    f"({pos} of {Y.shape[0]} positive)"
                )
        self.n_features_in_ = X.shape[1]
        self.n_classes_ = Y.shape[1]
        self.thresholds_ = np.full(Y.shape[1], 0.5)
        return X, Y

    def _column_weights(self, y, sample_weight):
        w = np.ones(y.size) if sample_weight is None else np.asarray(sample_weight, float).copy()
        if self.class_weight == "balanced":
            w *= binary_balanced_weights(y)[y.astype(int)]
        elif self.class_weight is not None:
            raise ParameterError("class_weight must be 'balanced' or None")
        return w

    def _check_predict(self, X):
        check_is_fitted(self, "thresholds_")
        X = check_array(X, dtype=np.float64)
        if X.shape[1] != self.n_features_in_:
            raise ParameterError(
                f"X has {X.shape[1]} features, model was fitted with {self.n_features_in_}"
            )
        return X

    def predict_scores(self, X):
        return self.predict_proba(X)

    def predict(self, X):
        return (self.predict_proba(X) >= self.thresholds_).astype(np.uint8)

    def set_thresholds(self, thresholds):
        check_is_fitted(self, "thresholds_")
        t = np.asarray(thresholds, dtype=float).ravel()
        if t.shape != (self.n_classes_,):
            raise ParameterError(f"need {self.n_classes_} thresholds, got {t.shape}")
        self.thresholds_ = t
        return self

    def _more_tags(self):
        return {"multilabel": True}
