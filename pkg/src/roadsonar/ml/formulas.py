"""Closed-form helpers: balanced class weights, RBF gamma, CNN size scaling."""

from dataclasses import dataclass

import numpy as np

from .._validation import DegenerateInputError, ParameterError, check_binary_matrix


def balanced_class_weights(Y, class_names=None):
    """``w_i = S / (C * sum_j Y[j, i])`` for an ``S x C`` label matrix."""
    Y = check_binary_matrix(Y)
    S, C = Y.shape
    counts = Y.sum(axis=0, dtype=np.int64)
    empty = np.flatnonzero(counts == 0)
    if empty.size:
        names = class_names if class_names is not None else [str(i) for i in range(C)]
        raise ParameterError(
            "classes without positive samples: " + ", ".join(str(names[i]) for i in empty)
        )
    return S / (C * counts.astype(float))


def binary_balanced_weights(y):
    """Balanced weights ``(w_negative, w_positive)`` for one one-vs-rest column.

    This is :func:`balanced_class_weights` applied to the two-column matrix
    ``[1 - y, y]``.
    """
    y = np.asarray(y).ravel()
    return balanced_class_weights(np.column_stack([1 - y, y]), ["negative", "positive"])


def rbf_gamma(X):
    """``1 / (F * Var[X])`` with the variance taken over every entry of ``X``."""
    X = np.asarray(X, dtype=float)
    if X.ndim != 2 or X.shape[1] < 1:
        raise ParameterError(f"X must be 2-D with at least one feature, got {X.shape}")
    var = X.var()
    if not var > 0:
        raise DegenerateInputError("X has zero variance")
    return 1.0 / (X.shape[1] * var)


@dataclass(frozen=True)
class ScalingSpec:
    alpha: float = 1.2
    beta: float = 1.1
    gamma: float = 1.15
    phi: float = 2.0
    d0: int = 3
    w0: int = 16
    r0: int = 1

    def __post_init__(self):
        for name in ("alpha", "beta", "gamma"):
            if getattr(self, name) < 1:
                raise ParameterError(f"{name} must be >= 1")
        for name in ("d0", "w0", "r0"):
            if getattr(self, name) < 1:
                raise ParameterError(f"{name} must be >= 1")


@dataclass(frozen=True)
class ScaledNetwork:
    depth: int
    width: int
    downsample_interval: int
    residual_blocks: int
    raw: tuple
    ratios: tuple


def _round_half_up(x):
    return max(1, int(np.floor(x + 0.5)))


def resolve_cnn_scaling(spec=ScalingSpec()):
    """Depth, width and downsampling interval from the compound-scaling ratios.

    Raw sizes are the baselines times ``alpha**phi``, ``beta**phi`` and
    ``gamma**phi``; integers round half up with a floor of 1. One layer is the
    stem convolution, so the residual-block count is ``depth - 1``.
    """
    ratios = (spec.alpha**spec.phi, spec.beta**spec.phi, spec.gamma**spec.phi)
    raw = (spec.d0 * ratios[0], spec.w0 * ratios[1], spec.r0 * ratios[2])
    d, w, r = (_round_half_up(v) for v in raw)
    return ScaledNetwork(d, w, r, d - 1, raw, ratios)
