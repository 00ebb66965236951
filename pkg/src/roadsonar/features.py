"""Vector and image preprocessing of energyscapes.

The vector pipeline subtracts the training-mean energyscape, max-pools along
range, flattens row-major (direction-major) and projects onto whitened
principal components. The image pipeline is the CNN-side counterpart:
time-shift augmentation before beamforming, per-scape normalization and
random flips.
"""

import struct
import warnings
from pathlib import Path

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from ._validation import DegenerateInputError, ParameterError, check_int
from .beamform import Energyscape, read_energyscape
from .signal import Waveform

POOL_KERNEL = 5
N_COMPONENTS = 256
WHITEN_EPS = 1e-12
MAX_SHIFT = 45
MODEL_MAGIC = b"VPM1"


class ScapeStore:
    """Read-only sequence of energyscape files, loaded on access."""

    def __init__(self, paths):
        self.paths = [Path(p) for p in paths]

    def __len__(self):
        return len(self.paths)

    def __getitem__(self, i):
        if isinstance(i, (slice, np.ndarray, list)):
            idx = np.arange(len(self))[i]
            return ScapeStore([self.paths[j] for j in idx])
        return read_energyscape(self.paths[i]).values

    def __iter__(self):
        for i in range(len(self)):
            yield self[i]


def _as_matrix(scape):
    v = scape.values if isinstance(scape, Energyscape) else scape
    v = np.asarray(v)
    if v.ndim != 2:
        raise ParameterError(f"energyscape must be 2-D, got shape {v.shape}")
    return v


def subset(scapes, idx):
    """Index a scape collection (array, list or :class:`ScapeStore`) by ``idx``."""
    if isinstance(scapes, (np.ndarray, ScapeStore)):
        return scapes[np.asarray(idx)]
    return [scapes[i] for i in idx]


def maxpool_range(scape, kernel=POOL_KERNEL):
    """Non-overlapping max over ``kernel`` range cells; trailing remainder is dropped."""
    kernel = check_int(kernel, "kernel", minimum=1)
    v = _as_matrix(scape)
    if kernel > v.shape[1]:
        raise ParameterError(f"kernel {kernel} exceeds the {v.shape[1]} range cells")
    cols = v.shape[1] // kernel
    out = v[:, : cols * kernel].reshape(v.shape[0], cols, kernel).max(axis=2)
    if isinstance(scape, Energyscape):
        return Energyscape(out, scape.directions, scape.range_resolution * kernel)
    return out


class VectorPipeline(BaseEstimator, TransformerMixin):
    """Mean-scape subtraction, range max-pool, flatten and whitened PCA.

    ``fit`` and ``transform`` take a collection of energyscapes: a 3-D array,
    a list of 2-D arrays / :class:`Energyscape`, or a :class:`ScapeStore`.
    Pooled vectors are held in float32; everything downstream is float64.

    Attributes
    ----------
    mean_scape_ : (rows, cols) training-mean energyscape
    mean_ : (dims,) mean pooled vector
    components_ : (k, dims) orthonormal principal axes
    explained_variance_ : (k,) eigenvalues of the pooled-vector covariance
    total_variance_ : sum of all eigenvalues, kept or not
    """

    def __init__(self, pool_kernel=POOL_KERNEL, n_components=N_COMPONENTS, eps=WHITEN_EPS):
        self.pool_kernel = pool_kernel
        self.n_components = n_components
        self.eps = eps

    def _pooled(self, scape):
        v = _as_matrix(scape)
        if v.shape != self.mean_scape_.shape:
            raise ParameterError(
                f"energyscape shape {v.shape} does not match the fitted {self.mean_scape_.shape}"
            )
        diff = v.astype(np.float64) - self.mean_scape_
        return maxpool_range(diff, self.pool_kernel).ravel().astype(np.float32)

    def fit(self, X, y=None):
        self._fit(X)
        return self

    def fit_transform(self, X, y=None):
        """Fit, then project the training set without pooling it a second time."""
        return self.project(self._fit(X))

    def _fit(self, X):
        n = len(X)
        if n < 2:
            raise ParameterError("need at least two training energyscapes")
        total = None
        shape = None
        for scape in X:
            v = _as_matrix(scape)
            if shape is None:
                shape = v.shape
                total = np.zeros(shape)
            elif v.shape != shape:
                raise ParameterError(f"energyscape shape {v.shape} differs from {shape}")
            total += v
        self.mean_scape_ = total / n

        P = np.stack([self._pooled(s) for s in X])
        self.mean_ = P.astype(np.float64).mean(axis=0)
        gram = np.zeros((n, n))
        for cols in _chunks(P.shape[1]):
            block = P[:, cols] - self.mean_[cols]
            gram += block @ block.T
        self.total_variance_ = float(np.trace(gram) / (n - 1))

        lam, V = np.linalg.eigh(gram)
        order = np.argsort(lam)[::-1]
        lam, V = lam[order], V[:, order]
        tol = max(lam[0], 0.0) * n * np.finfo(float).eps
        usable = int(np.sum(lam > tol))
        k = min(self.n_components, n - 1, P.shape[1], usable)
        if k < self.n_components:
            warnings.warn(
                f"only {k} usable principal components (requested {self.n_components}; "
                f"{n} samples, {usable} nonzero eigenvalues)",
                RuntimeWarning,
                stacklevel=2,
            )
        s = np.sqrt(lam[:k])
        basis = np.empty((k, P.shape[1]))
        for cols in _chunks(P.shape[1]):
            block = P[:, cols] - self.mean_[cols]
            basis[:, cols] = (V[:, :k].T @ block) / s[:, None]
        self.components_ = _reorthonormalize(basis)
        self.explained_variance_ = lam[:k] / (n - 1)
        self.n_components_ = k
        return P

    def pooled_vectors(self, X):
        check_is_fitted(self, "components_")
        return np.stack([self._pooled(s) for s in X]).astype(np.float64)

    def project(self, P):
        """Whitened scores of already pooled-and-flattened vectors ``P``."""
        check_is_fitted(self, "components_")
        P = np.atleast_2d(np.asarray(P, dtype=np.float64))
        scale = np.sqrt(self.explained_variance_ + self.eps)
        return ((P - self.mean_) @ self.components_.T) / scale

    def transform(self, X):
        check_is_fitted(self, "components_")
        if isinstance(X, (Energyscape, np.ndarray)) and _as_ndim(X) == 2:
            X = [X]
        return np.vstack([self.project(self._pooled(s)) for s in X])

    def inverse_transform(self, Z):
        """Map whitened scores back to pooled-vector space (not to energyscapes)."""
        check_is_fitted(self, "components_")
        Z = np.atleast_2d(Z)
        return self.mean_ + (Z * np.sqrt(self.explained_variance_ + self.eps)) @ self.components_

    def save(self, path):
        """Binary model: header then float32 arrays in the order
        mean_scape, mean, explained_variance, components.

        Header (little-endian): ``VPM1 | u32 rows | u32 cols | u32 pool_kernel |
        u32 n_components | u32 dims | f64 eps | f64 total_variance``.
        """
        check_is_fitted(self, "components_")
        rows, cols = self.mean_scape_.shape
        k, dims = self.components_.shape
        path = Path(path)
        tmp = path.with_name(path.name + ".tmp")
        with open(tmp, "wb") as fh:
            fh.write(MODEL_MAGIC)
            fh.write(struct.pack("<IIIII", rows, cols, self.pool_kernel, k, dims))
            fh.write(struct.pack("<dd", self.eps, self.total_variance_))
            for arr in (self.mean_scape_, self.mean_, self.explained_variance_, self.components_):
                fh.write(np.ascontiguousarray(arr, dtype="<f4").tobytes())
        tmp.replace(path)

    @classmethod
    def load(cls, path):
        data = Path(path).read_bytes()
        if data[:4] != MODEL_MAGIC:
            raise ParameterError(f"{path}: not a vector-pipeline model")
        rows, cols, kernel, k, dims = struct.unpack("<IIIII", data[4:24])
        eps, total = struct.unpack("<dd", data[24:40])
        arrays = []
        offset = 40
        for count in (rows * cols, dims, k, k * dims):
            arrays.append(np.frombuffer(data, "<f4", count, offset).astype(np.float64))
            offset += 4 * count
        model = cls(pool_kernel=kernel, n_components=k, eps=eps)
        model.mean_scape_ = arrays[0].reshape(rows, cols)
        model.mean_ = arrays[1]
        model.explained_variance_ = arrays[2]
        model.components_ = arrays[3].reshape(k, dims)
        model.total_variance_ = total
        model.n_components_ = k
        return model


def _as_ndim(X):
    return (X.values if isinstance(X, Energyscape) else X).ndim


def _chunks(n, size=32768):
    for start in range(0, n, size):
        yield slice(start, min(n, start + size))


def _reorthonormalize(B):
    """One symmetric (Loewdin) pass: B <- (B B^T)^(-1/2) B.

    The Gram-matrix route loses orthogonality for small eigenvalues; this
    restores it without rotating well-separated axes.
    """
    if B.shape[0] == 0:
        return B
    M = B @ B.T
    w, U = np.linalg.eigh(M)
    return (U / np.sqrt(w)) @ U.T @ B


def fit_vector_pipeline(scapes, pool_kernel=POOL_KERNEL, n_components=N_COMPONENTS):
    return VectorPipeline(pool_kernel, n_components).fit(scapes)


def apply_vector_pipeline(model, scape):
    return model.transform([scape])[0]


# image pipeline ---------------------------------------------------------------


def augment_time_shift(channels, max_shift=MAX_SHIFT, rng=None, shift=None):
    """Shift every channel by the same ``s ~ U{-max_shift..max_shift}`` samples.

    Positive ``s`` delays (vacated leading samples become zero). Pass
    ``shift`` to force a value. Returns ``(channels, s)``.
    """
    if shift is None:
        rng = np.random.default_rng() if rng is None else rng
        shift = int(rng.integers(-max_shift, max_shift + 1))
    x = np.atleast_2d(channels.samples)
    out = np.zeros_like(x)
    n = x.shape[1]
    if shift >= 0:
        out[:, shift:] = x[:, : n - shift]
    else:
        out[:, : n + shift] = x[:, -shift:]
    if np.ndim(channels.samples) == 1:
        out = out[0]
    return Waveform(out, channels.sample_rate), shift


def augment_flip(scape, rng=None, p=0.5, flips=None):
    """Reverse the direction axis and/or the range axis, each with probability ``p``.

    ``flips=(horizontal, vertical)`` forces the choice. Returns ``(scape, flips)``.
    """
    if flips is None:
        rng = np.random.default_rng() if rng is None else rng
        flips = (bool(rng.random() < p), bool(rng.random() < p))
    v = _as_matrix(scape)
    if flips[0]:
        v = v[::-1, :]
    if flips[1]:
        v = v[:, ::-1]
    return np.ascontiguousarray(v), flips


def normalize_scape(scape):
    v = np.asarray(_as_matrix(scape), dtype=np.float64)
    sd = v.std()
    if not sd > 0:
        raise DegenerateInputError("cannot normalize a constant energyscape")
    return (v - v.mean()) / sd


class ImagePipeline(BaseEstimator, TransformerMixin):
    """Mean-scape subtraction, per-scape normalization and (training only) flips."""

    def __init__(self, flip_prob=0.5):
        self.flip_prob = flip_prob

    def fit(self, X, y=None):
        total = None
        for s in X:
            v = np.asarray(_as_matrix(s), dtype=np.float64)
            total = v.copy() if total is None else total + v
        if total is None:
            raise ParameterError("need at least one energyscape")
        self.mean_scape_ = total / len(X)
        return self

    def transform(self, X, rng=None, augment=False):
        check_is_fitted(self, "mean_scape_")
        out = []
        for s in X:
            v = normalize_scape(np.asarray(_as_matrix(s), dtype=np.float64) - self.mean_scape_)
            if augment:
                v, _ = augment_flip(v, rng, self.flip_prob)
            out.append(v)
        return np.stack(out)
