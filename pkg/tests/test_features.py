import warnings

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from roadsonar import DegenerateInputError, ParameterError
from roadsonar.beamform import Energyscape
from roadsonar.features import (
    ImagePipeline,
    ScapeStore,
    VectorPipeline,
    apply_vector_pipeline,
    augment_flip,
    augment_time_shift,
    fit_vector_pipeline,
    maxpool_range,
    normalize_scape,
)
from roadsonar.beamform import write_energyscape
from roadsonar.signal import Waveform


def scape_set(n, rows=91, cols=200, seed=0):
    r = np.random.default_rng(seed)
    base = r.rayleigh(1.0, (n, rows, cols))
    peaks = r.integers(0, cols, n)
    for i, p in enumerate(peaks):
        base[i, :, p] += 5 * r.random()
    return base


# max-pool


def test_maxpool_examples():
    assert np.array_equal(maxpool_range(np.array([[1, 5, 2, 9, 0, 3]]), 3), [[5, 9]])
    x = np.arange(12.0).reshape(2, 6)
    assert np.array_equal(maxpool_range(x, 1), x)
    c = maxpool_range(np.full((4, 23), 2.5), 5)
    assert c.shape == (4, 4) and np.all(c == 2.5)


def test_maxpool_kernel_too_large():
    with pytest.raises(ParameterError):
        maxpool_range(np.ones((2, 4)), 5)


def test_maxpool_energyscape_resolution():
    s = Energyscape(np.ones((91, 20)))
    out = maxpool_range(s, 5)
    assert out.shape == (91, 4)
    assert out.range_resolution == pytest.approx(5 * s.range_resolution)


@given(arrays(np.float64, (3, 17), elements=st.floats(-1e3, 1e3)),
       arrays(np.float64, (3, 17), elements=st.floats(0, 1e3)),
       st.integers(1, 17))
def test_maxpool_monotone(x, d, k):
    assert np.all(maxpool_range(x, k) <= maxpool_range(x + d, k))


# vector pipeline


def test_pca_contract():
    X = scape_set(60)
    pipe = VectorPipeline(n_components=40)
    Z = pipe.fit_transform(X)
    B = pipe.components_
    assert np.abs(B @ B.T - np.eye(40)).max() <= 1e-8
    assert np.all(np.diff(pipe.explained_variance_) <= 0)
    assert np.abs(Z.var(axis=0, ddof=1) - 1).max() <= 1e-6
    assert np.allclose(Z, pipe.transform(X), atol=1e-9)


def test_reconstruction_error_identity():
    X = scape_set(50, seed=3)
    pipe = VectorPipeline(n_components=20).fit(X)
    P = pipe.pooled_vectors(X)
    R = pipe.inverse_transform(pipe.transform(X))
    err = ((P - R) ** 2).sum() / ((P - pipe.mean_) ** 2).sum()
    kept = pipe.explained_variance_.sum() / pipe.total_variance_
    assert err == pytest.approx(1 - kept, abs=1e-6)


def test_component_cap_warns():
    X = scape_set(10)
    with pytest.warns(RuntimeWarning, match="usable principal components"):
        pipe = VectorPipeline(n_components=256).fit(X)
    assert pipe.n_components_ == 9


def test_identical_scapes_degenerate():
    X = np.stack([np.ones((91, 50))] * 2)
    with pytest.warns(RuntimeWarning):
        pipe = VectorPipeline().fit(X)
    assert pipe.n_components_ == 0
    assert np.array_equal(pipe.mean_scape_, X[0])


def test_mean_scape_maps_to_origin_with_unit_kernel():
    # with kernel 1 pooling is the identity, so the mean scape is the PCA origin
    X = scape_set(30)
    pipe = VectorPipeline(pool_kernel=1, n_components=10).fit(X)
    z = apply_vector_pipeline(pipe, pipe.mean_scape_)
    ref = np.linalg.norm(pipe.transform(X), axis=1).mean()
    assert np.linalg.norm(z) <= 1e-6 * ref


def test_output_length_256():
    X = scape_set(300, cols=60)
    assert VectorPipeline().fit_transform(X).shape == (300, 256)


def test_shape_mismatch():
    pipe = VectorPipeline(n_components=3).fit(scape_set(8))
    with pytest.raises(ParameterError):
        pipe.transform(np.ones((91, 10)))
    with pytest.raises(ParameterError):
        VectorPipeline().fit([np.ones((91, 10)), np.ones((91, 11))])


def test_eps_effect_small():
    X = scape_set(30)
    a = VectorPipeline(n_components=10, eps=1e-12).fit(X)
    b = VectorPipeline(n_components=10, eps=0.0).fit(X)
    assert np.all(a.explained_variance_ >= 1e-6)
    assert np.allclose(a.transform(X), b.transform(X), rtol=1e-6)


def test_save_load_round_trip(tmp_path):
    X = scape_set(20)
    pipe = VectorPipeline(n_components=8).fit(X)
    pipe.save(tmp_path / "m.vpm")
    back = VectorPipeline.load(tmp_path / "m.vpm")
    assert back.n_components_ == 8 and back.pool_kernel == pipe.pool_kernel
    assert np.allclose(back.transform(X), pipe.transform(X), rtol=1e-3, atol=1e-3)


def test_scape_store_feeds_pipeline(tmp_path):
    X = scape_set(12, cols=40).astype(np.float32)
    paths = []
    for i, s in enumerate(X):
        paths.append(tmp_path / f"{i}.scape")
        write_energyscape(paths[-1], Energyscape(s))
    store = ScapeStore(paths)
    a = VectorPipeline(n_components=4).fit_transform(store)
    b = VectorPipeline(n_components=4).fit_transform(X)
    assert np.allclose(a, b)
    assert len(store[np.array([0, 2])]) == 2


def test_fit_vector_pipeline_helper():
    X = scape_set(20)
    assert fit_vector_pipeline(X, n_components=5).n_components_ == 5


# augmentations


def channels(rng, n=300):
    return Waveform(rng.normal(size=(32, n)), 450e3)


def test_time_shift_zero_identity(rng):
    w = channels(rng)
    out, s = augment_time_shift(w, shift=0)
    assert s == 0 and np.array_equal(out.samples, w.samples)


def test_time_shift_max(rng):
    w = channels(rng)
    out, _ = augment_time_shift(w, shift=45)
    assert not out.samples[:, :45].any()
    assert np.array_equal(out.samples[:, 45:], w.samples[:, :-45])


def test_time_shift_common_to_all_channels(rng):
    w = channels(rng)
    out, s = augment_time_shift(w, rng=np.random.default_rng(7))
    assert -45 <= s <= 45
    for ch in range(32):
        c = np.correlate(out.samples[ch], w.samples[ch], "full")
        assert np.argmax(c) - (w.n_samples - 1) == s


@given(st.integers(0, 10_000))
def test_augment_shapes_preserved(seed):
    r = np.random.default_rng(seed)
    w = Waveform(r.normal(size=(32, 120)), 450e3)
    assert augment_time_shift(w, rng=r)[0].samples.shape == (32, 120)
    assert augment_flip(r.random((91, 30)), r)[0].shape == (91, 30)


def test_flip_involution_and_multiset(rng):
    x = rng.random((91, 40))
    once, _ = augment_flip(x, flips=(True, True))
    twice, _ = augment_flip(once, flips=(True, True))
    assert np.array_equal(twice, x)
    assert np.array_equal(np.sort(once, axis=None), np.sort(x, axis=None))


def test_flip_probability():
    r = np.random.default_rng(0)
    x = np.zeros((2, 2))
    flips = np.array([augment_flip(x, r)[1] for _ in range(10000)])
    assert np.abs(flips.mean(axis=0) - 0.5).max() <= 0.02


def test_normalize(rng):
    x = rng.random((91, 50))
    z = normalize_scape(x)
    assert abs(z.mean()) <= 1e-9 and abs(z.std() - 1) <= 1e-9
    assert np.allclose(normalize_scape(3.5 * x - 2), z, atol=1e-12)
    with pytest.raises(DegenerateInputError):
        normalize_scape(np.ones((4, 4)))


def test_image_pipeline(rng):
    X = rng.random((5, 91, 30))
    ip = ImagePipeline().fit(X)
    out = ip.transform(X)
    assert out.shape == X.shape
    assert np.allclose(out.mean(axis=(1, 2)), 0, atol=1e-9)
    aug = ip.transform(X, rng=np.random.default_rng(0), augment=True)
    assert aug.shape == X.shape
