import numpy as np
import pytest

from avasr import autograd as ag
from avasr.autograd import ParameterStore
from avasr.errors import DataValidationError
from avasr.fusion import VisualAdapter, early_fuse, vat_fuse
from avasr.gradsuite import check_vat_fusion


def test_zero_initialized_adapter_is_identity():
    store = ParameterStore(seed=0)
    adapter = VisualAdapter(store)
    audio = np.random.default_rng(1).normal(size=(7, 120))
    fused = vat_fuse(ag.constant(audio), np.ones(100), adapter)
    assert np.array_equal(fused.data, audio)


def test_sum_fusion_keeps_frame_dim():
    store = ParameterStore(seed=2)
    adapter = VisualAdapter(store)
    adapter.l2.W.data[:] = 0.01
    fused = vat_fuse(ag.constant(np.zeros((5, 120))), np.ones(100), adapter)
    assert fused.shape == (5, 120)


def test_sum_fusion_bias_constant_over_time():
    store = ParameterStore(seed=3)
    adapter = VisualAdapter(store)
    adapter.l2.W.data = 0.1 * np.random.default_rng(4).normal(size=adapter.l2.W.data.shape)
    audio = np.zeros((6, 120))
    fused = vat_fuse(ag.constant(audio), np.ones(100), adapter).data
    assert np.allclose(fused, fused[0])
    assert not np.allclose(fused[0], 0.0)


def test_sum_fusion_gradients():
    report = check_vat_fusion(eps=1e-5, tol=1e-4, seed=5)
    assert report.passed, report.format()


def test_different_visual_vectors_change_fused_output():
    store = ParameterStore(seed=6)
    adapter = VisualAdapter(store)
    adapter.l2.W.data = 0.1 * np.random.default_rng(7).normal(size=adapter.l2.W.data.shape)
    audio = ag.constant(np.zeros((3, 120)))
    rng = np.random.default_rng(8)
    a = vat_fuse(audio, rng.normal(size=100), adapter).data
    b = vat_fuse(audio, rng.normal(size=100), adapter).data
    assert not np.allclose(a, b)


def test_early_fusion_shape_and_truncation():
    rng = np.random.default_rng(9)
    audio = rng.normal(size=(11, 120))
    visual = rng.normal(size=100)
    fused = early_fuse(audio, visual)
    assert fused.shape == (11, 220)
    assert np.array_equal(fused[:, :120], audio)
    assert np.array_equal(fused[0, 120:], fused[5, 120:])


def test_early_fusion_differs_only_in_audio_part():
    rng = np.random.default_rng(10)
    visual = rng.normal(size=100)
    a = early_fuse(rng.normal(size=(1, 120)), visual)
    b = early_fuse(rng.normal(size=(1, 120)), visual)
    assert np.array_equal(a[0, 120:], b[0, 120:])
    assert not np.array_equal(a[0, :120], b[0, :120])


def test_dimension_errors():
    with pytest.raises(DataValidationError):
        early_fuse(np.zeros((2, 100)), np.zeros(100))
    with pytest.raises(DataValidationError):
        early_fuse(np.zeros((2, 120)), np.zeros(99))
    store = ParameterStore(seed=11)
    adapter = VisualAdapter(store)
    with pytest.raises(DataValidationError):
        vat_fuse(ag.constant(np.zeros((2, 100))), np.zeros(100), adapter)
