import numpy as np
import pytest

from avasr.errors import DataValidationError
from avasr.features import (LOG_FLOOR, FeatureSequence, VisualContext, Waveform,
                            compute_logmel, load_visual, read_features,
                            stack_and_oversample, write_features, write_visual)


def test_silence_hits_log_floor():
    wave = Waveform(np.zeros(16000), 16000)
    mel = compute_logmel(wave)
    assert np.allclose(mel.frames, np.log(LOG_FLOOR))


def test_frame_count_for_one_second():
    wave = Waveform(np.random.default_rng(0).normal(size=16000), 16000)
    mel = compute_logmel(wave)
    # 25 ms window, 10 ms hop: floor((16000 - 400) / 160) + 1
    assert mel.n_frames == 98
    assert mel.frame_dim == 40
    assert mel.step_ms == 10


def test_too_short_audio_rejected():
    with pytest.raises(DataValidationError):
        compute_logmel(Waveform(np.zeros(100), 16000))


def test_hop_shift_moves_frames_by_one():
    rng = np.random.default_rng(1)
    x = rng.normal(size=8000)
    shifted = np.concatenate([np.zeros(160), x])
    a = compute_logmel(Waveform(x, 16000)).frames
    b = compute_logmel(Waveform(shifted, 16000)).frames
    assert np.allclose(b[1:1 + a.shape[0]], a, atol=1e-6)


def test_stack_frame_counts_for_nine_inputs():
    fs = FeatureSequence(np.arange(9 * 40, dtype=np.float64).reshape(9, 40), step_ms=10)
    copies = stack_and_oversample(fs)
    assert [c.n_frames for c in copies] == [3, 2, 2]
    assert all(c.frame_dim == 120 for c in copies)
    assert all(c.step_ms == 30 for c in copies)


def test_stack_offsets_are_views_of_neighbors():
    f = np.random.default_rng(2).normal(size=(10, 40))
    copies = stack_and_oversample(FeatureSequence(f, step_ms=10))
    for k in range(3):
        assert np.array_equal(copies[k].frames[0], np.concatenate([f[k], f[k + 1], f[k + 2]]))


def test_stack_constant_input_gives_identical_frames():
    f = np.tile(np.arange(40, dtype=np.float64), (9, 1))
    copies = stack_and_oversample(FeatureSequence(f, step_ms=10))
    for c in copies:
        assert np.all(c.frames == c.frames[0])


def test_stack_needs_three_frames():
    with pytest.raises(DataValidationError):
        stack_and_oversample(FeatureSequence(np.zeros((2, 40)), step_ms=10))


def test_feature_file_roundtrip_bit_exact(tmp_path):
    frames = np.random.default_rng(3).normal(size=(17, 40)).astype(np.float32)
    path = tmp_path / "x.e2ef"
    write_features(path, FeatureSequence(frames, step_ms=10))
    back = read_features(path)
    assert back.step_ms == 10
    assert np.array_equal(back.frames, frames)
    # writing what was read reproduces the file byte for byte
    path2 = tmp_path / "y.e2ef"
    write_features(path2, back)
    assert path.read_bytes() == path2.read_bytes()


def test_visual_file_roundtrip_and_dimension_check(tmp_path):
    vec = np.random.default_rng(4).normal(size=100).astype(np.float32)
    path = tmp_path / "v.e2ev"
    write_visual(path, VisualContext(vec))
    assert np.array_equal(load_visual(path).vector, vec)

    with pytest.raises(DataValidationError) as exc:
        VisualContext(np.zeros(99))
    assert "100" in str(exc.value)


def test_zero_visual_vector_is_valid():
    vc = VisualContext(np.zeros(100), utterance_id="u1")
    assert vc.vector.shape == (100,)


def test_missing_files_raise(tmp_path):
    with pytest.raises(DataValidationError):
        read_features(tmp_path / "nope.e2ef")
    with pytest.raises(DataValidationError):
        load_visual(tmp_path / "nope.e2ev")
