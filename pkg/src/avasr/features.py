"""Acoustic feature pipeline and binary feature/visual file formats.

Audio goes 16 kHz waveform -> 40-dim log-mel at a 10 ms hop -> three
phase-staggered stacks of 3 neighboring frames (120-dim at a 30 ms
step). Stacking offset 0 is the decode-time view; all three offsets are
used as training copies. Visual context is a precomputed 100-dim vector
per utterance, loaded as-is.

File formats (little-endian u32 header fields, f32 payload):
  features: magic "E2EF", version, n_frames, dim, step_ms, data
  visual:   magic "E2EV", version, dim, data
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import DataValidationError

FEATURE_MAGIC = b"E2EF"
VISUAL_MAGIC = b"E2EV"
FORMAT_VERSION = 1

MEL_DIM = 40
STACKED_DIM = 120
FUSED_DIM = 220
VISUAL_DIM = 100

LOG_FLOOR = 1e-10
PREEMPHASIS = 0.97
WINDOW_MS = 25
HOP_MS = 10
N_FFT = 512


@dataclass
class Waveform:
    samples: np.ndarray
    sample_rate: int

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=np.float64)
        if self.sample_rate <= 0:
            raise DataValidationError("sample_rate must be positive")
        if not np.all(np.isfinite(self.samples)):
            raise DataValidationError("waveform contains non-finite samples")


@dataclass
class FeatureSequence:
    """Time-major feature matrix: one row per frame."""

    frames: np.ndarray
    step_ms: int

    def __post_init__(self):
        self.frames = np.atleast_2d(np.asarray(self.frames))

    @property
    def n_frames(self) -> int:
        return self.frames.shape[0]

    @property
    def frame_dim(self) -> int:
        return self.frames.shape[1]


@dataclass
class VisualContext:
    """Utterance-level semantic context vector (dimension fixed at 100)."""

    vector: np.ndarray
    utterance_id: str = ""

    def __post_init__(self):
        self.vector = np.asarray(self.vector).reshape(-1)
        if self.vector.shape[0] != VISUAL_DIM:
            raise DataValidationError(
                "visual vector has dimension %d, expected %d" % (self.vector.shape[0], VISUAL_DIM)
            )
        if not np.all(np.isfinite(self.vector)):
            raise DataValidationError("visual vector contains non-finite values")


def hz_to_mel(f):
    return 2595.0 * np.log10(1.0 + np.asarray(f, dtype=np.float64) / 700.0)


def mel_to_hz(m):
    return 700.0 * (10.0 ** (np.asarray(m, dtype=np.float64) / 2595.0) - 1.0)


def mel_filterbank(n_filters: int, n_fft: int, sample_rate: int,
                   f_min: float = 0.0, f_max: float | None = None) -> np.ndarray:
    """Triangular mel filters as a (n_filters, n_fft//2 + 1) matrix."""
    if f_max is None:
        f_max = sample_rate / 2.0
    mel_pts = np.linspace(hz_to_mel(f_min), hz_to_mel(f_max), n_filters + 2)
    hz_pts = mel_to_hz(mel_pts)
    bins = np.floor((n_fft + 1) * hz_pts / sample_rate).astype(int)
    fb = np.zeros((n_filters, n_fft // 2 + 1))
    for i in range(n_filters):
        lo, mid, hi = bins[i], bins[i + 1], bins[i + 2]
        for k in range(lo, mid):
            if mid > lo:
                fb[i, k] = (k - lo) / (mid - lo)
        for k in range(mid, hi):
            if hi > mid:
                fb[i, k] = (hi - k) / (hi - mid)
    return fb


def compute_logmel(wave: Waveform) -> FeatureSequence:
    """40-dim log-mel filterbank features at a 10 ms hop.

    Pre-emphasis 0.97, 25 ms Hann window, DFT power spectrum, 40
    triangular mel filters up to Nyquist, log with floor 1e-10.
    """
    sr = wave.sample_rate
    win = int(round(sr * WINDOW_MS / 1000))
    hop = int(round(sr * HOP_MS / 1000))
    x = wave.samples
    if x.shape[0] < win:
        raise DataValidationError(
            "waveform too short: %d samples < one %d-sample window" % (x.shape[0], win)
        )
    emphasized = np.concatenate([x[:1], x[1:] - PREEMPHASIS * x[:-1]])
    n_frames = (x.shape[0] - win) // hop + 1
    window = np.hanning(win)
    fb = mel_filterbank(MEL_DIM, N_FFT, sr)
    out = np.zeros((n_frames, MEL_DIM))
    for t in range(n_frames):
        frame = emphasized[t * hop:t * hop + win] * window
        spec = np.fft.rfft(frame, n=N_FFT)
        power = (spec.real ** 2 + spec.imag ** 2)
        out[t] = np.log(np.maximum(fb @ power, LOG_FLOOR))
    return FeatureSequence(out, step_ms=HOP_MS)


def stack_and_oversample(fs: FeatureSequence) -> list[FeatureSequence]:
    """Stack 3 neighboring frames at offsets 0, 10, 20 ms.

    Returns three staggered 120-dim copies at a 30 ms step; copies may
    be empty for very short inputs (fewer than k+3 frames). Copy 0 is
    the decode-time view.
    """
    f = fs.frames
    if fs.n_frames < 3:
        raise DataValidationError("need at least 3 frames to stack, got %d" % fs.n_frames)
    copies = []
    for k in range(3):
        n_out = max(0, (fs.n_frames - k - 3) // 3 + 1)
        stacked = np.zeros((n_out, 3 * fs.frame_dim), dtype=f.dtype)
        for t in range(n_out):
            stacked[t] = f[3 * t + k:3 * t + k + 3].reshape(-1)
        copies.append(FeatureSequence(stacked, step_ms=fs.step_ms * 3))
    return copies


# -- normalization --------------------------------------------------------


def feature_stats(sequences: list[np.ndarray]) -> tuple[np.ndarray, np.ndarray]:
    """Per-dimension mean and standard deviation over all frames."""
    if not sequences:
        raise DataValidationError("no sequences to compute statistics from")
    stacked = np.concatenate([np.atleast_2d(s) for s in sequences], axis=0)
    mean = stacked.mean(axis=0)
    std = stacked.std(axis=0)
    std = np.maximum(std, 1e-8)
    return mean, std


def apply_stats(frames: np.ndarray, mean: np.ndarray, std: np.ndarray) -> np.ndarray:
    return (frames - mean) / std


# -- binary I/O ------------------------------------------------------------


def write_features(path, fs: FeatureSequence) -> None:
    frames = np.ascontiguousarray(fs.frames, dtype="<f4")
    with open(path, "wb") as fh:
        fh.write(FEATURE_MAGIC)
        fh.write(struct.pack("<IIII", FORMAT_VERSION, fs.n_frames, fs.frame_dim, fs.step_ms))
        fh.write(frames.tobytes())


def read_features(path) -> FeatureSequence:
    path = Path(path)
    if not path.exists():
        raise DataValidationError("feature file not found: %s" % path)
    raw = path.read_bytes()
    if len(raw) < 20 or raw[:4] != FEATURE_MAGIC:
        raise DataValidationError("not a feature file: %s" % path)
    version, n_frames, dim, step_ms = struct.unpack("<IIII", raw[4:20])
    if version != FORMAT_VERSION:
        raise DataValidationError("unsupported feature file version %d" % version)
    expected = 20 + 4 * n_frames * dim
    if len(raw) != expected:
        raise DataValidationError(
            "feature file %s truncated: %d bytes, expected %d" % (path, len(raw), expected)
        )
    data = np.frombuffer(raw[20:], dtype="<f4").reshape(n_frames, dim)
    return FeatureSequence(np.array(data), step_ms=step_ms)


def write_visual(path, vc: VisualContext) -> None:
    vec = np.ascontiguousarray(vc.vector, dtype="<f4")
    with open(path, "wb") as fh:
        fh.write(VISUAL_MAGIC)
        fh.write(struct.pack("<II", FORMAT_VERSION, vec.shape[0]))
        fh.write(vec.tobytes())


def load_visual(path, utterance_id: str = "") -> VisualContext:
    path = Path(path)
    if not path.exists():
        raise DataValidationError("visual file not found: %s" % path)
    raw = path.read_bytes()
    if len(raw) < 12 or raw[:4] != VISUAL_MAGIC:
        raise DataValidationError("not a visual file: %s" % path)
    version, dim = struct.unpack("<II", raw[4:12])
    if version != FORMAT_VERSION:
        raise DataValidationError("unsupported visual file version %d" % version)
    if dim != VISUAL_DIM:
        raise DataValidationError(
            "visual file %s has dimension %d, expected %d" % (path, dim, VISUAL_DIM)
        )
    if len(raw) != 12 + 4 * dim:
        raise DataValidationError("visual file %s truncated" % path)
    vec = np.array(np.frombuffer(raw[12:], dtype="<f4"))
    return VisualContext(vec, utterance_id=utterance_id)


def read_wav(path) -> Waveform:
    """Read a mono 16-bit PCM WAV file into a [-1, 1] float waveform."""
    import wave as wavemod

    path = Path(path)
    if not path.exists():
        raise DataValidationError("wav file not found: %s" % path)
    with wavemod.open(str(path), "rb") as wf:
        if wf.getnchannels() != 1:
            raise DataValidationError("only mono WAV input is supported")
        if wf.getsampwidth() != 2:
            raise DataValidationError("only 16-bit PCM WAV input is supported")
        sr = wf.getframerate()
        raw = wf.readframes(wf.getnframes())
    samples = np.frombuffer(raw, dtype="<i2").astype(np.float64) / 32768.0
    return Waveform(samples, sr)
