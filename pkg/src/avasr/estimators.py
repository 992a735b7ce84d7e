"""Scikit-learn style estimators and transformers wrapping the toolkit.

`X` is a list of utterances. For the recognizers each element is either
a (T, d) feature matrix or a (features, visual_vector) pair; `y` is the
list of transcript strings. `score` returns 1 - TER so that higher is
better, sklearn-style. Defaults are desk-scale; pass the published
layer sizes explicitly for a full-size model.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin

from .corpus import Utterance
from .errors import DataValidationError
from .evaluation import evaluate
from .features import (FeatureSequence, Waveform, compute_logmel,
                       stack_and_oversample)
from .fusion import early_fuse
from .training import TrainConfig, train
from .vocab import DEFAULT_VOCAB


def _as_utterances(X, y=None) -> list[Utterance]:
    utts = []
    n = len(X)
    if y is not None and len(y) != n:
        raise DataValidationError("X and y have different lengths (%d vs %d)" % (n, len(y)))
    for i, item in enumerate(X):
        if isinstance(item, tuple):
            feats, visual = item
        else:
            feats, visual = item, None
        feats = np.atleast_2d(np.asarray(feats, dtype=np.float64))
        if not np.all(np.isfinite(feats)):
            raise DataValidationError("utterance %d has non-finite features" % i)
        if visual is not None:
            visual = np.asarray(visual, dtype=np.float64).reshape(-1)
        transcript = y[i] if y is not None else ""
        utts.append(Utterance("utt_%06d" % i, feats, visual, transcript))
    return utts


class _RecognizerBase(BaseEstimator):
    _arch = ""

    def _train_config(self) -> TrainConfig:
        raise NotImplementedError

    def fit(self, X, y):
        cfg = self._train_config()
        utts = _as_utterances(X, y)
        if self.dev_fraction is not None:
            n_dev = max(1, int(len(utts) * self.dev_fraction))
            dev = utts[-n_dev:]
        elif self.target_ter is not None:
            dev = utts  # early stopping against the training set itself
        else:
            dev = None
        result = train(utts, dev, cfg, workdir=None, vocab=DEFAULT_VOCAB)
        self.system_ = result.system
        self.metrics_ = result.metrics
        self.best_ter_ = result.best_ter
        return self

    def predict(self, X) -> list[str]:
        if not hasattr(self, "system_"):
            raise DataValidationError("estimator is not fitted")
        return [self.system_.transcribe(utt) for utt in _as_utterances(X)]

    def score(self, X, y) -> float:
        refs = {"utt_%06d" % i: ref for i, ref in enumerate(y)}
        hyps = {"utt_%06d" % i: hyp for i, hyp in enumerate(self.predict(X))}
        return 1.0 - evaluate(refs, hyps).ter

    def save(self, path) -> None:
        from .training import _save

        if not hasattr(self, "system_"):
            raise DataValidationError("estimator is not fitted")
        _save(self.system_, path, epoch=0)

    def load(self, path):
        from .training import load_system

        self.system_ = load_system(path)
        return self


class CtcRecognizer(_RecognizerBase):
    """Frame-synchronous recognizer with greedy decoding."""

    _arch = "ctc"

    def __init__(self, n_layers=2, hidden_dim=64, projection_dim=32, adapt="none",
                 lr=0.2, decay=0.9, epochs=20, batch_size=16, clip_norm=5.0,
                 seed=0, precision=64, oversample=True, target_ter=None,
                 dev_fraction=None):
        self.n_layers = n_layers
        self.hidden_dim = hidden_dim
        self.projection_dim = projection_dim
        self.adapt = adapt
        self.lr = lr
        self.decay = decay
        self.epochs = epochs
        self.batch_size = batch_size
        self.clip_norm = clip_norm
        self.seed = seed
        self.precision = precision
        self.oversample = oversample
        self.target_ter = target_ter
        self.dev_fraction = dev_fraction

    def _train_config(self) -> TrainConfig:
        return TrainConfig(
            arch="ctc", adapt=self.adapt, lr=self.lr, decay=self.decay,
            epochs=self.epochs, batch_size=self.batch_size, clip_norm=self.clip_norm,
            seed=self.seed, precision=self.precision, oversample=self.oversample,
            target_ter=self.target_ter, ctc_layers=self.n_layers,
            ctc_hidden=self.hidden_dim, ctc_proj=self.projection_dim,
        )


class Seq2SeqRecognizer(_RecognizerBase):
    """Attention encoder-decoder recognizer with beam-search decoding."""

    _arch = "s2s"

    def __init__(self, enc_layers=2, enc_hidden=64, dec_layers=2, dec_hidden=64,
                 embed_dim=32, adapt="none", beam=5, length_norm=False,
                 lr=0.2, decay=0.9, epochs=40, batch_size=16, clip_norm=5.0,
                 seed=0, precision=64, oversample=True, target_ter=None,
                 dev_fraction=None):
        self.enc_layers = enc_layers
        self.enc_hidden = enc_hidden
        self.dec_layers = dec_layers
        self.dec_hidden = dec_hidden
        self.embed_dim = embed_dim
        self.adapt = adapt
        self.beam = beam
        self.length_norm = length_norm
        self.lr = lr
        self.decay = decay
        self.epochs = epochs
        self.batch_size = batch_size
        self.clip_norm = clip_norm
        self.seed = seed
        self.precision = precision
        self.oversample = oversample
        self.target_ter = target_ter
        self.dev_fraction = dev_fraction

    def _train_config(self) -> TrainConfig:
        return TrainConfig(
            arch="s2s", adapt=self.adapt, lr=self.lr, decay=self.decay,
            epochs=self.epochs, batch_size=self.batch_size, clip_norm=self.clip_norm,
            seed=self.seed, precision=self.precision, oversample=self.oversample,
            target_ter=self.target_ter, beam=self.beam, length_norm=self.length_norm,
            enc_layers=self.enc_layers, enc_hidden=self.enc_hidden,
            dec_layers=self.dec_layers, dec_hidden=self.dec_hidden,
            embed_dim=self.embed_dim,
        )


class LogMelExtractor(BaseEstimator, TransformerMixin):
    """Waveforms -> 40-dim log-mel frame matrices."""

    def __init__(self, sample_rate=16000):
        self.sample_rate = sample_rate

    def fit(self, X, y=None):
        return self

    def transform(self, X) -> list[np.ndarray]:
        out = []
        for item in X:
            wave = item if isinstance(item, Waveform) else Waveform(item, self.sample_rate)
            out.append(compute_logmel(wave).frames)
        return out


class FrameStacker(BaseEstimator, TransformerMixin):
    """40-dim/10 ms features -> 120-dim/30 ms stacks (decode-time offset)."""

    def __init__(self, offset=0):
        self.offset = offset

    def fit(self, X, y=None):
        return self

    def transform(self, X) -> list[np.ndarray]:
        out = []
        for feats in X:
            copies = stack_and_oversample(FeatureSequence(np.asarray(feats), step_ms=10))
            out.append(copies[self.offset].frames)
        return out


class VisualConcatenator(BaseEstimator, TransformerMixin):
    """(features, visual) pairs -> 220-dim early-fused frame matrices."""

    def fit(self, X, y=None):
        return self

    def transform(self, X) -> list[np.ndarray]:
        out = []
        for feats, visual in X:
            out.append(early_fuse(np.asarray(feats), np.asarray(visual)))
        return out
