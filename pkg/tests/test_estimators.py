import numpy as np
import pytest
from sklearn.base import clone

from avasr.corpus import SynthConfig, gen_corpus, load_corpus
from avasr.errors import DataValidationError
from avasr.estimators import (CtcRecognizer, FrameStacker, LogMelExtractor,
                              Seq2SeqRecognizer, VisualConcatenator)


@pytest.fixture(scope="module")
def xy(tmp_path_factory):
    out = tmp_path_factory.mktemp("estcorpus")
    cfg = SynthConfig(n_topics=2, words_per_topic=3, utterances=10,
                      noise_sigma=0.0, visual_noise_sigma=0.0,
                      frames_per_char=(9, 9), seed=33)
    layout = gen_corpus(cfg, out)
    utts = load_corpus(layout.manifests["train"])
    X = [(u.features, u.visual) for u in utts]
    y = [u.transcript for u in utts]
    return X, y


def test_get_params_and_clone():
    est = CtcRecognizer(n_layers=1, hidden_dim=8, epochs=3, seed=5)
    params = est.get_params()
    assert params["hidden_dim"] == 8
    twin = clone(est)
    assert twin.get_params() == params


def test_set_params_roundtrip():
    est = Seq2SeqRecognizer()
    est.set_params(beam=3, length_norm=True)
    assert est.beam == 3
    assert est.length_norm is True


def test_fit_predict_score(xy):
    X, y = xy
    est = CtcRecognizer(n_layers=1, hidden_dim=8, projection_dim=6, epochs=8,
                        lr=0.15, seed=1, target_ter=0.0)
    est.fit(X, y)
    hyps = est.predict(X)
    assert len(hyps) == len(X)
    assert all(isinstance(h, str) for h in hyps)
    score = est.score(X, y)
    assert score <= 1.0
    assert score > 0.0


def test_predict_before_fit_rejected(xy):
    X, _ = xy
    with pytest.raises(DataValidationError):
        CtcRecognizer().predict(X)


def test_save_load_reproduces_predictions(tmp_path, xy):
    X, y = xy
    est = CtcRecognizer(n_layers=1, hidden_dim=8, projection_dim=6, epochs=2, seed=2)
    est.fit(X, y)
    before = est.predict(X[:3])
    path = tmp_path / "model.ckpt"
    est.save(path)
    restored = CtcRecognizer().load(path)
    assert restored.predict(X[:3]) == before


def test_logmel_extractor_shapes():
    waves = [np.random.default_rng(0).normal(size=16000),
             np.random.default_rng(1).normal(size=8000)]
    feats = LogMelExtractor().fit_transform(waves)
    assert [f.shape for f in feats] == [(98, 40), (48, 40)]


def test_frame_stacker_shapes():
    feats = [np.random.default_rng(2).normal(size=(12, 40))]
    stacked = FrameStacker().fit_transform(feats)
    assert stacked[0].shape == (4, 120)


def test_visual_concatenator_shapes():
    rng = np.random.default_rng(3)
    pairs = [(rng.normal(size=(6, 120)), rng.normal(size=100))]
    fused = VisualConcatenator().fit_transform(pairs)
    assert fused[0].shape == (6, 220)


def test_mismatched_lengths_rejected(xy):
    X, y = xy
    with pytest.raises(DataValidationError):
        CtcRecognizer(epochs=1).fit(X, y[:-1])
