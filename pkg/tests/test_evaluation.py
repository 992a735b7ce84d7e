import csv

import numpy as np
import pytest

from avasr.autograd import ParameterStore
from avasr.errors import DataValidationError
from avasr.evaluation import (char_perplexity, evaluate, length_stats, levenshtein,
                              token_error_rate, write_eval_csv, write_hist_csv,
                              write_lengths_csv)
from avasr.gradsuite import _tiny_vocab
from avasr.s2s import S2SArchConfig, Seq2SeqModel
from avasr.vocab import DEFAULT_VOCAB


def test_ter_basic_cases():
    assert token_error_rate({"u": "abc"}, {"u": "abc"}) == 0.0
    assert token_error_rate({"u": "abc"}, {"u": "axc"}) == pytest.approx(1.0 / 3.0)
    assert token_error_rate({"u": "ab"}, {"u": ""}) == 1.0


def test_ter_counts_spaces_and_can_exceed_one():
    assert token_error_rate({"u": "a b"}, {"u": "ab"}) == pytest.approx(1.0 / 3.0)
    assert token_error_rate({"u": "a"}, {"u": "abcd"}) == 3.0


def test_missing_hypothesis_counts_as_deletions(caplog):
    with caplog.at_level("WARNING"):
        report = evaluate({"u1": "abc", "u2": "xy"}, {"u1": "abc"})
    assert report.total_edits == 2
    assert report.ter == pytest.approx(2.0 / 5.0)
    assert any("u2" in rec.message for rec in caplog.records)


def test_levenshtein_properties():
    rng = np.random.default_rng(0)
    alphabet = "abc"
    words = ["".join(rng.choice(list(alphabet), size=rng.integers(0, 8))) for _ in range(15)]
    for a in words:
        assert levenshtein(a, a) == 0
    for a, b, c in zip(words, words[1:], words[2:]):
        assert levenshtein(a, c) <= levenshtein(a, b) + levenshtein(b, c)
        assert levenshtein(a, b) == levenshtein(b, a)


def test_uniform_model_perplexity_is_vocab_size():
    vocab = DEFAULT_VOCAB
    store = ParameterStore(seed=0)
    cfg = S2SArchConfig(input_dim=6, enc_layers=1, enc_hidden=3, dec_layers=1,
                        dec_hidden=4, embed_dim=3, n_tokens=vocab.size)
    model = Seq2SeqModel(store, cfg)
    for _, p in store.items():
        p.data[:] = 0.0
    corpus = [(np.zeros((6, 6)), "ab c"), (np.zeros((4, 6)), "x")]
    ppl = char_perplexity(model, corpus, vocab)
    assert ppl == pytest.approx(43.0, abs=1e-6)


def test_perfect_predictions_give_unit_perplexity():
    class OneHotRows:
        def teacher_logprob_rows(self, frames, targets, vocab):
            import numpy as np

            from avasr.autograd import Tensor

            wanted = targets + [vocab.eos_id]
            rows = np.full((len(wanted), vocab.size), -1e9)
            rows[np.arange(len(wanted)), wanted] = 0.0
            return Tensor(rows)

    ppl = char_perplexity(OneHotRows(), [(None, "abc")], DEFAULT_VOCAB)
    assert ppl == 1.0


def test_perplexity_at_least_one_for_any_model():
    vocab = _tiny_vocab()
    store = ParameterStore(seed=3)
    model = Seq2SeqModel(store, S2SArchConfig(input_dim=4, enc_layers=1, enc_hidden=3,
                                              dec_layers=1, dec_hidden=4, embed_dim=3,
                                              n_tokens=vocab.size))
    rng = np.random.default_rng(4)
    corpus = [(rng.normal(size=(6, 4)), "ab"), (rng.normal(size=(8, 4)), "b a")]
    assert char_perplexity(model, corpus, vocab) >= 1.0


def test_empty_corpus_rejected():
    with pytest.raises(DataValidationError):
        char_perplexity(None, [], DEFAULT_VOCAB)


def test_length_stats_diagonal():
    refs = {"a": "hello", "b": "hi"}
    rows, hist = length_stats(refs, refs, edges=[3, 10])
    assert [(r[1], r[2]) for r in rows] == [(5, 5), (2, 2)]
    assert sum(hist) == 2


def test_length_stats_shift():
    refs = {"u%d" % i: "x" * (5 + i) for i in range(4)}
    hyps = {k: v[:-2] for k, v in refs.items()}
    rows, hist = length_stats(refs, hyps, edges=[6])
    gaps = [r[2] - r[1] for r in rows]
    assert np.mean(gaps) == -2.0
    assert sum(hist) == 4


def test_csv_outputs(tmp_path):
    refs = {"u1": "abc", "u2": "de"}
    hyps = {"u1": "abc", "u2": "dx"}
    report = evaluate(refs, hyps)
    rows, hist = length_stats(refs, hyps, edges=[2])
    write_eval_csv(tmp_path / "eval.csv", report)
    write_lengths_csv(tmp_path / "lengths.csv", rows)
    write_hist_csv(tmp_path / "hist.csv", [2], hist)
    with open(tmp_path / "eval.csv") as fh:
        got = list(csv.reader(fh))
    assert got[0] == ["ter", "ppl", "total_edits", "total_ref_tokens", "utterances"]
    assert got[1][2] == "1"
    with open(tmp_path / "lengths.csv") as fh:
        got = list(csv.reader(fh))
    assert got[0] == ["id", "ref_len", "hyp_len", "bucket"]
    assert len(got) == 3
    with open(tmp_path / "hist.csv") as fh:
        got = list(csv.reader(fh))
    assert sum(int(r[2]) for r in got[1:]) == 2
