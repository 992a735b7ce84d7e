"""Attention-based encoder-decoder with a pyramidal recurrent encoder.

The encoder halves time resolution per layer by concatenating pairs of
consecutive frames before each bidirectional LSTM (odd lengths are
zero-padded on the right), so a 3-layer encoder reduces T by 8x. The
decoder is a unidirectional 2-layer LSTM over learned character
embeddings; a tanh bridge from the final encoder state initializes each
decoder layer. Attention is global and multiplicative:
alpha_s = softmax_s(h_t' W h_s) over every encoder state.

Decoding is beam search; a hypothesis completes at </s>. Final ranking
uses raw log score, or score divided by content length when length
normalization is on.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autograd as ag
from .autograd import ParameterStore, Tensor
from .errors import DataValidationError, ShapeMismatchError
from .layers import Affine, BiLstmLayer, dense_bridge, lstm_step, make_affine, make_lstm, zero_state
from .vocab import Hypothesis, Vocabulary


@dataclass
class EncoderStates:
    """Encoder output h = (h_1 .. h_T') with the time reduction applied."""

    states: Tensor
    reduction_factor: int

    @property
    def length(self) -> int:
        return self.states.data.shape[0]

    @property
    def dim(self) -> int:
        return self.states.data.shape[1]


@dataclass
class S2SArchConfig:
    input_dim: int = 120
    enc_layers: int = 3
    enc_hidden: int = 512
    dec_layers: int = 2
    dec_hidden: int = 512
    embed_dim: int = 64
    n_tokens: int = 43

    @property
    def enc_dim(self) -> int:
        return 2 * self.enc_hidden


def _pair_frames(X: Tensor) -> Tensor:
    """Concatenate frame pairs (2i, 2i+1); zero-pads an odd tail frame."""
    T = X.data.shape[0]
    if T % 2 == 1:
        pad = ag.constant(np.zeros((1, X.data.shape[1]), dtype=X.data.dtype), name="pad")
        X = ag.concat([X, pad], axis=0)
    even = X[0::2]
    odd = X[1::2]
    return ag.concat([even, odd], axis=1)


def pyramid_encode(X: Tensor, layers: list[BiLstmLayer]) -> EncoderStates:
    """Pair-concatenate then run a bidirectional layer, per layer."""
    if X.data.shape[0] < 1:
        raise DataValidationError("cannot encode an empty sequence")
    H = X
    for layer in layers:
        H = layer(_pair_frames(H))
    return EncoderStates(H, reduction_factor=2 ** len(layers))


def attention_weights(h_t: Tensor, enc: EncoderStates, W: Tensor) -> Tensor:
    """Alignment over all encoder states: softmax_s(h_t' W h_s), (1, T')."""
    if enc.length == 0:
        raise DataValidationError("attention over zero encoder states")
    query = h_t @ W  # (1, d_enc)
    scores = enc.states @ ag.reshape(query, (query.data.shape[1], 1))  # (T', 1)
    return ag.softmax(ag.reshape(scores, (1, enc.length)))


def attend(alpha: Tensor, enc: EncoderStates) -> Tensor:
    """Weighted sum of encoder states, (1, d_enc)."""
    if alpha.data.shape[1] != enc.length:
        raise ShapeMismatchError(
            "alignment length %d != encoder length %d" % (alpha.data.shape[1], enc.length)
        )
    return alpha @ enc.states


class Seq2SeqModel:
    """Pyramidal encoder + attention decoder over the character vocabulary."""

    def __init__(self, store: ParameterStore, cfg: S2SArchConfig, prefix: str = "s2s"):
        self.cfg = cfg
        self.store = store
        self.enc_layers: list[BiLstmLayer] = []
        d = cfg.input_dim * 2
        for l in range(cfg.enc_layers):
            layer = BiLstmLayer(store, "%s.enc%d" % (prefix, l), d, cfg.enc_hidden)
            self.enc_layers.append(layer)
            d = layer.out_dim * 2
        self.embedding = store.create(prefix + ".embed", (cfg.n_tokens, cfg.embed_dim))
        self.dec_cells = []
        d_in = cfg.embed_dim
        for l in range(cfg.dec_layers):
            self.dec_cells.append(make_lstm(store, "%s.dec%d" % (prefix, l), d_in, cfg.dec_hidden))
            d_in = cfg.dec_hidden
        self.W_attn = store.create(prefix + ".attn.W", (cfg.dec_hidden, cfg.enc_dim))
        self.bridges: list[Affine] = [
            make_affine(store, "%s.bridge%d" % (prefix, l), cfg.enc_dim, cfg.dec_hidden)
            for l in range(cfg.dec_layers)
        ]
        self.combine = make_affine(store, prefix + ".combine",
                                   cfg.dec_hidden + cfg.enc_dim, cfg.dec_hidden)
        self.out = make_affine(store, prefix + ".out", cfg.dec_hidden, cfg.n_tokens)

    def encode(self, frames: np.ndarray) -> EncoderStates:
        if frames.ndim != 2 or frames.shape[1] != self.cfg.input_dim:
            raise DataValidationError(
                "encoder expects (T, %d) frames, got %s" % (self.cfg.input_dim, frames.shape)
            )
        X = ag.constant(np.asarray(frames, dtype=self.store.dtype), name="frames")
        return pyramid_encode(X, self.enc_layers)

    def init_state(self, enc: EncoderStates) -> list[tuple[Tensor, Tensor]]:
        final = enc.states[enc.length - 1:enc.length]
        state = []
        for l in range(self.cfg.dec_layers):
            h = dense_bridge(final, self.bridges[l])
            _, c = zero_state(self.cfg.dec_hidden, self.store.dtype)
            state.append((h, c))
        return state

    def step(self, prev_token: int, state: list[tuple[Tensor, Tensor]],
             enc: EncoderStates) -> tuple[Tensor, list[tuple[Tensor, Tensor]]]:
        """One decoder step: log-prob row over the vocabulary + new state."""
        if not 0 <= prev_token < self.cfg.n_tokens:
            raise DataValidationError("token id %d out of range" % prev_token)
        x = self.embedding[prev_token:prev_token + 1]
        new_state = []
        for l, cell in enumerate(self.dec_cells):
            h, c = lstm_step(x, state[l], cell)
            new_state.append((h, c))
            x = h
        top = new_state[-1][0]
        alpha = attention_weights(top, enc, self.W_attn)
        context = attend(alpha, enc)
        combined = ag.tanh(self.combine(ag.concat([top, context], axis=1)))
        return ag.log_softmax(self.out(combined)), new_state

    def logprob_rows_from_tensor(self, X: Tensor, targets: list[int],
                                 vocab: Vocabulary) -> Tensor:
        """Teacher-forced log-prob rows for targets + </s>, shape (U+1, V)."""
        enc = pyramid_encode(X, self.enc_layers)
        state = self.init_state(enc)
        inputs = [vocab.sos_id] + list(targets)
        rows = []
        for tok in inputs:
            row, state = self.step(tok, state, enc)
            rows.append(row)
        return ag.concat(rows, axis=0)

    def teacher_logprob_rows(self, frames: np.ndarray, targets: list[int],
                             vocab: Vocabulary) -> Tensor:
        if frames.ndim != 2 or frames.shape[1] != self.cfg.input_dim:
            raise DataValidationError(
                "encoder expects (T, %d) frames, got %s" % (self.cfg.input_dim, frames.shape)
            )
        X = ag.constant(np.asarray(frames, dtype=self.store.dtype), name="frames")
        return self.logprob_rows_from_tensor(X, targets, vocab)

    def loss_from_tensor(self, X: Tensor, targets: list[int], vocab: Vocabulary) -> Tensor:
        """Sum of per-character cross-entropies, teacher forced."""
        rows = self.logprob_rows_from_tensor(X, targets, vocab)
        wanted = list(targets) + [vocab.eos_id]
        onehot = np.zeros(rows.data.shape, dtype=rows.data.dtype)
        onehot[np.arange(len(wanted)), wanted] = 1.0
        picked = ag.mul(rows, ag.constant(onehot, name="targets"))
        return -ag.sum_all(picked)

    def loss(self, frames: np.ndarray, targets: list[int], vocab: Vocabulary) -> Tensor:
        if frames.ndim != 2 or frames.shape[1] != self.cfg.input_dim:
            raise DataValidationError(
                "encoder expects (T, %d) frames, got %s" % (self.cfg.input_dim, frames.shape)
            )
        X = ag.constant(np.asarray(frames, dtype=self.store.dtype), name="frames")
        return self.loss_from_tensor(X, targets, vocab)


def beam_search(model: Seq2SeqModel, enc: EncoderStates, vocab: Vocabulary,
                beam: int = 5, length_norm: bool = False,
                max_len: int | None = None) -> list[Hypothesis]:
    """Standard beam search over decoder steps.

    Hypotheses complete at </s>. Returns up to `beam` completed
    hypotheses ranked by log score (or by length-normalized score);
    if nothing completes within max_len, the best incomplete hypothesis
    is returned flagged as such. `max_len` defaults to 4 * T'.
    """
    if beam < 1:
        raise DataValidationError("beam must be >= 1")
    if max_len is None:
        max_len = 4 * enc.length
    max_len = max(1, max_len)
    init = model.init_state(enc)
    active = [(0.0, [vocab.sos_id], init)]
    completed: list[Hypothesis] = []
    for _ in range(max_len):
        candidates = []
        for score, toks, state in active:
            row, new_state = model.step(toks[-1], state, enc)
            lp = row.data[0]
            order = np.argsort(-lp)[:beam]
            for tok in order:
                candidates.append((score + float(lp[tok]), toks + [int(tok)], new_state))
        candidates.sort(key=lambda c: -c[0])
        active = []
        for score, toks, state in candidates[:beam]:
            if toks[-1] == vocab.eos_id:
                completed.append(Hypothesis(tokens=toks, log_score=score, complete=True))
            else:
                active.append((score, toks, state))
        if not active or len(completed) >= beam:
            break

    def rank(h: Hypothesis) -> float:
        return h.normalized_score(vocab) if length_norm else h.log_score

    if not completed:
        best = max(active, key=lambda c: c[0])
        return [Hypothesis(tokens=best[1], log_score=best[0], complete=False)]
    completed.sort(key=lambda h: -rank(h))
    return completed[:beam]


def decode_utterance(model: Seq2SeqModel, frames: np.ndarray, vocab: Vocabulary,
                     beam: int = 5, length_norm: bool = False,
                     max_len: int | None = None) -> Hypothesis:
    with ag.no_grad():
        enc = model.encode(frames)
        hyps = beam_search(model, enc, vocab, beam=beam, length_norm=length_norm,
                           max_len=max_len)
    return hyps[0]
