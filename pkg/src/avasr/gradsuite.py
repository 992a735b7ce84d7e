"""Finite-difference verification of every differentiable component.

Each check builds a scalar loss over a toy-dimension instance of one
component, with inputs promoted to parameters so upstream gradients are
verified too. Used by the `gradcheck` CLI command and the test suite.
"""

from __future__ import annotations

import numpy as np

from . import autograd as ag
from .autograd import ParameterStore, check_gradient
from .ctc import ctc_loss_node
from .fusion import VisualAdapter, vat_fuse
from .layers import BiLstmLayer, lstm_step, make_affine, make_lstm
from .s2s import S2SArchConfig, Seq2SeqModel, attend, attention_weights
from .vocab import EOS, SOS, Vocabulary


def _tiny_vocab() -> Vocabulary:
    return Vocabulary(["a", "b", " ", SOS, EOS])


def check_lstm_cell(eps: float, tol: float, seed: int):
    store = ParameterStore(seed=seed)
    p = make_lstm(store, "cell", 5, 4)
    x = store.create("x", (1, 5), init="glorot")
    h0 = store.create("h0", (1, 4), init="glorot")
    c0 = store.create("c0", (1, 4), init="glorot")

    def loss():
        h, c = lstm_step(x, (h0, c0), p)
        return ag.sum_all(h) + ag.sum_all(ag.tanh(c))

    return check_gradient(loss, store, eps=eps, tol=tol)


def check_bilstm_layer(eps: float, tol: float, seed: int):
    store = ParameterStore(seed=seed)
    layer = BiLstmLayer(store, "bl", 5, 4, projection_dim=3)
    X = store.create("X", (6, 5), init="glorot")

    def loss():
        return ag.sum_all(ag.tanh(layer(X)))

    return check_gradient(loss, store, eps=eps, tol=tol)


def check_projection(eps: float, tol: float, seed: int):
    store = ParameterStore(seed=seed)
    W = store.create("W", (6, 3), init="glorot")
    X = store.create("X", (4, 6), init="glorot")

    def loss():
        return ag.sum_all(ag.tanh(X @ W))

    return check_gradient(loss, store, eps=eps, tol=tol)


def check_dense_bridge(eps: float, tol: float, seed: int):
    store = ParameterStore(seed=seed)
    affine = make_affine(store, "bridge", 5, 4)
    x = store.create("x", (1, 5), init="glorot")

    def loss():
        return ag.sum_all(ag.tanh(affine(x)))

    return check_gradient(loss, store, eps=eps, tol=tol)


def check_attention(eps: float, tol: float, seed: int):
    from .s2s import EncoderStates

    store = ParameterStore(seed=seed)
    H = store.create("H", (4, 6), init="glorot")
    h_t = store.create("h_t", (1, 3), init="glorot")
    W = store.create("W", (3, 6), init="glorot")

    def loss():
        enc = EncoderStates(H, reduction_factor=1)
        alpha = attention_weights(h_t, enc, W)
        return ag.sum_all(ag.tanh(attend(alpha, enc)))

    return check_gradient(loss, store, eps=eps, tol=tol)


def check_s2s_loss(eps: float, tol: float, seed: int):
    vocab = _tiny_vocab()
    store = ParameterStore(seed=seed)
    cfg = S2SArchConfig(input_dim=6, enc_layers=2, enc_hidden=3, dec_layers=2,
                        dec_hidden=4, embed_dim=3, n_tokens=vocab.size)
    model = Seq2SeqModel(store, cfg)
    rng = np.random.default_rng(seed + 1)
    frames = rng.normal(size=(6, 6))
    targets = vocab.encode("ab a")

    def loss():
        return model.loss(frames, targets, vocab)

    return check_gradient(loss, store, eps=eps, tol=tol)


def check_ctc_grad(eps: float, tol: float, seed: int):
    store = ParameterStore(seed=seed)
    logits = store.create("logits", (5, 4), init="glorot")
    targets = [0, 2, 1]

    def loss():
        return ctc_loss_node(logits, targets)

    return check_gradient(loss, store, eps=eps, tol=tol)


def check_vat_fusion(eps: float, tol: float, seed: int):
    store = ParameterStore(seed=seed)
    adapter = VisualAdapter(store, hidden_dim=6, output_dim=5)
    # the output layer is zero-initialized by design; randomize it so the
    # hidden-layer gradients are exercised
    rng = np.random.default_rng(seed + 2)
    adapter.l2.W.data = 0.1 * rng.normal(size=adapter.l2.W.data.shape)
    audio = store.create("audio", (4, 5), init="glorot")
    visual = rng.normal(size=100)
    mix = ag.constant(rng.normal(size=(5, 3)), name="mix")

    def loss():
        fused = vat_fuse(audio, visual, adapter)
        return ag.sum_all(ag.tanh(fused @ mix))

    return check_gradient(loss, store, eps=eps, tol=tol)


CHECKS = [
    ("lstm_cell", check_lstm_cell),
    ("bilstm_layer", check_bilstm_layer),
    ("projection", check_projection),
    ("dense_bridge", check_dense_bridge),
    ("attention", check_attention),
    ("s2s_teacher_forced_loss", check_s2s_loss),
    ("ctc_grad", check_ctc_grad),
    ("vat_fusion", check_vat_fusion),
]


def run_gradient_suite(eps: float = 1e-5, tol: float = 1e-4,
                       seed: int = 0) -> tuple[list[str], bool]:
    lines = []
    all_passed = True
    for name, fn in CHECKS:
        report = fn(eps, tol, seed)
        lines.append("%-26s max_rel_err=%.3e %s"
                     % (name, report.max_rel_err, "PASS" if report.passed else "FAIL"))
        all_passed = all_passed and report.passed
    lines.append("gradient suite: %s" % ("PASS" if all_passed else "FAIL"))
    return lines, all_passed
