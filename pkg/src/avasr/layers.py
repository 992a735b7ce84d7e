"""Recurrent building blocks: LSTM cell, bidirectional layers, projections.

The LSTM recurrence is fused into single graph nodes (one per step, or
one per direction for a whole sequence) with hand-written backward
passes; everything is verified against finite differences in the test
suite. Gate layout in the packed affine output is (i, f, g, o).

State initialization is zeros per utterance. Weight matrices are
Glorot-uniform, biases zero except the forget gate at +1.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autograd as ag
from .autograd import ParameterStore, Tensor
from .errors import ShapeMismatchError


@dataclass
class LstmParams:
    """Packed cell parameters: Wx (in, 4H), Wh (H, 4H), b (1, 4H)."""

    Wx: Tensor
    Wh: Tensor
    b: Tensor
    hidden_dim: int

    @property
    def input_dim(self) -> int:
        return self.Wx.data.shape[0]


def make_lstm(store: ParameterStore, prefix: str, input_dim: int, hidden_dim: int) -> LstmParams:
    Wx = store.create(prefix + ".Wx", (input_dim, 4 * hidden_dim))
    Wh = store.create(prefix + ".Wh", (hidden_dim, 4 * hidden_dim))
    b_init = np.zeros((1, 4 * hidden_dim))
    b_init[0, hidden_dim:2 * hidden_dim] = 1.0  # forget-gate bias
    b = store.create(prefix + ".b", (1, 4 * hidden_dim), init=b_init)
    return LstmParams(Wx, Wh, b, hidden_dim)


def zero_state(hidden_dim: int, dtype) -> tuple[Tensor, Tensor]:
    z = np.zeros((1, hidden_dim), dtype=dtype)
    return ag.constant(z.copy(), name="h0"), ag.constant(z.copy(), name="c0")


def _cell_forward(x, h, c, Wx, Wh, b, H):
    a = x @ Wx + h @ Wh + b
    i = ag.sigmoid_np(a[:, :H])
    f = ag.sigmoid_np(a[:, H:2 * H])
    g = np.tanh(a[:, 2 * H:3 * H])
    o = ag.sigmoid_np(a[:, 3 * H:])
    c2 = f * c + i * g
    tc = np.tanh(c2)
    h2 = o * tc
    return h2, c2, (x, h, c, i, f, g, o, tc)


def _cell_backward(cache, Wx, Wh, dh2, dc2):
    x, h, c, i, f, g, o, tc = cache
    do = dh2 * tc
    dc_tot = dc2 + dh2 * o * (1.0 - tc * tc)
    di = dc_tot * g
    df = dc_tot * c
    dg = dc_tot * i
    dc = dc_tot * f
    da = np.concatenate(
        [di * i * (1.0 - i), df * f * (1.0 - f), dg * (1.0 - g * g), do * o * (1.0 - o)],
        axis=1,
    )
    dx = da @ Wx.T
    dh = da @ Wh.T
    return dx, dh, dc, da


def lstm_step(x_t: Tensor, state: tuple[Tensor, Tensor], params: LstmParams) -> tuple[Tensor, Tensor]:
    """One recurrence step: (h, c) -> (h', c') for a single (1, d) frame."""
    h, c = state
    H = params.hidden_dim
    if x_t.data.shape != (1, params.input_dim):
        raise ShapeMismatchError(
            "lstm_step: input %s for %s, expected (1, %d)"
            % (x_t.data.shape, x_t.label(), params.input_dim)
        )
    h2, c2, cache = _cell_forward(x_t.data, h.data, c.data, params.Wx.data, params.Wh.data,
                                  params.b.data, H)
    value = np.concatenate([h2, c2], axis=1)

    def _bwd(grad):
        dh2 = grad[:, :H]
        dc2 = grad[:, H:]
        dx, dh, dc, da = _cell_backward(cache, params.Wx.data, params.Wh.data, dh2, dc2)
        return dx, dh, dc, cache[0].T @ da, cache[1].T @ da, da

    node = ag.custom((x_t, h, c, params.Wx, params.Wh, params.b), value, _bwd, "lstm_step")
    return node[:, :H], node[:, H:]


def lstm_sequence(X: Tensor, params: LstmParams, reverse: bool = False) -> Tensor:
    """Run the cell over all rows of X (T, d) from a zero state.

    Returns the hidden states aligned with the input rows: row t holds
    the state after reading frame t in processing order, so a reversed
    pass still reports its state at position t. Gate activations are
    cached as (T, H) blocks so the backward pass can batch the weight
    gradients into single matmuls over all steps.
    """
    T = X.data.shape[0]
    H = params.hidden_dim
    if X.data.shape[1] != params.input_dim:
        raise ShapeMismatchError(
            "lstm_sequence: input %s for %s, expected dim %d"
            % (X.data.shape, X.label(), params.input_dim)
        )
    Wx, Wh, b = params.Wx.data, params.Wh.data, params.b.data
    steps = list(range(T - 1, -1, -1) if reverse else range(T))
    xw = X.data @ Wx + b
    dtype = xw.dtype
    gi = np.zeros((T, H), dtype=dtype)
    gf = np.zeros((T, H), dtype=dtype)
    gg = np.zeros((T, H), dtype=dtype)
    go = np.zeros((T, H), dtype=dtype)
    tcs = np.zeros((T, H), dtype=dtype)
    h_prev = np.zeros((T, H), dtype=dtype)
    c_prev = np.zeros((T, H), dtype=dtype)
    out = np.zeros((T, H), dtype=dtype)
    h = np.zeros((1, H), dtype=dtype)
    c = np.zeros((1, H), dtype=dtype)
    for s, t in enumerate(steps):
        a = xw[t:t + 1] + h @ Wh
        i = ag.sigmoid_np(a[:, :H])
        f = ag.sigmoid_np(a[:, H:2 * H])
        g = np.tanh(a[:, 2 * H:3 * H])
        o = ag.sigmoid_np(a[:, 3 * H:])
        c2 = f * c + i * g
        tc = np.tanh(c2)
        gi[s], gf[s], gg[s], go[s], tcs[s] = i[0], f[0], g[0], o[0], tc[0]
        h_prev[s], c_prev[s] = h[0], c[0]
        h = o * tc
        c = c2
        out[t] = h[0]

    def _bwd(grad):
        da = np.zeros((T, 4 * H), dtype=dtype)
        dh = np.zeros(H, dtype=dtype)
        dc = np.zeros(H, dtype=dtype)
        WhT = Wh.T
        for s in range(T - 1, -1, -1):
            t = steps[s]
            dh = dh + grad[t]
            i, f, g, o, tc = gi[s], gf[s], gg[s], go[s], tcs[s]
            do = dh * tc
            dc_tot = dc + dh * o * (1.0 - tc * tc)
            row = da[s]
            row[:H] = (dc_tot * g) * i * (1.0 - i)
            row[H:2 * H] = (dc_tot * c_prev[s]) * f * (1.0 - f)
            row[2 * H:3 * H] = (dc_tot * i) * (1.0 - g * g)
            row[3 * H:] = do * o * (1.0 - o)
            dh = row @ WhT
            dc = dc_tot * f
        dX = np.zeros_like(X.data)
        dX[steps] = da @ Wx.T
        dWx = X.data[steps].T @ da
        dWh = h_prev.T @ da
        db = da.sum(axis=0, keepdims=True)
        return dX, dWx, dWh, db

    return ag.custom((X, params.Wx, params.Wh, params.b), out, _bwd, "lstm_sequence")


@dataclass
class Affine:
    """x @ W (+ b). Bias is optional; projection layers go without."""

    W: Tensor
    b: Tensor | None

    def __call__(self, x: Tensor) -> Tensor:
        y = x @ self.W
        if self.b is not None:
            y = ag.add(y, self.b)
        return y

    @property
    def out_dim(self) -> int:
        return self.W.data.shape[1]


def make_affine(store: ParameterStore, prefix: str, in_dim: int, out_dim: int,
                bias: bool = True, init="glorot") -> Affine:
    W = store.create(prefix + ".W", (in_dim, out_dim), init=init)
    b = store.create(prefix + ".b", (1, out_dim), init="zeros") if bias else None
    return Affine(W, b)


class BiLstmLayer:
    """Forward + backward LSTM over a sequence, concatenated per frame,
    with an optional linear projection down to `projection_dim`."""

    def __init__(self, store: ParameterStore, prefix: str, input_dim: int,
                 hidden_dim: int, projection_dim: int | None = None,
                 bidirectional: bool = True):
        directions = 2 if bidirectional else 1
        if projection_dim is not None and projection_dim >= hidden_dim * directions:
            raise ShapeMismatchError(
                "projection_dim %d must be smaller than %d"
                % (projection_dim, hidden_dim * directions)
            )
        self.bidirectional = bidirectional
        self.fwd = make_lstm(store, prefix + ".fwd", input_dim, hidden_dim)
        self.bwd = make_lstm(store, prefix + ".bwd", input_dim, hidden_dim) if bidirectional else None
        self.proj = None
        if projection_dim is not None:
            self.proj = store.create(prefix + ".proj", (hidden_dim * directions, projection_dim))
        self.input_dim = input_dim
        self.hidden_dim = hidden_dim
        self.projection_dim = projection_dim

    @property
    def out_dim(self) -> int:
        if self.projection_dim is not None:
            return self.projection_dim
        return self.hidden_dim * (2 if self.bidirectional else 1)

    def __call__(self, X: Tensor) -> Tensor:
        H_f = lstm_sequence(X, self.fwd)
        if self.bidirectional:
            H_b = lstm_sequence(X, self.bwd, reverse=True)
            H = ag.concat([H_f, H_b], axis=1)
        else:
            H = H_f
        if self.proj is not None:
            H = H @ self.proj
        return H


def bilstm_stack(store: ParameterStore, prefix: str, input_dim: int, n_layers: int,
                 hidden_dim: int, projection_dim: int | None) -> list[BiLstmLayer]:
    layers = []
    d = input_dim
    for l in range(n_layers):
        layer = BiLstmLayer(store, "%s.l%d" % (prefix, l), d, hidden_dim, projection_dim)
        layers.append(layer)
        d = layer.out_dim
    return layers


def dense_bridge(enc_final: Tensor, affine: Affine) -> Tensor:
    """tanh(affine(x)): maps a final encoder state to a decoder init state."""
    return ag.tanh(affine(enc_final))
