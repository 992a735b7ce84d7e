import numpy as np

from avasr import autograd as ag
from avasr.autograd import ParameterStore, check_gradient
from avasr.gradsuite import check_lstm_cell
from avasr.layers import (BiLstmLayer, dense_bridge, lstm_sequence, lstm_step,
                          make_affine, make_lstm, zero_state)


def test_zero_weights_give_zero_output():
    store = ParameterStore(seed=0)
    p = make_lstm(store, "cell", 3, 4)
    for t in (p.Wx, p.Wh, p.b):
        t.data[:] = 0.0
    x = ag.constant(np.array([[5.0, -2.0, 1.0]]))
    h, c = lstm_step(x, zero_state(4, np.float64), p)
    assert np.array_equal(h.data, np.zeros((1, 4)))


def test_step_output_dim_is_hidden_dim():
    store = ParameterStore(seed=0)
    p = make_lstm(store, "cell", 3, 7)
    x = ag.constant(np.zeros((1, 3)))
    h, c = lstm_step(x, zero_state(7, np.float64), p)
    assert h.shape == (1, 7)
    assert c.shape == (1, 7)


def test_lstm_cell_gradient():
    report = check_lstm_cell(eps=1e-4, tol=1e-4, seed=11)
    assert report.passed, report.format()


def test_forget_gate_bias_initialized_to_one():
    store = ParameterStore(seed=0)
    p = make_lstm(store, "cell", 3, 4)
    assert np.array_equal(p.b.data[0, 4:8], np.ones(4))
    assert np.array_equal(p.b.data[0, :4], np.zeros(4))


def test_bilstm_projection_output_dim():
    # published layer shape: 200 cells per direction, projected to 100
    store = ParameterStore(seed=0)
    layer = BiLstmLayer(store, "l0", 120, 200, projection_dim=100)
    X = ag.constant(np.random.default_rng(0).normal(size=(3, 120)))
    assert layer(X).shape == (3, 100)


def test_unidirectional_output_dim():
    store = ParameterStore(seed=0)
    layer = BiLstmLayer(store, "l0", 8, 512, bidirectional=False)
    X = ag.constant(np.zeros((2, 8)))
    assert layer(X).shape == (2, 512)


def test_sequence_length_preserved():
    store = ParameterStore(seed=1)
    layer = BiLstmLayer(store, "l0", 5, 6, projection_dim=4)
    for T in (1, 2, 9):
        X = ag.constant(np.random.default_rng(T).normal(size=(T, 5)))
        assert layer(X).shape == (T, 4)


def test_reversed_input_swaps_direction_roles():
    # with shared cell parameters, a backward pass over x is a forward
    # pass over reversed x read at mirrored positions, and vice versa
    store = ParameterStore(seed=2)
    p = make_lstm(store, "cell", 4, 3)
    rng = np.random.default_rng(3)
    X = rng.normal(size=(6, 4))
    fwd_on_rev = lstm_sequence(ag.constant(X[::-1].copy()), p).data
    bwd_on_orig = lstm_sequence(ag.constant(X), p, reverse=True).data
    assert np.allclose(bwd_on_orig, fwd_on_rev[::-1], atol=1e-14)
    fwd_on_orig = lstm_sequence(ag.constant(X), p).data
    bwd_on_rev = lstm_sequence(ag.constant(X[::-1].copy()), p, reverse=True).data
    assert np.allclose(fwd_on_orig, bwd_on_rev[::-1], atol=1e-14)


def test_sequence_matches_stepwise_recurrence():
    store = ParameterStore(seed=4)
    p = make_lstm(store, "cell", 4, 5)
    rng = np.random.default_rng(5)
    X = rng.normal(size=(7, 4))
    seq = lstm_sequence(ag.constant(X), p).data
    state = zero_state(5, np.float64)
    for t in range(7):
        h, c = lstm_step(ag.constant(X[t:t + 1]), state, p)
        state = (h, c)
        assert np.allclose(seq[t], h.data[0], atol=1e-14)


def test_sequence_gradient_both_directions():
    store = ParameterStore(seed=6)
    p = make_lstm(store, "cell", 3, 2)
    X = store.create("X", (5, 3))

    for reverse in (False, True):
        def loss():
            return ag.sum_all(ag.tanh(lstm_sequence(X, p, reverse=reverse)))

        report = check_gradient(loss, store, eps=1e-5, tol=1e-5)
        assert report.passed, report.format()


def test_outputs_finite_for_large_inputs():
    store = ParameterStore(seed=7)
    layer = BiLstmLayer(store, "l0", 3, 4, projection_dim=2)
    X = ag.constant(np.full((4, 3), 100.0))
    assert np.all(np.isfinite(layer(X).data))


def test_dense_bridge_zero_weights():
    store = ParameterStore(seed=8)
    affine = make_affine(store, "bridge", 6, 4, init="zeros")
    out = dense_bridge(ag.constant(np.ones((1, 6))), affine)
    assert np.array_equal(out.data, np.zeros((1, 4)))


def test_dense_bridge_output_dim():
    store = ParameterStore(seed=9)
    affine = make_affine(store, "bridge", 1024, 512)
    out = dense_bridge(ag.constant(np.zeros((1, 1024))), affine)
    assert out.shape == (1, 512)
