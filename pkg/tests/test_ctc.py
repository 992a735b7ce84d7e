import numpy as np
import pytest

from avasr.autograd import ParameterStore, check_gradient, log_softmax_np
from avasr.ctc import (CtcAcousticModel, CtcArchConfig, PosteriorLattice,
                       brute_force_nll, collapse, ctc_grad, ctc_loss,
                       ctc_loss_node, greedy_decode, min_frames, oracle_suite,
                       random_instance)
from avasr.errors import CtcInfeasibleError
from avasr.vocab import DEFAULT_VOCAB

# extended-alphabet ids: 0 = blank, token k at column k+1
A, B = 1, 2


def test_collapse_examples():
    assert collapse([A, 0, A, B, 0]) == [0, 0, 1]   # "aab"
    assert collapse([0, 0, 0]) == []
    assert collapse([A, A, B]) == [0, 1]            # "ab"


def test_collapse_idempotent_on_reembedded_output():
    # the blank-interleaved embedding of any collapsed output is a fixed
    # point; bare re-embedding is one whenever no adjacent repeats remain
    rng = np.random.default_rng(0)
    for _ in range(50):
        path = rng.integers(0, 4, size=rng.integers(1, 10)).tolist()
        once = collapse(path)
        interleaved = [0]
        for t in once:
            interleaved += [t + 1, 0]
        assert collapse(interleaved) == once
        if all(a != b for a, b in zip(once, once[1:])):
            assert collapse([t + 1 for t in once]) == once


def uniform_lattice(T, n_labels):
    return PosteriorLattice(np.full((T, n_labels + 1), -np.log(n_labels + 1)))


def test_loss_enumerated_by_hand():
    # T=2, single label, uniform (0.5, 0.5): paths a_, _a, aa keep "a"
    lattice = uniform_lattice(2, 1)
    assert ctc_loss(lattice, [0]) == pytest.approx(-np.log(0.75), abs=1e-12)
    assert ctc_loss(lattice, []) == pytest.approx(-np.log(0.25), abs=1e-12)


def test_repeat_needs_intervening_blank():
    lattice = uniform_lattice(2, 1)
    with pytest.raises(CtcInfeasibleError):
        ctc_loss(lattice, [0, 0])
    assert min_frames([0, 0]) == 3
    # three frames make the repeat reachable
    assert np.isfinite(ctc_loss(uniform_lattice(3, 1), [0, 0]))


def test_single_frame_gradient_is_cross_entropy():
    logits = np.array([[0.3, -0.2]])
    lp = log_softmax_np(logits)
    grad = ctc_grad(PosteriorLattice(lp), [0])
    probs = np.exp(lp[0])
    assert grad[0, 1] == pytest.approx(probs[1] - 1.0, abs=1e-12)
    assert grad[0, 0] == pytest.approx(probs[0], abs=1e-12)


def test_gradient_rows_sum_to_zero():
    rng = np.random.default_rng(1)
    lattice = PosteriorLattice(log_softmax_np(rng.normal(size=(6, 4))))
    grad = ctc_grad(lattice, [0, 2, 1])
    assert np.allclose(grad.sum(axis=1), 0.0, atol=1e-10)


def test_gradient_matches_finite_differences():
    store = ParameterStore(seed=2)
    logits = store.create("logits", (6, 4))

    def loss():
        return ctc_loss_node(logits, [2, 0, 2])

    report = check_gradient(loss, store, eps=1e-5, tol=1e-6)
    assert report.passed, report.format()


def test_oracle_equivalence_small_sample():
    report = oracle_suite(n_instances=50, seed=42, rel_tol=1e-10)
    assert report.passed, report.format()


def test_brute_force_agrees_on_fixed_instance():
    rng = np.random.default_rng(3)
    lattice, targets = random_instance(rng, t_max=6, l_max=2, z_max=3)
    assert np.exp(-ctc_loss(lattice, targets)) == pytest.approx(
        np.exp(-brute_force_nll(lattice, targets)), rel=1e-12)


def test_pure_blank_frame_leaves_loss_unchanged():
    rng = np.random.default_rng(4)
    lp = log_softmax_np(rng.normal(size=(5, 3)))
    blank_row = np.full((1, 3), -np.inf)
    blank_row[0, 0] = 0.0
    targets = [1, 0]
    before = ctc_loss(PosteriorLattice(lp), targets)
    after = ctc_loss(PosteriorLattice(np.concatenate([lp, blank_row])), targets)
    assert after == before


def test_greedy_decode_collapses_argmax_path():
    lp = np.log(np.array([
        [0.1, 0.8, 0.1],   # a
        [0.2, 0.7, 0.1],   # a
        [0.9, 0.05, 0.05],  # blank
        [0.1, 0.2, 0.7],   # b
    ]))
    hyp = greedy_decode(PosteriorLattice(lp))
    assert hyp.tokens == [0, 1]
    assert hyp.log_score == pytest.approx(np.log(0.8 * 0.7 * 0.9 * 0.7))


def test_greedy_all_blank_is_empty():
    lp = np.log(np.array([[0.9, 0.05, 0.05]] * 3))
    assert greedy_decode(PosteriorLattice(lp)).tokens == []


def test_greedy_tie_breaks_to_lowest_index():
    lp = np.full((2, 3), np.log(1.0 / 3.0))
    assert greedy_decode(PosteriorLattice(lp)).tokens == []  # blank wins ties


def test_acoustic_model_shapes_and_normalization():
    store = ParameterStore(seed=5)
    cfg = CtcArchConfig(input_dim=8, n_layers=2, hidden_dim=6, projection_dim=4,
                        n_tokens=DEFAULT_VOCAB.size)
    model = CtcAcousticModel(store, cfg)
    frames = np.random.default_rng(6).normal(size=(9, 8))
    lattice = model.lattice(frames)
    assert lattice.log_probs.shape == (9, 44)
    lattice.check_normalized(tol=1e-8)


def test_published_architecture_dimensions():
    store = ParameterStore(seed=7)
    model = CtcAcousticModel(store, CtcArchConfig())
    assert len(model.layers) == 5
    assert all(layer.hidden_dim == 200 for layer in model.layers)
    assert all(layer.out_dim == 100 for layer in model.layers)
    assert model.out.out_dim == 44
