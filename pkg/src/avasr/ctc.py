"""Frame-synchronous sequence loss over an extended blank alphabet.

The loss sums, in log space, the probabilities of all frame-level paths
that collapse (merge repeats, drop blanks) to the target character
sequence. The gradient with respect to pre-softmax logits is the
standard softmax-minus-occupancy form obtained from the alpha/beta
recursions. A brute-force path enumeration of the same quantity is kept
alongside as an independent oracle for small instances.

Lattice columns: 0 is the blank; column k+1 is vocabulary token k.
"""

from __future__ import annotations

import itertools
import time
from dataclasses import dataclass, field

import numpy as np

from . import autograd as ag
from .autograd import ParameterStore, Tensor
from .errors import CtcInfeasibleError, DataValidationError, NumericError
from .layers import bilstm_stack, make_affine
from .vocab import Hypothesis, Vocabulary

NEG_INF = -np.inf


@dataclass
class PosteriorLattice:
    """Frame-wise log posteriors over the extended alphabet (T, |L|+1)."""

    log_probs: np.ndarray

    def __post_init__(self):
        self.log_probs = np.atleast_2d(np.asarray(self.log_probs, dtype=np.float64))

    @property
    def n_frames(self) -> int:
        return self.log_probs.shape[0]

    @property
    def n_labels(self) -> int:
        return self.log_probs.shape[1]

    def check_normalized(self, tol: float = 1e-8) -> None:
        row_mass = ag.logsumexp(self.log_probs, axis=1)
        if np.any(np.abs(row_mass) > tol):
            raise NumericError("lattice rows are not normalized (max |logZ| = %g)"
                               % float(np.max(np.abs(row_mass))))


def collapse(path) -> list[int]:
    """Merge consecutive repeats, then delete blanks.

    `path` holds extended-alphabet ids (0 = blank); the result holds
    vocabulary ids (column - 1).
    """
    out = []
    prev = None
    for p in path:
        if p != prev and p != 0:
            out.append(p - 1)
        prev = p
    return out


def min_frames(targets: list[int]) -> int:
    """Shortest path length that can emit the target sequence."""
    repeats = sum(1 for a, b in zip(targets, targets[1:]) if a == b)
    return len(targets) + repeats


def check_feasible(n_frames: int, targets: list[int]) -> None:
    need = min_frames(targets)
    if n_frames < need:
        raise CtcInfeasibleError(
            "target of length %d (with repeats) needs at least %d frames, got %d"
            % (len(targets), need, n_frames)
        )


def _extended(targets: list[int]) -> tuple[np.ndarray, np.ndarray]:
    """Blank-interleaved target sequence and the skip-transition mask."""
    U = len(targets)
    ext = np.zeros(2 * U + 1, dtype=np.int64)
    ext[1::2] = np.asarray(targets, dtype=np.int64) + 1
    allow_skip = np.zeros(ext.shape[0], dtype=bool)
    for s in range(2, ext.shape[0]):
        allow_skip[s] = ext[s] != 0 and ext[s] != ext[s - 2]
    return ext, allow_skip


def _forward_alphas(lp: np.ndarray, ext: np.ndarray, allow_skip: np.ndarray) -> np.ndarray:
    T = lp.shape[0]
    S = ext.shape[0]
    alphas = np.full((T, S), NEG_INF)
    alphas[0, 0] = lp[0, 0]
    if S > 1:
        alphas[0, 1] = lp[0, ext[1]]
    for t in range(1, T):
        prev = alphas[t - 1]
        shift1 = np.full(S, NEG_INF)
        shift1[1:] = prev[:-1]
        shift2 = np.full(S, NEG_INF)
        if S > 2:
            shift2[2:] = prev[:-2]
        shift2 = np.where(allow_skip, shift2, NEG_INF)
        alphas[t] = lp[t, ext] + np.logaddexp(np.logaddexp(prev, shift1), shift2)
    return alphas


def _backward_betas(lp: np.ndarray, ext: np.ndarray, allow_skip: np.ndarray) -> np.ndarray:
    """Suffix mass excluding the emission at the current frame."""
    T = lp.shape[0]
    S = ext.shape[0]
    betas = np.full((T, S), NEG_INF)
    betas[T - 1, S - 1] = 0.0
    if S > 1:
        betas[T - 1, S - 2] = 0.0
    for t in range(T - 2, -1, -1):
        nxt = betas[t + 1] + lp[t + 1, ext]
        shift1 = np.full(S, NEG_INF)
        shift1[:-1] = nxt[1:]
        shift2 = np.full(S, NEG_INF)
        skip_into = np.zeros(S, dtype=bool)
        if S > 2:
            shift2[:-2] = nxt[2:]
            skip_into[:-2] = allow_skip[2:]
        shift2 = np.where(skip_into, shift2, NEG_INF)
        betas[t] = np.logaddexp(np.logaddexp(nxt, shift1), shift2)
    return betas


def ctc_loss(lattice: PosteriorLattice, targets: list[int]) -> float:
    """Negative log probability of the target under the lattice."""
    lp = lattice.log_probs
    check_feasible(lp.shape[0], targets)
    ext, allow_skip = _extended(targets)
    alphas = _forward_alphas(lp, ext, allow_skip)
    last = alphas[-1]
    if ext.shape[0] == 1:
        total = last[0]
    else:
        total = np.logaddexp(last[-1], last[-2])
    return float(-total)


def ctc_grad(lattice: PosteriorLattice, targets: list[int]) -> np.ndarray:
    """Gradient of the loss w.r.t. the pre-softmax logits behind the lattice."""
    lp = lattice.log_probs
    check_feasible(lp.shape[0], targets)
    ext, allow_skip = _extended(targets)
    alphas = _forward_alphas(lp, ext, allow_skip)
    betas = _backward_betas(lp, ext, allow_skip)
    last = alphas[-1]
    if ext.shape[0] == 1:
        log_total = last[0]
    else:
        log_total = np.logaddexp(last[-1], last[-2])
    gamma = alphas + betas - log_total
    occupancy = np.zeros_like(lp)
    for s, label in enumerate(ext):
        occupancy[:, label] += np.exp(gamma[:, s])
    return np.exp(lp) - occupancy


def ctc_loss_node(logits: Tensor, targets: list[int]) -> Tensor:
    """Autograd node: the loss applied to pre-softmax logits (T, |L|+1)."""
    lp = ag.log_softmax_np(logits.data)
    lattice = PosteriorLattice(lp)
    loss = ctc_loss(lattice, targets)
    grad = ctc_grad(lattice, targets)

    def _bwd(g):
        return (float(g) * grad.astype(logits.data.dtype),)

    return ag.custom((logits,), np.asarray(loss, dtype=logits.data.dtype), _bwd, "ctc_loss")


# -- brute-force oracle ----------------------------------------------------

_PATH_GROUPS: dict[tuple[int, int], dict[tuple[int, ...], np.ndarray]] = {}


def _grouped_paths(T: int, n_ext_labels: int) -> dict[tuple[int, ...], np.ndarray]:
    """All extended-alphabet paths of length T grouped by collapsed output."""
    key = (T, n_ext_labels)
    if key not in _PATH_GROUPS:
        groups: dict[tuple[int, ...], list[tuple[int, ...]]] = {}
        for path in itertools.product(range(n_ext_labels), repeat=T):
            groups.setdefault(tuple(collapse(path)), []).append(path)
        _PATH_GROUPS[key] = {
            out: np.array(paths, dtype=np.int64) for out, paths in groups.items()
        }
    return _PATH_GROUPS[key]


def brute_force_nll(lattice: PosteriorLattice, targets: list[int]) -> float:
    """Enumerate every path and sum the ones that collapse to the target."""
    lp = lattice.log_probs
    T, L = lp.shape
    groups = _grouped_paths(T, L)
    paths = groups.get(tuple(targets))
    if paths is None:
        return float("inf")
    scores = lp[np.arange(T), paths].sum(axis=1)
    return float(-ag.logsumexp(scores))


@dataclass
class OracleReport:
    n_instances: int
    max_rel_err: float
    elapsed_s: float
    failures: list[str] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return not self.failures

    def format(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        lines = ["%d instances, max_rel_err=%.3e, %.2fs: %s"
                 % (self.n_instances, self.max_rel_err, self.elapsed_s, status)]
        lines.extend(self.failures)
        return "\n".join(lines)


def random_instance(rng: np.random.Generator, t_max: int = 8, l_max: int = 3,
                    z_max: int = 4) -> tuple[PosteriorLattice, list[int]]:
    """Random small lattice plus a feasible target over it."""
    n_labels = int(rng.integers(1, l_max + 1))
    while True:
        T = int(rng.integers(1, t_max + 1))
        z_len = int(rng.integers(0, z_max + 1))
        targets = [int(rng.integers(0, n_labels)) for _ in range(z_len)]
        if T >= min_frames(targets):
            break
    logits = rng.normal(size=(T, n_labels + 1))
    return PosteriorLattice(ag.log_softmax_np(logits)), targets


def oracle_suite(n_instances: int = 200, seed: int = 0, rel_tol: float = 1e-10) -> OracleReport:
    """Check the recursion against full path enumeration on random instances."""
    rng = np.random.default_rng(seed)
    worst = 0.0
    failures = []
    start = time.perf_counter()
    for i in range(n_instances):
        lattice, targets = random_instance(rng)
        fast = np.exp(-ctc_loss(lattice, targets))
        slow = np.exp(-brute_force_nll(lattice, targets))
        rel = abs(fast - slow) / max(abs(slow), 1e-300)
        worst = max(worst, rel)
        if rel > rel_tol:
            failures.append(
                "instance %d: T=%d z=%s rel_err=%.3e" % (i, lattice.n_frames, targets, rel)
            )
    elapsed = time.perf_counter() - start
    return OracleReport(n_instances, worst, elapsed, failures)


# -- acoustic model ----------------------------------------------------------


@dataclass
class CtcArchConfig:
    input_dim: int = 120
    n_layers: int = 5
    hidden_dim: int = 200
    projection_dim: int = 100
    n_tokens: int = 43

    @property
    def n_outputs(self) -> int:
        return self.n_tokens + 1


class CtcAcousticModel:
    """Stacked bidirectional LSTM + projection layers with a softmax head."""

    def __init__(self, store: ParameterStore, cfg: CtcArchConfig, prefix: str = "am"):
        self.cfg = cfg
        self.layers = bilstm_stack(store, prefix, cfg.input_dim, cfg.n_layers,
                                   cfg.hidden_dim, cfg.projection_dim)
        self.out = make_affine(store, prefix + ".out", self.layers[-1].out_dim, cfg.n_outputs)

    def logits(self, X: Tensor) -> Tensor:
        if X.data.shape[1] != self.cfg.input_dim:
            raise DataValidationError(
                "acoustic model expects %d-dim frames, got %d"
                % (self.cfg.input_dim, X.data.shape[1])
            )
        H = X
        for layer in self.layers:
            H = layer(H)
        return self.out(H)

    def lattice(self, frames: np.ndarray) -> PosteriorLattice:
        with ag.no_grad():
            logits = self.logits(ag.constant(frames, name="frames"))
        return PosteriorLattice(ag.log_softmax_np(logits.data))

    def loss(self, X: Tensor, targets: list[int]) -> Tensor:
        return ctc_loss_node(self.logits(X), targets)


def am_forward(frames: np.ndarray, model: CtcAcousticModel) -> PosteriorLattice:
    return model.lattice(frames)


def greedy_decode(lattice: PosteriorLattice) -> Hypothesis:
    """Per-frame argmax then collapse; ties break toward the lowest index."""
    lp = lattice.log_probs
    best = np.argmax(lp, axis=1)
    score = float(lp[np.arange(lp.shape[0]), best].sum())
    return Hypothesis(tokens=collapse(best.tolist()), log_score=score, complete=True)


def validate_targets(vocab: Vocabulary, transcript: str) -> list[int]:
    """Encode a transcript for frame-synchronous training (no markers)."""
    vocab.validate_transcript(transcript)
    return vocab.encode(transcript)
