"""Plain SGD training with epoch decay, curriculum ordering, checkpoints.

The first epoch presents utterances shortest-first (ties by id); later
epochs use a seeded shuffle. The learning rate for epoch e is
lr * decay^(e-1). Batch loss is the mean over utterances of the
per-utterance loss (frame-synchronous negative log likelihood, or the
summed per-character cross-entropy for the attention model), with
global-norm gradient clipping before each update.
"""

from __future__ import annotations

import csv
import logging
import time
from dataclasses import dataclass, fields
from pathlib import Path

import numpy as np

from . import autograd as ag
from .autograd import ParameterStore, Tensor
from .checkpoint import load_checkpoint, save_checkpoint
from .corpus import Utterance
from .ctc import (CtcAcousticModel, CtcArchConfig, check_feasible, ctc_loss_node,
                  greedy_decode)
from .errors import CtcInfeasibleError, DataValidationError
from .evaluation import evaluate
from .features import (FUSED_DIM, MEL_DIM, STACKED_DIM, FeatureSequence,
                       apply_stats, feature_stats, stack_and_oversample)
from .fusion import VisualAdapter, early_fuse, vat_fuse
from .s2s import S2SArchConfig, Seq2SeqModel, decode_utterance
from .vocab import DEFAULT_VOCAB, Vocabulary

log = logging.getLogger("avasr")

AUX_PREFIX = "aux."


@dataclass
class TrainConfig:
    arch: str = "ctc"            # ctc | s2s
    adapt: str = "none"          # none | vat | early
    lr: float = 0.2
    decay: float = 0.9
    epochs: int = 10
    batch_size: int = 16
    clip_norm: float = 5.0
    seed: int = 0
    precision: int = 64
    beam: int = 5
    length_norm: bool = False
    oversample: bool = True
    eval_every: int = 1
    target_ter: float | None = None
    save_every: int = 1
    ctc_layers: int = 5
    ctc_hidden: int = 200
    ctc_proj: int = 100
    enc_layers: int = 3
    enc_hidden: int = 512
    dec_layers: int = 2
    dec_hidden: int = 512
    embed_dim: int = 64

    def validate(self) -> None:
        if self.lr <= 0:
            raise DataValidationError("lr must be positive")
        if not 0 < self.decay <= 1:
            raise DataValidationError("decay must be in (0, 1]")
        if self.batch_size < 1 or self.epochs < 1:
            raise DataValidationError("batch_size and epochs must be >= 1")
        if self.arch not in ("ctc", "s2s"):
            raise DataValidationError("arch must be ctc or s2s")
        if self.adapt not in ("none", "vat", "early"):
            raise DataValidationError("adapt must be none, vat or early")
        if self.precision not in (32, 64):
            raise DataValidationError("precision must be 32 or 64")

    @property
    def dtype(self):
        return np.float32 if self.precision == 32 else np.float64

    @property
    def input_dim(self) -> int:
        return FUSED_DIM if self.adapt == "early" else STACKED_DIM

    def to_strings(self) -> dict[str, str]:
        out = {}
        for f in fields(self):
            v = getattr(self, f.name)
            out[f.name] = "" if v is None else str(v)
        return out

    @classmethod
    def from_strings(cls, raw: dict[str, str]) -> "TrainConfig":
        kwargs = {}
        for f in fields(cls):
            if f.name not in raw:
                continue
            s = raw[f.name]
            if f.name == "target_ter":
                kwargs[f.name] = None if s == "" else float(s)
            elif f.type == "int":
                kwargs[f.name] = int(s)
            elif f.type == "float":
                kwargs[f.name] = float(s)
            elif f.type == "bool":
                kwargs[f.name] = s == "True"
            else:
                kwargs[f.name] = s
        return cls(**kwargs)


def lr_for_epoch(cfg: TrainConfig, epoch: int) -> float:
    return cfg.lr * cfg.decay ** (epoch - 1)


def curriculum_order(lengths: list[int], ids: list[str], epoch: int, seed: int) -> list[int]:
    """Indices in presentation order: epoch 1 shortest-first, then shuffled."""
    if len(lengths) != len(ids):
        raise DataValidationError("lengths and ids must align")
    idx = list(range(len(lengths)))
    if epoch <= 1:
        idx.sort(key=lambda i: (lengths[i], ids[i]))
        return idx
    rng = np.random.default_rng((seed, epoch))
    return [int(i) for i in rng.permutation(len(lengths))]


def sgd_step(store: ParameterStore, lr: float, clip_norm: float) -> bool:
    """Clip by global norm, apply theta -= lr * grad, zero the grads.

    Returns False (after warning and zeroing) when any gradient is
    non-finite; the caller simply moves on to the next batch.
    """
    if not store.grads_finite():
        log.warning("non-finite gradient: skipping batch")
        store.zero_grad()
        return False
    norm = store.grad_global_norm()
    if clip_norm > 0 and norm > clip_norm:
        store.scale_grads(clip_norm / norm)
    for _, p in store.items():
        if p.grad is not None:
            p.data -= lr * p.grad
    store.zero_grad()
    return True


# -- system assembly ----------------------------------------------------------


@dataclass
class System:
    """A trainable/decodable bundle: parameters, model, optional adapter."""

    cfg: TrainConfig
    store: ParameterStore
    vocab: Vocabulary
    am: CtcAcousticModel | None = None
    s2s: Seq2SeqModel | None = None
    adapter: VisualAdapter | None = None
    cmvn_mean: np.ndarray | None = None
    cmvn_std: np.ndarray | None = None

    def normalize(self, frames: np.ndarray) -> np.ndarray:
        frames = np.asarray(frames, dtype=self.store.dtype)
        if self.cmvn_mean is None:
            return frames
        if frames.shape[1] != self.cmvn_mean.shape[0]:
            raise DataValidationError(
                "feature dim %d does not match normalization stats dim %d"
                % (frames.shape[1], self.cmvn_mean.shape[0])
            )
        return apply_stats(frames, self.cmvn_mean.astype(self.store.dtype),
                           self.cmvn_std.astype(self.store.dtype))

    def _views(self, utt: Utterance, all_copies: bool) -> list[np.ndarray]:
        """Model-ready feature matrices: normalized, stacked, fused."""
        frames = self.normalize(utt.features)
        if frames.shape[1] == MEL_DIM:
            copies = stack_and_oversample(FeatureSequence(frames, step_ms=10))
            mats = [c.frames for c in copies if c.n_frames > 0]
            if not all_copies:
                mats = mats[:1]
        else:
            mats = [frames]
        if self.cfg.adapt == "early" and mats and mats[0].shape[1] == STACKED_DIM:
            if utt.visual is None:
                raise DataValidationError(
                    "utterance %s has no visual vector but adapt=early" % utt.utterance_id
                )
            mats = [early_fuse(m, utt.visual) for m in mats]
        return mats

    def _graph_input(self, frames: np.ndarray, visual: np.ndarray | None) -> Tensor:
        X = ag.constant(frames, name="frames")
        if self.cfg.adapt == "vat":
            if visual is None:
                raise DataValidationError("missing visual vector with adapt=vat")
            X = vat_fuse(X, visual, self.adapter)
        return X

    def utterance_loss(self, frames: np.ndarray, visual: np.ndarray | None,
                       transcript: str) -> Tensor:
        X = self._graph_input(frames, visual)
        targets = self.vocab.encode(transcript)
        if self.cfg.arch == "ctc":
            return ctc_loss_node(self.am.logits(X), targets)
        return self.s2s.loss_from_tensor(X, targets, self.vocab)

    def decode(self, utt: Utterance, beam: int | None = None,
               length_norm: bool | None = None):
        """Decode an utterance to a hypothesis (offset-0 view of features)."""
        from .s2s import beam_search, pyramid_encode

        frames = self._views(utt, all_copies=False)[0]
        with ag.no_grad():
            X = self._graph_input(frames, utt.visual)
            if self.cfg.arch == "ctc":
                from .autograd import log_softmax_np
                from .ctc import PosteriorLattice

                lattice = PosteriorLattice(log_softmax_np(self.am.logits(X).data))
                return greedy_decode(lattice)
            enc = pyramid_encode(X, self.s2s.enc_layers)
            hyps = beam_search(
                self.s2s, enc, self.vocab,
                beam=self.cfg.beam if beam is None else beam,
                length_norm=self.cfg.length_norm if length_norm is None else length_norm,
            )
        return hyps[0]

    def transcribe(self, utt: Utterance, **kw) -> str:
        return self.decode(utt, **kw).text(self.vocab)


def build_system(cfg: TrainConfig, vocab: Vocabulary = DEFAULT_VOCAB) -> System:
    cfg.validate()
    store = ParameterStore(seed=cfg.seed, dtype=cfg.dtype)
    system = System(cfg=cfg, store=store, vocab=vocab)
    if cfg.adapt == "vat":
        system.adapter = VisualAdapter(store)
    if cfg.arch == "ctc":
        arch = CtcArchConfig(input_dim=cfg.input_dim, n_layers=cfg.ctc_layers,
                             hidden_dim=cfg.ctc_hidden, projection_dim=cfg.ctc_proj,
                             n_tokens=vocab.size)
        system.am = CtcAcousticModel(store, arch)
    else:
        arch = S2SArchConfig(input_dim=cfg.input_dim, enc_layers=cfg.enc_layers,
                             enc_hidden=cfg.enc_hidden, dec_layers=cfg.dec_layers,
                             dec_hidden=cfg.dec_hidden, embed_dim=cfg.embed_dim,
                             n_tokens=vocab.size)
        system.s2s = Seq2SeqModel(store, arch)
    return system


# -- training loop -------------------------------------------------------------


@dataclass
class TrainItem:
    utterance_id: str
    frames: np.ndarray
    visual: np.ndarray | None
    transcript: str


@dataclass
class TrainResult:
    system: System
    metrics: list[tuple[int, str, str, str]]
    best_ter: float | None
    best_epoch: int | None
    best_path: Path | None = None
    final_path: Path | None = None


def _prepare_items(system: System, corpus: list[Utterance]) -> list[TrainItem]:
    cfg = system.cfg
    items: list[TrainItem] = []
    skipped = 0
    for utt in corpus:
        mats = system._views(utt, all_copies=cfg.oversample)
        for k, mat in enumerate(mats):
            if cfg.arch == "ctc":
                try:
                    check_feasible(mat.shape[0], system.vocab.encode(utt.transcript))
                except CtcInfeasibleError as exc:
                    skipped += 1
                    log.warning("skipping %s (copy %d): %s", utt.utterance_id, k, exc)
                    continue
            items.append(TrainItem("%s#%d" % (utt.utterance_id, k), mat,
                                   utt.visual, utt.transcript))
    if skipped:
        log.warning("skipped %d infeasible training copies", skipped)
    if not items:
        raise DataValidationError("no usable training items")
    return items


def fit_normalization(system: System, corpus: list[Utterance]) -> None:
    mean, std = feature_stats([utt.features for utt in corpus])
    system.cmvn_mean = mean
    system.cmvn_std = std


def corpus_loss(system: System, corpus: list[Utterance]) -> float:
    """Mean per-utterance loss without gradient bookkeeping (offset-0 views)."""
    total = 0.0
    for utt in corpus:
        frames = system._views(utt, all_copies=False)[0]
        total += system.utterance_loss(frames, utt.visual, utt.transcript).item()
    return total / len(corpus)


def decode_corpus(system: System, corpus: list[Utterance], **kw) -> dict[str, str]:
    return {utt.utterance_id: system.transcribe(utt, **kw) for utt in corpus}


def dev_ter(system: System, corpus: list[Utterance], **kw) -> float:
    refs = {utt.utterance_id: utt.transcript for utt in corpus}
    return evaluate(refs, decode_corpus(system, corpus, **kw)).ter


def _save(system: System, path: Path, epoch: int,
          state: dict[str, np.ndarray] | None = None) -> None:
    tensors = dict(state if state is not None else system.store.state_dict())
    if system.cmvn_mean is not None:
        tensors[AUX_PREFIX + "cmvn_mean"] = system.cmvn_mean
        tensors[AUX_PREFIX + "cmvn_std"] = system.cmvn_std
    save_checkpoint(path, tensors, system.cfg.to_strings(), system.vocab.tokens, epoch)


def load_system(path) -> System:
    """Rebuild a system from a checkpoint (architecture, weights, stats)."""
    data = load_checkpoint(path)
    cfg = TrainConfig.from_strings(data.config)
    vocab = Vocabulary(data.vocab_tokens)
    system = build_system(cfg, vocab)
    state = {}
    for name, arr in data.tensors.items():
        if name == AUX_PREFIX + "cmvn_mean":
            system.cmvn_mean = arr.astype(np.float64)
        elif name == AUX_PREFIX + "cmvn_std":
            system.cmvn_std = arr.astype(np.float64)
        else:
            state[name] = arr
    system.store.load_state_dict({k: v.astype(cfg.dtype) for k, v in state.items()})
    return system


def train(train_corpus: list[Utterance], dev_corpus: list[Utterance] | None,
          cfg: TrainConfig, workdir=None, vocab: Vocabulary = DEFAULT_VOCAB) -> TrainResult:
    """Run the full training loop; returns the system plus metric rows.

    Saves per-epoch checkpoints (subject to save_every), the best-dev
    checkpoint and a final checkpoint under `workdir` when given, along
    with a metrics.csv of (epoch, split, loss, ter) rows.
    """
    cfg.validate()
    if not train_corpus:
        raise DataValidationError("empty training corpus")
    if cfg.adapt in ("vat", "early"):
        for utt in train_corpus:
            if utt.visual is None:
                raise DataValidationError(
                    "utterance %s lacks a visual vector but adapt=%s"
                    % (utt.utterance_id, cfg.adapt)
                )
    system = build_system(cfg, vocab)
    fit_normalization(system, train_corpus)
    items = _prepare_items(system, train_corpus)
    lengths = [item.frames.shape[0] for item in items]
    ids = [item.utterance_id for item in items]
    workdir = Path(workdir) if workdir is not None else None
    if workdir is not None:
        workdir.mkdir(parents=True, exist_ok=True)
    metrics: list[tuple[int, str, str, str]] = []
    best_ter = None
    best_epoch = None
    best_state = None
    for epoch in range(1, cfg.epochs + 1):
        t0 = time.perf_counter()
        lr = lr_for_epoch(cfg, epoch)
        order = curriculum_order(lengths, ids, epoch, cfg.seed)
        losses = []
        for lo in range(0, len(order), cfg.batch_size):
            batch = order[lo:lo + cfg.batch_size]
            system.store.zero_grad()
            for i in batch:
                item = items[i]
                loss = system.utterance_loss(item.frames, item.visual, item.transcript)
                losses.append(loss.item())
                loss.backward(seed=1.0 / len(batch))
            sgd_step(system.store, lr, cfg.clip_norm)
        mean_loss = float(np.mean(losses))
        metrics.append((epoch, "train", "%.6f" % mean_loss, ""))
        ter = None
        if dev_corpus and (epoch % cfg.eval_every == 0 or epoch == cfg.epochs):
            ter = dev_ter(system, dev_corpus)
            metrics.append((epoch, "dev", "", "%.6f" % ter))
            if best_ter is None or ter < best_ter:
                best_ter = ter
                best_epoch = epoch
                best_state = system.store.state_dict()
        log.info("epoch %d: lr=%.4f loss=%.4f%s (%.1fs)", epoch, lr, mean_loss,
                 "" if ter is None else " dev_ter=%.4f" % ter,
                 time.perf_counter() - t0)
        if workdir is not None and cfg.save_every and epoch % cfg.save_every == 0:
            _save(system, workdir / ("epoch_%04d.ckpt" % epoch), epoch)
        if cfg.target_ter is not None and ter is not None and ter <= cfg.target_ter:
            log.info("reached target dev TER %.4f at epoch %d", ter, epoch)
            break
    result = TrainResult(system, metrics, best_ter, best_epoch)
    if workdir is not None:
        final_path = workdir / "final.ckpt"
        _save(system, final_path, epoch)
        result.final_path = final_path
        if best_state is not None:
            best_path = workdir / "best.ckpt"
            _save(system, best_path, best_epoch, state=best_state)
            result.best_path = best_path
        with open(workdir / "metrics.csv", "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["epoch", "split", "loss", "ter"])
            for row in metrics:
                w.writerow(row)
    if best_state is not None:
        # leave the system holding its best-dev weights
        system.store.load_state_dict(best_state)
    return result
