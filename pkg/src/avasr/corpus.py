"""Synthetic audio-visual corpus generation and dataset manifests.

Each topic owns a lexicon of words and a fixed random 100-dim visual
anchor. Utterance audio renders every transcript character as a few
noisy copies of that character's fixed 40-dim template. Confusable-pair
utterances are the controlled instrument for adaptation experiments:
the two words of a pair share one acoustic rendering but have different
spellings in different topics, so audio alone cannot beat chance on
them while the visual anchor resolves them completely. The generator
emits that chance floor with the corpus.

Manifest format: one utterance per line, UTF-8, tab-separated:
  id <TAB> feature_path <TAB> visual_path-or-"-" <TAB> transcript
Paths are relative to the manifest's directory.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import DataValidationError
from .evaluation import bucket_of, levenshtein
from .features import (FeatureSequence, VisualContext, read_features,
                       load_visual, write_features, write_visual)
from .vocab import DEFAULT_VOCAB, Vocabulary

log = logging.getLogger("avasr")

LENGTH_BUCKET_EDGES = [10, 20, 40, 80, 160]
_WORD_CHARS = "abcdefghijklmnopqrstuvwxyz"


@dataclass
class SynthConfig:
    n_topics: int = 4
    words_per_topic: int = 5
    confusable_pairs: int = 0
    utterances: int = 100
    dev_utterances: int = 0
    test_utterances: int = 0
    frames_per_char: tuple[int, int] = (2, 4)
    noise_sigma: float = 0.1
    visual_noise_sigma: float = 0.1
    length_skew: str = "uniform"  # uniform | heavy_tail
    transcript_noise_rate: float = 0.0
    confusable_fraction: float = 0.5
    seed: int = 0

    def validate(self) -> None:
        if self.n_topics < 1 or self.words_per_topic < 1 or self.utterances < 1:
            raise DataValidationError("topic, word and utterance counts must be positive")
        if self.confusable_pairs < 0 or self.dev_utterances < 0 or self.test_utterances < 0:
            raise DataValidationError("counts must be non-negative")
        if self.confusable_pairs > self.n_topics * self.words_per_topic:
            raise DataValidationError(
                "%d confusable pairs exceed the %d lexicon words"
                % (self.confusable_pairs, self.n_topics * self.words_per_topic)
            )
        if self.confusable_pairs > 0 and self.n_topics < 2:
            raise DataValidationError("confusable pairs need at least 2 topics")
        lo, hi = self.frames_per_char
        if lo < 1 or hi < lo:
            raise DataValidationError("frames_per_char range must satisfy 1 <= lo <= hi")
        if self.length_skew not in ("uniform", "heavy_tail"):
            raise DataValidationError("length_skew must be uniform or heavy_tail")
        if not 0.0 <= self.transcript_noise_rate <= 1.0:
            raise DataValidationError("transcript_noise_rate must be in [0, 1]")
        if not 0.0 <= self.confusable_fraction <= 1.0:
            raise DataValidationError("confusable_fraction must be in [0, 1]")


@dataclass
class ConfusablePair:
    word_a: str
    word_b: str
    topic_a: int
    topic_b: int
    templates: np.ndarray  # (len(word), 40), shared by both spellings

    @property
    def edit_distance(self) -> int:
        return levenshtein(self.word_a, self.word_b)


@dataclass
class World:
    """Everything shared across splits: lexicon, templates, anchors."""

    char_templates: dict[str, np.ndarray]
    topics: list[list[str]]
    pairs: list[ConfusablePair]
    anchors: np.ndarray  # (n_topics, 100)


@dataclass
class ManifestRow:
    utterance_id: str
    feature_path: Path
    visual_path: Path | None
    transcript: str


@dataclass
class Utterance:
    """In-memory training/decoding unit with features already loaded."""

    utterance_id: str
    features: np.ndarray
    visual: np.ndarray | None
    transcript: str


@dataclass
class CorpusLayout:
    out_dir: Path
    manifests: dict[str, Path]
    stats: dict[str, float | int | str] = field(default_factory=dict)


def _random_word(rng: np.random.Generator, used: set[str], lo: int = 3, hi: int = 6) -> str:
    while True:
        n = int(rng.integers(lo, hi + 1))
        word = "".join(_WORD_CHARS[int(rng.integers(0, 26))] for _ in range(n))
        if word not in used:
            used.add(word)
            return word


def _confusable_counterpart(rng: np.random.Generator, word: str, used: set[str]) -> str:
    """Same length, different letter at every position."""
    while True:
        out = []
        for ch in word:
            while True:
                c = _WORD_CHARS[int(rng.integers(0, 26))]
                if c != ch:
                    out.append(c)
                    break
        cand = "".join(out)
        if cand not in used:
            used.add(cand)
            return cand


def build_world(cfg: SynthConfig) -> World:
    rng = np.random.default_rng(cfg.seed)
    chars = _WORD_CHARS + " "
    templates = {ch: rng.normal(size=40) for ch in chars}
    used: set[str] = set()
    topics = [[_random_word(rng, used) for _ in range(cfg.words_per_topic)]
              for _ in range(cfg.n_topics)]
    pairs = []
    for k in range(cfg.confusable_pairs):
        word_a = _random_word(rng, used, lo=4, hi=6)
        word_b = _confusable_counterpart(rng, word_a, used)
        shared = rng.normal(size=(len(word_a), 40))
        pairs.append(ConfusablePair(word_a, word_b, k % cfg.n_topics,
                                    (k + 1) % cfg.n_topics, shared))
    anchors = rng.normal(size=(cfg.n_topics, 100))
    return World(templates, topics, pairs, anchors)


def _n_words(rng: np.random.Generator, skew: str) -> int:
    if skew == "uniform":
        return int(rng.integers(1, 6))
    return 1 + min(30, int(2.0 * rng.pareto(1.5)))


def _noisy_transcript(rng: np.random.Generator, words: list[str], rate: float) -> str:
    """Drop words or insert false starts in the written form only."""
    out = []
    for w in words:
        u = rng.random()
        if u < rate / 2 and len(words) > 1:
            continue
        if u < rate:
            out.append(w[: int(rng.integers(1, min(3, len(w)) + 1))])
        out.append(w)
    if not out:
        out = [words[0]]
    return " ".join(out)


def _render_chars(rng: np.random.Generator, templates: list[np.ndarray],
                  cfg: SynthConfig) -> np.ndarray:
    lo, hi = cfg.frames_per_char
    rows = []
    for tpl in templates:
        n = int(rng.integers(lo, hi + 1))
        for _ in range(n):
            rows.append(tpl + cfg.noise_sigma * rng.normal(size=40))
    return np.asarray(rows)


def _is_confusable_slot(i: int, fraction: float) -> bool:
    return int((i + 1) * fraction) > int(i * fraction)


def render_split(world: World, cfg: SynthConfig, split: str, count: int,
                 start_index: int, out_dir: Path) -> tuple[list[ManifestRow], dict]:
    """Render one split; per-utterance RNG streams are seed ^ global index."""
    feat_dir = out_dir / "feats"
    vis_dir = out_dir / "visual"
    feat_dir.mkdir(parents=True, exist_ok=True)
    vis_dir.mkdir(parents=True, exist_ok=True)
    rows = []
    f_counter = 0
    pair_occurrence = [0] * max(1, len(world.pairs))
    c_counter = 0
    pair_counts: dict[tuple[int, int], int] = {}
    for i in range(count):
        global_index = start_index + i
        rng = np.random.default_rng(cfg.seed ^ global_index)
        utt_id = "%s_%05d" % (split, i + 1)
        use_pair = world.pairs and _is_confusable_slot(i, cfg.confusable_fraction)
        if use_pair:
            k = c_counter % len(world.pairs)
            side = pair_occurrence[k] % 2
            pair_occurrence[k] += 1
            c_counter += 1
            pair = world.pairs[k]
            transcript = pair.word_a if side == 0 else pair.word_b
            topic = pair.topic_a if side == 0 else pair.topic_b
            frames = _render_chars(rng, list(pair.templates), cfg)
            pair_counts[(k, side)] = pair_counts.get((k, side), 0) + 1
        else:
            topic = f_counter % len(world.topics)
            f_counter += 1
            lexicon = world.topics[topic]
            words: list[str] = []
            for _ in range(_n_words(rng, cfg.length_skew)):
                # no adjacent duplicates: immediate word repeats are rare in
                # real speech and pathological for attention decoders
                while True:
                    w = lexicon[int(rng.integers(0, len(lexicon)))]
                    if len(lexicon) == 1 or not words or w != words[-1]:
                        words.append(w)
                        break
            spoken = " ".join(words)
            # audio always renders the spoken words; written-form noise is
            # applied last so it cannot shift the audio/visual noise draws
            frames = _render_chars(rng, [world.char_templates[ch] for ch in spoken], cfg)
            transcript = spoken
        visual = world.anchors[topic] + cfg.visual_noise_sigma * rng.normal(size=100)
        if not use_pair and cfg.transcript_noise_rate > 0:
            transcript = _noisy_transcript(rng, transcript.split(" "),
                                           cfg.transcript_noise_rate)
        feat_path = feat_dir / ("%s.e2ef" % utt_id)
        vis_path = vis_dir / ("%s.e2ev" % utt_id)
        write_features(feat_path, FeatureSequence(frames, step_ms=10))
        write_visual(vis_path, VisualContext(visual, utterance_id=utt_id))
        rows.append(ManifestRow(utt_id, feat_path, vis_path, transcript))
    info = {"pair_counts": pair_counts, "n_utterances": count}
    return rows, info


def chance_floor(world: World, rows: list[ManifestRow],
                 pair_counts: dict[tuple[int, int], int]) -> tuple[int, int, float]:
    """Best-case edits an audio-only system must still make on a split.

    For every confusable pair the optimal audio-only output is the
    majority spelling, which costs the pair's edit distance on each
    minority occurrence. Returns (floor_edits, total_ref_chars, floor_ter).
    """
    floor_edits = 0
    for k, pair in enumerate(world.pairs):
        cnt_a = pair_counts.get((k, 0), 0)
        cnt_b = pair_counts.get((k, 1), 0)
        floor_edits += pair.edit_distance * min(cnt_a, cnt_b)
    total_chars = sum(len(r.transcript) for r in rows)
    ter = floor_edits / total_chars if total_chars else 0.0
    return floor_edits, total_chars, ter


def write_manifest(path: Path, rows: list[ManifestRow]) -> None:
    base = path.parent
    with open(path, "w", encoding="utf-8") as fh:
        for r in rows:
            vis = r.visual_path.relative_to(base) if r.visual_path else "-"
            fh.write("%s\t%s\t%s\t%s\n" % (r.utterance_id, r.feature_path.relative_to(base),
                                           vis, r.transcript))


def parse_manifest(path, vocab: Vocabulary = DEFAULT_VOCAB) -> list[ManifestRow]:
    path = Path(path)
    if not path.exists():
        raise DataValidationError("manifest not found: %s" % path)
    rows = []
    seen: set[str] = set()
    base = path.parent
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.rstrip("\n")
            if not line:
                continue
            parts = line.split("\t")
            if len(parts) != 4:
                raise DataValidationError(
                    "manifest %s line %d: expected 4 tab-separated fields" % (path, lineno)
                )
            utt_id, feat, vis, transcript = parts
            if utt_id in seen:
                raise DataValidationError(
                    "manifest %s line %d: duplicate id %r" % (path, lineno, utt_id)
                )
            seen.add(utt_id)
            for ch in transcript:
                if ch not in vocab:
                    raise DataValidationError(
                        "manifest %s line %d: utterance %r has unknown character %r"
                        % (path, lineno, utt_id, ch)
                    )
            rows.append(ManifestRow(
                utt_id,
                base / feat,
                None if vis == "-" else base / vis,
                transcript,
            ))
    return rows


def load_corpus(manifest_path, vocab: Vocabulary = DEFAULT_VOCAB) -> list[Utterance]:
    utts = []
    for row in parse_manifest(manifest_path, vocab):
        fs = read_features(row.feature_path)
        visual = None
        if row.visual_path is not None:
            visual = load_visual(row.visual_path, row.utterance_id).vector
        utts.append(Utterance(row.utterance_id, fs.frames, visual, row.transcript))
    return utts


def _write_length_report(path: Path, per_split_rows: dict[str, list[ManifestRow]]) -> None:
    import csv

    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["split", "bucket", "max_len", "count"])
        for split, rows in per_split_rows.items():
            hist = [0] * (len(LENGTH_BUCKET_EDGES) + 1)
            for r in rows:
                hist[bucket_of(len(r.transcript), LENGTH_BUCKET_EDGES)] += 1
            for b, count in enumerate(hist):
                upper = LENGTH_BUCKET_EDGES[b] if b < len(LENGTH_BUCKET_EDGES) else ""
                w.writerow([split, b, upper, count])


def gen_corpus(cfg: SynthConfig, out_dir) -> CorpusLayout:
    """Generate train/dev/test splits, manifests, and corpus statistics."""
    cfg.validate()
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    world = build_world(cfg)
    splits = [("train", cfg.utterances)]
    if cfg.dev_utterances:
        splits.append(("dev", cfg.dev_utterances))
    if cfg.test_utterances:
        splits.append(("test", cfg.test_utterances))
    manifests = {}
    stats: dict[str, float | int | str] = {"seed": cfg.seed, "n_pairs": len(world.pairs)}
    start_index = 1
    per_split_rows = {}
    for split, count in splits:
        rows, info = render_split(world, cfg, split, count, start_index, out_dir)
        start_index += count
        manifest_path = out_dir / ("%s.manifest" % split)
        write_manifest(manifest_path, rows)
        manifests[split] = manifest_path
        per_split_rows[split] = rows
        edits, chars, ter = chance_floor(world, rows, info["pair_counts"])
        stats["%s_utterances" % split] = count
        stats["%s_ref_chars" % split] = chars
        stats["%s_chance_floor_edits" % split] = edits
        stats["%s_chance_penalty_ter" % split] = ter
    for k, pair in enumerate(world.pairs):
        stats["pair%d" % k] = "%s|%s|d=%d" % (pair.word_a, pair.word_b, pair.edit_distance)
    with open(out_dir / "stats.txt", "w", encoding="utf-8") as fh:
        for key, value in stats.items():
            fh.write("%s=%s\n" % (key, value))
    _write_length_report(out_dir / "lengths_report.csv", per_split_rows)
    log.info("generated corpus under %s: %s", out_dir,
             ", ".join("%s=%d" % (s, c) for s, c in splits))
    return CorpusLayout(out_dir, manifests, stats)


def read_stats(out_dir) -> dict[str, str]:
    path = Path(out_dir) / "stats.txt"
    if not path.exists():
        raise DataValidationError("no stats.txt under %s" % out_dir)
    stats = {}
    for line in path.read_text(encoding="utf-8").splitlines():
        if "=" in line:
            key, value = line.split("=", 1)
            stats[key] = value
    return stats
