"""Token error rate, character perplexity, and length diagnostics.

TER is edit distance at the character level (space counts as a token,
sentence markers do not) normalized by total reference length, so it
can exceed 1 with enough insertions. Perplexity is the exponentiated
mean negative log-likelihood per predicted character under teacher
forcing, with </s> included as a prediction target.
"""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field

import numpy as np

from .errors import DataValidationError
from .vocab import Vocabulary

log = logging.getLogger("avasr")


def levenshtein(a: str, b: str) -> int:
    """Iterative edit distance over characters."""
    if len(a) < len(b):
        a, b = b, a
    prev = list(range(len(b) + 1))
    for i, ca in enumerate(a, start=1):
        cur = [i]
        for j, cb in enumerate(b, start=1):
            cur.append(min(prev[j] + 1, cur[j - 1] + 1, prev[j - 1] + (ca != cb)))
        prev = cur
    return prev[-1]


@dataclass
class EvalRow:
    utterance_id: str
    ref_len: int
    hyp_len: int
    edits: int


@dataclass
class EvalReport:
    ter: float
    total_edits: int
    total_ref_tokens: int
    rows: list[EvalRow] = field(default_factory=list)
    ppl: float | None = None


def align_by_id(refs: dict[str, str], hyps: dict[str, str]) -> list[tuple[str, str, str]]:
    """Pair references with hypotheses; missing hypotheses count as empty."""
    pairs = []
    for utt_id in refs:
        if utt_id not in hyps:
            log.warning("no hypothesis for %s: counted as all deletions", utt_id)
            pairs.append((utt_id, refs[utt_id], ""))
        else:
            pairs.append((utt_id, refs[utt_id], hyps[utt_id]))
    return pairs


def evaluate(refs: dict[str, str], hyps: dict[str, str]) -> EvalReport:
    if not refs:
        raise DataValidationError("no references to evaluate")
    rows = []
    total_edits = 0
    total_ref = 0
    for utt_id, ref, hyp in align_by_id(refs, hyps):
        edits = levenshtein(ref, hyp)
        rows.append(EvalRow(utt_id, len(ref), len(hyp), edits))
        total_edits += edits
        total_ref += len(ref)
    if total_ref == 0:
        raise DataValidationError("all references are empty")
    return EvalReport(ter=total_edits / total_ref, total_edits=total_edits,
                      total_ref_tokens=total_ref, rows=rows)


def token_error_rate(refs: dict[str, str], hyps: dict[str, str]) -> float:
    return evaluate(refs, hyps).ter


def char_perplexity(model, corpus, vocab: Vocabulary) -> float:
    """exp(mean per-character NLL) of an attention model, teacher forced.

    `corpus` yields (frames, transcript) pairs; each transcript
    contributes len + 1 prediction targets (the trailing </s>).
    """
    from . import autograd as ag

    total_nll = 0.0
    total_chars = 0
    n = 0
    for frames, transcript in corpus:
        targets = vocab.encode(transcript)
        with ag.no_grad():
            rows = model.teacher_logprob_rows(frames, targets, vocab)
        wanted = targets + [vocab.eos_id]
        total_nll -= float(rows.data[np.arange(len(wanted)), wanted].sum())
        total_chars += len(wanted)
        n += 1
    if n == 0:
        raise DataValidationError("empty corpus for perplexity")
    return float(np.exp(total_nll / total_chars))


def bucket_of(length: int, edges: list[int]) -> int:
    """Index of the first bucket whose upper edge admits the length."""
    for i, edge in enumerate(edges):
        if length <= edge:
            return i
    return len(edges)


def length_stats(refs: dict[str, str], hyps: dict[str, str],
                 edges: list[int]) -> tuple[list[tuple[str, int, int, int]], list[int]]:
    """Per-utterance (id, ref_len, hyp_len, bucket) rows plus a histogram
    of reference lengths over the given ascending bucket edges."""
    if sorted(edges) != list(edges):
        raise DataValidationError("bucket edges must be ascending")
    rows = []
    hist = [0] * (len(edges) + 1)
    for utt_id, ref, hyp in align_by_id(refs, hyps):
        b = bucket_of(len(ref), edges)
        rows.append((utt_id, len(ref), len(hyp), b))
        hist[b] += 1
    return rows, hist


# -- CSV writers -------------------------------------------------------------


def write_eval_csv(path, report: EvalReport) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["ter", "ppl", "total_edits", "total_ref_tokens", "utterances"])
        w.writerow([
            "%.6f" % report.ter,
            "" if report.ppl is None else "%.6f" % report.ppl,
            report.total_edits,
            report.total_ref_tokens,
            len(report.rows),
        ])


def write_lengths_csv(path, rows: list[tuple[str, int, int, int]]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["id", "ref_len", "hyp_len", "bucket"])
        for row in rows:
            w.writerow(row)


def write_hist_csv(path, edges: list[int], hist: list[int]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["bucket", "max_len", "count"])
        for i, count in enumerate(hist):
            upper = edges[i] if i < len(edges) else ""
            w.writerow([i, upper, count])
