"""Character vocabulary and decoded-hypothesis types.

The token set is fixed: 26 letters, 10 digits, '.', ''', '-', '/', the
space character, and the sentence markers <s> and </s> (43 tokens).
Frame-synchronous models emit over an extended alphabet with an extra
blank symbol at index 0, so their output columns are shifted by one
against vocabulary indices.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .errors import DataValidationError

SOS = "<s>"
EOS = "</s>"
BLANK = "<blank>"

_LETTERS = "abcdefghijklmnopqrstuvwxyz"
_DIGITS = "0123456789"
_SYMBOLS = ".'-/"
_SPACE = " "


class Vocabulary:
    """Ordered 43-token character inventory shared by both model families."""

    def __init__(self, tokens: list[str] | None = None):
        if tokens is None:
            tokens = list(_LETTERS) + list(_DIGITS) + list(_SYMBOLS) + [_SPACE, SOS, EOS]
        if len(set(tokens)) != len(tokens):
            raise DataValidationError("vocabulary tokens must be unique")
        if SOS not in tokens or EOS not in tokens:
            raise DataValidationError("vocabulary must contain %r and %r" % (SOS, EOS))
        self.tokens = list(tokens)
        self._index = {tok: i for i, tok in enumerate(self.tokens)}
        self.sos_id = self._index[SOS]
        self.eos_id = self._index[EOS]
        self.space_id = self._index[_SPACE]

    @property
    def size(self) -> int:
        return len(self.tokens)

    @property
    def blank_size(self) -> int:
        """Size of the extended alphabet with the blank at column 0."""
        return len(self.tokens) + 1

    def index(self, token: str) -> int:
        try:
            return self._index[token]
        except KeyError:
            raise DataValidationError("unknown token %r" % token) from None

    def __contains__(self, token: str) -> bool:
        return token in self._index

    def encode(self, text: str) -> list[int]:
        """Map transcript characters to token ids; rejects unknown characters."""
        ids = []
        for ch in text:
            if ch not in self._index:
                raise DataValidationError("character %r is not in the vocabulary" % ch)
            ids.append(self._index[ch])
        return ids

    def decode(self, ids: list[int], strip_markers: bool = True) -> str:
        parts = []
        for i in ids:
            if i < 0 or i >= len(self.tokens):
                raise DataValidationError("token id %d out of range" % i)
            tok = self.tokens[i]
            if strip_markers and tok in (SOS, EOS):
                continue
            parts.append(tok)
        return "".join(parts)

    def validate_transcript(self, text: str) -> None:
        """Transcripts may not contain the sentence markers themselves."""
        self.encode(text)
        if SOS in text or EOS in text:
            raise DataValidationError("transcript must not contain sentence markers")


DEFAULT_VOCAB = Vocabulary()


@dataclass
class Hypothesis:
    """A decoded token sequence with its accumulated log score.

    `tokens` are vocabulary ids. Attention-decoder hypotheses start with
    <s> and, when complete, end with </s>; frame-synchronous hypotheses
    carry bare characters. `normalized_score` divides by the number of
    content tokens (markers excluded), with a floor of one token.
    """

    tokens: list[int] = field(default_factory=list)
    log_score: float = 0.0
    complete: bool = True

    def content_tokens(self, vocab: Vocabulary) -> list[int]:
        return [t for t in self.tokens if t not in (vocab.sos_id, vocab.eos_id)]

    def text(self, vocab: Vocabulary) -> str:
        return vocab.decode(self.tokens, strip_markers=True)

    def normalized_score(self, vocab: Vocabulary) -> float:
        n = len(self.content_tokens(vocab))
        return self.log_score / max(1, n)
