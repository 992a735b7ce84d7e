"""Visual adaptation: additive feature shifting and early fusion.

Two schemes condition a recognizer on the utterance's 100-dim visual
context vector:

* sum fusion: a small MLP maps the visual vector to a 120-dim bias that
  is added to every acoustic frame. The MLP trains jointly with the
  recognizer; its final layer starts at zero, so adaptation begins as
  the identity.
* early fusion: the visual vector is concatenated onto every frame,
  giving 220-dim inputs.
"""

from __future__ import annotations

import numpy as np

from . import autograd as ag
from .autograd import ParameterStore, Tensor
from .errors import DataValidationError
from .features import FUSED_DIM, STACKED_DIM, VISUAL_DIM
from .layers import Affine, make_affine

VAT_HIDDEN = 128


class VisualAdapter:
    """MLP 100 -> 128 (tanh) -> 120 (linear, zero-initialized output)."""

    def __init__(self, store: ParameterStore, prefix: str = "vat",
                 hidden_dim: int = VAT_HIDDEN, output_dim: int = STACKED_DIM):
        self.l1: Affine = make_affine(store, prefix + ".l1", VISUAL_DIM, hidden_dim)
        self.l2: Affine = make_affine(store, prefix + ".l2", hidden_dim, output_dim,
                                      init="zeros")
        self.output_dim = output_dim

    def bias(self, visual: np.ndarray) -> Tensor:
        visual = np.asarray(visual).reshape(1, -1)
        if visual.shape[1] != VISUAL_DIM:
            raise DataValidationError(
                "visual vector has dimension %d, expected %d" % (visual.shape[1], VISUAL_DIM)
            )
        v = ag.constant(visual, name="visual")
        return self.l2(ag.tanh(self.l1(v)))


def vat_fuse(audio: Tensor, visual: np.ndarray, adapter: VisualAdapter) -> Tensor:
    """Add the adapter's per-utterance bias to every acoustic frame."""
    if audio.data.shape[1] != adapter.output_dim:
        raise DataValidationError(
            "sum fusion expects %d-dim frames, got %d" % (adapter.output_dim, audio.data.shape[1])
        )
    return ag.add(audio, adapter.bias(visual))


def early_fuse(audio: np.ndarray, visual: np.ndarray) -> np.ndarray:
    """Concatenate the utterance's visual vector onto every frame."""
    audio = np.atleast_2d(np.asarray(audio))
    visual = np.asarray(visual).reshape(-1)
    if audio.shape[1] != STACKED_DIM:
        raise DataValidationError(
            "early fusion expects %d-dim audio frames, got %d" % (STACKED_DIM, audio.shape[1])
        )
    if visual.shape[0] != VISUAL_DIM:
        raise DataValidationError(
            "early fusion expects a %d-dim visual vector, got %d" % (VISUAL_DIM, visual.shape[0])
        )
    tiled = np.tile(visual.astype(audio.dtype), (audio.shape[0], 1))
    fused = np.concatenate([audio, tiled], axis=1)
    assert fused.shape[1] == FUSED_DIM
    return fused
