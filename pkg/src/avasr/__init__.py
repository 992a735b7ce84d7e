"""Audio-visual end-to-end speech recognition at desk scale.

Two model families over a character vocabulary: a frame-synchronous
blank-alphabet recognizer with greedy decoding, and an attention
encoder-decoder with beam search, each optionally conditioned on an
utterance-level visual context vector (additive sum fusion or frame
concatenation). Includes the feature pipeline, a reverse-mode autograd
core, SGD training, evaluation, and a synthetic corpus generator.
"""

__version__ = "0.1.0"

from .autograd import ParameterStore, Tensor, check_gradient, logsumexp, no_grad
from .corpus import (CorpusLayout, ManifestRow, SynthConfig, Utterance, gen_corpus,
                     load_corpus, parse_manifest)
from .ctc import (CtcAcousticModel, CtcArchConfig, PosteriorLattice, brute_force_nll,
                  collapse, ctc_grad, ctc_loss, ctc_loss_node, greedy_decode,
                  oracle_suite)
from .errors import (AvasrError, CtcInfeasibleError, DataValidationError,
                     NumericError, ShapeMismatchError, UsageError)
from .estimators import (CtcRecognizer, FrameStacker, LogMelExtractor,
                         Seq2SeqRecognizer, VisualConcatenator)
from .evaluation import (EvalReport, char_perplexity, evaluate, length_stats,
                         levenshtein, token_error_rate)
from .features import (FeatureSequence, VisualContext, Waveform, compute_logmel,
                       load_visual, read_features, read_wav, stack_and_oversample,
                       write_features, write_visual)
from .fusion import VisualAdapter, early_fuse, vat_fuse
from .layers import BiLstmLayer, LstmParams, dense_bridge, lstm_sequence, lstm_step, make_lstm
from .s2s import (EncoderStates, S2SArchConfig, Seq2SeqModel, attend,
                  attention_weights, beam_search, decode_utterance, pyramid_encode)
from .training import (System, TrainConfig, TrainResult, build_system,
                       curriculum_order, dev_ter, load_system, sgd_step, train)
from .vocab import DEFAULT_VOCAB, EOS, SOS, Hypothesis, Vocabulary

__all__ = [name for name in dir() if not name.startswith("_")]
