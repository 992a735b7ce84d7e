"""Command-line surface: synth, features, train, decode, eval, gradcheck,
ctc-oracle.

Options can also come from a flat key=value config file (--config);
explicit flags win. Exit codes: 0 success, 1 usage, 2 data validation,
3 numeric failure.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .corpus import SynthConfig, gen_corpus, load_corpus, parse_manifest
from .errors import (EXIT_OK, DataValidationError, NumericError, UsageError,
                     exit_code_for)
from .evaluation import (char_perplexity, evaluate, length_stats, write_eval_csv,
                         write_hist_csv, write_lengths_csv)
from .features import (FeatureSequence, compute_logmel, load_visual, read_features,
                       read_wav, stack_and_oversample, write_features)
from .fusion import early_fuse
from .training import TrainConfig, dev_ter, load_system, train
from .vocab import DEFAULT_VOCAB

log = logging.getLogger("avasr")


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _read_config_file(path) -> dict[str, str]:
    path = Path(path)
    if not path.exists():
        raise UsageError("config file not found: %s" % path)
    out = {}
    for lineno, line in enumerate(path.read_text().splitlines(), start=1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise UsageError("config line %d is not key=value: %r" % (lineno, line))
        key, value = line.split("=", 1)
        out[key.strip()] = value.strip()
    return out


def _apply_config_defaults(args: argparse.Namespace, parser: argparse.ArgumentParser) -> None:
    """Fill parser defaults from --config; explicit flags keep priority."""
    if not getattr(args, "config", None):
        return
    overrides = _read_config_file(args.config)
    explicit = set()
    for raw in sys.argv[1:]:
        if raw.startswith("--"):
            explicit.add(raw.lstrip("-").split("=", 1)[0].replace("-", "_"))
    for key, value in overrides.items():
        attr = key.replace("-", "_")
        if not hasattr(args, attr) or attr in explicit:
            continue
        current = getattr(args, attr)
        if isinstance(current, bool):
            setattr(args, attr, value.lower() in ("1", "true", "yes"))
        elif isinstance(current, int):
            setattr(args, attr, int(value))
        elif isinstance(current, float):
            setattr(args, attr, float(value))
        else:
            setattr(args, attr, value)


def _add_common_model_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--arch", choices=["ctc", "s2s"], default="ctc")
    p.add_argument("--adapt", choices=["none", "vat", "early"], default="none")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--precision", type=int, choices=[32, 64], default=64)
    p.add_argument("--config", default=None, help="flat key=value config file")


def build_parser() -> _Parser:
    parser = _Parser(prog="avasr", description=__doc__)
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic audio-visual corpus")
    p.add_argument("--out", required=True)
    p.add_argument("--utterances", type=int, default=100)
    p.add_argument("--dev", type=int, default=0)
    p.add_argument("--test", type=int, default=0)
    p.add_argument("--topics", type=int, default=4)
    p.add_argument("--words-per-topic", type=int, default=5)
    p.add_argument("--confusable-pairs", type=int, default=0)
    p.add_argument("--confusable-fraction", type=float, default=0.5)
    p.add_argument("--frames-per-char", default="2:4", help="lo:hi frames per character")
    p.add_argument("--noise-sigma", type=float, default=0.1)
    p.add_argument("--visual-noise-sigma", type=float, default=0.1)
    p.add_argument("--length-skew", choices=["uniform", "heavy_tail"], default="uniform")
    p.add_argument("--transcript-noise-rate", type=float, default=0.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--config", default=None)

    p = sub.add_parser("features", help="extract features from a WAV file")
    p.add_argument("--wav", required=True)
    p.add_argument("--out", required=True, help="40-dim log-mel output path")
    p.add_argument("--stack", action="store_true",
                   help="also write the three 120-dim stacked offsets")
    p.add_argument("--visual", default=None,
                   help="visual vector file; with --fuse writes a 220-dim file")
    p.add_argument("--fuse", action="store_true")
    p.add_argument("--config", default=None)

    p = sub.add_parser("train", help="train a recognizer on a manifest")
    p.add_argument("--train-manifest", required=True)
    p.add_argument("--dev-manifest", default=None)
    p.add_argument("--workdir", required=True)
    _add_common_model_flags(p)
    p.add_argument("--lr", type=float, default=0.2)
    p.add_argument("--decay", type=float, default=0.9)
    p.add_argument("--epochs", type=int, default=10)
    p.add_argument("--batch-size", type=int, default=16)
    p.add_argument("--clip-norm", type=float, default=5.0)
    p.add_argument("--beam", type=int, default=5)
    p.add_argument("--length-norm", action="store_true")
    p.add_argument("--no-oversample", action="store_true")
    p.add_argument("--eval-every", type=int, default=1)
    p.add_argument("--save-every", type=int, default=1)
    p.add_argument("--target-ter", type=float, default=None)
    p.add_argument("--ctc-layers", type=int, default=5)
    p.add_argument("--ctc-hidden", type=int, default=200)
    p.add_argument("--ctc-proj", type=int, default=100)
    p.add_argument("--enc-layers", type=int, default=3)
    p.add_argument("--enc-hidden", type=int, default=512)
    p.add_argument("--dec-layers", type=int, default=2)
    p.add_argument("--dec-hidden", type=int, default=512)
    p.add_argument("--embed-dim", type=int, default=64)

    p = sub.add_parser("decode", help="decode a manifest with a checkpoint")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--manifest", required=True)
    p.add_argument("--out", required=True, help="hypothesis TSV (id<TAB>text)")
    p.add_argument("--beam", type=int, default=None)
    p.add_argument("--length-norm", action="store_true")
    p.add_argument("--config", default=None)

    p = sub.add_parser("eval", help="score hypotheses against a manifest")
    p.add_argument("--manifest", required=True)
    p.add_argument("--hyp", required=True, help="hypothesis TSV from decode")
    p.add_argument("--out-dir", required=True)
    p.add_argument("--checkpoint", default=None,
                   help="attention checkpoint for character perplexity")
    p.add_argument("--buckets", default="10,20,40,80,160")
    p.add_argument("--config", default=None)

    p = sub.add_parser("gradcheck", help="finite-difference gradient suite")
    p.add_argument("--eps", type=float, default=1e-5)
    p.add_argument("--tol", type=float, default=1e-4)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--config", default=None)

    p = sub.add_parser("ctc-oracle", help="brute-force path enumeration check")
    p.add_argument("--instances", type=int, default=200)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--rel-tol", type=float, default=1e-10)
    p.add_argument("--config", default=None)

    return parser


def cmd_synth(args) -> int:
    lo, _, hi = args.frames_per_char.partition(":")
    cfg = SynthConfig(
        n_topics=args.topics, words_per_topic=args.words_per_topic,
        confusable_pairs=args.confusable_pairs,
        confusable_fraction=args.confusable_fraction,
        utterances=args.utterances, dev_utterances=args.dev,
        test_utterances=args.test,
        frames_per_char=(int(lo), int(hi or lo)),
        noise_sigma=args.noise_sigma, visual_noise_sigma=args.visual_noise_sigma,
        length_skew=args.length_skew,
        transcript_noise_rate=args.transcript_noise_rate, seed=args.seed,
    )
    layout = gen_corpus(cfg, args.out)
    for split, path in layout.manifests.items():
        print("%s: %s" % (split, path))
    print("stats: %s" % (layout.out_dir / "stats.txt"))
    return EXIT_OK


def cmd_features(args) -> int:
    wave = read_wav(args.wav)
    mel = compute_logmel(wave)
    write_features(args.out, mel)
    print("mel: %s (%d frames x %d)" % (args.out, mel.n_frames, mel.frame_dim))
    stacked0 = None
    if args.stack or args.fuse:
        copies = stack_and_oversample(mel)
        stacked0 = copies[0]
        if args.stack:
            for k, copy in enumerate(copies):
                path = "%s.stack%d" % (args.out, k)
                write_features(path, copy)
                print("stacked offset %d: %s (%d frames x %d)"
                      % (k, path, copy.n_frames, copy.frame_dim))
    if args.fuse:
        if not args.visual:
            raise UsageError("--fuse requires --visual")
        visual = load_visual(args.visual)
        fused = early_fuse(stacked0.frames, visual.vector)
        path = "%s.fused" % args.out
        write_features(path, FeatureSequence(fused, step_ms=stacked0.step_ms))
        print("fused: %s (%d frames x %d)" % (path, fused.shape[0], fused.shape[1]))
    return EXIT_OK


def cmd_train(args) -> int:
    cfg = TrainConfig(
        arch=args.arch, adapt=args.adapt, lr=args.lr, decay=args.decay,
        epochs=args.epochs, batch_size=args.batch_size, clip_norm=args.clip_norm,
        seed=args.seed, precision=args.precision, beam=args.beam,
        length_norm=args.length_norm, oversample=not args.no_oversample,
        eval_every=args.eval_every, save_every=args.save_every,
        target_ter=args.target_ter,
        ctc_layers=args.ctc_layers, ctc_hidden=args.ctc_hidden, ctc_proj=args.ctc_proj,
        enc_layers=args.enc_layers, enc_hidden=args.enc_hidden,
        dec_layers=args.dec_layers, dec_hidden=args.dec_hidden,
        embed_dim=args.embed_dim,
    )
    train_corpus = load_corpus(args.train_manifest)
    dev_corpus = load_corpus(args.dev_manifest) if args.dev_manifest else None
    result = train(train_corpus, dev_corpus, cfg, workdir=args.workdir)
    print("final checkpoint: %s" % result.final_path)
    if result.best_path is not None:
        print("best checkpoint: %s (dev TER %.4f at epoch %d)"
              % (result.best_path, result.best_ter, result.best_epoch))
    return EXIT_OK


def cmd_decode(args) -> int:
    system = load_system(args.checkpoint)
    corpus = load_corpus(args.manifest, system.vocab)
    with open(args.out, "w", encoding="utf-8") as fh:
        for utt in corpus:
            hyp = system.decode(utt, beam=args.beam,
                                length_norm=args.length_norm or None)
            fh.write("%s\t%s\n" % (utt.utterance_id, hyp.text(system.vocab)))
    print("wrote hypotheses to %s" % args.out)
    return EXIT_OK


def _read_hyp_tsv(path) -> dict[str, str]:
    path = Path(path)
    if not path.exists():
        raise DataValidationError("hypothesis file not found: %s" % path)
    hyps = {}
    for line in path.read_text(encoding="utf-8").splitlines():
        if not line:
            continue
        utt_id, _, text = line.partition("\t")
        hyps[utt_id] = text
    return hyps


def cmd_eval(args) -> int:
    rows = parse_manifest(args.manifest)
    refs = {r.utterance_id: r.transcript for r in rows}
    hyps = _read_hyp_tsv(args.hyp)
    report = evaluate(refs, hyps)
    if args.checkpoint:
        system = load_system(args.checkpoint)
        if system.cfg.arch != "s2s":
            raise DataValidationError("perplexity needs an attention checkpoint")
        corpus = load_corpus(args.manifest, system.vocab)
        pairs = [(system._views(u, all_copies=False)[0], u.transcript) for u in corpus]
        report.ppl = char_perplexity(system.s2s, pairs, system.vocab)
    edges = [int(x) for x in args.buckets.split(",") if x]
    rows_ls, hist = length_stats(refs, hyps, edges)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    write_eval_csv(out_dir / "eval.csv", report)
    write_lengths_csv(out_dir / "lengths.csv", rows_ls)
    write_hist_csv(out_dir / "hist.csv", edges, hist)
    print("TER %.4f over %d utterances%s" % (
        report.ter, len(report.rows),
        "" if report.ppl is None else "; PPL %.4f" % report.ppl))
    return EXIT_OK


def cmd_gradcheck(args) -> int:
    from .gradsuite import run_gradient_suite

    report_lines, passed = run_gradient_suite(eps=args.eps, tol=args.tol, seed=args.seed)
    for line in report_lines:
        print(line)
    if not passed:
        raise NumericError("gradient suite failed")
    return EXIT_OK


def cmd_ctc_oracle(args) -> int:
    from .ctc import oracle_suite

    report = oracle_suite(n_instances=args.instances, seed=args.seed,
                          rel_tol=args.rel_tol)
    print(report.format())
    if not report.passed:
        raise NumericError("path-enumeration check failed")
    return EXIT_OK


_COMMANDS = {
    "synth": cmd_synth,
    "features": cmd_features,
    "train": cmd_train,
    "decode": cmd_decode,
    "eval": cmd_eval,
    "gradcheck": cmd_gradcheck,
    "ctc-oracle": cmd_ctc_oracle,
}


def main(argv=None) -> int:
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(message)s")
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        _apply_config_defaults(args, parser)
        return _COMMANDS[args.command](args)
    except (UsageError, DataValidationError, NumericError) as exc:
        print("error: %s" % exc, file=sys.stderr)
        return exit_code_for(exc)


def entry() -> None:
    sys.exit(main())
