"""Command-line surface: train, translate, evaluate, and the utility tools.

Every failure path prints a single machine-parsable error code line to
stderr before the human-readable message, and exits nonzero.
"""

from __future__ import annotations

import argparse
import os
import sys

import numpy as np

from .autodiff import ShapeError
from .bleu import bleu_n, reduced_bleu_report
from .checkpoint import load_checkpoint, restore_model
from .config import load_config
from .dataio import load_keypoints, load_manifest, load_samples
from .decoding import beam_search
from .errors import (
    CheckpointError,
    ConfigError,
    ParseError,
    TrainingDiverged,
)
from .features import load_features
from .gradcheck import run_gradient_suite
from .model import Sample
from .skeleton import build_hops, pose_topology
from .tokenizer import (
    build_blacklist,
    load_blacklist,
    save_blacklist,
    save_vocabulary,
    train_subword,
)
from .training import train


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _build_parser() -> _Parser:
    parser = _Parser(prog="signfusion",
                     description="two-stream gloss-free sign language translation")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train a model from a dataset manifest")
    p.add_argument("--config", required=True)
    p.add_argument("--manifest", required=True)
    p.add_argument("--out", default="checkpoints")
    p.add_argument("--resume", default=None,
                   help="checkpoint to continue from")

    p = sub.add_parser("translate", help="decode one keypoint file to text")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--keypoints", required=True)
    p.add_argument("--features", default=None)

    p = sub.add_parser("evaluate", help="score hypothesis lines against references")
    p.add_argument("--ref", required=True)
    p.add_argument("--hyp", required=True)
    p.add_argument("--blacklist", default=None)

    p = sub.add_parser("build-vocab", help="learn a sub-word vocabulary")
    p.add_argument("--corpus", required=True)
    p.add_argument("--size", required=True, type=int)
    p.add_argument("--out", default=None)

    p = sub.add_parser("blacklist", help="write the top-K most frequent words")
    p.add_argument("--corpus", required=True)
    p.add_argument("--top", required=True, type=int)
    p.add_argument("--out", default="blacklist.txt")

    sub.add_parser("gradcheck", help="run the finite-difference gradient suite")

    p = sub.add_parser("dump-graph", help="emit skeleton adjacency matrices as CSV")
    p.add_argument("--hops", type=int, default=1)
    p.add_argument("--out", default=".")
    return parser


def _read_lines(path) -> list:
    with open(path, encoding="utf-8") as fh:
        return [line.rstrip("\n") for line in fh]


def _cmd_train(args) -> int:
    config = load_config(args.config)
    manifest = load_manifest(args.manifest)
    if len(manifest) == 0:
        raise ParseError(args.manifest, "manifest contains no records")
    samples = load_samples(manifest)
    if args.resume:
        model, vocab, state, optimizer = restore_model(load_checkpoint(args.resume))
        config = model.config
    else:
        model = state = optimizer = None
        vocab = train_subword([s.text for s in samples], config.vocab_size)
    model, state, _ = train(config, samples, vocab, out_dir=args.out,
                            model=model, state=state, optimizer=optimizer,
                            log=print)
    print(f"finished epoch {state.epoch} at step {state.step}; "
          f"best BLEU-4 {max(state.best_bleu4, 0.0):.2f}")
    return 0


def _cmd_translate(args) -> int:
    model, vocab, _, _ = restore_model(load_checkpoint(args.checkpoint))
    keypoints = load_keypoints(args.keypoints)
    features = load_features(args.features) if args.features else None
    sample = Sample(sample_id="cli", keypoints=keypoints, text="",
                    features=features)
    result = beam_search(
        model.step_fn(sample), vocab_size=len(vocab),
        beam_size=model.config.beam_size, max_len=model.config.max_decode_len,
        length_norm=model.config.beam_length_norm,
    )
    print(vocab.decode(result.tokens))
    return 0


def _cmd_evaluate(args) -> int:
    refs = _read_lines(args.ref)
    hyps = _read_lines(args.hyp)
    if len(refs) != len(hyps):
        raise ParseError(args.hyp,
                         f"{len(hyps)} hypotheses vs {len(refs)} references")
    report = bleu_n(hyps, refs, n=4)
    for n in (1, 2, 3, 4):
        print(f"BLEU-{n} = {report.scores[n]:.2f}")
    if args.blacklist:
        blacklist = load_blacklist(args.blacklist)
        reduced = reduced_bleu_report(hyps, refs, blacklist, n=4)
        print(f"rBLEU = {reduced.scores[4]:.2f}")
        if reduced.empty_references:
            print(f"rBLEU_empty_references = {reduced.empty_references}")
    print(f"BP = {report.brevity_penalty:.6f}")
    print(f"hyp_len = {report.hyp_length}")
    print(f"ref_len = {report.ref_length}")
    return 0


def _cmd_build_vocab(args) -> int:
    corpus = [line for line in _read_lines(args.corpus) if line.strip()]
    vocab = train_subword(corpus, args.size)
    out = args.out or args.corpus + ".vocab"
    save_vocabulary(out, vocab)
    print(f"wrote {len(vocab)} tokens ({len(vocab.merges)} merges) to {out}")
    return 0


def _cmd_blacklist(args) -> int:
    corpus = [line for line in _read_lines(args.corpus) if line.strip()]
    blacklist = build_blacklist(corpus, args.top, source=args.corpus)
    save_blacklist(args.out, blacklist)
    print(f"wrote {len(blacklist.words)} words to {args.out}")
    return 0


def _cmd_gradcheck(_args) -> int:
    results = run_gradient_suite()
    worst = 0.0
    failed = 0
    for check in results:
        status = "ok" if check.passed else "FAIL"
        print(f"{check.name:32s} {check.error:.3e}  (limit {check.threshold:.0e}) "
              f"{status}")
        worst = max(worst, check.error)
        failed += 0 if check.passed else 1
    print(f"max relative error {worst:.3e} over {len(results)} checks")
    if failed:
        print("E_GRADCHECK", file=sys.stderr)
        print(f"{failed} gradient checks exceeded their threshold",
              file=sys.stderr)
        return 1
    return 0


def _cmd_dump_graph(args) -> int:
    topology = pose_topology()
    hops = build_hops(topology, args.hops)
    os.makedirs(args.out, exist_ok=True)
    written = []
    for k in range(args.hops + 1):
        for label, matrix in (("adjacency", hops.raw[k]),
                              ("normalized", hops.normalized[k])):
            path = os.path.join(args.out, f"{label}_hop{k}.csv")
            with open(path, "w", encoding="utf-8") as fh:
                for row in matrix:
                    fh.write(",".join(repr(float(v)) for v in row) + "\n")
            written.append(path)
    for path in written:
        print(path)
    return 0


_COMMANDS = {
    "train": _cmd_train,
    "translate": _cmd_translate,
    "evaluate": _cmd_evaluate,
    "build-vocab": _cmd_build_vocab,
    "blacklist": _cmd_blacklist,
    "gradcheck": _cmd_gradcheck,
    "dump-graph": _cmd_dump_graph,
}


def _fail(code: str, message: str) -> int:
    print(code, file=sys.stderr)
    print(message, file=sys.stderr)
    return 2


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
        return _COMMANDS[args.command](args)
    except UsageError as exc:
        print("E_USAGE", file=sys.stderr)
        print(str(exc), file=sys.stderr)
        parser.print_usage(sys.stderr)
        return 2
    except ParseError as exc:
        return _fail("E_PARSE", str(exc))
    except ConfigError as exc:
        return _fail("E_CONFIG", str(exc))
    except CheckpointError as exc:
        return _fail("E_CHECKPOINT", str(exc))
    except TrainingDiverged as exc:
        return _fail("E_DIVERGED", str(exc))
    except ShapeError as exc:
        return _fail("E_SHAPE", str(exc))
    except FileNotFoundError as exc:
        return _fail("E_IO", str(exc))
    except (ValueError, IndexError) as exc:
        return _fail("E_INPUT", str(exc))


if __name__ == "__main__":
    sys.exit(main())
