"""Command-line entry point: ``diarmetric {synth,train,diarize,score,grid}``.

Exit codes: 0 success, 2 usage or validation error, 3 runtime / numeric error.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path
from typing import Dict, List, Optional, Sequence

import numpy as np

from . import __version__
from .der import DerBreakdown, compute_der, read_rttm, write_rttm
from .diarize import diarize_corpus, embed_segments, reference_annotations
from .embedder import EmbedderConfig, embedding_hash, load_checkpoint, save_checkpoint
from .errors import CapacityError, EvaluationError, FormatError, NumericError, ValidationError
from .features import corpus_from_path, write_manifest
from .losses import MarginSpec
from .sampling import SamplingStrategy
from .synth import SynthSpec, concatenate_conversations, generate_corpus
from .trainer import TrainConfig, make_grid, preset_keys, run_grid, train

log = logging.getLogger("diarmetric")

EXIT_OK, EXIT_USAGE, EXIT_RUNTIME = 0, 2, 3
VALIDATION_SAMPLES = 16
DER_NOTE = "# corpus DER is time-weighted across files (sum of error time / sum of scored speech)"


class UsageError(Exception):
    pass


# -- config handling ---------------------------------------------------------

def _load_json(path) -> dict:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise UsageError(f"cannot read config {path}: {exc}") from None
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise UsageError(f"{path}: malformed JSON at line {exc.lineno} column {exc.colno}: {exc.msg}") from None
    if not isinstance(doc, dict):
        raise UsageError(f"{path}: config must be a JSON object")
    return doc


def _train_config(args, corpus_dim: Optional[int]) -> TrainConfig:
    doc = _load_json(args.config) if args.config else {}
    emb = dict(doc.get("embedder", {}))
    if "input_dim" not in emb and corpus_dim is not None:
        emb["input_dim"] = corpus_dim
    doc["embedder"] = emb
    try:
        cfg = TrainConfig.from_dict(doc)
    except (TypeError, ValueError) as exc:
        raise UsageError(f"invalid training config: {exc}") from None
    over = {}
    for name in ("steps", "lr", "seed", "P", "K", "momentum", "loss"):
        val = getattr(args, name, None)
        if val is not None:
            over[name] = val
    if getattr(args, "sampling", None):
        over["sampling"] = replace(cfg.sampling, kind=args.sampling)
    if getattr(args, "margin", None):
        over["margin"] = replace(cfg.margin, mode=args.margin)
    if getattr(args, "arch", None):
        over["embedder"] = replace(cfg.embedder, arch=args.arch)
    try:
        return replace(cfg, **over)
    except ValueError as exc:
        raise UsageError(str(exc)) from None


def _add_train_overrides(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="JSON TrainConfig (fields override defaults)")
    p.add_argument("--steps", type=int)
    p.add_argument("--lr", type=float)
    p.add_argument("--seed", type=int)
    p.add_argument("--P", type=int, help="speakers per mini-batch")
    p.add_argument("--K", type=int, help="segments per speaker per mini-batch")
    p.add_argument("--momentum", type=float)
    p.add_argument("--loss", choices=["triplet", "quadruplet"])
    p.add_argument("--sampling", choices=["random", "semihard", "dw"])
    p.add_argument("--margin", choices=["fixed", "adaptive"])
    p.add_argument("--arch", choices=["meanpool_mlp", "attn1"])
    p.add_argument("--print-config", action="store_true", help="print the effective config and exit")


# -- commands ----------------------------------------------------------------

def cmd_synth(args) -> int:
    spec = SynthSpec(
        n_speakers=args.speakers,
        segments_per_speaker=args.segs,
        frames_per_segment=args.frames,
        dim=args.dim,
        separation=args.sep,
        seed=args.seed,
        speakers_per_conversation=args.speakers_per_conv,
        colored=not args.white,
        speaker_prefix=args.prefix,
        nuisance_dims=args.nuisance_dims,
        nuisance_scale=args.nuisance_scale,
        world_seed=args.world_seed,
    )
    if args.print_config:
        print(json.dumps(spec.to_dict(), indent=1))
        return EXIT_OK
    corpus = generate_corpus(spec)
    out = Path(args.out)
    manifest = write_manifest(corpus, out)
    write_rttm(reference_annotations(corpus).values(), out / "reference.rttm")
    (out / "synth.json").write_text(json.dumps(spec.to_dict(), indent=1, sort_keys=True) + "\n")
    print(f"wrote {len(corpus)} segments in {len(corpus.conversations)} conversations to {manifest}")
    return EXIT_OK


def _validation_hash(model, corpus) -> str:
    segs = list(corpus.segments())[:VALIDATION_SAMPLES]
    return embedding_hash(embed_segments(model, segs))


def cmd_train(args) -> int:
    if args.print_config:
        print(json.dumps(_train_config(args, None).to_dict(), indent=1))
        return EXIT_OK
    if not args.corpus or not args.out:
        raise UsageError("train needs --corpus and --out")
    corpus = corpus_from_path(args.corpus)
    cfg = _train_config(args, corpus.dim)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    rec = train(cfg, corpus)
    ckpt = out / "model.ckpt"
    save_checkpoint(rec.model, ckpt, extra={"steps": cfg.steps})
    model, _ = load_checkpoint(ckpt)
    rec.checkpoint = str(ckpt)
    doc = rec.to_dict()
    doc["validation_hash"] = _validation_hash(model, corpus)
    doc["validation_segments"] = min(VALIDATION_SAMPLES, len(corpus))
    (out / "run.json").write_text(json.dumps(doc, indent=1) + "\n")
    print(f"trained {cfg.steps} steps in {rec.seconds:.1f}s; final loss {rec.loss_curve[-1]:.4f}; checkpoint {ckpt}")
    return EXIT_OK


def cmd_diarize(args) -> int:
    model, _ = load_checkpoint(args.checkpoint)
    corpus = corpus_from_path(args.corpus)
    if model.config.input_dim != corpus.dim:
        raise UsageError(f"checkpoint expects dim {model.config.input_dim}, corpus has {corpus.dim}")
    hyps = diarize_corpus(model, corpus, seed=args.seed, k_max=args.k_max)
    write_rttm(hyps.values(), args.out)
    print(f"wrote {sum(len(h.turns) for h in hyps.values())} turns for {len(hyps)} conversations to {args.out}")
    return EXIT_OK


def _score_files(refs, hyps, fids: Sequence[str], collar, skip_overlap) -> DerBreakdown:
    acc = DerBreakdown()
    for fid in fids:
        acc = acc + compute_der(refs[fid], hyps.get(fid, type(refs[fid])(fid)), collar, skip_overlap)
    if acc.total <= 0:
        raise EvaluationError("no scorable reference speech")
    return acc


def _fmt_row(name: str, b: DerBreakdown) -> str:
    return (f"{name:<24} {100 * b.der:>8.2f} {b.missed:>9.3f} {b.false_alarm:>9.3f} "
            f"{b.confusion:>10.3f} {b.total:>10.3f}")


def cmd_score(args) -> int:
    refs = read_rttm(args.ref)
    hyps = read_rttm(args.hyp)
    if not refs:
        raise UsageError(f"{args.ref}: no reference turns")
    fids = sorted(refs)
    total = _score_files(refs, hyps, fids, args.collar, args.skip_overlap)
    result = {"collar": args.collar, "skip_overlap": args.skip_overlap, "overall": total.to_dict()}
    lines = [DER_NOTE, f"{'scope':<24} {'DER%':>8} {'missed':>9} {'false_al':>9} {'confusion':>10} {'total':>10}",
             _fmt_row("overall", total)]
    if args.group_by:
        if not args.manifest:
            raise UsageError("--group-by needs --manifest to read conversation tags")
        tags = corpus_from_path(args.manifest).tags
        groups: Dict[str, List[str]] = {}
        for fid in fids:
            groups.setdefault(tags.get(fid, {}).get(args.group_by, "<untagged>"), []).append(fid)
        result["groups"] = {}
        for value in sorted(groups):
            b = _score_files(refs, hyps, groups[value], args.collar, args.skip_overlap)
            result["groups"][value] = b.to_dict()
            lines.append(_fmt_row(f"{args.group_by}={value}", b))
    print("\n".join(lines))
    if args.json:
        Path(args.json).write_text(json.dumps(result, indent=1) + "\n")
    return EXIT_OK


def _stress_variants(corpus, targets: Sequence[int], seed: int) -> Dict[str, object]:
    per_conv = np.mean([len({s.speaker for s in segs}) for segs in corpus.conversations.values()])
    out = {}
    for t in targets:
        group = max(1, int(round(t / per_conv)))
        out[f"avg{t}"] = concatenate_conversations(corpus, group, np.random.default_rng(seed))
    return out


def cmd_grid(args) -> int:
    base = _train_config(args, None)
    keys = preset_keys(args.preset)
    if args.print_config:
        print(json.dumps({"preset": args.preset, "rows": len(keys), "base": base.to_dict()}, indent=1))
        return EXIT_OK
    if not args.train:
        raise UsageError("grid needs --train")
    train_corpus = corpus_from_path(args.train)
    base = _train_config(args, train_corpus.dim)
    eval_corpus = corpus_from_path(args.eval) if args.eval else None
    extra = {}
    if args.speaker_stress:
        if eval_corpus is None:
            raise UsageError("--speaker-stress needs --eval")
        targets = [int(x) for x in args.speaker_stress.split(",") if x.strip()]
        extra = _stress_variants(eval_corpus, targets, base.seed)
    result = run_grid(make_grid(base, keys), train_corpus, eval_corpus, extra, jobs=args.jobs, eval_seed=base.seed)
    table = result.table()
    print(DER_NOTE)
    print(table)
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        (out / "grid.json").write_text(result.to_json() + "\n")
        (out / "grid.txt").write_text(DER_NOTE + "\n" + table + "\n")
    return EXIT_OK


# -- parser ------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="diarmetric", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic labelled corpus")
    p.add_argument("--speakers", type=int, default=8)
    p.add_argument("--segs", type=int, default=20, help="segments per speaker")
    p.add_argument("--dim", type=int, default=12)
    p.add_argument("--frames", type=int, default=50, help="frames per segment")
    p.add_argument("--sep", type=float, default=6.0, help="speaker separation in noise-sigma units")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--speakers-per-conv", type=int, default=2)
    p.add_argument("--white", action="store_true", help="white instead of temporally coloured noise")
    p.add_argument("--prefix", default="spk", help="speaker label prefix")
    p.add_argument("--nuisance-dims", type=int, default=0)
    p.add_argument("--nuisance-scale", type=float, default=0.0)
    p.add_argument("--world-seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.add_argument("--print-config", action="store_true")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("train", help="train an embedder on a labelled corpus")
    p.add_argument("--corpus", help="manifest file or directory")
    p.add_argument("--out", help="output directory for model.ckpt and run.json")
    _add_train_overrides(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("diarize", help="cluster every conversation and write RTTM")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--corpus", required=True)
    p.add_argument("--out", required=True, help="output RTTM path")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--k-max", type=int, default=None)
    p.set_defaults(func=cmd_diarize)

    p = sub.add_parser("score", help="DER of a hypothesis RTTM against a reference RTTM")
    p.add_argument("--ref", required=True)
    p.add_argument("--hyp", required=True)
    p.add_argument("--collar", type=float, default=0.25)
    p.add_argument("--skip-overlap", action=argparse.BooleanOptionalAction, default=True)
    p.add_argument("--group-by", help="conversation tag to break DER down by")
    p.add_argument("--manifest", help="corpus manifest supplying conversation tags")
    p.add_argument("--json", help="write the breakdown as JSON here")
    p.set_defaults(func=cmd_score)

    p = sub.add_parser("grid", help="train and score a sweep of pipeline configurations")
    p.add_argument("--train", help="training corpus manifest")
    p.add_argument("--eval", help="evaluation corpus manifest (unseen speakers)")
    p.add_argument("--preset", choices=["full", "table1"], default="full")
    p.add_argument("--speaker-stress", help="comma-separated target speakers per conversation, e.g. 4,6")
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--out", help="directory for grid.json and grid.txt")
    _add_train_overrides(p)
    p.set_defaults(func=cmd_grid)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (UsageError, ValidationError, FormatError, CapacityError, FileNotFoundError) as exc:
        print(f"diarmetric {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (NumericError, EvaluationError) as exc:
        print(f"diarmetric {args.command}: runtime error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    except ValueError as exc:
        print(f"diarmetric {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
