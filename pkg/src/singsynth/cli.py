"""Command line interface.

Exit codes: 0 on success, 1 for validation failures (bad inputs,
config/vocabulary mismatches, malformed files), 2 for missing
artifacts (absent checkpoints, caches, audio).
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .config import load_config
from .errors import MissingArtifactError, ParseError, ValidationError
from .pipeline import (
    SynthesisJob,
    evaluate,
    load_eval_models,
    prepare,
    synth,
    train_acoustic_model,
    train_duration_model,
    train_lf0_model,
)
from .toydata import make_toy_corpus


class _Parser(argparse.ArgumentParser):
    # argparse exits 2 on usage errors; bad arguments are validation
    # failures here, so convert them
    def error(self, message):
        raise ParseError(message)


def build_parser() -> _Parser:
    parser = _Parser(prog="singsynth", description=__doc__)
    parser.add_argument("--config", type=Path, default=None, help="JSON config file")
    parser.add_argument("--seed", type=int, default=0, help="base random seed")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("make-toy-corpus", help="generate the synthetic corpus")
    p.add_argument("--outdir", type=Path, required=True)
    p.add_argument("--singing", type=int, default=10)
    p.add_argument("--speaking", type=int, default=10)

    p = sub.add_parser("prepare", help="extract and cache features")
    p.add_argument("--manifest", type=Path, required=True)
    p.add_argument("--outdir", type=Path, required=True)
    p.add_argument("--skip-bad", action="store_true", help="drop failing utterances")

    for name, help_text in (
        ("train-dm", "train the phoneme duration model"),
        ("train-lf0", "train the frame-level LF0 model"),
        ("train-am", "train the acoustic model"),
    ):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--cache", type=Path, required=True)
        p.add_argument("--out", type=Path, required=True)
        p.add_argument("--steps", type=int, default=None)
        if name == "train-am":
            p.add_argument(
                "--adv-weight", type=float, default=None,
                help="override the adversarial loss weight",
            )

    p = sub.add_parser("synth", help="synthesize a score")
    p.add_argument("--score", type=Path, required=True)
    p.add_argument("--speaker", required=True)
    p.add_argument("--checkpoints", type=Path, required=True)
    p.add_argument("--outdir", type=Path, required=True)
    p.add_argument("--style", default="singing", choices=("singing", "speaking"))
    p.add_argument("--duration-mode", default="predicted", choices=("predicted", "real"))
    p.add_argument("--lf0-mode", default="predicted", choices=("predicted", "real"))
    p.add_argument("--intervals", type=Path, default=None)
    p.add_argument("--lf0-file", type=Path, default=None)
    p.add_argument("--reference-audio", type=Path, default=None)
    p.add_argument("--no-dropout", action="store_true",
                   help="disable prenet dropout at inference for this run")
    p.add_argument("--force", action="store_true",
                   help="load checkpoints despite config hash mismatches")

    p = sub.add_parser("evaluate", help="score checkpoints against a cache")
    p.add_argument("--cache", type=Path, required=True)
    p.add_argument("--checkpoints", type=Path, required=True)
    p.add_argument("--outdir", type=Path, required=True)
    p.add_argument("--ids", default=None, help="comma-separated utterance ids")
    p.add_argument("--max-plots", type=int, default=4)
    p.add_argument("--force", action="store_true")
    return parser


def _run(args) -> None:
    cfg = load_config(args.config)
    if args.command == "make-toy-corpus":
        manifest = make_toy_corpus(
            args.outdir, cfg, n_singing=args.singing, n_speaking=args.speaking,
            seed=args.seed,
        )
        print(f"wrote {manifest}")
    elif args.command == "prepare":
        report = prepare(args.manifest, cfg, args.outdir, skip_bad=args.skip_bad)
        print(f"prepared {len(report['processed'])} utterance(s) in {report['cache_dir']}")
        for skipped in report["skipped"]:
            print(f"skipped {skipped['id']}: {skipped['error']}", file=sys.stderr)
    elif args.command == "train-dm":
        path = train_duration_model(
            args.cache, cfg, args.out, seed=args.seed, steps=args.steps, log=print
        )
        print(f"wrote {path}")
    elif args.command == "train-lf0":
        path = train_lf0_model(
            args.cache, cfg, args.out, seed=args.seed, steps=args.steps, log=print
        )
        print(f"wrote {path}")
    elif args.command == "train-am":
        path = train_acoustic_model(
            args.cache, cfg, args.out, seed=args.seed, steps=args.steps,
            adv_weight=args.adv_weight, log=print,
        )
        print(f"wrote {path}")
    elif args.command == "synth":
        job = SynthesisJob(
            score_path=args.score,
            speaker=args.speaker,
            checkpoint_dir=args.checkpoints,
            output_dir=args.outdir,
            style=args.style,
            duration_mode=args.duration_mode,
            lf0_mode=args.lf0_mode,
            intervals_path=args.intervals,
            f0_path=args.lf0_file,
            reference_audio=args.reference_audio,
            seed=args.seed,
            force=args.force,
            dropout_at_inference=False if args.no_dropout else None,
        )
        result = synth(job, cfg)
        print(f"wrote {result.wav_path}")
        print(f"wrote {result.mel_path}")
        print(f"wrote {result.f0_path}")
        print(f"wrote {result.durations_path}")
        print(f"wrote {result.figure_path}")
    elif args.command == "evaluate":
        models, _ = load_eval_models(args.checkpoints, cfg, force=args.force)
        ids = args.ids.split(",") if args.ids else None
        report = evaluate(
            args.cache, cfg, models, args.outdir, utt_ids=ids,
            max_plots=args.max_plots, seed=args.seed,
        )
        for key, value in report["aggregate"].items():
            shown = "n/a" if value is None else f"{value:.4f}"
            print(f"{key}: {shown}")
        print(f"wrote {Path(args.outdir) / 'report.json'}")
    else:  # pragma: no cover - argparse enforces the choices
        raise ValidationError(f"unknown command {args.command!r}")


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        _run(args)
        return 0
    except MissingArtifactError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (ValidationError, ParseError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
