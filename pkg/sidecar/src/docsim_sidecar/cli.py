"""Sidecar CLI: export embeddings to the engine store, or continue pre-training."""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .export import ExportJob, export_embeddings
from .finetune import FinetuneJob, finetune


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="docsim-sidecar", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("export", help="embed every sentence and write the engine store")
    p.add_argument("corpus", type=Path)
    p.add_argument("--model", default="roberta-base")
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--batch-size", type=int, default=8)
    p.add_argument("--max-length", type=int)
    p.add_argument("--no-cls", action="store_true")
    p.add_argument("--manifest", type=Path)

    p = sub.add_parser("finetune", help="continue pre-training with MLM + contrastive loss")
    p.add_argument("corpus", type=Path)
    p.add_argument("--model", default="roberta-base")
    p.add_argument("--out-dir", type=Path, required=True)
    p.add_argument("--steps", type=int, default=200)
    p.add_argument("--margin", type=float, default=1.0)
    p.add_argument("--batch-size", type=int, default=8)
    p.add_argument("--lr", type=float, default=5e-4)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--max-length", type=int)
    p.add_argument("--trace", type=Path)

    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "export":
            manifest = export_embeddings(
                ExportJob(
                    corpus_path=args.corpus,
                    model_name=args.model,
                    out_path=args.out,
                    batch_size=args.batch_size,
                    max_length=args.max_length,
                    include_cls=not args.no_cls,
                    manifest_path=args.manifest,
                )
            )
            print(json.dumps(manifest))
        else:
            result = finetune(
                FinetuneJob(
                    corpus_path=args.corpus,
                    model_name=args.model,
                    out_dir=args.out_dir,
                    steps=args.steps,
                    margin=args.margin,
                    batch_size=args.batch_size,
                    learning_rate=args.lr,
                    seed=args.seed,
                    max_length=args.max_length,
                )
            )
            if args.trace:
                result.write_trace_csv(args.trace)
            print(
                json.dumps(
                    {
                        "initial_total": result.initial_total,
                        "final_total": result.final_total,
                        "checkpoint": str(result.checkpoint_dir),
                    }
                )
            )
    except (ValueError, RuntimeError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    return 0


def entry() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entry()
