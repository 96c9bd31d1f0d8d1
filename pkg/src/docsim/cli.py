"""Command-line pipeline: ingest, embed, train-toy, rank, eval, ablate.

Exit codes: 0 success, 1 usage error, 2 data error. All reports are
machine-readable; --pretty adds a human rendering, and report-writing
commands drop a PNG figure next to the output file unless --no-figures.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import warnings
from pathlib import Path

from . import plots
from .corpus import CorpusError, DroppedDocumentWarning, parse_corpus, serialize_corpus
from .embedding import (
    EmbeddingError,
    HashEmbedder,
    StoreError,
    embed_corpus,
    load_embeddings,
    save_embeddings,
    save_embeddings_jsonl,
)
from .evaluation import EvalError, GroundTruth, evaluate
from .scoring import MODES, rank
from .training import ContrastiveConfig, DivergenceError, train_toy

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2


class _Parser(argparse.ArgumentParser):
    def error(self, message: str):  # usage errors exit 1, not argparse's default 2
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_USAGE)


def _comma_ints(text: str) -> list[int]:
    try:
        values = [int(part) for part in text.split(",") if part.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}")
    if not values or any(v < 1 for v in values):
        raise argparse.ArgumentTypeError("k values must be positive integers")
    return values


def _resolve_seed(value: int | None) -> int:
    if value is not None:
        return value
    return int(os.environ.get("SDR_SEED", "0"))


def _echo_config(args: argparse.Namespace) -> None:
    resolved = {
        key: (str(val) if isinstance(val, Path) else val)
        for key, val in sorted(vars(args).items())
        if key != "handler"
    }
    print(json.dumps({"resolved_config": resolved}, sort_keys=True), file=sys.stderr)


def _corpus_format(path: Path, fmt: str) -> str:
    if fmt != "auto":
        return fmt
    return "plaintext-dir" if path.is_dir() else "jsonl"


def _load_corpus(path: Path, fmt: str):
    return parse_corpus(path, format=_corpus_format(path, fmt))


def build_parser() -> _Parser:
    parser = _Parser(prog="docsim", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("ingest", help="parse and validate a raw corpus, write canonical JSONL")
    p.add_argument("input", type=Path)
    p.add_argument("--format", choices=["auto", "jsonl", "plaintext-dir"], default="auto")
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--strict", action="store_true", help="fail when any document is dropped")
    p.set_defaults(handler=cmd_ingest)

    p = sub.add_parser("embed", help="embed a corpus with the deterministic hash provider")
    p.add_argument("corpus", type=Path)
    p.add_argument("--format", choices=["auto", "jsonl", "plaintext-dir"], default="auto")
    p.add_argument("--provider", choices=["hash"], default="hash")
    p.add_argument("--dim", type=int, default=64)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--jsonl-store", action="store_true", help="write the JSONL debug store")
    p.add_argument("--out", type=Path, required=True)
    p.set_defaults(handler=cmd_embed)

    p = sub.add_parser("rank", help="rank all candidates against a source document")
    p.add_argument("corpus", type=Path)
    p.add_argument("embeddings", type=Path)
    p.add_argument("--format", choices=["auto", "jsonl", "plaintext-dir"], default="auto")
    p.add_argument("--source", required=True)
    p.add_argument("--mode", choices=list(MODES), default="sdr")
    p.add_argument("--no-normalize", action="store_true")
    p.add_argument("--norm-pool", choices=["cells", "rowmax"], default="cells")
    p.add_argument("--first-window", type=int, default=16)
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--explain", action="store_true")
    p.add_argument("--out", type=Path)
    p.add_argument("--pretty", action="store_true")
    p.add_argument("--no-figures", action="store_true")
    p.set_defaults(handler=cmd_rank)

    p = sub.add_parser("eval", aliases=["evaluate"], help="score rankings against ground truth")
    p.add_argument("rankings", type=Path, help="rank report file, or directory of reports")
    p.add_argument("ground_truth", type=Path)
    p.add_argument("--k", type=_comma_ints, default=[10, 100])
    p.add_argument("--out", type=Path)
    p.add_argument("--pretty", action="store_true")
    p.add_argument("--no-figures", action="store_true")
    p.set_defaults(handler=cmd_eval)

    p = sub.add_parser("train-toy", help="train the toy embedding model with the contrastive loss")
    p.add_argument("corpus", type=Path)
    p.add_argument("--format", choices=["auto", "jsonl", "plaintext-dir"], default="auto")
    p.add_argument("--steps", type=int, default=2000)
    p.add_argument("--lr", type=float, default=0.05)
    p.add_argument("--margin", type=float, default=1.0)
    p.add_argument("--dim", type=int, default=16)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--eval-pairs", type=int, default=128)
    p.add_argument("--eval-every", type=int, default=25)
    p.add_argument("--out", type=Path, required=True, help="model checkpoint (embedding store format)")
    p.add_argument("--vocab", type=Path, help="vocabulary sidecar path (default <out>_vocab.json)")
    p.add_argument("--trace", type=Path, help="loss trace CSV path (default <out>_trace.csv)")
    p.add_argument("--no-figures", action="store_true")
    p.set_defaults(handler=cmd_train_toy)

    p = sub.add_parser("ablate", help="compare ranking configurations against ground truth")
    p.add_argument("corpus", type=Path)
    p.add_argument("embeddings", type=Path)
    p.add_argument("ground_truth", type=Path)
    p.add_argument("--format", choices=["auto", "jsonl", "plaintext-dir"], default="auto")
    p.add_argument("--modes", default="sdr,paragraph,first,all")
    p.add_argument("--k", type=_comma_ints, default=[10, 100])
    p.add_argument("--first-window", type=int, default=16)
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--out", type=Path)
    p.add_argument("--pretty", action="store_true")
    p.add_argument("--no-figures", action="store_true")
    p.set_defaults(handler=cmd_ablate)

    return parser


def cmd_ingest(args: argparse.Namespace) -> int:
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always", DroppedDocumentWarning)
        corpus = _load_corpus(args.input, args.format)
    dropped = [w for w in caught if issubclass(w.category, DroppedDocumentWarning)]
    for w in dropped:
        print(f"warning: {w.message}", file=sys.stderr)
    serialize_corpus(corpus, args.out)
    print(json.dumps({"documents": len(corpus), "dropped": len(dropped), "out": str(args.out)}))
    if args.strict and dropped:
        print("error: documents were dropped and --strict is set", file=sys.stderr)
        return EXIT_DATA
    return EXIT_OK


def cmd_embed(args: argparse.Namespace) -> int:
    corpus = _load_corpus(args.corpus, args.format)
    provider = HashEmbedder(dimension=args.dim, seed=_resolve_seed(args.seed))
    ec = embed_corpus(provider, corpus, workers=args.workers)
    if args.jsonl_store:
        save_embeddings_jsonl(ec, args.out)
    else:
        save_embeddings(ec, args.out)
    sentences = sum(ec.sentence_count(doc_id) for doc_id in ec.ids)
    print(json.dumps({"documents": len(ec.ids), "sentences": sentences, "dimension": ec.dimension, "out": str(args.out)}))
    return EXIT_OK


def _rank_report_lines(ranked, explain: bool) -> list[str]:
    lines = []
    for position, entry in enumerate(ranked.entries, start=1):
        record: dict = {"source": ranked.source, "id": entry.id, "score": entry.score, "rank": position}
        if explain:
            record["explain"] = [
                {"i": p.i, "j": p.j, "raw": p.raw, "normalized": p.normalized}
                for p in (entry.top_pairs or ())
            ]
        lines.append(json.dumps(record, ensure_ascii=False))
    return lines


def cmd_rank(args: argparse.Namespace) -> int:
    corpus = _load_corpus(args.corpus, args.format)
    ec = load_embeddings(args.embeddings)
    ec.validate_against(corpus)
    ranked = rank(
        args.source,
        ec,
        mode=args.mode,
        normalize=not args.no_normalize,
        first_window=args.first_window,
        workers=args.workers,
        norm_pool=args.norm_pool,
        explain=args.explain,
    )
    lines = _rank_report_lines(ranked, args.explain)
    if args.out:
        args.out.write_text("\n".join(lines) + "\n", encoding="utf-8")
        if not args.no_figures:
            plots.plot_rank_scores(ranked.entries, ranked.source, ranked.mode, plots.figure_path(args.out, "scores"))
    if args.pretty:
        print(f"# source={ranked.source} mode={ranked.mode} normalize={ranked.normalize}")
        for position, entry in enumerate(ranked.entries, start=1):
            print(f"{position:>4}  {entry.score: .6f}  {entry.id}")
    elif not args.out:
        print("\n".join(lines))
    return EXIT_OK


def _load_rankings(path: Path) -> dict[str, list[str]]:
    files = sorted(path.glob("*.jsonl")) if path.is_dir() else [path]
    if not files:
        raise EvalError(f"no rank reports found in {path}")
    rows: dict[str, list[tuple[int, str]]] = {}
    for file in files:
        for lineno, line in enumerate(file.read_text(encoding="utf-8").splitlines(), start=1):
            if not line.strip():
                continue
            try:
                record = json.loads(line)
            except json.JSONDecodeError as exc:
                raise EvalError(f"{file.name}:{lineno}: invalid JSON ({exc.msg})") from exc
            source = record.get("source", file.stem)
            cid = record.get("id")
            position = record.get("rank")
            if not isinstance(cid, str) or not isinstance(position, int):
                raise EvalError(f"{file.name}:{lineno}: expected 'id' and integer 'rank'")
            rows.setdefault(source, []).append((position, cid))
    return {source: [cid for _, cid in sorted(pairs)] for source, pairs in rows.items()}


def cmd_eval(args: argparse.Namespace) -> int:
    rankings = _load_rankings(args.rankings)
    gt = GroundTruth.load(args.ground_truth)
    report = evaluate(rankings, gt, ks=args.k)
    payload = json.dumps(report.to_dict())
    if args.out:
        report.write_json(args.out, pretty=False)
        if not args.no_figures:
            plots.plot_metrics(report, plots.figure_path(args.out, "metrics"))
    if args.pretty:
        print(f"MPR  {report.mpr:.4f}")
        print(f"MRR  {report.mrr:.4f}")
        for k in sorted(report.hr):
            print(f"HR@{k}  {report.hr[k]:.4f}")
    elif not args.out:
        print(payload)
    return EXIT_OK


def cmd_train_toy(args: argparse.Namespace) -> int:
    corpus = _load_corpus(args.corpus, args.format)
    cfg = ContrastiveConfig(
        margin=args.margin,
        learning_rate=args.lr,
        steps=args.steps,
        seed=_resolve_seed(args.seed),
        dim=args.dim,
        eval_pairs=args.eval_pairs,
        eval_every=args.eval_every,
    )
    result = train_toy(corpus, cfg)
    vocab_path = args.vocab or args.out.with_name(args.out.stem + "_vocab.json")
    trace_path = args.trace or args.out.with_name(args.out.stem + "_trace.csv")
    result.model.save(args.out, vocab_path)
    result.write_trace_csv(trace_path)
    if not args.no_figures:
        plots.plot_loss_trace(result.trace, plots.figure_path(trace_path, "loss"))
    last = result.trace[-1]
    print(
        json.dumps(
            {
                "steps": cfg.steps,
                "final_loss": last.loss,
                "mean_intra_cos": last.mean_intra_cos,
                "mean_inter_cos": last.mean_inter_cos,
                "cosine_gap": last.mean_intra_cos - last.mean_inter_cos,
                "model": str(args.out),
            }
        )
    )
    return EXIT_OK


def cmd_ablate(args: argparse.Namespace) -> int:
    corpus = _load_corpus(args.corpus, args.format)
    ec = load_embeddings(args.embeddings)
    ec.validate_against(corpus)
    gt = GroundTruth.load(args.ground_truth)
    modes = [m.strip() for m in args.modes.split(",") if m.strip()]
    for mode in modes:
        if mode not in MODES:
            raise EvalError(f"unknown mode {mode!r} in --modes")
    configs: list[tuple[str, str, bool]] = []
    for mode in modes:
        configs.append((mode, mode, True))
        if mode in ("sdr", "paragraph"):
            configs.append((f"{mode}/raw", mode, False))
    results: dict[str, dict] = {}
    for label, mode, normalize in configs:
        rankings = {
            source: rank(
                source,
                ec,
                mode=mode,
                normalize=normalize,
                first_window=args.first_window,
                workers=args.workers,
            ).ordered_ids
            for source in gt.sources
        }
        report = evaluate(rankings, gt, ks=args.k)
        results[label] = {
            "mpr": report.mpr,
            "mrr": report.mrr,
            "hr": {str(k): v for k, v in sorted(report.hr.items())},
        }
    payload = json.dumps({"k": args.k, "configs": results})
    if args.out:
        args.out.write_text(payload + "\n", encoding="utf-8")
        if not args.no_figures:
            plots.plot_ablation(results, plots.figure_path(args.out, "ablation"))
    if args.pretty:
        for label, metrics in results.items():
            hrs = "  ".join(f"HR@{k}={v:.3f}" for k, v in metrics["hr"].items())
            print(f"{label:<16} MPR={metrics['mpr']:.4f}  MRR={metrics['mrr']:.4f}  {hrs}")
    elif not args.out:
        print(payload)
    return EXIT_OK


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    _echo_config(args)
    try:
        return args.handler(args)
    except (ValueError, StoreError, EmbeddingError, DivergenceError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA


def entry() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entry()
