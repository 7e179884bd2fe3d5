"""Command-line interface: `qprobe-export subwords|embeddings`."""

from __future__ import annotations

import argparse
import logging
import sys

from .corpus_io import read_corpus
from .embeddings import export_embeddings
from .subwords import export_subwords


def _parse_layers(spec):
    if spec is None:
        return None
    if ".." in spec:
        lo, hi = spec.split("..", 1)
        return list(range(int(lo), int(hi) + 1))
    return [int(part) for part in spec.split(",") if part]


def cmd_subwords(args) -> int:
    corpus = read_corpus(args.corpus)
    export_subwords(corpus, args.tokenizer, args.output)
    print(f"wrote {len(corpus)} subword records -> {args.output}")
    return 0


def cmd_embeddings(args) -> int:
    corpus = read_corpus(args.corpus)
    path, manifest = export_embeddings(
        corpus,
        args.model,
        args.tokenizer or args.model,
        args.output,
        layers=_parse_layers(args.layers),
        pooling=args.pooling,
        batch_size=args.batch_size,
        max_length=args.max_length,
        model_id=args.model,
    )
    print(
        f"wrote {len(manifest.sentence_ids)} sentences x "
        f"{len(manifest.layer_indices)} layers (dim {manifest.dim}) -> {path}"
    )
    if manifest.truncated_ids:
        print(f"{len(manifest.truncated_ids)} sentence(s) truncated", file=sys.stderr)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="qprobe-export",
        description="Export subword sequences and frozen-encoder embeddings",
    )
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("subwords", help="tokenize a corpus into subword records")
    p.add_argument("--corpus", required=True, help="sentence interchange file")
    p.add_argument("--tokenizer", required=True, help="tokenizer id or local path")
    p.add_argument("-o", "--output", required=True)
    p.set_defaults(func=cmd_subwords)

    p = sub.add_parser("embeddings", help="QEMB export from a frozen encoder")
    p.add_argument("--corpus", required=True)
    p.add_argument("--model", required=True, help="model id or local path")
    p.add_argument("--tokenizer", help="defaults to the model path")
    p.add_argument("--layers", help='e.g. "1..12" or "2,5"')
    p.add_argument("--pooling", choices=("mean", "none"), default="mean")
    p.add_argument("--batch-size", type=int, default=16)
    p.add_argument("--max-length", type=int)
    p.add_argument("-o", "--output", required=True)
    p.set_defaults(func=cmd_embeddings)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        return args.func(args)
    except (ValueError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:  # pragma: no cover - defensive
        print(f"runtime failure: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
