"""CLI: export embeddings from a frozen encoder, or verify two stores."""

from __future__ import annotations

import argparse
import sys
from typing import Optional, Sequence

from . import store as store_format
from .export import EncoderLoadError, ExportJob, export


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="pyencoder", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("export", help="encode a dataset into a binary embedding store")
    p.add_argument("--dataset", required=True, help="line-delimited stance dataset")
    p.add_argument("--encoder", required=True, help="model name or local model directory")
    p.add_argument("--mode", default="joint,separate", help="comma-separated: joint,separate")
    p.add_argument("--out", required=True, help="output store path")
    p.add_argument("--batch-size", type=int, default=8)

    p = sub.add_parser("verify", help="diff two embedding stores")
    p.add_argument("store_a")
    p.add_argument("store_b")
    p.add_argument("--tolerance", type=float, default=0.0)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    if args.command == "export":
        job = ExportJob(
            dataset_path=args.dataset,
            encoder=args.encoder,
            out_path=args.out,
            modes=tuple(m.strip() for m in args.mode.split(",") if m.strip()),
            batch_size=args.batch_size,
        )
        try:
            warnings = export(job)
        except (EncoderLoadError, ValueError) as exc:
            print(f"error: {exc}", file=sys.stderr)
            return 2
        for message in warnings:
            print(f"warning: {message}", file=sys.stderr)
        print(f"export: wrote {args.out} ({len(warnings)} warnings)")
        return 0

    report = store_format.diff(
        store_format.read(args.store_a), store_format.read(args.store_b), args.tolerance
    )
    for line in report:
        print(line)
    print(f"verify: {len(report)} differences")
    return 0 if not report else 1


if __name__ == "__main__":
    sys.exit(main())
