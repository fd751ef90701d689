"""Console entry point: export_attention --model <id> --input texts.txt --out dir/"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .export import ExportError, ExportJob, export_attention


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="export_attention",
        description="Dump pretrained-encoder attention into ATTN v1 files",
    )
    parser.add_argument("--model", required=True, help="hub id or local model path")
    parser.add_argument("--input", required=True, help="file with one text per line")
    parser.add_argument("--out", required=True, help="output directory")
    parser.add_argument("--max-len", type=int, default=384, help="token-count limit")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        texts = [
            line for line in Path(args.input).read_text().splitlines() if line.strip()
        ]
        job = ExportJob(
            model=args.model, texts=texts, out_dir=Path(args.out), max_len=args.max_len
        )
        result = export_attention(job)
    except (ExportError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    print(
        f"wrote {len(result.paths)} instances "
        f"({result.layers} layers x {result.heads} heads) to {args.out}"
    )
    return 0


if __name__ == "__main__":
    sys.exit(main())
