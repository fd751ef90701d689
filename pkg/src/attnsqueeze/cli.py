"""Command-line surface: profile, transform, sweep, footprint, toy.

Exit codes are a stable contract: 0 on success, 2 on malformed input data,
64 on usage errors.  No subcommand mutates its inputs, and every output is
a deterministic function of inputs and flags (no timestamps).  The
environment variable ``ATTNSQUEEZE_THREADS`` caps internal parallelism
(0 or unset = auto).
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

from . import codec, profiling, quantize, toy
from .attention import (
    PruneSpec,
    load_attn,
    measure_sparsity,
    prune,
    read_sidecar,
    store_attn,
)
from .errors import DataError, InvalidValueError

EXIT_OK = 0
EXIT_DATA = 2
EXIT_USAGE = 64


class UsageError(Exception):
    pass


def _flag_value(builder, *args, **kwargs):
    """Construct a spec from flag values; invalid flags are usage errors."""
    try:
        return builder(*args, **kwargs)
    except InvalidValueError as exc:
        raise UsageError(str(exc))


class _Parser(argparse.ArgumentParser):
    """argparse defaults to exit code 2 on bad flags; this contract uses 64."""

    def error(self, message):
        raise UsageError(message)


def thread_count() -> int:
    raw = os.environ.get("ATTNSQUEEZE_THREADS", "0")
    try:
        n = int(raw)
    except ValueError:
        raise UsageError(f"ATTNSQUEEZE_THREADS must be an integer, got {raw!r}")
    if n < 0:
        raise UsageError("ATTNSQUEEZE_THREADS must be >= 0")
    if n == 0:
        return os.cpu_count() or 1
    return n


def _parse_grid(text: str, flag: str) -> list[float]:
    """Comma-separated decimal literals (scientific notation accepted)."""
    out = []
    for item in text.split(","):
        item = item.strip()
        try:
            out.append(float(item))
        except ValueError:
            raise UsageError(f"{flag}: {item!r} is not a decimal literal")
    if not out:
        raise UsageError(f"{flag}: empty grid")
    return out


def _parse_int_grid(text: str, flag: str) -> list[int]:
    out = []
    for item in text.split(","):
        item = item.strip()
        if not item.isdigit():
            raise UsageError(f"{flag}: {item!r} is not an integer")
        out.append(int(item))
    if not out:
        raise UsageError(f"{flag}: empty grid")
    return out


def _input_files(path: Path) -> list[Path]:
    if path.is_dir():
        files = sorted(path.glob("*.attn"))
        if not files:
            raise DataError(f"{path}: no .attn files in directory")
        return files
    return [path]


def _fmt(x: float) -> str:
    return f"{float(x):.9g}"


# ---------------------------------------------------------------------------
# profile


def _write_report(report: profiling.ProfileReport, outdir: Path, write_csv: bool) -> None:
    outdir.mkdir(parents=True, exist_ok=True)
    payload = json.dumps(report.to_json_dict(), indent=1)
    (outdir / "report.json").write_text(payload + "\n")
    if not write_csv:
        return
    sparsity_lines = ["layer,head,bin_lower,bin_upper,density"]
    for p in report.head_profiles:
        path = outdir / f"hist_l{p.layer}_h{p.head}.csv"
        lines = ["bin_lower,bin_upper,density,cumulative"]
        for lo, hi, dens, cum in profiling.histogram_csv_rows(p.histogram):
            lines.append(f"{_fmt(lo)},{_fmt(hi)},{_fmt(dens)},{_fmt(cum)}")
        path.write_text("\n".join(lines) + "\n")
        for b, dens in enumerate(p.sparsity_distribution):
            sparsity_lines.append(
                f"{p.layer},{p.head},{_fmt(b / 10)},{_fmt((b + 1) / 10)},{_fmt(dens)}"
            )
    (outdir / "sparsity_distribution.csv").write_text("\n".join(sparsity_lines) + "\n")


def cmd_profile(args) -> int:
    hist = _flag_value(
        profiling.HistogramSpec,
        lower_bound=args.lower_bound,
        bins_per_decade=args.bins_per_decade,
    )
    files = _input_files(Path(args.input))
    outdir = Path(args.out)
    threads = thread_count()

    def make_report(paths: list[Path]) -> profiling.ProfileReport:
        tensors = [load_attn(p) for p in paths]
        metas = [read_sidecar(p) or {} for p in paths]
        model = next((m["model"] for m in metas if m.get("model")), None)
        ids = [m.get("instance_id") or p.stem for m, p in zip(metas, paths)]
        return profiling.profile_tensors(
            tensors,
            hist=hist,
            epsilon=args.epsilon,
            deviation_bins=args.deviation_bins,
            model=model,
            instance_ids=ids,
            threads=threads,
        )

    if args.pooled or len(files) == 1:
        _write_report(make_report(files), outdir, not args.no_csv)
    else:
        for path in files:
            _write_report(make_report([path]), outdir / path.stem, not args.no_csv)
    return EXIT_OK


# ---------------------------------------------------------------------------
# transform


def _build_quant_spec(args) -> quantize.QuantSpec | None:
    if args.bits is not None and args.quantize is None:
        raise UsageError("--bits requires --quantize")
    if args.quantize is None:
        return None
    bits = args.bits
    if bits is None:
        if args.quantize != "boolean":
            raise UsageError(f"--quantize {args.quantize} requires --bits")
        bits = 1
    return _flag_value(
        quantize.QuantSpec,
        method=args.quantize,
        bits=bits,
        prune_threshold=args.prune or 0.0,
    )


def cmd_transform(args) -> int:
    out = Path(args.out)
    if out.suffix not in (".attn", ".spqa"):
        raise UsageError(f"output must end in .attn or .spqa, got {out.name!r}")
    spec = _build_quant_spec(args)
    if spec is None and args.prune is None:
        raise UsageError("nothing to do: pass --prune and/or --quantize")
    tensor = load_attn(args.input)

    if spec is None:
        transformed = prune(tensor, _flag_value(PruneSpec, args.prune))
        if out.suffix == ".spqa":
            raise UsageError(".spqa output requires --quantize (codes need a codebook)")
        store_attn(transformed, out)
        return EXIT_OK

    quantized, codebook = quantize.quantize_tensor(tensor, spec)
    if out.suffix == ".attn":
        store_attn(quantized, out)
    else:
        codec.write_spqa(codec.encode(quantized, codebook), out)
    return EXIT_OK


# ---------------------------------------------------------------------------
# sweep


def cmd_sweep(args) -> int:
    hist = _flag_value(
        profiling.HistogramSpec,
        lower_bound=args.lower_bound,
        bins_per_decade=args.bins_per_decade,
    )
    tensor = load_attn(args.input)
    thresholds = _parse_grid(args.prune, "--prune") if args.prune else [0.0]
    bits = _parse_int_grid(args.bits, "--bits") if args.bits else [3]
    lines = ["method,bits,threshold,induced_sparsity,divergence"]
    for t in thresholds:
        for k in bits:
            spec = _flag_value(
                quantize.QuantSpec, method=args.method, bits=k, prune_threshold=t
            )
            quantized, _ = quantize.quantize_tensor(tensor, spec)
            sparsity = measure_sparsity(quantized, args.epsilon).fraction
            div = profiling.quantization_divergence(tensor, spec, hist)
            lines.append(f"{args.method},{k},{_fmt(t)},{_fmt(sparsity)},{_fmt(div)}")
    text = "\n".join(lines) + "\n"
    if args.out:
        Path(args.out).write_text(text)
    else:
        sys.stdout.write(text)
    return EXIT_OK


# ---------------------------------------------------------------------------
# footprint


def cmd_footprint(args) -> int:
    ns = _parse_int_grid(args.n, "--n")
    sparsities = _parse_grid(args.sparsity, "--sparsity")
    bits = _parse_int_grid(args.bits, "--bits")
    lines = ["n,sparsity,bits,scheme,bits_per_row,dense_bits,reduction"]
    for n in ns:
        for s in sparsities:
            for k in bits:
                model = _flag_value(
                    codec.FootprintModel, scheme=args.scheme, tokens=n, sparsity=s, bits_k=k
                )
                row_bits, reduction = codec.footprint_bits(model)
                lines.append(
                    f"{n},{_fmt(s)},{k},{args.scheme},{row_bits},{32 * n},{_fmt(reduction)}"
                )
    text = "\n".join(lines) + "\n"
    if args.out:
        Path(args.out).write_text(text)
    else:
        sys.stdout.write(text)
    return EXIT_OK


# ---------------------------------------------------------------------------
# toy


def cmd_toy(args) -> int:
    weights = (
        toy.load_weights(args.weights) if args.weights else toy.load_default_weights()
    )
    corpus = toy.read_corpus(args.corpus) if args.corpus else toy.load_default_corpus()
    thresholds = _parse_grid(args.thresholds, "--thresholds")
    transforms = [toy.AttentionTransform.identity()]
    for t in thresholds:
        if args.quantize is not None:
            bits = args.bits if args.bits is not None else (1 if args.quantize == "boolean" else None)
            if bits is None:
                raise UsageError(f"--quantize {args.quantize} requires --bits")
            spec = _flag_value(
                quantize.QuantSpec, method=args.quantize, bits=bits, prune_threshold=t
            )
            transforms.append(toy.AttentionTransform(quant=spec))
        else:
            transforms.append(toy.AttentionTransform(prune=_flag_value(PruneSpec, t)))
    table = toy.run_sweep(corpus, transforms, weights, epsilon=args.epsilon)
    text = table.to_csv()
    if args.out:
        Path(args.out).write_text(text)
    else:
        sys.stdout.write(text)
    return EXIT_OK


# ---------------------------------------------------------------------------


def build_parser() -> _Parser:
    parser = _Parser(prog="attnsqueeze", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    def add_hist_flags(p):
        p.add_argument("--epsilon", type=float, default=1e-8, help="sparsity threshold")
        p.add_argument("--lower-bound", type=float, default=1e-8, help="histogram floor")
        p.add_argument("--bins-per-decade", type=int, default=10)

    p = sub.add_parser("profile", help="distribution report for ATTN files")
    p.add_argument("input", help=".attn file or directory of .attn files")
    p.add_argument("--out", default="report", help="output directory")
    p.add_argument("--pooled", action="store_true", help="pool a directory into one report")
    p.add_argument("--deviation-bins", type=int, default=10, help="outlier cutoff in bins")
    p.add_argument("--no-csv", action="store_true", help="write report.json only")
    add_hist_flags(p)
    p.set_defaults(func=cmd_profile)

    p = sub.add_parser("transform", help="prune and/or quantize a tensor")
    p.add_argument("input", help=".attn file")
    p.add_argument("--out", required=True, help="output .attn (dense) or .spqa (encoded)")
    p.add_argument("--prune", type=float, default=None, help="pruning threshold t")
    p.add_argument("--quantize", choices=quantize.METHODS, default=None)
    p.add_argument("--bits", type=int, default=None, help="code width k in [1, 8]")
    p.set_defaults(func=cmd_transform)

    p = sub.add_parser("sweep", help="threshold/bits grid over a dumped tensor")
    p.add_argument("input", help=".attn file")
    p.add_argument("--method", choices=quantize.METHODS, default="log")
    p.add_argument("--bits", default=None, help="comma-separated bit widths")
    p.add_argument("--prune", default=None, help="comma-separated thresholds")
    p.add_argument("--out", default=None, help="output CSV (default stdout)")
    add_hist_flags(p)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("footprint", help="per-row storage model table")
    p.add_argument("--n", required=True, help="comma-separated row lengths")
    p.add_argument("--sparsity", required=True, help="comma-separated sparsities")
    p.add_argument("--bits", required=True, help="comma-separated code widths")
    p.add_argument("--scheme", choices=codec.SCHEMES, default="bitmap_packed")
    p.add_argument("--out", default=None, help="output CSV (default stdout)")
    p.set_defaults(func=cmd_footprint)

    p = sub.add_parser("toy", help="degradation sweep on the bundled toy encoder")
    p.add_argument(
        "--thresholds",
        default="1e-8,1e-7,1e-6,1e-5,1e-4,1e-3,1e-2,1e-1",
        help="comma-separated pruning thresholds",
    )
    p.add_argument("--quantize", choices=quantize.METHODS, default=None)
    p.add_argument("--bits", type=int, default=None)
    p.add_argument("--corpus", default=None, help="token-id corpus file (default bundled)")
    p.add_argument("--weights", default=None, help="weight bundle stem (default bundled)")
    p.add_argument("--epsilon", type=float, default=1e-8)
    p.add_argument("--out", default=None, help="output CSV (default stdout)")
    p.set_defaults(func=cmd_toy)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return args.func(args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except DataError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
