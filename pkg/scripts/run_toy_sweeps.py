"""Desk-scale degradation experiments on the bundled toy encoder.

Produces, under results/:

  prune_sweep.csv        stability vs pruning threshold (decade grid)
  quant_sweep.csv        stability of k-bit linear/log quantization,
                         with and without pruning at 1e-3
  quant_threshold.csv    2-bit log quantization across pruning thresholds

    python scripts/run_toy_sweeps.py [results_dir]
"""

import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parents[1] / "src"))

from attnsqueeze import (
    AttentionTransform,
    PruneSpec,
    QuantSpec,
    load_default_corpus,
    load_default_weights,
    run_sweep,
)

DECADES = [10.0**e for e in range(-8, 0)]


def main():
    outdir = Path(sys.argv[1]) if len(sys.argv) > 1 else Path("results")
    outdir.mkdir(parents=True, exist_ok=True)
    weights = load_default_weights()
    corpus = load_default_corpus()

    prune_rows = [AttentionTransform(prune=PruneSpec(t)) for t in DECADES]
    (outdir / "prune_sweep.csv").write_text(
        run_sweep(corpus, prune_rows, weights).to_csv()
    )

    quant_rows = []
    for method in ("linear", "log"):
        for k in (1, 2, 3, 4):
            for t in (0.0, 1e-3):
                quant_rows.append(
                    AttentionTransform(quant=QuantSpec(method, k, prune_threshold=t))
                )
    quant_rows.append(AttentionTransform(quant=QuantSpec("boolean", 1, prune_threshold=1e-3)))
    (outdir / "quant_sweep.csv").write_text(
        run_sweep(corpus, quant_rows, weights).to_csv()
    )

    threshold_rows = [
        AttentionTransform(quant=QuantSpec("log", 2, prune_threshold=t))
        for t in (1e-6, 1e-5, 1e-4, 1e-3, 1e-2, 1e-1)
    ]
    (outdir / "quant_threshold.csv").write_text(
        run_sweep(corpus, threshold_rows, weights).to_csv()
    )

    for name in ("prune_sweep.csv", "quant_sweep.csv", "quant_threshold.csv"):
        print(f"== {name}")
        print((outdir / name).read_text())


if __name__ == "__main__":
    main()
