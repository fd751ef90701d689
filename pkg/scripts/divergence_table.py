"""Histogram-divergence table for 3-bit quantization of seeded rows.

Mean Jensen-Shannon divergence between each row's histogram and the
histogram of its quantized version, for linear and log codebooks, with and
without pruning at 1e-3.  Log should sit well below linear in both columns.

    python scripts/divergence_table.py
"""

import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parents[1] / "src"))

import numpy as np

from attnsqueeze import QuantSpec, quantization_divergence

N_ROWS, N, SIGMA, SEED, BITS = 100, 128, 4.0, 22, 3


def main():
    rng = np.random.default_rng(SEED)
    scores = rng.normal(0.0, SIGMA, (N_ROWS, N))
    e = np.exp(scores - scores.max(-1, keepdims=True))
    rows = e / e.sum(-1, keepdims=True)

    print(f"mean JSD over {N_ROWS} rows (N={N}), {BITS}-bit quantization")
    print(f"{'method':<8} {'pruned (t=1e-3)':>16} {'un-pruned':>12}")
    for method in ("linear", "log"):
        pruned = quantization_divergence(rows, QuantSpec(method, BITS, prune_threshold=1e-3))
        plain = quantization_divergence(rows, QuantSpec(method, BITS))
        print(f"{method:<8} {pruned:>16.3f} {plain:>12.3f}")


if __name__ == "__main__":
    main()
