"""Generate the pinned toy-model assets: weight bundle and token corpus.

Run once from the repository root:

    python scripts/make_toy_assets.py

The files land in src/attnsqueeze/assets/ and are committed; the loader
verifies the manifest's SHA-256, so regenerating with different settings
changes the pin.  The Q/K projections are drawn wider than the usual
1/sqrt(d) so the softmax saturates and the attention spreads over many
decades (the regime the profiling and pruning tools are built for);
everything else uses conventional scales.
"""

import sys
from pathlib import Path

import numpy as np

sys.path.insert(0, str(Path(__file__).resolve().parents[1] / "src"))

from attnsqueeze.toy import (
    AttentionTransform,
    ToyConfig,
    forward,
    load_weights,
    read_corpus,
    run_sweep,
    write_weights,
)
from attnsqueeze.attention import PruneSpec

SEED = 20260810
QK_SCALE = 2.4  # widens score spread so attention covers many decades

ASSETS = Path(__file__).resolve().parents[1] / "src" / "attnsqueeze" / "assets"


def generate_weights(config: ToyConfig, rng: np.random.Generator) -> dict:
    d, ff = config.model_dim, 4 * config.model_dim
    w = {
        "token_embedding": rng.normal(0.0, 1.0, (config.vocab, d)),
        "position_embedding": rng.normal(0.0, 0.5, (config.max_tokens, d)),
        "output_projection": rng.normal(0.0, d ** -0.5, (d, config.vocab)),
    }
    for i in range(config.layers):
        w[f"layer{i}.wq"] = rng.normal(0.0, QK_SCALE * d ** -0.5, (d, d))
        w[f"layer{i}.wk"] = rng.normal(0.0, QK_SCALE * d ** -0.5, (d, d))
        w[f"layer{i}.wv"] = rng.normal(0.0, d ** -0.5, (d, d))
        w[f"layer{i}.wo"] = rng.normal(0.0, d ** -0.5, (d, d))
        w[f"layer{i}.ffn_in"] = rng.normal(0.0, (2.0 / d) ** 0.5, (d, ff))
        w[f"layer{i}.ffn_out"] = rng.normal(0.0, 1.0 / ff ** 0.5, (ff, d))
    return w


def generate_corpus(config: ToyConfig, rng: np.random.Generator) -> list[str]:
    lengths = [config.max_tokens] * 10 + [28, 24]
    return [
        " ".join(str(t) for t in rng.integers(0, config.vocab, size=n))
        for n in lengths
    ]


def main():
    ASSETS.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(SEED)
    config = ToyConfig()
    write_weights(config, generate_weights(config, rng), ASSETS / "toy_weights")
    (ASSETS / "toy_corpus.txt").write_text("\n".join(generate_corpus(config, rng)) + "\n")

    # report the regime the pinned assets land in
    weights = load_weights(ASSETS / "toy_weights")
    corpus = read_corpus(ASSETS / "toy_corpus.txt")
    results = [forward(seq, weights) for seq in corpus]
    pooled = np.concatenate([r.attention.values.ravel() for r in results])
    for eps in (1e-8, 1e-3, 1e-2):
        below = np.count_nonzero(pooled < eps) / pooled.size
        print(f"inherent sparsity @ {eps:g}: {below:.4f}")
    table = run_sweep(
        corpus,
        [AttentionTransform(prune=PruneSpec(t)) for t in (1e-8, 1e-4, 1e-2)],
        weights,
    )
    for row in table.rows:
        print(
            f"t={row.threshold:g}: sparsity={row.induced_sparsity:.4f} "
            f"agreement={row.agreement:.3f} rel_dev={row.rel_deviation:.3e}"
        )


if __name__ == "__main__":
    main()
