"""Write a small synthetic ATTN corpus for trying out the CLI.

Each instance is a seeded softmax-of-wide-normal tensor (lognormal-like
value spread over many decades) with a token-metadata sidecar.

    python scripts/make_synthetic_attn.py [outdir] [n_instances]
"""

import sys
from pathlib import Path

import numpy as np

sys.path.insert(0, str(Path(__file__).resolve().parents[1] / "src"))

from attnsqueeze import AttentionTensor, store_attn, write_sidecar

LAYERS, HEADS, TOKENS = 2, 4, 48
SIGMA = 4.0


def main():
    outdir = Path(sys.argv[1]) if len(sys.argv) > 1 else Path("synthetic")
    count = int(sys.argv[2]) if len(sys.argv) > 2 else 4
    outdir.mkdir(parents=True, exist_ok=True)
    for i in range(count):
        rng = np.random.default_rng(1000 + i)
        scores = rng.normal(0.0, SIGMA, (LAYERS, HEADS, TOKENS, TOKENS))
        e = np.exp(scores - scores.max(-1, keepdims=True))
        alpha = (e / e.sum(-1, keepdims=True)).astype(np.float32)
        path = outdir / f"synthetic-{i:04d}.attn"
        store_attn(AttentionTensor(alpha), path)
        write_sidecar(
            path,
            model="synthetic",
            instance_id=f"synthetic-{i:04d}",
            tokens=[f"tok{j}" for j in range(TOKENS)],
        )
        print(f"wrote {path}")


if __name__ == "__main__":
    main()
