"""Deterministic desk-scale multi-head attention encoder.

A small pre-norm encoder whose post-softmax attention can be transformed
in flight (pruned, quantized, or both) between the softmax and the
value-weighted sum.  The model is untrained; sweeps therefore measure
output *stability* against the untransformed baseline (top-1 agreement of
final-position logits, relative deviation of final hidden states), not
task accuracy.

Weights ship as a pinned binary asset with a JSON manifest (tensor names,
shapes, byte offsets, whole-file SHA-256) rather than being drawn from an
in-process RNG, so every run of the sweep is bit-comparable.  All math runs
in float64 with a fixed operation order; two sweeps over the same corpus
produce byte-identical CSV.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .attention import AttentionTensor, PruneSpec, prune_values
from .errors import InvalidValueError
from .quantize import QuantSpec, build_codebook, quantize_array

ASSET_DIR = Path(__file__).parent / "assets"
DEFAULT_EPSILON = 1e-8

CSV_HEADER = "transform,threshold,bits,method,induced_sparsity,agreement,rel_deviation"


@dataclass(frozen=True)
class ToyConfig:
    layers: int = 2
    heads: int = 4
    model_dim: int = 32
    vocab: int = 64
    max_tokens: int = 32

    def __post_init__(self):
        if min(self.layers, self.heads, self.model_dim, self.vocab, self.max_tokens) < 1:
            raise InvalidValueError("all toy config counts must be >= 1")
        if self.model_dim % self.heads:
            raise InvalidValueError(
                f"model_dim {self.model_dim} not divisible by heads {self.heads}"
            )

    @property
    def head_dim(self) -> int:
        return self.model_dim // self.heads


def _tensor_names(config: ToyConfig) -> list[tuple[str, tuple[int, ...]]]:
    d, ff = config.model_dim, 4 * config.model_dim
    names = [
        ("token_embedding", (config.vocab, d)),
        ("position_embedding", (config.max_tokens, d)),
    ]
    for i in range(config.layers):
        names += [
            (f"layer{i}.wq", (d, d)),
            (f"layer{i}.wk", (d, d)),
            (f"layer{i}.wv", (d, d)),
            (f"layer{i}.wo", (d, d)),
            (f"layer{i}.ffn_in", (d, ff)),
            (f"layer{i}.ffn_out", (ff, d)),
        ]
    names.append(("output_projection", (d, config.vocab)))
    return names


@dataclass(eq=False)
class WeightBundle:
    """All model parameters, loaded from the pinned binary asset.

    Arrays are float64 upcasts of the stored binary32 data; the manifest
    checksum is verified on load.
    """

    config: ToyConfig
    tensors: dict[str, np.ndarray]

    def __getitem__(self, name: str) -> np.ndarray:
        return self.tensors[name]


def write_weights(config: ToyConfig, tensors: dict[str, np.ndarray], stem: Path) -> None:
    """Write ``<stem>.bin`` and its ``<stem>.json`` manifest."""
    expected = _tensor_names(config)
    blob = bytearray()
    entries = []
    for name, shape in expected:
        arr = np.ascontiguousarray(tensors[name], dtype="<f4")
        if arr.shape != shape:
            raise InvalidValueError(f"{name}: shape {arr.shape}, manifest requires {shape}")
        entries.append({"name": name, "shape": list(shape), "offset": len(blob)})
        blob += arr.tobytes()
    checksum = hashlib.sha256(bytes(blob)).hexdigest()
    Path(f"{stem}.bin").write_bytes(bytes(blob))
    manifest = {
        "config": {
            "layers": config.layers,
            "heads": config.heads,
            "model_dim": config.model_dim,
            "vocab": config.vocab,
            "max_tokens": config.max_tokens,
        },
        "checksum": f"sha256:{checksum}",
        "tensors": entries,
    }
    Path(f"{stem}.json").write_text(json.dumps(manifest, indent=1))


def load_weights(stem) -> WeightBundle:
    """Load a weight bundle, verifying the pinned whole-file checksum."""
    stem = Path(stem)
    manifest = json.loads(Path(f"{stem}.json").read_text())
    blob = Path(f"{stem}.bin").read_bytes()
    digest = f"sha256:{hashlib.sha256(blob).hexdigest()}"
    if digest != manifest["checksum"]:
        raise InvalidValueError(
            f"weight bundle checksum mismatch: {digest} != {manifest['checksum']}"
        )
    config = ToyConfig(**manifest["config"])
    tensors = {}
    for entry in manifest["tensors"]:
        shape = tuple(entry["shape"])
        count = int(np.prod(shape))
        arr = np.frombuffer(blob, dtype="<f4", count=count, offset=entry["offset"])
        tensors[entry["name"]] = arr.reshape(shape).astype(np.float64)
    for name, shape in _tensor_names(config):
        if name not in tensors or tensors[name].shape != shape:
            raise InvalidValueError(f"weight bundle missing or misshaped tensor {name}")
    return WeightBundle(config=config, tensors=tensors)


def load_default_weights() -> WeightBundle:
    return load_weights(ASSET_DIR / "toy_weights")


def read_corpus(path) -> list[np.ndarray]:
    """Newline-delimited sequences of space-separated token ids."""
    sequences = []
    for line in Path(path).read_text().splitlines():
        line = line.strip()
        if not line:
            continue
        sequences.append(np.array([int(tok) for tok in line.split()], dtype=np.int64))
    if not sequences:
        raise InvalidValueError(f"{path}: empty corpus")
    return sequences


def load_default_corpus() -> list[np.ndarray]:
    return read_corpus(ASSET_DIR / "toy_corpus.txt")


@dataclass(frozen=True, eq=False)
class AttentionTransform:
    """Optional pruning and/or quantization applied to each head's
    post-softmax attention matrix, before the value-weighted sum."""

    prune: PruneSpec | None = None
    quant: QuantSpec | None = None

    @classmethod
    def identity(cls) -> "AttentionTransform":
        return cls()

    @property
    def is_identity(self) -> bool:
        return self.prune is None and self.quant is None

    @property
    def label(self) -> str:
        if self.quant is not None:
            return "quantize"
        if self.prune is not None:
            return "prune"
        return "identity"

    @property
    def threshold(self) -> float:
        if self.quant is not None and self.quant.prune_threshold > 0:
            return self.quant.prune_threshold
        if self.prune is not None:
            return self.prune.threshold
        return 0.0

    def apply(self, alpha: np.ndarray) -> np.ndarray:
        """Element-wise transform of an attention array (any shape)."""
        out = alpha
        if self.prune is not None:
            out = prune_values(out, self.prune.threshold)
        if self.quant is not None:
            codebook = build_codebook(self.quant)
            if self.quant.prune_threshold > 0:
                out = prune_values(out, self.quant.prune_threshold)
            out = quantize_array(out, codebook)
        return out


@dataclass(eq=False)
class ForwardResult:
    logits: np.ndarray  # (n, vocab) float64
    attention: AttentionTensor  # captured post-softmax, pre-transform
    transformed: AttentionTensor  # post-transform, as fed to the value sum
    final_hidden: np.ndarray  # (n, model_dim) float64, input to the projection


def _layernorm(x: np.ndarray) -> np.ndarray:
    mean = x.mean(axis=-1, keepdims=True)
    var = x.var(axis=-1, keepdims=True)
    return (x - mean) / np.sqrt(var + 1e-5)


def _softmax_rows(scores: np.ndarray) -> np.ndarray:
    shifted = scores - scores.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=-1, keepdims=True)


def forward(
    tokens, weights: WeightBundle, transform: AttentionTransform | None = None
) -> ForwardResult:
    """One pre-norm encoder pass, with the attention transform applied
    between softmax and the value-weighted sum.

    Also captures the untransformed attention for profiling, and the
    transformed attention for sparsity accounting.
    """
    cfg = weights.config
    transform = transform or AttentionTransform.identity()
    ids = np.asarray(tokens, dtype=np.int64)
    if ids.ndim != 1 or ids.size < 1:
        raise InvalidValueError("tokens must be a non-empty 1-D sequence")
    if ids.size > cfg.max_tokens:
        raise InvalidValueError(f"sequence length {ids.size} exceeds {cfg.max_tokens}")
    if ids.min() < 0 or ids.max() >= cfg.vocab:
        raise InvalidValueError(f"token id outside [0, {cfg.vocab})")

    n, H, dh = ids.size, cfg.heads, cfg.head_dim
    x = weights["token_embedding"][ids] + weights["position_embedding"][:n]

    captured = []
    captured_transformed = []
    for i in range(cfg.layers):
        h = _layernorm(x)
        q = (h @ weights[f"layer{i}.wq"]).reshape(n, H, dh).transpose(1, 0, 2)
        k = (h @ weights[f"layer{i}.wk"]).reshape(n, H, dh).transpose(1, 0, 2)
        v = (h @ weights[f"layer{i}.wv"]).reshape(n, H, dh).transpose(1, 0, 2)
        scores = q @ k.transpose(0, 2, 1) / np.sqrt(dh)
        alpha = _softmax_rows(scores)
        captured.append(alpha)
        alpha_t = transform.apply(alpha) if not transform.is_identity else alpha
        captured_transformed.append(alpha_t)
        ctx = (alpha_t @ v).transpose(1, 0, 2).reshape(n, cfg.model_dim)
        x = x + ctx @ weights[f"layer{i}.wo"]
        f = _layernorm(x)
        x = x + np.maximum(f @ weights[f"layer{i}.ffn_in"], 0.0) @ weights[f"layer{i}.ffn_out"]

    final_hidden = _layernorm(x)
    logits = final_hidden @ weights["output_projection"]
    attention = AttentionTensor(np.stack(captured).astype(np.float32))
    transformed = AttentionTensor(np.stack(captured_transformed).astype(np.float32))
    return ForwardResult(
        logits=logits, attention=attention, transformed=transformed, final_hidden=final_hidden
    )


def agreement(baseline_logits: np.ndarray, transformed_logits: np.ndarray) -> float:
    """Fraction of positions whose argmax token matches (ties go to the
    lowest index on both sides)."""
    a = np.asarray(baseline_logits)
    b = np.asarray(transformed_logits)
    if a.shape != b.shape:
        raise InvalidValueError(f"shape mismatch: {a.shape} vs {b.shape}")
    return float(np.mean(np.argmax(a, axis=-1) == np.argmax(b, axis=-1)))


@dataclass(frozen=True)
class DegradationRow:
    transform: str
    threshold: float
    bits: int | None
    method: str | None
    induced_sparsity: float
    agreement: float
    rel_deviation: float

    def to_csv_line(self) -> str:
        bits = "" if self.bits is None else str(self.bits)
        method = "" if self.method is None else self.method
        return (
            f"{self.transform},{self.threshold:.9g},{bits},{method},"
            f"{self.induced_sparsity:.9g},{self.agreement:.9g},{self.rel_deviation:.9g}"
        )


@dataclass(eq=False)
class DegradationTable:
    rows: list[DegradationRow]

    def to_csv(self) -> str:
        return "\n".join([CSV_HEADER] + [r.to_csv_line() for r in self.rows]) + "\n"


def run_sweep(
    corpus: list[np.ndarray],
    transforms: list[AttentionTransform],
    weights: WeightBundle,
    epsilon: float = DEFAULT_EPSILON,
) -> DegradationTable:
    """Run every transform over the corpus and tabulate degradation.

    The first row is always the identity baseline (prepended when absent).
    Induced sparsity pools the below-epsilon count over every transformed
    attention value of the corpus; agreement compares final-position argmax
    tokens against the baseline; rel_deviation is the mean over instances
    of ``||h - h_base||_F / ||h_base||_F`` on final hidden states.
    """
    if not corpus:
        raise InvalidValueError("corpus must be non-empty")
    transforms = list(transforms)
    if not transforms or not transforms[0].is_identity:
        transforms.insert(0, AttentionTransform.identity())

    baselines = [forward(seq, weights) for seq in corpus]
    base_final = np.stack([r.logits[-1] for r in baselines])

    rows = []
    for tr in transforms:
        results = baselines if tr.is_identity else [forward(seq, weights, tr) for seq in corpus]
        below = sum(
            int(np.count_nonzero(r.transformed.values < epsilon)) for r in results
        )
        size = sum(r.transformed.values.size for r in results)
        final = np.stack([r.logits[-1] for r in results])
        devs = [
            float(
                np.linalg.norm(r.final_hidden - b.final_hidden)
                / np.linalg.norm(b.final_hidden)
            )
            for r, b in zip(results, baselines)
        ]
        rows.append(
            DegradationRow(
                transform=tr.label,
                threshold=tr.threshold,
                bits=tr.quant.bits if tr.quant is not None else None,
                method=tr.quant.method if tr.quant is not None else None,
                induced_sparsity=below / size,
                agreement=agreement(base_final, final),
                rel_deviation=float(np.mean(devs)),
            )
        )
    return DegradationTable(rows=rows)
