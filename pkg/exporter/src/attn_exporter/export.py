"""Capture post-softmax attention from pretrained encoders.

One input text becomes one ATTN file (L x H x N x N, N = true token count,
no padding positions) plus a sidecar with the token strings.  Works with
anything ``transformers.AutoModel`` can load, by hub id or local path.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch
from transformers import AutoModel, AutoTokenizer

from .attn_writer import write_attn, write_meta


class ExportError(Exception):
    """Model loading or tokenization failed for this job."""


@dataclass
class ExportJob:
    model: str
    texts: list[str]
    out_dir: Path
    max_len: int = 384
    name_prefix: str = "instance"

    def __post_init__(self):
        self.out_dir = Path(self.out_dir)
        if not self.texts or any(not t.strip() for t in self.texts):
            raise ExportError("every input text must be non-empty")
        if self.max_len < 1:
            raise ExportError(f"max_len must be >= 1, got {self.max_len}")


@dataclass
class ExportResult:
    paths: list[Path] = field(default_factory=list)
    layers: int = 0
    heads: int = 0


def export_attention(job: ExportJob) -> ExportResult:
    """Run the encoder over every text and dump its attention tensors.

    Dropout is disabled (eval mode), so each captured row is a softmax
    output summing to 1.  Sequences longer than ``max_len`` tokens are a
    hard error rather than being silently truncated.
    """
    try:
        tokenizer = AutoTokenizer.from_pretrained(job.model)
        # sdpa/flash kernels do not materialize attention probabilities
        model = AutoModel.from_pretrained(job.model, attn_implementation="eager")
    except Exception as exc:
        raise ExportError(f"failed to load model {job.model!r}: {exc}") from exc
    model.eval()

    job.out_dir.mkdir(parents=True, exist_ok=True)
    result = ExportResult()
    for i, text in enumerate(job.texts):
        encoded = tokenizer(text, return_tensors="pt")
        n_tokens = encoded["input_ids"].shape[1]
        if n_tokens > job.max_len:
            raise ExportError(
                f"text {i}: {n_tokens} tokens exceed the {job.max_len}-token limit"
            )
        with torch.no_grad():
            output = model(**encoded, output_attentions=True)
        # tuple of L tensors (1, H, N, N) -> (L, H, N, N)
        attention = torch.stack(output.attentions)[:, 0].to(torch.float32).numpy()
        attention = np.clip(attention, 0.0, 1.0)

        instance_id = f"{job.name_prefix}-{i:04d}"
        path = job.out_dir / f"{instance_id}.attn"
        write_attn(attention, path)
        tokens = tokenizer.convert_ids_to_tokens(encoded["input_ids"][0])
        write_meta(path, model=job.model, instance_id=instance_id, tokens=list(tokens))

        result.paths.append(path)
        result.layers, result.heads = attention.shape[0], attention.shape[1]
    return result
