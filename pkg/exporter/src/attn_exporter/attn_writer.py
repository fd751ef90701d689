"""Self-contained ATTN v1 writer.

Deliberately implemented from the format definition rather than shared
code, so byte-level conformance is something the consuming toolkit's
loader verifies, not an artifact of reuse.

Layout (little-endian): magic ``ATTN``, u32 version = 1, u32 layers,
u32 heads, u32 tokens, then layers*heads*tokens*tokens binary32 values in
row-major [layer][head][query][key] order.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

MAGIC = b"ATTN"
VERSION = 1


def write_attn(values: np.ndarray, path) -> None:
    """Write an (L, H, N, N) float array as an ATTN v1 file."""
    v = np.ascontiguousarray(values, dtype="<f4")
    if v.ndim != 4 or v.shape[2] != v.shape[3]:
        raise ValueError(f"expected (L, H, N, N) values, got shape {v.shape}")
    header = struct.pack("<4sIIII", MAGIC, VERSION, v.shape[0], v.shape[1], v.shape[2])
    Path(path).write_bytes(header + v.tobytes())


def write_meta(path, model: str, instance_id: str, tokens: list[str]) -> None:
    """Write the ``<name>.meta.json`` sidecar next to an ATTN file."""
    sidecar = Path(path).with_suffix(".meta.json")
    sidecar.write_text(
        json.dumps({"model": model, "instance_id": instance_id, "tokens": tokens})
    )
