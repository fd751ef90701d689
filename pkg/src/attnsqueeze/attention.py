"""Post-softmax attention tensors, inference-time pruning, sparsity
measurement, and the ATTN binary format.

An attention tensor holds the softmax outputs of every head of an encoder:
a 4-D array indexed ``[layer][head][query][key]`` whose entries lie in
[0, 1].  Rows of a freshly captured tensor sum to 1 (within 1e-3); pruning
zeroes entries below a threshold without renormalizing, so after pruning
with threshold ``t`` each row sum lies in ``(original - N*t, original]``.

ATTN format, version 1, little-endian throughout:

    bytes  0..3    magic ``41 54 54 4E`` ("ATTN")
    bytes  4..7    u32 version, currently 1
    bytes  8..19   u32 layers, u32 heads, u32 tokens
    bytes 20..     layers*heads*tokens*tokens IEEE-754 binary32 values in
                   row-major order [layer][head][query][key]

No padding, no footer.  An optional sidecar ``<name>.meta.json`` may carry
``model``, ``instance_id`` and ``tokens`` (array of strings); numeric code
ignores it.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import (
    BadMagicError,
    DimensionOverflowError,
    InvalidValueError,
    TrailingDataError,
    TruncatedPayloadError,
    VersionError,
)

ATTN_MAGIC = b"ATTN"
ATTN_VERSION = 1
_HEADER = struct.Struct("<4sIIII")

# Refuse to allocate tensors past this element count; headers declaring more
# are treated as corrupt rather than honored.
MAX_ELEMENTS = 1 << 34

DEFAULT_EPSILON = 1e-8


def _check_values(values: np.ndarray) -> None:
    """Reject non-finite or out-of-[0,1] entries, naming the first offender."""
    bad = ~np.isfinite(values)
    if bad.any():
        loc = tuple(int(i) for i in np.argwhere(bad)[0])
        raise InvalidValueError("non-finite attention value", location=loc)
    bad = (values < 0.0) | (values > 1.0)
    if bad.any():
        loc = tuple(int(i) for i in np.argwhere(bad)[0])
        raise InvalidValueError(
            f"attention value {values[loc]!r} outside [0, 1]", location=loc
        )


@dataclass(frozen=True)
class AttentionTensor:
    """L x H x N x N post-softmax attention values, stored as binary32.

    The array is made read-only on construction; all operations on tensors
    are pure functions returning new tensors, so instances are safe to share
    across threads.
    """

    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float32)
        if v.ndim != 4:
            raise InvalidValueError(f"expected 4-D values, got {v.ndim}-D")
        if min(v.shape) < 1:
            raise InvalidValueError(f"all dimensions must be >= 1, got {v.shape}")
        if v.shape[2] != v.shape[3]:
            raise InvalidValueError(
                f"query/key dimensions must match, got {v.shape[2]}x{v.shape[3]}"
            )
        _check_values(v)
        v = v.copy() if v is self.values else v
        v.flags.writeable = False
        object.__setattr__(self, "values", v)

    @property
    def layers(self) -> int:
        return self.values.shape[0]

    @property
    def heads(self) -> int:
        return self.values.shape[1]

    @property
    def tokens(self) -> int:
        return self.values.shape[2]

    def head(self, layer: int, head: int) -> np.ndarray:
        """The N x N attention matrix of one head."""
        return self.values[layer, head]

    def row_sums(self) -> np.ndarray:
        """Per-row sums, accumulated in float64 to avoid drift on long rows."""
        return self.values.astype(np.float64).sum(axis=-1)

    def is_row_stochastic(self, tol: float = 1e-3) -> bool:
        """True when every row sums to 1 within ``tol`` (fresh softmax output)."""
        return bool(np.all(np.abs(self.row_sums() - 1.0) <= tol))


@dataclass(frozen=True)
class PruneSpec:
    """Inference-time pruning threshold: values strictly below ``threshold``
    are replaced by exact zeros; values equal to it survive."""

    threshold: float

    def __post_init__(self):
        t = float(self.threshold)
        if not np.isfinite(t) or t < 0.0:
            raise InvalidValueError(f"prune threshold must be finite and >= 0, got {t}")
        if t >= 1.0:
            raise InvalidValueError(f"prune threshold must be < 1, got {t}")
        object.__setattr__(self, "threshold", t)


@dataclass(frozen=True)
class SparsityLevel:
    """Fraction of values strictly below ``epsilon`` over some scope."""

    epsilon: float
    fraction: float


def prune_values(values: np.ndarray, threshold: float) -> np.ndarray:
    """Zero entries strictly below ``threshold``; surviving entries unchanged.

    Works on arrays of any float dtype (the in-graph path of the toy model
    uses float64); dtype is preserved.
    """
    return np.where(values < threshold, values.dtype.type(0), values)


def prune(tensor: AttentionTensor, spec: PruneSpec) -> AttentionTensor:
    """Apply threshold pruning to a whole tensor.

    With threshold 0 the result is bitwise identical to the input.  Pruning
    is idempotent and never increases an element.
    """
    return AttentionTensor(prune_values(tensor.values, spec.threshold))


def measure_sparsity(tensor_or_values, epsilon: float = DEFAULT_EPSILON) -> SparsityLevel:
    """Fraction of values strictly below ``epsilon`` over the given scope.

    Accepts an :class:`AttentionTensor`, a head matrix, or a single row; the
    count is exact (an element-wise comparison, no estimation).
    """
    eps = float(epsilon)
    if not (0.0 < eps < 1.0):
        raise InvalidValueError(f"epsilon must be in (0, 1), got {eps}")
    if isinstance(tensor_or_values, AttentionTensor):
        values = tensor_or_values.values
    else:
        values = np.asarray(tensor_or_values)
    if values.size == 0:
        raise InvalidValueError("cannot measure sparsity of an empty scope")
    below = int(np.count_nonzero(values < eps))
    return SparsityLevel(epsilon=eps, fraction=below / values.size)


def store_attn(tensor: AttentionTensor, path) -> None:
    """Write a tensor in ATTN v1 format (header + raw binary32 payload)."""
    path = Path(path)
    header = _HEADER.pack(
        ATTN_MAGIC, ATTN_VERSION, tensor.layers, tensor.heads, tensor.tokens
    )
    payload = np.ascontiguousarray(tensor.values, dtype="<f4").tobytes()
    path.write_bytes(header + payload)


def load_attn(path) -> AttentionTensor:
    """Read an ATTN v1 file, validating structure and value range.

    Raises a distinct error per failure mode: :class:`BadMagicError`,
    :class:`VersionError`, :class:`DimensionOverflowError`,
    :class:`TruncatedPayloadError`, :class:`TrailingDataError`.
    """
    path = Path(path)
    blob = path.read_bytes()
    if len(blob) < _HEADER.size:
        raise TruncatedPayloadError(
            f"file is {len(blob)} bytes, shorter than the {_HEADER.size}-byte header",
            path=path,
            offset=len(blob),
        )
    magic, version, layers, heads, tokens = _HEADER.unpack_from(blob)
    if magic != ATTN_MAGIC:
        raise BadMagicError(f"bad magic {magic!r}, expected {ATTN_MAGIC!r}", path=path, offset=0)
    if version != ATTN_VERSION:
        raise VersionError(f"unsupported version {version}", path=path, offset=4)
    dims = (layers, heads, tokens)
    if min(dims) < 1:
        raise DimensionOverflowError(f"zero dimension in header {dims}", path=path, offset=8)
    count = layers * heads * tokens * tokens
    if count > MAX_ELEMENTS:
        raise DimensionOverflowError(
            f"header declares {count} elements (limit {MAX_ELEMENTS})", path=path, offset=8
        )
    expected = count * 4
    actual = len(blob) - _HEADER.size
    if actual < expected:
        raise TruncatedPayloadError(
            f"payload is {actual} bytes, header requires {expected}",
            path=path,
            offset=len(blob),
        )
    if actual > expected:
        raise TrailingDataError(
            f"{actual - expected} unexpected bytes past the payload",
            path=path,
            offset=_HEADER.size + expected,
        )
    values = np.frombuffer(blob, dtype="<f4", offset=_HEADER.size).reshape(
        layers, heads, tokens, tokens
    )
    try:
        return AttentionTensor(values.copy())
    except InvalidValueError as exc:
        raise InvalidValueError(f"{path}: {exc}") from exc


def read_sidecar(path) -> dict | None:
    """Load ``<name>.meta.json`` next to an ATTN file, if present."""
    sidecar = Path(path).with_suffix(".meta.json")
    if not sidecar.exists():
        return None
    with open(sidecar, "r", encoding="utf-8") as fh:
        return json.load(fh)


def write_sidecar(path, model: str, instance_id: str, tokens: list[str]) -> None:
    """Write the token-metadata sidecar for an ATTN file."""
    sidecar = Path(path).with_suffix(".meta.json")
    with open(sidecar, "w", encoding="utf-8") as fh:
        json.dump({"model": model, "instance_id": instance_id, "tokens": tokens}, fh)
