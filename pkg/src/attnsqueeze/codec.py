"""Bit-exact compressed form of pruned-and-quantized attention, plus the
memory-footprint model for comparing storage schemes.

Each row of a quantized tensor is stored as an occupancy bitmap (one bit
per key position, LSB-first within little-endian bytes, so bit ``j & 7`` of
byte ``j >> 3`` covers key ``j``) followed by the codes of the surviving
elements in increasing key order, packed ``k`` bits per code, again
LSB-first.  Code 0 is reserved for zero and never stored -- zeros live only
in the bitmap.  Both segments are padded to a byte boundary per row.

SPQA file format, version 1, little-endian:

    magic ``53 50 51 41`` ("SPQA"), u32 version = 1, u32 L, u32 H, u32 N,
    u8 method (0 = linear, 1 = log, 2 = boolean), u8 k, f64 prune
    threshold, u16 level count, level count binary32 levels, then per
    (layer, head, row): ceil(N/8) bitmap bytes followed by
    ceil(popcount * k / 8) code bytes.

The header carries the codebook levels verbatim so decoding never
re-derives floating-point midpoints.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .attention import AttentionTensor
from .errors import (
    BadMagicError,
    BitmapCodeMismatchError,
    CodeOutOfRangeError,
    DimensionOverflowError,
    InvalidValueError,
    TrailingDataError,
    TruncatedPayloadError,
    VersionError,
)
from .quantize import Codebook, QuantSpec, encode_codes

SPQA_MAGIC = b"SPQA"
SPQA_VERSION = 1
_HEADER = struct.Struct("<4sIIIIBBdH")

_METHOD_CODES = {"linear": 0, "log": 1, "boolean": 2}
_METHOD_NAMES = {v: k for k, v in _METHOD_CODES.items()}

SCHEMES = ("bitmap_packed", "dense_float32")


def pack_codes(codes: np.ndarray, k: int) -> np.ndarray:
    """Pack integer codes into bytes, k bits each, LSB-first."""
    codes = np.asarray(codes, dtype=np.uint16)
    if codes.size == 0:
        return np.zeros(0, dtype=np.uint8)
    bits = ((codes[:, None] >> np.arange(k, dtype=np.uint16)) & 1).astype(np.uint8)
    return np.packbits(bits.ravel(), bitorder="little")


def unpack_codes(buf: np.ndarray, count: int, k: int) -> np.ndarray:
    """Inverse of :func:`pack_codes` for ``count`` codes."""
    if count == 0:
        return np.zeros(0, dtype=np.uint16)
    bits = np.unpackbits(np.asarray(buf, dtype=np.uint8), bitorder="little")[: count * k]
    bits = bits.reshape(count, k).astype(np.uint16)
    weights = (np.uint16(1) << np.arange(k, dtype=np.uint16))
    return (bits * weights).sum(axis=1, dtype=np.uint16)


@dataclass(eq=False)
class SparseQuantizedAttention:
    """Bitmap + packed-code representation of a quantized tensor.

    ``bitmaps`` has shape (L, H, N, ceil(N/8)); ``row_codes`` lists, in
    (layer, head, row) order, the codes of each row's surviving elements.
    """

    layers: int
    heads: int
    tokens: int
    spec: QuantSpec
    levels: np.ndarray  # binary32, 1-indexed by code
    bitmaps: np.ndarray
    row_codes: list[np.ndarray]

    def row_index(self, layer: int, head: int, row: int) -> int:
        return (layer * self.heads + head) * self.tokens + row

    def payload_bits(self) -> int:
        """Size of all bitmap and code bytes, in bits (header excluded)."""
        bitmap_bits = 8 * self.bitmaps.size
        k = self.spec.bits
        code_bits = sum(8 * ((len(c) * k + 7) // 8) for c in self.row_codes)
        return bitmap_bits + code_bits


def encode(quantized: AttentionTensor, codebook: Codebook) -> SparseQuantizedAttention:
    """Encode a quantized tensor (every value zero or a codebook level)."""
    values = quantized.values
    codes = encode_codes(values, codebook)
    occupied = values != 0
    bitmaps = np.packbits(occupied, axis=-1, bitorder="little")
    flat = codes.reshape(-1, quantized.tokens)
    row_codes = [row[row != 0].astype(np.uint16) for row in flat]
    spec = QuantSpec(
        method=codebook.method,
        bits=codebook.bits,
        prune_threshold=codebook.prune_threshold,
    )
    return SparseQuantizedAttention(
        layers=quantized.layers,
        heads=quantized.heads,
        tokens=quantized.tokens,
        spec=spec,
        levels=codebook.levels_as(np.float32),
        bitmaps=bitmaps,
        row_codes=row_codes,
    )


def decode(s: SparseQuantizedAttention) -> AttentionTensor:
    """Exact inverse of :func:`encode`.

    Raises :class:`BitmapCodeMismatchError` when a row's popcount disagrees
    with its code count and :class:`CodeOutOfRangeError` for codes outside
    [1, level count]; both name the offending row.
    """
    L, H, N = s.layers, s.heads, s.tokens
    n_levels = len(s.levels)
    values = np.zeros((L, H, N, N), dtype=np.float32)
    flat_bitmaps = s.bitmaps.reshape(L * H * N, -1)
    for idx in range(L * H * N):
        layer, rem = divmod(idx, H * N)
        head, row = divmod(rem, N)
        mask = np.unpackbits(flat_bitmaps[idx], bitorder="little")[:N].astype(bool)
        codes = s.row_codes[idx]
        if int(mask.sum()) != len(codes):
            raise BitmapCodeMismatchError(
                f"row (layer {layer}, head {head}, row {row}): bitmap popcount "
                f"{int(mask.sum())} vs {len(codes)} codes"
            )
        if len(codes):
            if codes.min() < 1 or codes.max() > n_levels:
                raise CodeOutOfRangeError(
                    f"row (layer {layer}, head {head}, row {row}): code outside "
                    f"[1, {n_levels}]"
                )
            values[layer, head, row, mask] = s.levels[codes.astype(np.int64) - 1]
    return AttentionTensor(values)


@dataclass(frozen=True)
class FootprintModel:
    """Per-row storage model: scheme, row length, sparsity, code width."""

    scheme: str
    tokens: int
    sparsity: float
    bits_k: int

    def __post_init__(self):
        if self.scheme not in SCHEMES:
            raise InvalidValueError(f"unknown scheme {self.scheme!r}")
        if self.tokens < 1:
            raise InvalidValueError("tokens must be >= 1")
        if not (0.0 <= self.sparsity <= 1.0):
            raise InvalidValueError(f"sparsity must be in [0, 1], got {self.sparsity}")
        if self.bits_k < 1:
            raise InvalidValueError("bits_k must be >= 1")


def footprint_bits(model: FootprintModel) -> tuple[int, float]:
    """Bits per row under the model, and the reduction versus dense binary32.

    bitmap_packed stores N bitmap bits plus k bits per surviving element:
    ``N + ceil((1 - sparsity) * N) * k``.  Headers are amortized across rows
    and excluded.  The ceil is taken with a 1e-9 slack so that sparsity
    values intended as exact fractions (e.g. 0.87 of 1000) do not round up
    through float noise.
    """
    n = model.tokens
    dense = 32 * n
    if model.scheme == "dense_float32":
        return dense, 0.0
    survivors = math.ceil((1.0 - model.sparsity) * n - 1e-9)
    bits = n + survivors * model.bits_k
    return bits, 1.0 - bits / dense


def write_spqa(s: SparseQuantizedAttention, path) -> None:
    """Write the SPQA v1 file for an encoded tensor."""
    parts = [
        _HEADER.pack(
            SPQA_MAGIC,
            SPQA_VERSION,
            s.layers,
            s.heads,
            s.tokens,
            _METHOD_CODES[s.spec.method],
            s.spec.bits,
            s.spec.prune_threshold,
            len(s.levels),
        ),
        np.asarray(s.levels, dtype="<f4").tobytes(),
    ]
    flat_bitmaps = s.bitmaps.reshape(s.layers * s.heads * s.tokens, -1)
    for idx in range(len(s.row_codes)):
        parts.append(flat_bitmaps[idx].tobytes())
        parts.append(pack_codes(s.row_codes[idx], s.spec.bits).tobytes())
    Path(path).write_bytes(b"".join(parts))


def read_spqa(path) -> SparseQuantizedAttention:
    """Read an SPQA v1 file, with a distinct error per failure mode."""
    path = Path(path)
    blob = path.read_bytes()
    if len(blob) < _HEADER.size:
        raise TruncatedPayloadError(
            f"file is {len(blob)} bytes, shorter than the {_HEADER.size}-byte header",
            path=path,
            offset=len(blob),
        )
    magic, version, L, H, N, method_code, k, threshold, n_levels = _HEADER.unpack_from(blob)
    if magic != SPQA_MAGIC:
        raise BadMagicError(f"bad magic {magic!r}, expected {SPQA_MAGIC!r}", path=path, offset=0)
    if version != SPQA_VERSION:
        raise VersionError(f"unsupported version {version}", path=path, offset=4)
    if method_code not in _METHOD_NAMES:
        raise InvalidValueError(f"{path}: unknown method code {method_code}")
    if min(L, H, N) < 1:
        raise DimensionOverflowError(f"zero dimension in header {(L, H, N)}", path=path, offset=8)
    if L * H * N * N > (1 << 34):
        raise DimensionOverflowError(
            f"header declares {L * H * N * N} elements", path=path, offset=8
        )
    pos = _HEADER.size
    level_bytes = n_levels * 4
    if len(blob) < pos + level_bytes:
        raise TruncatedPayloadError("level table cut short", path=path, offset=len(blob))
    levels = np.frombuffer(blob, dtype="<f4", count=n_levels, offset=pos).copy()
    pos += level_bytes

    spec = QuantSpec(method=_METHOD_NAMES[method_code], bits=k, prune_threshold=threshold)
    bitmap_len = (N + 7) // 8
    bitmaps = np.zeros((L * H * N, bitmap_len), dtype=np.uint8)
    row_codes: list[np.ndarray] = []
    for idx in range(L * H * N):
        if len(blob) < pos + bitmap_len:
            raise TruncatedPayloadError(
                f"bitmap of row {idx} cut short", path=path, offset=len(blob)
            )
        bm = np.frombuffer(blob, dtype=np.uint8, count=bitmap_len, offset=pos)
        pos += bitmap_len
        bitmaps[idx] = bm
        popcount = int(np.unpackbits(bm, bitorder="little")[:N].sum())
        code_len = (popcount * k + 7) // 8
        if len(blob) < pos + code_len:
            raise TruncatedPayloadError(
                f"codes of row {idx} cut short", path=path, offset=len(blob)
            )
        buf = np.frombuffer(blob, dtype=np.uint8, count=code_len, offset=pos)
        pos += code_len
        row_codes.append(unpack_codes(buf, popcount, k))
    if pos != len(blob):
        raise TrailingDataError(
            f"{len(blob) - pos} unexpected bytes past the payload", path=path, offset=pos
        )
    return SparseQuantizedAttention(
        layers=L,
        heads=H,
        tokens=N,
        spec=spec,
        levels=levels,
        bitmaps=bitmaps.reshape(L, H, N, bitmap_len),
        row_codes=row_codes,
    )
