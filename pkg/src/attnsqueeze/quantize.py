"""Inference-time discretization of attention values.

Two families of codebooks over [0, 1], both emitting at most ``2**k``
distinct outputs (counting the reserved zero):

* linear -- the surviving range is cut into ``2**k`` equal bins of width
  ``qs = (1 - t) / 2**k``; a value is mapped to the midpoint of its bin,
  computed as ``floor(x / qs) * qs + qs/2 + t``.  Everything below
  ``qs + t`` maps to zero, so the usable levels are the midpoints of bins
  1 .. 2**k - 1.
* log -- binning happens on the log2 scale between ``log2(t_eff)`` and 0.
  With pruning (t > 0) the range is cut into ``2**k - 1`` bins and every
  bin keeps its midpoint (values below t are already zero); without
  pruning a sentinel floor of 1e-10 stands in for t, the range is cut into
  ``2**k`` bins, and the lowest bin maps to zero.  Either way a value maps
  to ``2 ** (floor((log2 x - log2 t_eff)/qs) * qs + qs/2 + log2 t_eff)``.

``boolean`` is the one-bit extreme: every value at or above the cut maps
to 1.0, the rest to 0.

The top bin index is clamped so that x = 1.0 lands in the last bin instead
of one past it.  All bin arithmetic is float64; codebook levels are exact
float64 evaluations of the midpoint formulas, so re-quantizing a level
reproduces it bit for bit.
"""

from __future__ import annotations

import math
import operator
from dataclasses import dataclass

import numpy as np

from .attention import AttentionTensor, prune_values
from .errors import InvalidValueError, StrayValueError

METHODS = ("linear", "log", "boolean")

DEFAULT_LOG_FLOOR = 1e-10

# Smallest positive normal binary32; the boolean cut for t = 0 so that any
# representable positive attention value maps to 1.
MACHINE_ZERO = float(np.finfo(np.float32).tiny)


@dataclass(frozen=True)
class QuantSpec:
    """What to build: method, bit width k, pruning threshold, log sentinel."""

    method: str
    bits: int
    prune_threshold: float = 0.0
    log_floor: float = DEFAULT_LOG_FLOOR

    def __post_init__(self):
        if self.method not in METHODS:
            raise InvalidValueError(f"unknown quantization method {self.method!r}")
        try:
            bits = operator.index(self.bits)
        except TypeError:
            raise InvalidValueError(f"bits must be an integer, got {self.bits!r}")
        if not (1 <= bits <= 8):
            raise InvalidValueError(f"bits must be in [1, 8], got {bits}")
        object.__setattr__(self, "bits", bits)
        t = float(self.prune_threshold)
        if not math.isfinite(t) or t < 0.0 or t >= 1.0:
            raise InvalidValueError(f"prune threshold must be in [0, 1), got {t}")
        lf = float(self.log_floor)
        if not (0.0 < lf < 1.0):
            raise InvalidValueError(f"log floor must be in (0, 1), got {lf}")
        object.__setattr__(self, "prune_threshold", t)
        object.__setattr__(self, "log_floor", lf)

    def to_json_dict(self) -> dict:
        return {
            "method": self.method,
            "bits": self.bits,
            "prune_threshold": self.prune_threshold,
        }

    @classmethod
    def from_json_dict(cls, obj: dict) -> "QuantSpec":
        return cls(
            method=obj["method"],
            bits=int(obj["bits"]),
            prune_threshold=float(obj.get("prune_threshold", 0.0)),
        )


@dataclass(frozen=True, eq=False)
class Codebook:
    """The representative values a quantizer can emit, plus the reserved zero.

    ``levels`` are strictly increasing bin midpoints (float64).  Codes are
    1-indexed positions in ``levels``; code 0 is the reserved zero.
    ``first_bin`` is the bin index of ``levels[0]`` on the quantization
    grid: 1 for linear (bin 0 is zeroed), 0 for pruned log (values below t
    are gone before binning), 1 for unpruned log (the lowest bin is zeroed).
    """

    method: str
    bits: int
    prune_threshold: float
    quantile_size: float
    levels: np.ndarray
    lower_cut: float
    first_bin: int
    log2_floor: float | None = None
    zero_included: bool = True

    def __post_init__(self):
        lv = np.asarray(self.levels, dtype=np.float64)
        lv.flags.writeable = False
        object.__setattr__(self, "levels", lv)

    @property
    def top_bin(self) -> int:
        return self.first_bin + len(self.levels) - 1

    def levels_as(self, dtype) -> np.ndarray:
        return self.levels.astype(dtype)


def build_codebook(spec: QuantSpec) -> Codebook:
    """Construct the codebook for a quantization spec.

    Linear and log codebooks carry ``2**k - 1`` levels; together with the
    reserved zero that is exactly ``2**k`` distinct outputs.  Boolean
    carries the single level 1.0.
    """
    k = spec.bits
    t = spec.prune_threshold
    if spec.method == "linear":
        qs = (1.0 - t) / (1 << k)
        idx = np.arange(1, 1 << k, dtype=np.float64)
        levels = idx * qs + qs / 2.0 + t
        return Codebook(
            method="linear",
            bits=k,
            prune_threshold=t,
            quantile_size=qs,
            levels=levels,
            lower_cut=qs + t,
            first_bin=1,
        )
    if spec.method == "log":
        if t > 0.0:
            log2_floor = math.log2(t)
            qs = (0.0 - log2_floor) / ((1 << k) - 1)
            first_bin = 0
            lower_cut = t
        else:
            log2_floor = math.log2(spec.log_floor)
            qs = (0.0 - log2_floor) / (1 << k)
            first_bin = 1
            lower_cut = float(2.0 ** (log2_floor + qs))
        j = np.arange((1 << k) - 1, dtype=np.float64)
        exponents = (first_bin + j) * qs + qs / 2.0 + log2_floor
        levels = np.exp2(exponents)
        return Codebook(
            method="log",
            bits=k,
            prune_threshold=t,
            quantile_size=qs,
            levels=levels,
            lower_cut=lower_cut,
            first_bin=first_bin,
            log2_floor=log2_floor,
        )
    # boolean: single level, cut at the pruning threshold (or machine zero so
    # that any representable positive value maps to 1)
    return Codebook(
        method="boolean",
        bits=spec.bits,
        prune_threshold=t,
        quantile_size=1.0,
        levels=np.array([1.0]),
        lower_cut=max(t, MACHINE_ZERO),
        first_bin=1,
    )


def _check_unit_interval(values: np.ndarray) -> None:
    bad = ~np.isfinite(values)
    if bad.any():
        loc = tuple(int(i) for i in np.argwhere(bad)[0])
        raise InvalidValueError("non-finite value", location=loc)
    bad = (values < 0.0) | (values > 1.0)
    if bad.any():
        loc = tuple(int(i) for i in np.argwhere(bad)[0])
        raise InvalidValueError(f"value {values[loc]!r} outside [0, 1]", location=loc)


def quantize_array(values, codebook: Codebook, dtype=np.float64) -> np.ndarray:
    """Element-wise quantization of an array of values in [0, 1].

    Outputs are drawn from ``codebook.levels`` cast to ``dtype`` (plus
    zero), so the result contains at most ``len(levels) + 1`` distinct
    values no matter the input.
    """
    x = np.asarray(values, dtype=np.float64)
    _check_unit_interval(x)
    levels = codebook.levels_as(dtype)
    out = np.zeros(x.shape, dtype=dtype)
    if codebook.method == "linear":
        keep = x >= codebook.lower_cut
        if keep.any():
            bins = np.floor(x[keep] / codebook.quantile_size).astype(np.int64)
            np.minimum(bins, codebook.top_bin, out=bins)
            out[keep] = levels[bins - codebook.first_bin]
        return out
    if codebook.method == "log":
        positive = x > 0.0
        if positive.any():
            bins = np.floor(
                (np.log2(x[positive]) - codebook.log2_floor) / codebook.quantile_size
            ).astype(np.int64)
            np.minimum(bins, codebook.top_bin, out=bins)
            keep = bins >= codebook.first_bin
            vals = np.zeros(bins.shape, dtype=dtype)
            vals[keep] = levels[bins[keep] - codebook.first_bin]
            out[positive] = vals
        return out
    # boolean
    out[x >= codebook.lower_cut] = levels[0]
    return out


def _quantize_scalar(x: float, codebook: Codebook) -> float:
    if not math.isfinite(x):
        raise InvalidValueError(f"non-finite input {x!r}")
    return float(quantize_array(np.array([x]), codebook)[0])


def quantize_linear(x: float, codebook: Codebook) -> float:
    """Quantize one value with a linear codebook."""
    if codebook.method != "linear":
        raise InvalidValueError(f"codebook method is {codebook.method!r}, expected linear")
    return _quantize_scalar(x, codebook)


def quantize_log(x: float, codebook: Codebook) -> float:
    """Quantize one value with a log codebook."""
    if codebook.method != "log":
        raise InvalidValueError(f"codebook method is {codebook.method!r}, expected log")
    return _quantize_scalar(x, codebook)


def quantize_tensor(
    tensor: AttentionTensor, spec: QuantSpec
) -> tuple[AttentionTensor, Codebook]:
    """Prune (when the spec carries a threshold) then quantize a tensor.

    The returned tensor stores binary32 values, each bit-exactly equal to a
    binary32-cast codebook level or zero, so it can be bit-packed and later
    reconstructed without re-deriving midpoints.
    """
    codebook = build_codebook(spec)
    values = tensor.values
    if spec.prune_threshold > 0.0:
        values = prune_values(values, spec.prune_threshold)
    quantized = quantize_array(values, codebook, dtype=np.float32)
    return AttentionTensor(quantized), codebook


def code_of(x: float, codebook: Codebook) -> int:
    """Map zero or an exact codebook level to its integer code.

    Code 0 is reserved for the value 0; level ``i`` (0-based) carries code
    ``i + 1``.  The value may be the float64 level or its binary32
    rounding; anything else is a stray value.
    """
    if x == 0.0:
        return 0
    levels = codebook.levels
    idx = int(np.searchsorted(levels, x))
    if idx < len(levels) and levels[idx] == x:
        return idx + 1
    levels32 = codebook.levels_as(np.float32)
    idx = int(np.searchsorted(levels32, np.float32(x)))
    if idx < len(levels32) and levels32[idx] == np.float32(x) and float(np.float32(x)) == x:
        return idx + 1
    raise StrayValueError(x)


def value_of(code: int, codebook: Codebook) -> float:
    """Inverse of :func:`code_of`: code 0 is 0.0, code i is levels[i-1]."""
    if code == 0:
        return 0.0
    if not (1 <= code <= len(codebook.levels)):
        raise InvalidValueError(
            f"code {code} outside [0, {len(codebook.levels)}]"
        )
    return float(codebook.levels[code - 1])


def encode_codes(values: np.ndarray, codebook: Codebook) -> np.ndarray:
    """Vectorized code lookup for an array of binary32 quantized values.

    Every entry must be zero or a binary32-cast codebook level; a stray
    value raises with its array location.
    """
    v = np.asarray(values)
    levels32 = codebook.levels_as(np.float32)
    codes = np.searchsorted(levels32, v.astype(np.float32)) + 1
    codes[v == 0] = 0
    nonzero = v != 0
    idx = codes[nonzero] - 1
    ok = (idx < len(levels32)) & (levels32[np.minimum(idx, len(levels32) - 1)] == v[nonzero])
    if not ok.all():
        where = np.argwhere(nonzero)[~ok][0]
        loc = tuple(int(i) for i in where)
        raise StrayValueError(float(v[loc]), location=loc)
    return codes.astype(np.uint16)


def decode_codes(codes: np.ndarray, codebook: Codebook) -> np.ndarray:
    """Vectorized inverse of :func:`encode_codes`, emitting binary32 values."""
    table = np.concatenate(([np.float32(0.0)], codebook.levels_as(np.float32)))
    codes = np.asarray(codes, dtype=np.int64)
    if codes.size and (codes.min() < 0 or codes.max() >= len(table)):
        raise InvalidValueError("code outside codebook range")
    return table[codes]
