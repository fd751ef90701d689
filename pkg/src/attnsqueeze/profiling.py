"""Distribution statistics for attention tensors.

Everything here is a pure function over rows (1-D), heads (2-D, one row per
query token), or whole tensors: log-scale histograms with an underflow
bucket, per-head sparsity distributions, major-token concentration counts,
histogram dispersion, outlier-token detection, and Jensen-Shannon
divergence between original and quantized histograms.

Histograms are logarithmic with ``bins_per_decade`` bins per decade between
``lower_bound`` (a power of ten) and 1, plus an underflow bucket at index 0
for everything below ``lower_bound``.  The default 10 bins/decade from 1e-8
gives 80 log bins + 1 underflow = 81 buckets.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .attention import AttentionTensor, prune_values
from .errors import InvalidValueError
from .quantize import Codebook, QuantSpec, build_codebook, quantize_array

SCHEMA_VERSION = 1
DEFAULT_DEVIATION_BINS = 10


def _sig9(x: float) -> float:
    """Round to 9 significant digits for stable report output."""
    return float(f"{float(x):.9g}")


@dataclass(frozen=True)
class HistogramSpec:
    """Log-scale binning domain: [lower_bound, 1] plus an underflow bucket."""

    lower_bound: float = 1e-8
    bins_per_decade: int = 10
    underflow_bucket: bool = True

    def __post_init__(self):
        lb = float(self.lower_bound)
        if not (0.0 < lb < 1.0):
            raise InvalidValueError(f"lower bound must be in (0, 1), got {lb}")
        decades = -math.log10(lb)
        if abs(decades - round(decades)) > 1e-9:
            raise InvalidValueError(f"lower bound must be a power of ten, got {lb}")
        if self.bins_per_decade < 1:
            raise InvalidValueError("bins_per_decade must be >= 1")
        object.__setattr__(self, "lower_bound", lb)

    @property
    def decades(self) -> int:
        return round(-math.log10(self.lower_bound))

    @property
    def log_bins(self) -> int:
        return self.bins_per_decade * self.decades

    @property
    def total_bins(self) -> int:
        return self.log_bins + (1 if self.underflow_bucket else 0)

    def bin_edges(self) -> np.ndarray:
        """Edges of the log bins; the underflow bucket spans [0, edges[0])."""
        i = np.arange(self.log_bins + 1, dtype=np.float64)
        return 10.0 ** (-self.decades + i / self.bins_per_decade)

    def bin_indices(self, values: np.ndarray) -> np.ndarray:
        """Bucket index per value; 0 is the underflow bucket when enabled."""
        v = np.asarray(values, dtype=np.float64)
        under = v < self.lower_bound
        if not self.underflow_bucket and under.any():
            loc = tuple(int(i) for i in np.argwhere(under)[0])
            raise InvalidValueError(
                f"value below lower bound {self.lower_bound} with underflow bucket disabled",
                location=loc,
            )
        idx = np.zeros(v.shape, dtype=np.int64)
        inside = ~under
        if inside.any():
            raw = (np.log10(v[inside]) + self.decades) * self.bins_per_decade
            k = np.floor(raw).astype(np.int64)
            np.clip(k, 0, self.log_bins - 1, out=k)
            idx[inside] = k + (1 if self.underflow_bucket else 0)
        return idx

    def to_json_dict(self) -> dict:
        return {
            "lower_bound": self.lower_bound,
            "bins_per_decade": self.bins_per_decade,
            "underflow_bucket": self.underflow_bucket,
        }


@dataclass(frozen=True, eq=False)
class RowHistogram:
    """Counts, normalized densities, and cumulative densities for one scope."""

    spec: HistogramSpec
    counts: np.ndarray

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    @property
    def densities(self) -> np.ndarray:
        return self.counts / self.total

    @property
    def cumulative(self) -> np.ndarray:
        return np.cumsum(self.counts) / self.total

    def c50_index(self) -> int:
        """First bucket at which cumulative density reaches >= 0.5 (exact
        integer arithmetic, so a cumulative of exactly one half counts)."""
        cum2 = 2 * np.cumsum(self.counts)
        return int(np.argmax(cum2 >= self.total))


def _check_row(row: np.ndarray) -> np.ndarray:
    v = np.asarray(row, dtype=np.float64)
    if v.size == 0:
        raise InvalidValueError("empty row")
    bad = ~np.isfinite(v)
    if bad.any():
        loc = tuple(int(i) for i in np.argwhere(bad)[0])
        raise InvalidValueError("non-finite value", location=loc)
    bad = (v < 0.0) | (v > 1.0)
    if bad.any():
        loc = tuple(int(i) for i in np.argwhere(bad)[0])
        raise InvalidValueError(f"value {v[loc]!r} outside [0, 1]", location=loc)
    return v


def row_histogram(row, spec: HistogramSpec = HistogramSpec()) -> RowHistogram:
    """Log-scale histogram of one row (or any flat collection of values)."""
    v = _check_row(np.asarray(row).ravel())
    idx = spec.bin_indices(v)
    counts = np.bincount(idx, minlength=spec.total_bins)
    return RowHistogram(spec=spec, counts=counts)


def sparsity_distribution(head, epsilon: float = 1e-8) -> np.ndarray:
    """Density of per-row sparsity over 10 uniform bins on [0, 1].

    Each row contributes its fraction of entries strictly below ``epsilon``
    to exactly one bin; the last bin [0.9, 1.0] includes sparsity 1.0.
    """
    h = np.asarray(head, dtype=np.float64)
    if h.ndim != 2 or h.size == 0:
        raise InvalidValueError("head must be a non-empty 2-D array")
    frac = (h < epsilon).sum(axis=1) / h.shape[1]
    bins = np.minimum((frac * 10).astype(np.int64), 9)
    counts = np.bincount(bins, minlength=10)
    return counts / h.shape[0]


def major_token_count(row) -> int:
    """Smallest number of largest entries whose sum reaches 0.5.

    A row whose total falls below 0.5 (over-pruned) cannot reach one half;
    by convention it reports the full row length.
    """
    v = _check_row(row)
    csum = np.cumsum(np.sort(v)[::-1])
    # the same accumulation decides both the reachability check and the
    # cutoff, so a total within one ulp of 0.5 cannot disagree with itself
    if csum[-1] < 0.5:
        return v.size
    return int(np.argmax(csum >= 0.5)) + 1


def head_major_stats(head) -> tuple[float, float]:
    """Population mean and standard deviation of major-token counts over a
    head's rows."""
    h = np.asarray(head, dtype=np.float64)
    if h.ndim != 2 or h.size == 0:
        raise InvalidValueError("head must be a non-empty 2-D array")
    counts = np.array([major_token_count(r) for r in h], dtype=np.float64)
    return float(counts.mean()), float(counts.std())


def c50_bin_index(row, spec: HistogramSpec = HistogramSpec()) -> int:
    """Index of the first histogram bucket where the cumulative density of
    the row's values reaches one half (underflow bucket = index 0)."""
    return row_histogram(row, spec).c50_index()


def dispersion(head, spec: HistogramSpec = HistogramSpec()) -> float:
    """Population standard deviation of the rows' c50 bucket indices.

    High dispersion means the head's rows have dissimilar histograms; it is
    invariant under row permutation.
    """
    h = np.asarray(head, dtype=np.float64)
    if h.ndim != 2 or h.size == 0:
        raise InvalidValueError("head must be a non-empty 2-D array")
    idx = np.array([c50_bin_index(r, spec) for r in h], dtype=np.float64)
    return float(idx.std())


def outlier_tokens(
    head, spec: HistogramSpec = HistogramSpec(), deviation_bins: int = DEFAULT_DEVIATION_BINS
) -> list[int]:
    """Row ids whose c50 bucket index sits more than ``deviation_bins`` away
    from the head's median c50 index."""
    if deviation_bins < 1:
        raise InvalidValueError("deviation_bins must be >= 1")
    h = np.asarray(head, dtype=np.float64)
    if h.ndim != 2 or h.size == 0:
        raise InvalidValueError("head must be a non-empty 2-D array")
    idx = np.array([c50_bin_index(r, spec) for r in h], dtype=np.float64)
    median = float(np.median(idx))
    return [int(i) for i in np.flatnonzero(np.abs(idx - median) > deviation_bins)]


def js_divergence(p, q) -> float:
    """Jensen-Shannon divergence with base-2 logarithms, in [0, 1].

    Both inputs must be densities of equal length summing to 1 (within
    1e-6); the convention 0 * log(0/x) = 0 applies.
    """
    P = np.asarray(p, dtype=np.float64)
    Q = np.asarray(q, dtype=np.float64)
    if P.shape != Q.shape:
        raise InvalidValueError(f"length mismatch: {P.shape} vs {Q.shape}")
    if (P < 0).any() or (Q < 0).any():
        raise InvalidValueError("negative density")
    for name, d in (("p", P), ("q", Q)):
        if abs(d.sum() - 1.0) > 1e-6:
            raise InvalidValueError(f"{name} sums to {d.sum()!r}, expected 1")
    M = (P + Q) / 2.0
    with np.errstate(divide="ignore", invalid="ignore"):
        kl_p = np.where(P > 0, P * (np.log2(P) - np.log2(M)), 0.0).sum()
        kl_q = np.where(Q > 0, Q * (np.log2(Q) - np.log2(M)), 0.0).sum()
    jsd = 0.5 * kl_p + 0.5 * kl_q
    if -1e-12 < jsd < 0.0:
        return 0.0
    return float(jsd)


def quantization_divergence(
    tensor_or_rows,
    spec: QuantSpec,
    hist: HistogramSpec = HistogramSpec(),
    codebook: Codebook | None = None,
) -> float:
    """Mean over all rows of the divergence between each row's histogram and
    the histogram of its pruned-and-quantized version.

    Accepts a whole tensor or any array whose last axis is the row.
    """
    cb = codebook if codebook is not None else build_codebook(spec)
    if isinstance(tensor_or_rows, AttentionTensor):
        values = tensor_or_rows.values
    else:
        values = np.asarray(tensor_or_rows)
    rows = values.reshape(-1, values.shape[-1]).astype(np.float64)
    total = 0.0
    for row in rows:
        work = prune_values(row, spec.prune_threshold) if spec.prune_threshold > 0 else row
        qrow = quantize_array(work, cb)
        total += js_divergence(
            row_histogram(row, hist).densities, row_histogram(qrow, hist).densities
        )
    return total / len(rows)


@dataclass(eq=False)
class HeadProfile:
    """Per-head statistics; row-level intermediates stay in memory only."""

    layer: int
    head: int
    sparsity: float
    sparsity_distribution: np.ndarray
    major_token_mean: float
    major_token_std: float
    dispersion: float
    outlier_token_ids: list[int]
    histogram: RowHistogram
    c50_indices: np.ndarray = field(repr=False)
    row_counts: np.ndarray = field(repr=False)

    def to_json_dict(self) -> dict:
        return {
            "layer": self.layer,
            "head": self.head,
            "sparsity": _sig9(self.sparsity),
            "sparsity_distribution": [_sig9(x) for x in self.sparsity_distribution],
            "major_token_mean": _sig9(self.major_token_mean),
            "major_token_std": _sig9(self.major_token_std),
            "dispersion": _sig9(self.dispersion),
            "outlier_token_ids": list(self.outlier_token_ids),
            "histogram": {
                "density": [_sig9(x) for x in self.histogram.densities],
                "cumulative": [_sig9(x) for x in self.histogram.cumulative],
            },
        }


def profile_head(
    heads: list[np.ndarray],
    layer: int,
    head: int,
    hist: HistogramSpec,
    epsilon: float,
    deviation_bins: int,
) -> HeadProfile:
    """Profile one head, pooling rows from one or more instances.

    Outlier ids index into the pooled row list; with a single instance they
    are token positions.
    """
    rows = [np.asarray(h, dtype=np.float64) for h in heads]
    all_rows = [r for h in rows for r in h]
    n_rows = len(all_rows)
    n_values = sum(r.size for r in all_rows)

    counts = np.stack([row_histogram(r, hist).counts for r in all_rows])
    pooled = RowHistogram(spec=hist, counts=counts.sum(axis=0))

    c50 = np.array(
        [RowHistogram(spec=hist, counts=c).c50_index() for c in counts], dtype=np.float64
    )
    median = float(np.median(c50))
    outliers = [int(i) for i in np.flatnonzero(np.abs(c50 - median) > deviation_bins)]

    frac = np.array([(r < epsilon).sum() / r.size for r in all_rows])
    sd_bins = np.minimum((frac * 10).astype(np.int64), 9)
    sd = np.bincount(sd_bins, minlength=10) / n_rows

    major = np.array([major_token_count(r) for r in all_rows], dtype=np.float64)

    below = sum(int((r < epsilon).sum()) for r in all_rows)
    return HeadProfile(
        layer=layer,
        head=head,
        sparsity=below / n_values,
        sparsity_distribution=sd,
        major_token_mean=float(major.mean()),
        major_token_std=float(major.std()),
        dispersion=float(c50.std()),
        outlier_token_ids=outliers,
        histogram=pooled,
        c50_indices=c50,
        row_counts=counts,
    )


@dataclass(eq=False)
class ProfileReport:
    """All head profiles of one instance (or a pool of instances) plus
    global aggregates and the parameters used to compute them."""

    layers: int
    heads: int
    epsilon: float
    hist: HistogramSpec
    deviation_bins: int
    head_profiles: list[HeadProfile]
    model: str | None = None
    instance_ids: list[str] = field(default_factory=list)
    pooled: bool = False

    def head_profile(self, layer: int, head: int) -> HeadProfile:
        return self.head_profiles[layer * self.heads + head]

    def global_stats(self) -> dict:
        profiles = self.head_profiles
        n_values = sum(int(p.row_counts.sum()) for p in profiles)
        sparsity = sum(p.sparsity * p.row_counts.sum() for p in profiles) / n_values
        per_layer_disp = [
            float(np.mean([p.dispersion for p in profiles if p.layer == l]))
            for l in range(self.layers)
        ]
        return {
            "sparsity": float(sparsity),
            "major_token_mean": float(np.mean([p.major_token_mean for p in profiles])),
            "dispersion_mean": float(np.mean([p.dispersion for p in profiles])),
            "per_layer_dispersion": per_layer_disp,
        }

    def to_json_dict(self) -> dict:
        g = self.global_stats()
        return {
            "schema_version": SCHEMA_VERSION,
            "model": self.model,
            "instances": list(self.instance_ids),
            "pooled": self.pooled,
            "layers": self.layers,
            "heads": self.heads,
            "epsilon": _sig9(self.epsilon),
            "histogram_spec": self.hist.to_json_dict(),
            "outlier_deviation_bins": self.deviation_bins,
            "global": {
                "sparsity": _sig9(g["sparsity"]),
                "major_token_mean": _sig9(g["major_token_mean"]),
                "dispersion_mean": _sig9(g["dispersion_mean"]),
                "per_layer_dispersion": [_sig9(x) for x in g["per_layer_dispersion"]],
            },
            "head_profiles": [p.to_json_dict() for p in self.head_profiles],
        }


def profile_tensors(
    tensors: list[AttentionTensor],
    hist: HistogramSpec = HistogramSpec(),
    epsilon: float = 1e-8,
    deviation_bins: int = DEFAULT_DEVIATION_BINS,
    model: str | None = None,
    instance_ids: list[str] | None = None,
    threads: int = 1,
) -> ProfileReport:
    """Profile every head of one or more instances with identical L and H.

    With several instances the rows of matching heads are pooled.  Head
    profiling may run on a thread pool; results are assembled in (layer,
    head) order regardless of completion order.
    """
    if not tensors:
        raise InvalidValueError("no tensors to profile")
    L, H = tensors[0].layers, tensors[0].heads
    for t in tensors[1:]:
        if (t.layers, t.heads) != (L, H):
            raise InvalidValueError(
                f"instances disagree on shape: {L}x{H} vs {t.layers}x{t.heads}"
            )

    coords = [(l, h) for l in range(L) for h in range(H)]

    def work(coord):
        l, h = coord
        return profile_head(
            [t.head(l, h) for t in tensors], l, h, hist, epsilon, deviation_bins
        )

    if threads and threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            profiles = list(pool.map(work, coords))
    else:
        profiles = [work(c) for c in coords]

    return ProfileReport(
        layers=L,
        heads=H,
        epsilon=epsilon,
        hist=hist,
        deviation_bins=deviation_bins,
        head_profiles=profiles,
        model=model,
        instance_ids=instance_ids or [],
        pooled=len(tensors) > 1,
    )


def histogram_csv_rows(hist: RowHistogram):
    """Yield ``(bin_lower, bin_upper, density, cumulative)`` rows; the first
    row is the underflow bucket when the spec has one."""
    spec = hist.spec
    edges = spec.bin_edges()
    dens = hist.densities
    cum = hist.cumulative
    i = 0
    if spec.underflow_bucket:
        yield (0.0, float(edges[0]), float(dens[0]), float(cum[0]))
        i = 1
    for b in range(spec.log_bins):
        yield (float(edges[b]), float(edges[b + 1]), float(dens[i + b]), float(cum[i + b]))
