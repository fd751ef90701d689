"""Attention-tensor profiling, pruning, quantization, and sparse encoding."""

from .attention import (
    AttentionTensor,
    PruneSpec,
    SparsityLevel,
    load_attn,
    measure_sparsity,
    prune,
    prune_values,
    read_sidecar,
    store_attn,
    write_sidecar,
)
from .codec import (
    FootprintModel,
    SparseQuantizedAttention,
    decode,
    encode,
    footprint_bits,
    read_spqa,
    write_spqa,
)
from .profiling import (
    HeadProfile,
    HistogramSpec,
    ProfileReport,
    RowHistogram,
    c50_bin_index,
    dispersion,
    head_major_stats,
    js_divergence,
    major_token_count,
    outlier_tokens,
    profile_tensors,
    quantization_divergence,
    row_histogram,
    sparsity_distribution,
)
from .quantize import (
    Codebook,
    QuantSpec,
    build_codebook,
    code_of,
    quantize_array,
    quantize_linear,
    quantize_log,
    quantize_tensor,
    value_of,
)
from .toy import (
    AttentionTransform,
    DegradationTable,
    ToyConfig,
    WeightBundle,
    agreement,
    forward,
    load_default_corpus,
    load_default_weights,
    run_sweep,
)

__version__ = "0.1.0"
