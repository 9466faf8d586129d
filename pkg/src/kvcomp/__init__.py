"""kvcomp: KV-cache and weight quantization workbench.

Quantizes transformer KV caches group-wise at 2 to 8 bits (per-channel,
per-token, and hybrid layouts, with optional outlier exemption), streams
tokens through a cache with exact byte accounting, and measures the
downstream effect on a deterministic toy decoder. A separate path performs
activation-aware weight quantization by scale search. Everything is seeded
and reproducible; the CLI front end is ``kvcomp``.
"""

from .cache import CacheMode, KVCache, MemoryReport
from .decoder import (
    DivergenceReport,
    ToyModel,
    ToyModelConfig,
    attend,
    build_model,
    generate,
)
from .errors import (
    ConfigError,
    CorruptionError,
    FormatError,
    KvcompError,
    ShapeError,
    StateError,
)
from .awq import (
    AwqResult,
    CalibrationBatch,
    apply_quantized_linear,
    awq_quantize,
    builtin_saliency_case,
    synthetic_calibration,
)
from .memory import (
    MemoryScenario,
    effective_kv_bytes,
    kv_bytes,
    kv_to_model_ratio,
    model_bytes,
    scheme_side_bytes,
    wall_report,
)
from .rng import SplitMix64
from .schemes import (
    Grouping,
    OutlierSet,
    PerChannel,
    PerChannelFull,
    PerToken,
    QuantizedGroup,
    QuantizedTensor,
    SchemeConfig,
    SchemeKind,
    StorageBytes,
    VALID_BITS,
    bits_per_element,
    dequantize,
    quantize_grouped,
    quantize_kv_pair,
    quantize_outlier_reduced,
    quantize_passthrough,
    quantize_uniform,
    side_layout,
    storage_bytes,
)
from .sweep import CSV_COLUMNS, SweepJob, load_config, run_sweep, write_csv
from .tensor import GENERATORS, SyntheticSpec, Tensor2D, fp16_round
from .tensor import generate as generate_tensor
from .tensor import read_tensor, write_tensor

__version__ = "0.1.0"
