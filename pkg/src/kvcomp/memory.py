"""Closed-form cache-size accounting.

Answers the deployment question behind all of this: at batch 100 and
sequence length 1000, a 7B-parameter fp16 model carries a KV cache roughly
3.7x the size of its own weights. The formulas here are plain integer
arithmetic; ``scheme_side_bytes`` mirrors the exact byte accounting of
``schemes.storage_bytes`` (packed codes, 4 bytes of group metadata, 2 bytes
per binary16 residual element, 6 bytes per outlier) so the two can be
cross-checked on real tensors.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, fields

from .errors import ConfigError
from .packing import packed_size
from .schemes import SchemeConfig, side_layout

__all__ = [
    "MemoryScenario",
    "kv_bytes",
    "model_bytes",
    "kv_to_model_ratio",
    "scheme_side_bytes",
    "effective_kv_bytes",
    "wall_report",
]


@dataclass(frozen=True)
class MemoryScenario:
    """One deployment shape: per-layer KV dimensions plus model size."""

    n_layers: int
    d_model: int
    seq_len: int
    batch: int
    bytes_per_value: int
    model_params: int
    bytes_per_param: int

    def __post_init__(self):
        for f in fields(self):
            v = getattr(self, f.name)
            if not isinstance(v, int) or isinstance(v, bool) or v < 1:
                raise ConfigError(f"{f.name} must be an integer >= 1, got {v!r}")


def kv_bytes(sc: MemoryScenario) -> int:
    """Full-precision cache bytes: K and V, every layer, whole batch."""
    return 2 * sc.n_layers * sc.seq_len * sc.d_model * sc.batch * sc.bytes_per_value


def model_bytes(sc: MemoryScenario) -> int:
    return sc.model_params * sc.bytes_per_param


def kv_to_model_ratio(sc: MemoryScenario) -> float:
    return kv_bytes(sc) / model_bytes(sc)


def scheme_side_bytes(n_rows: int, d: int, cfg: SchemeConfig, side: str) -> int:
    """Exact stored bytes for one n_rows x d side under a scheme config."""
    if n_rows < 0 or d < 1:
        raise ConfigError(f"invalid side shape {n_rows}x{d}")
    if n_rows == 0:
        return 0
    b, layout, param = side_layout(cfg, side)
    if layout == "pass16":
        return 2 * n_rows * d
    if layout == "uniform":
        return packed_size(n_rows * d, b) + 4
    if layout == "outlier":
        k = math.ceil(param * n_rows * d)
        return packed_size(n_rows * d, b) + 4 + 6 * k
    if layout == "channel_full":
        return d * (packed_size(n_rows, b) + 4)
    if layout == "channel":
        g = int(param)
        m, r = divmod(n_rows, g)
        return m * d * (packed_size(g, b) + 4) + 2 * r * d
    g = int(param)
    if d % g != 0:
        raise ConfigError(
            f"per-token group size {g} does not divide d_model={d} ({side.upper()} side)"
        )
    return (n_rows * d // g) * (packed_size(g, b) + 4)


def effective_kv_bytes(sc: MemoryScenario, cfg: SchemeConfig) -> int:
    """Cache bytes when both sides are stored under ``cfg`` instead of raw."""
    per_pair = scheme_side_bytes(sc.seq_len, sc.d_model, cfg, "k") + scheme_side_bytes(
        sc.seq_len, sc.d_model, cfg, "v"
    )
    return sc.n_layers * sc.batch * per_pair


def wall_report(sc: MemoryScenario, cfg: SchemeConfig | None = None) -> dict:
    """JSON-ready summary; adds scheme fields when a config is given."""
    kv = kv_bytes(sc)
    mb = model_bytes(sc)
    report = {
        "kv_bytes": kv,
        "model_bytes": mb,
        "ratio": kv / mb,
    }
    if cfg is not None:
        eff = effective_kv_bytes(sc, cfg)
        elems = sc.seq_len * sc.d_model
        report["scheme"] = cfg.to_dict()
        report["effective_kv_bytes"] = eff
        report["effective_ratio"] = eff / mb
        report["compression_factor"] = kv / eff if eff else float("inf")
        report["bpe_k"] = 8.0 * scheme_side_bytes(sc.seq_len, sc.d_model, cfg, "k") / elems
        report["bpe_v"] = 8.0 * scheme_side_bytes(sc.seq_len, sc.d_model, cfg, "v") / elems
    return report
