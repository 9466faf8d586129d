"""Streaming KV cache with group-triggered quantization.

A cache holds one layer's K and V history for a batch-of-one decode loop.
Rows arrive either as a prefill block or one token at a time; every incoming
row is first rounded to binary16, which is the precision a real FP16 cache
would hold anyway and keeps all ingest paths consistent with each other.

Two modes:

* streaming: true packed storage. Per-token sides commit each row as 1 x g
  groups immediately. Per-channel sides buffer rows at binary16 and commit
  g x 1 column groups whenever the buffer fills; the buffer is the residual.
  Schemes whose range spans the whole growing history (uniform,
  outlier_reduced, group_cn, and hybrid channel sides with no finite group)
  keep running min/max per group and requantize the affected group from its
  own reconstruction when an appended value lands outside the representable
  range. That reconstruction step compounds error; it is the honest cost of
  streaming such schemes and can be measured with the sweep CLI.
* simulation: the cache retains the binary16 master and re-runs one-shot
  quantize/dequantize on every materialize. No compounding. Default.

For schemes with token-aligned, group-local ranges (group_t, group_c, and
the hybrids with finite g1) the two modes produce bit-identical payloads for
any interleaving of prefill and append, equal to one-shot quantization of
the stacked rows.

With ``prefill_exempt`` the prefill block is stored at binary16 and only
decode-time rows are quantized; group indexing then starts at the first
decoded token.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import Optional

import numpy as np

from .errors import ConfigError, ShapeError, StateError
from .packing import pack_codes, unpack_codes
from .schemes import (
    OutlierSet,
    QuantizedGroup,
    QuantizedTensor,
    SchemeConfig,
    StorageBytes,
    _column_groups,
    _delta_zp,
    _encode,
    _quantize_columns,
    _quantize_rows,
    _quantize_side,
    _token_groups,
    dequantize,
    quantize_outlier_reduced,
    side_layout,
    storage_bytes,
)
from .tensor import Tensor2D, fp16_round

__all__ = ["CacheMode", "KVCache", "MemoryReport"]


class CacheMode(str, Enum):
    STREAMING = "streaming"
    SIMULATION = "simulation"


@dataclass(frozen=True)
class MemoryReport:
    """Exact storage accounting for one cache (see schemes.StorageBytes)."""

    n_tokens: int
    d_model: int
    k_bytes: StorageBytes
    v_bytes: StorageBytes
    bits_per_element_k: float
    bits_per_element_v: float


# ----- per-side streaming state ----------------------------------------------
#
# Each side object consumes binary16-rounded row blocks and can snapshot its
# state as a QuantizedTensor (groups, outliers, residual) at any time. Row
# indices inside a side are side-local; the cache offsets them when a prefix
# is exempted.

class _Pass16Side:
    adaptive = False

    def __init__(self, bits: int, d: int):
        self.d = d
        self.rows: list[np.ndarray] = []

    def ingest(self, block: np.ndarray, at_prefill: bool = False) -> None:
        self.rows.extend(block)

    def snapshot(self) -> tuple[tuple, OutlierSet, Optional[Tensor2D], int]:
        res = Tensor2D(np.vstack(self.rows)) if self.rows else None
        return (), OutlierSet(), res, len(self.rows)

    @property
    def n_rows(self) -> int:
        return len(self.rows)


class _TokenSide:
    """Per-token 1 x g groups; every row commits immediately."""

    adaptive = False

    def __init__(self, bits: int, d: int, g: int):
        self.bits = bits
        self.g = g
        self.groups: list[QuantizedGroup] = []
        self.n_rows = 0

    def ingest(self, block: np.ndarray, at_prefill: bool = False) -> None:
        self.groups.extend(_token_groups(block, self.n_rows, self.g, self.bits))
        self.n_rows += block.shape[0]

    def snapshot(self):
        return tuple(self.groups), OutlierSet(), None, self.n_rows


class _ChannelSide:
    """Per-channel g x 1 groups; rows buffer at binary16 until a block fills."""

    adaptive = False

    def __init__(self, bits: int, d: int, g: int):
        self.bits = bits
        self.g = g
        self.groups: list[QuantizedGroup] = []
        self.buffer: list[np.ndarray] = []
        self.committed = 0

    def ingest(self, block: np.ndarray, at_prefill: bool = False) -> None:
        self.buffer.extend(block)
        while len(self.buffer) >= self.g:
            full = np.vstack(self.buffer[: self.g])
            self.groups.extend(_column_groups(full, self.committed, self.bits))
            self.committed += self.g
            del self.buffer[: self.g]

    def snapshot(self):
        res = Tensor2D(np.vstack(self.buffer)) if self.buffer else None
        return tuple(self.groups), OutlierSet(), res, self.committed + len(self.buffer)

    @property
    def n_rows(self) -> int:
        return self.committed + len(self.buffer)

    @property
    def residual_rows(self) -> int:
        return len(self.buffer)


class _ChannelFullSide:
    """One growing group per channel; requantizes a channel when its range grows."""

    adaptive = True

    def __init__(self, bits: int, d: int):
        self.bits = bits
        self.d = d
        self.delta = np.zeros(d, dtype=np.float32)
        self.zp = np.zeros(d, dtype=np.float32)
        self.codes = np.zeros((0, d), dtype=np.uint8)

    @property
    def n_rows(self) -> int:
        return self.codes.shape[0]

    def ingest(self, block: np.ndarray, at_prefill: bool = False) -> None:
        if self.n_rows == 0:
            self.delta, self.zp, self.codes = _quantize_columns(block, self.bits)
            return
        top = 2**self.bits - 1
        lo = self.zp.astype(np.float64)
        hi = lo + self.delta.astype(np.float64) * top
        b64 = block.astype(np.float64)
        grown = ((b64 < lo) | (b64 > hi)).any(axis=0)
        fresh = _encode(block, self.delta[None, :], self.zp[None, :], self.bits)
        self.codes = np.vstack([self.codes, fresh])
        if grown.any():
            cols = np.flatnonzero(grown)
            hist = self.codes[:-block.shape[0], cols].astype(np.float32)
            hist = hist * self.delta[cols] + self.zp[cols]
            vals = np.vstack([hist, block[:, cols]])
            d_new, z_new, c_new = _quantize_columns(vals, self.bits)
            self.delta[cols] = d_new
            self.zp[cols] = z_new
            self.codes[:, cols] = c_new

    def snapshot(self):
        n = self.n_rows
        groups = tuple(
            QuantizedGroup(
                row0=0, col0=c, row_span=n, col_span=1, bits=self.bits,
                delta=float(self.delta[c]), zero_point=float(self.zp[c]),
                codes=pack_codes(self.codes[:, c], self.bits),
            )
            for c in range(self.d)
        )
        return groups, OutlierSet(), None, n


class _WholeSide:
    """Single growing group over the whole history (uniform scheme).

    Optionally outlier-aware: when ``s`` is set and the first ingest is a
    prefill block, the outlier set is chosen from that block and frozen.
    Appended rows are always dense; an append-only cache has no outliers.
    The representable range is [zero_point, zero_point + delta * (2^b - 1)];
    any dense value outside it triggers a whole-group requantize from the
    group's own reconstruction.
    """

    adaptive = True

    def __init__(self, bits: int, d: int, s: Optional[float] = None):
        self.bits = bits
        self.d = d
        self.s = s
        self.delta = 0.0
        self.zp = 0.0
        self.codes = np.zeros(0, dtype=np.uint8)
        self.n_rows = 0
        self.out_idx = np.zeros(0, dtype=np.int64)
        self.out_vals = np.zeros(0, dtype=np.float32)

    def _dense_mask(self) -> np.ndarray:
        mask = np.ones(self.codes.size, dtype=bool)
        mask[self.out_idx] = False
        return mask

    def _requantize(self, new_flat: np.ndarray) -> None:
        mask = self._dense_mask()
        hist = self.codes[mask].astype(np.float32) * np.float32(self.delta) + np.float32(self.zp)
        dense = np.concatenate([hist, new_flat])
        delta, zp = _delta_zp(dense.min(keepdims=True), dense.max(keepdims=True), self.bits)
        self.delta, self.zp = float(delta[0]), float(zp[0])
        codes = _encode(dense[None, :], delta[:, None], zp[:, None], self.bits)[0]
        merged = np.zeros(self.codes.size + new_flat.size, dtype=np.uint8)
        dense_slots = np.concatenate(
            [np.flatnonzero(mask), self.codes.size + np.arange(new_flat.size)]
        )
        merged[dense_slots] = codes
        self.codes = merged

    def ingest(self, block: np.ndarray, at_prefill: bool = False) -> None:
        flat = block.reshape(-1)
        if self.n_rows == 0:
            if self.s is not None and at_prefill:
                q = quantize_outlier_reduced(Tensor2D(block), self.bits, self.s)
                self.out_idx = np.fromiter(q.outliers.indices, dtype=np.int64, count=len(q.outliers))
                self.out_vals = np.fromiter(q.outliers.values, dtype=np.float32, count=len(q.outliers))
                grp = q.groups[0]
                self.delta, self.zp = grp.delta, grp.zero_point
                self.codes = unpack_codes(grp.codes, self.bits, grp.count)
            else:
                delta, zp, codes = _quantize_rows(flat[None, :], self.bits)
                self.delta, self.zp = float(delta[0]), float(zp[0])
                self.codes = codes[0]
            self.n_rows = block.shape[0]
            return
        top = 2**self.bits - 1
        lo = float(self.zp)
        hi = lo + float(self.delta) * top
        f64 = flat.astype(np.float64)
        if (f64 < lo).any() or (f64 > hi).any():
            self._requantize(flat)
        else:
            darr = np.full(1, self.delta, dtype=np.float32)
            zarr = np.full(1, self.zp, dtype=np.float32)
            fresh = _encode(flat[None, :], darr[:, None], zarr[:, None], self.bits)[0]
            self.codes = np.concatenate([self.codes, fresh])
        self.n_rows += block.shape[0]

    def snapshot(self):
        n = self.n_rows
        group = QuantizedGroup(
            row0=0, col0=0, row_span=n, col_span=self.d, bits=self.bits,
            delta=self.delta, zero_point=self.zp,
            codes=pack_codes(self.codes, self.bits),
        )
        outliers = OutlierSet(
            indices=tuple(int(i) for i in self.out_idx),
            values=tuple(float(v) for v in self.out_vals),
        )
        return (group,), outliers, None, n


def _make_side(cfg: SchemeConfig, side: str, d_model: int):
    """Build the streaming store for one side of the config."""
    b, layout, param = side_layout(cfg, side)
    if layout == "pass16":
        return _Pass16Side(b, d_model)
    if layout == "uniform":
        return _WholeSide(b, d_model)
    if layout == "outlier":
        return _WholeSide(b, d_model, s=param)
    if layout == "channel_full":
        return _ChannelFullSide(b, d_model)
    if layout == "channel":
        return _ChannelSide(b, d_model, int(param))
    g = int(param)
    if d_model % g != 0:
        raise ConfigError(
            f"per-token group size {g} does not divide d_model={d_model} ({side.upper()} side)"
        )
    return _TokenSide(b, d_model, g)


class KVCache:
    """Single-layer, batch-of-one cache of quantized K/V history.

    Single-writer: prefill once into an empty cache, then append row pairs.
    ``materialize`` may be called at any point and does not mutate state.
    """

    def __init__(
        self,
        cfg: SchemeConfig,
        d_model: int,
        mode: CacheMode = CacheMode.SIMULATION,
        prefill_exempt: bool = False,
    ):
        if d_model < 1:
            raise ConfigError(f"d_model must be >= 1, got {d_model}")
        self.cfg = cfg
        self.d_model = d_model
        self.mode = CacheMode(mode)
        self.prefill_exempt = bool(prefill_exempt)
        self.n_prefill = 0
        self.n_decoded = 0
        self._k_side = _make_side(cfg, "k", d_model)
        self._v_side = _make_side(cfg, "v", d_model)
        # True when streaming this scheme may requantize committed history as
        # the running range grows (error compounds; simulation mode does not).
        self.requantize_on_growth = self.mode is CacheMode.STREAMING and (
            self._k_side.adaptive or self._v_side.adaptive
        )
        self._k_master: list[np.ndarray] = []
        self._v_master: list[np.ndarray] = []
        self._k_prefix: list[np.ndarray] = []
        self._v_prefix: list[np.ndarray] = []

    # ----- ingest -----

    @property
    def n_tokens(self) -> int:
        return self.n_prefill + self.n_decoded

    def _ingest(
        self, k_block: np.ndarray, v_block: np.ndarray, prefix: bool, at_prefill: bool
    ) -> None:
        if prefix:
            self._k_prefix.extend(k_block)
            self._v_prefix.extend(v_block)
        elif self.mode is CacheMode.SIMULATION:
            self._k_master.extend(k_block)
            self._v_master.extend(v_block)
        else:
            self._k_side.ingest(k_block, at_prefill=at_prefill)
            self._v_side.ingest(v_block, at_prefill=at_prefill)

    def prefill(self, K: Tensor2D, V: Tensor2D) -> None:
        if self.n_tokens:
            raise StateError("prefill requires an empty cache")
        if K.shape != V.shape:
            raise ShapeError(f"K and V shapes differ: {K.shape} vs {V.shape}")
        if K.cols != self.d_model:
            raise ShapeError(f"prefill has {K.cols} cols, cache d_model is {self.d_model}")
        if K.rows == 0:
            return
        self._ingest(
            fp16_round(K.data), fp16_round(V.data),
            prefix=self.prefill_exempt, at_prefill=True,
        )
        self.n_prefill = K.rows

    def append(self, t_k, t_v) -> None:
        k_row = np.asarray(t_k, dtype=np.float32).reshape(-1)
        v_row = np.asarray(t_v, dtype=np.float32).reshape(-1)
        if k_row.size != self.d_model or v_row.size != self.d_model:
            raise ShapeError(
                f"appended rows must have length {self.d_model}, "
                f"got {k_row.size} (K) and {v_row.size} (V)"
            )
        self._ingest(
            fp16_round(k_row[None, :]), fp16_round(v_row[None, :]),
            prefix=False, at_prefill=False,
        )
        self.n_decoded += 1

    # ----- read paths -----

    def _suffix_snapshot(self, side: str) -> Optional[QuantizedTensor]:
        """Quantized form of the non-exempt region, or None when it is empty."""
        if self.mode is CacheMode.SIMULATION:
            master = self._k_master if side == "k" else self._v_master
            if not master:
                return None
            return _quantize_side(Tensor2D(np.vstack(master)), self.cfg, side)
        store = self._k_side if side == "k" else self._v_side
        if store.n_rows == 0:
            return None
        groups, outliers, residual, n = store.snapshot()
        return QuantizedTensor(self.cfg, n, self.d_model, groups, outliers, residual=residual)

    def _side_tensors(self, side: str) -> tuple[np.ndarray, Optional[QuantizedTensor]]:
        prefix = self._k_prefix if side == "k" else self._v_prefix
        head = np.vstack(prefix) if prefix else np.zeros((0, self.d_model), dtype=np.float32)
        return head, self._suffix_snapshot(side)

    def materialize(self) -> tuple[Tensor2D, Tensor2D]:
        """Reconstructed (K, V), shape n_tokens x d_model, token order preserved."""
        out = []
        for side in ("k", "v"):
            head, snap = self._side_tensors(side)
            tail = dequantize(snap).data if snap is not None else np.zeros((0, self.d_model), np.float32)
            out.append(Tensor2D(np.vstack([head, tail])))
        return out[0], out[1]

    def footprint(self) -> MemoryReport:
        """Exact committed bytes and bits per stored element, per side."""
        per_side = {}
        for side in ("k", "v"):
            head, snap = self._side_tensors(side)
            sb = storage_bytes(snap) if snap is not None else StorageBytes(0, 0, 0, 0)
            sb = StorageBytes(
                code_bytes=sb.code_bytes,
                metadata_bytes=sb.metadata_bytes,
                residual_bytes=sb.residual_bytes + 2 * head.size,
                outlier_bytes=sb.outlier_bytes,
            )
            per_side[side] = sb
        n_elem = self.n_tokens * self.d_model
        return MemoryReport(
            n_tokens=self.n_tokens,
            d_model=self.d_model,
            k_bytes=per_side["k"],
            v_bytes=per_side["v"],
            bits_per_element_k=8.0 * per_side["k"].total / n_elem if n_elem else 0.0,
            bits_per_element_v=8.0 * per_side["v"].total / n_elem if n_elem else 0.0,
        )
