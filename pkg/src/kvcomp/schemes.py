"""One-shot quantize/dequantize for every cache compression scheme.

All schemes share one primitive, asymmetric uniform quantization of a block
of values at b bits. For a block with minimum m and maximum M::

    zero_point = binary16(m)
    delta      = binary16((M - m) / (2^b - 1))
    code(x)    = clamp(round_half_even((x - zero_point) / delta), 0, 2^b - 1)
    xhat       = code * delta + zero_point

Rounding is half-to-even. A constant block (or one whose range underflows
binary16) stores delta = 0 and all-zero codes, reconstructing the zero_point
exactly. Codes are bit-packed per group (see packing.py).

The schemes differ only in how the tensor is carved into blocks:

* uniform: the whole tensor is one group.
* outlier_reduced: the top ceil(s * size) values by magnitude are stored
  verbatim at binary16 and excluded from the min/max of the single dense
  group; their grid slots carry code 0 and are shadowed at reconstruction.
* group_c (per-channel, size g): g consecutive token rows within one channel
  form a g x 1 group; trailing rows % g token rows stay at binary16 as
  residual rows until a later append completes the block.
* group_cn: per-channel with the group spanning all N rows, no residual.
* group_t (per-token, size g): g consecutive channels within one token form
  a 1 x g group; requires cols % g == 0.
* hybrid_kcvt / hybrid_ktvc: K and V sides get different geometries, see
  quantize_kv_pair.

A bit width of 16 on a side always means passthrough storage at binary16,
whatever the configured kind, so every sweep has a lossless anchor.
"""

from __future__ import annotations

import base64
import math
from dataclasses import dataclass
from enum import Enum
from typing import Optional, Union

import numpy as np

from .errors import ConfigError, CorruptionError, ShapeError
from .packing import pack_codes, packed_size, unpack_codes
from .tensor import Tensor2D, fp16_round

__all__ = [
    "SchemeKind",
    "SchemeConfig",
    "PerChannel",
    "PerChannelFull",
    "PerToken",
    "Grouping",
    "QuantizedGroup",
    "OutlierSet",
    "QuantizedTensor",
    "VALID_BITS",
    "quantize_passthrough",
    "quantize_uniform",
    "quantize_outlier_reduced",
    "quantize_grouped",
    "quantize_kv_pair",
    "dequantize",
    "side_layout",
    "storage_bytes",
    "StorageBytes",
    "bits_per_element",
    "to_json_dict",
]

VALID_BITS = (2, 3, 4, 8, 16)


class SchemeKind(str, Enum):
    PASSTHROUGH16 = "passthrough16"
    UNIFORM = "uniform"
    OUTLIER_REDUCED = "outlier_reduced"
    GROUP_C = "group_c"
    GROUP_CN = "group_cn"
    GROUP_T = "group_t"
    HYBRID_KCVT = "hybrid_kcvt"
    HYBRID_KTVC = "hybrid_ktvc"


# ----- scheme configuration -------------------------------------------------

@dataclass(frozen=True)
class SchemeConfig:
    """One compression configuration: kind, per-side bit widths, geometry.

    Field usage by kind (unused fields must stay None):

    ==================  =======================================
    kind                fields
    ==================  =======================================
    passthrough16       none (b_k = b_v = 16 enforced)
    uniform             b_k, b_v
    outlier_reduced     b_k, b_v, s
    group_c             b_k, b_v, g
    group_cn            b_k, b_v
    group_t             b_k, b_v, g
    hybrid_kcvt         b_k, b_v, g1 (K channel groups, None = all
                        rows), g2 (V token groups, required)
    hybrid_ktvc         b_k, b_v, g1 (K token groups, required),
                        g2 (V channel groups, None = all rows)
    ==================  =======================================

    g1 always configures the K side and g2 the V side; the geometry each one
    drives follows the kind.
    """

    kind: SchemeKind
    b_k: int = 16
    b_v: int = 16
    g: Optional[int] = None
    g1: Optional[int] = None
    g2: Optional[int] = None
    s: Optional[float] = None

    def __post_init__(self):
        if not isinstance(self.kind, SchemeKind):
            try:
                object.__setattr__(self, "kind", SchemeKind(self.kind))
            except ValueError:
                valid = ", ".join(k.value for k in SchemeKind)
                raise ConfigError(f"unknown scheme kind {self.kind!r}; expected one of: {valid}")
        for name, b in (("b_k", self.b_k), ("b_v", self.b_v)):
            if b not in VALID_BITS:
                raise ConfigError(f"{name} must be one of {VALID_BITS}, got {b}")
        for name, v in (("g", self.g), ("g1", self.g1), ("g2", self.g2)):
            if v is not None and (not isinstance(v, int) or v < 1):
                raise ConfigError(f"{name} must be a positive integer, got {v!r}")
        if self.s is not None and not (0.0 <= self.s <= 1.0):
            raise ConfigError(f"s must be in [0, 1], got {self.s}")

        k = self.kind
        allowed = {
            SchemeKind.PASSTHROUGH16: set(),
            SchemeKind.UNIFORM: set(),
            SchemeKind.OUTLIER_REDUCED: {"s"},
            SchemeKind.GROUP_C: {"g"},
            SchemeKind.GROUP_CN: set(),
            SchemeKind.GROUP_T: {"g"},
            SchemeKind.HYBRID_KCVT: {"g1", "g2"},
            SchemeKind.HYBRID_KTVC: {"g1", "g2"},
        }[k]
        for name in ("g", "g1", "g2", "s"):
            if getattr(self, name) is not None and name not in allowed:
                raise ConfigError(f"{name} is not a valid field for kind {k.value}")
        if k is SchemeKind.PASSTHROUGH16 and (self.b_k != 16 or self.b_v != 16):
            raise ConfigError("passthrough16 stores binary16; b_k and b_v must be 16")
        if k in (SchemeKind.GROUP_C, SchemeKind.GROUP_T) and self.g is None:
            raise ConfigError(f"kind {k.value} requires g")
        if k is SchemeKind.OUTLIER_REDUCED and self.s is None:
            raise ConfigError("outlier_reduced requires s")
        if k is SchemeKind.HYBRID_KCVT and self.g2 is None:
            raise ConfigError("hybrid_kcvt requires g2 (V-side token group size)")
        if k is SchemeKind.HYBRID_KTVC and self.g1 is None:
            raise ConfigError("hybrid_ktvc requires g1 (K-side token group size)")

    def to_dict(self) -> dict:
        return {
            "kind": self.kind.value,
            "b_k": self.b_k,
            "b_v": self.b_v,
            "g": self.g,
            "g1": self.g1,
            "g2": self.g2,
            "s": self.s,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "SchemeConfig":
        known = {"kind", "b_k", "b_v", "g", "g1", "g2", "s"}
        extra = set(d) - known
        if extra:
            raise ConfigError(f"unknown scheme fields: {sorted(extra)}")
        if "kind" not in d:
            raise ConfigError("scheme is missing required field 'kind'")
        return cls(
            kind=d["kind"],
            b_k=d.get("b_k", 16),
            b_v=d.get("b_v", 16),
            g=d.get("g"),
            g1=d.get("g1"),
            g2=d.get("g2"),
            s=d.get("s"),
        )


# ----- grouping geometries ----------------------------------------------------

@dataclass(frozen=True)
class PerChannel:
    """g x 1 blocks: g consecutive token rows within one channel."""

    g: int


@dataclass(frozen=True)
class PerChannelFull:
    """One N x 1 block per channel, spanning every token row."""


@dataclass(frozen=True)
class PerToken:
    """1 x g blocks: g consecutive channels within one token row."""

    g: int


Grouping = Union[PerChannel, PerChannelFull, PerToken]


# ----- quantized payload types -----------------------------------------------

@dataclass(frozen=True)
class QuantizedGroup:
    """One independently quantized block with packed codes.

    ``delta`` and ``zero_point`` hold binary16-rounded values (kept as exact
    float32-representable Python floats). ``codes`` is the LSB-first packed
    buffer; its length is always ceil(count * bits / 8).
    """

    row0: int
    col0: int
    row_span: int
    col_span: int
    bits: int
    delta: float
    zero_point: float
    codes: bytes

    def __post_init__(self):
        if self.row_span < 1 or self.col_span < 1:
            raise CorruptionError(f"empty group span {self.row_span}x{self.col_span}")
        if self.delta < 0:
            raise CorruptionError(f"negative delta {self.delta}")
        expect = packed_size(self.count, self.bits)
        if len(self.codes) != expect:
            raise CorruptionError(
                f"group holds {len(self.codes)} packed bytes, expected {expect}"
            )

    @property
    def count(self) -> int:
        return self.row_span * self.col_span

    def decode(self) -> np.ndarray:
        """Reconstructed float32 block of shape (row_span, col_span)."""
        codes = unpack_codes(self.codes, self.bits, self.count)
        vals = codes.astype(np.float32) * np.float32(self.delta) + np.float32(self.zero_point)
        return vals.reshape(self.row_span, self.col_span)


@dataclass(frozen=True)
class OutlierSet:
    """Values kept verbatim at binary16, addressed by flat row-major index."""

    indices: tuple[int, ...] = ()
    values: tuple[float, ...] = ()

    def __post_init__(self):
        if len(self.indices) != len(self.values):
            raise CorruptionError("outlier indices and values differ in length")
        if any(b <= a for a, b in zip(self.indices, self.indices[1:])):
            raise CorruptionError("outlier indices must be strictly increasing")

    def __len__(self) -> int:
        return len(self.indices)


class QuantizedTensor:
    """A tensor in quantized form: groups plus outliers plus residual rows.

    The dense groups tile rows [0, residual_start) completely; rows from
    residual_start up are stored at binary16 in ``residual``. Outlier indices
    point into the group-covered region and shadow the code stored there.
    Passthrough tensors are represented as residual_start == 0 with the whole
    payload in ``residual``.
    """

    __slots__ = ("scheme", "rows", "cols", "groups", "outliers", "residual_start", "residual")

    def __init__(
        self,
        scheme: SchemeConfig,
        rows: int,
        cols: int,
        groups: tuple[QuantizedGroup, ...] = (),
        outliers: OutlierSet = OutlierSet(),
        residual_start: Optional[int] = None,
        residual: Optional[Tensor2D] = None,
    ):
        if residual_start is None:
            residual_start = rows - (residual.rows if residual is not None else 0)
        n_res = residual.rows if residual is not None else 0
        if residual_start < 0 or residual_start + n_res != rows:
            raise CorruptionError(
                f"residual rows {n_res} starting at {residual_start} do not end at row {rows}"
            )
        if residual is not None and residual.cols != cols:
            raise CorruptionError(f"residual has {residual.cols} cols, tensor has {cols}")
        if outliers and outliers.indices[-1] >= rows * cols:
            raise CorruptionError("outlier index out of bounds")
        self.scheme = scheme
        self.rows = rows
        self.cols = cols
        self.groups = tuple(groups)
        self.outliers = outliers
        self.residual_start = residual_start
        self.residual = residual

    def payload_equal(self, other: "QuantizedTensor") -> bool:
        """Byte-level equality of everything except the scheme label."""
        return (
            (self.rows, self.cols) == (other.rows, other.cols)
            and self.groups == other.groups
            and self.outliers == other.outliers
            and self.residual_start == other.residual_start
            and self.residual == other.residual
        )

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, QuantizedTensor):
            return NotImplemented
        return self.scheme == other.scheme and self.payload_equal(other)

    def __repr__(self) -> str:
        return (
            f"QuantizedTensor({self.scheme.kind.value}, {self.rows}x{self.cols}, "
            f"{len(self.groups)} groups, {len(self.outliers)} outliers, "
            f"{self.rows - self.residual_start} residual rows)"
        )


# ----- quantization kernels ----------------------------------------------------

def _delta_zp(mn: np.ndarray, mx: np.ndarray, bits: int) -> tuple[np.ndarray, np.ndarray]:
    """Binary16 delta and zero_point (float32 arrays) from block extrema."""
    zp = fp16_round(mn)
    quot = (mx.astype(np.float64) - mn.astype(np.float64)) / (2**bits - 1)
    delta = quot.astype(np.float16).astype(np.float32)
    return delta, zp

def _encode(block: np.ndarray, delta: np.ndarray, zp: np.ndarray, bits: int) -> np.ndarray:
    """Codes for ``block`` given per-group delta/zp broadcast along its axis."""
    safe = np.where(delta > 0, delta, np.float32(1))
    q = np.rint((block.astype(np.float64) - zp.astype(np.float64)) / safe.astype(np.float64))
    codes = np.clip(q, 0, 2**bits - 1).astype(np.uint8)
    return np.where(delta > 0, codes, np.uint8(0))


def _quantize_columns(block: np.ndarray, bits: int):
    """Independent column groups: returns (delta[c], zp[c], codes (rows x cols))."""
    delta, zp = _delta_zp(block.min(axis=0), block.max(axis=0), bits)
    return delta, zp, _encode(block, delta[None, :], zp[None, :], bits)


def _quantize_rows(mat: np.ndarray, bits: int):
    """Independent row groups: returns (delta[r], zp[r], codes (n x g))."""
    delta, zp = _delta_zp(mat.min(axis=1), mat.max(axis=1), bits)
    return delta, zp, _encode(mat, delta[:, None], zp[:, None], bits)


def _column_groups(block: np.ndarray, row0: int, bits: int) -> list[QuantizedGroup]:
    """Quantize one per-channel block (g rows, all columns) into column groups."""
    g, cols = block.shape
    delta, zp, codes = _quantize_columns(block, bits)
    return [
        QuantizedGroup(
            row0=row0, col0=c, row_span=g, col_span=1, bits=bits,
            delta=float(delta[c]), zero_point=float(zp[c]),
            codes=pack_codes(codes[:, c], bits),
        )
        for c in range(cols)
    ]


def _token_groups(rows_mat: np.ndarray, row0: int, g: int, bits: int) -> list[QuantizedGroup]:
    """Quantize token rows (starting at row0) into 1 x g groups, row-major."""
    n, cols = rows_mat.shape
    per_row = cols // g
    delta, zp, codes = _quantize_rows(rows_mat.reshape(n * per_row, g), bits)
    out = []
    for i in range(n * per_row):
        r, j = divmod(i, per_row)
        out.append(
            QuantizedGroup(
                row0=row0 + r, col0=j * g, row_span=1, col_span=g, bits=bits,
                delta=float(delta[i]), zero_point=float(zp[i]),
                codes=pack_codes(codes[i], bits),
            )
        )
    return out


def _require_nonempty(t: Tensor2D) -> None:
    if t.rows < 1:
        raise ValueError("cannot quantize an empty tensor")


def _check_low_bits(b: int) -> None:
    if b not in (2, 3, 4, 8):
        raise ConfigError(f"bit width must be one of (2, 3, 4, 8), got {b}")


# ----- public one-shot operations ----------------------------------------------

def quantize_passthrough(t: Tensor2D) -> QuantizedTensor:
    """Store the whole tensor at binary16. The lossless anchor scheme."""
    return QuantizedTensor(
        scheme=SchemeConfig(SchemeKind.PASSTHROUGH16),
        rows=t.rows,
        cols=t.cols,
        residual_start=0,
        residual=Tensor2D(fp16_round(t.data)),
    )


def quantize_uniform(t: Tensor2D, b: int) -> QuantizedTensor:
    """Whole tensor as a single b-bit group."""
    _check_low_bits(b)
    _require_nonempty(t)
    flat = t.data.reshape(1, -1)
    delta, zp, codes = _quantize_rows(flat, b)
    group = QuantizedGroup(
        row0=0, col0=0, row_span=t.rows, col_span=t.cols, bits=b,
        delta=float(delta[0]), zero_point=float(zp[0]),
        codes=pack_codes(codes[0], b),
    )
    return QuantizedTensor(SchemeConfig(SchemeKind.UNIFORM, b, b), t.rows, t.cols, (group,))


def quantize_outlier_reduced(t: Tensor2D, b: int, s: float) -> QuantizedTensor:
    """Top ceil(s * size) magnitudes stored at binary16, the rest one b-bit group.

    Ties in magnitude resolve toward the lower flat index. Outlier slots keep
    code 0 in the dense grid and are shadowed at reconstruction. The dense
    min/max excludes outliers; that tighter range is the point of the scheme.
    """
    _check_low_bits(b)
    _require_nonempty(t)
    if not (0.0 <= s <= 1.0):
        raise ConfigError(f"s must be in [0, 1], got {s}")
    flat = t.data.reshape(-1)
    size = flat.size
    k = math.ceil(s * size)
    scheme = SchemeConfig(SchemeKind.OUTLIER_REDUCED, b, b, s=s)
    if k == 0:
        q = quantize_uniform(t, b)
        return QuantizedTensor(scheme, t.rows, t.cols, q.groups)

    order = np.lexsort((np.arange(size), -np.abs(flat)))
    chosen = np.sort(order[:k])
    outliers = OutlierSet(
        indices=tuple(int(i) for i in chosen),
        values=tuple(float(v) for v in fp16_round(flat[chosen])),
    )
    keep = np.ones(size, dtype=bool)
    keep[chosen] = False
    dense = flat[keep]
    if dense.size:
        delta, zp = _delta_zp(dense.min(keepdims=True), dense.max(keepdims=True), b)
        codes = _encode(flat[None, :], delta[:, None], zp[:, None], b)[0]
        codes[chosen] = 0
        delta_f, zp_f = float(delta[0]), float(zp[0])
    else:
        codes = np.zeros(size, dtype=np.uint8)
        delta_f, zp_f = 0.0, 0.0
    group = QuantizedGroup(
        row0=0, col0=0, row_span=t.rows, col_span=t.cols, bits=b,
        delta=delta_f, zero_point=zp_f, codes=pack_codes(codes, b),
    )
    return QuantizedTensor(scheme, t.rows, t.cols, (group,), outliers)


def quantize_grouped(t: Tensor2D, geometry: Grouping, b: int) -> QuantizedTensor:
    """Group-wise quantization with one of the three grouping geometries."""
    _check_low_bits(b)
    _require_nonempty(t)
    data = t.data
    if isinstance(geometry, PerToken):
        g = geometry.g
        if t.cols % g != 0:
            raise ConfigError(f"per-token group size {g} does not divide cols={t.cols}")
        groups = _token_groups(data, 0, g, b)
        scheme = SchemeConfig(SchemeKind.GROUP_T, b, b, g=g)
        return QuantizedTensor(scheme, t.rows, t.cols, tuple(groups))
    if isinstance(geometry, PerChannelFull):
        groups = _column_groups(data, 0, b)
        scheme = SchemeConfig(SchemeKind.GROUP_CN, b, b)
        return QuantizedTensor(scheme, t.rows, t.cols, tuple(groups))
    if isinstance(geometry, PerChannel):
        g = geometry.g
        if g < 1:
            raise ConfigError(f"per-channel group size must be >= 1, got {g}")
        m = t.rows // g
        groups: list[QuantizedGroup] = []
        for blk in range(m):
            groups.extend(_column_groups(data[blk * g : (blk + 1) * g], blk * g, b))
        residual = None
        if t.rows % g:
            residual = Tensor2D(fp16_round(data[m * g :]))
        scheme = SchemeConfig(SchemeKind.GROUP_C, b, b, g=g)
        return QuantizedTensor(scheme, t.rows, t.cols, tuple(groups), residual=residual)
    raise ConfigError(f"unknown grouping geometry {geometry!r}")


def side_layout(cfg: SchemeConfig, side: str) -> tuple[int, str, Optional[float]]:
    """How one side of a K/V pair is stored: (bits, layout, param).

    layout is one of "pass16", "uniform", "outlier", "channel",
    "channel_full", "token". param carries the group size for "channel" and
    "token", the outlier fraction for "outlier", and is None otherwise.
    Hybrid kinds resolve here, including the no-finite-g1/g2 channel case.
    """
    if side not in ("k", "v"):
        raise ConfigError(f"side must be 'k' or 'v', got {side!r}")
    b = cfg.b_k if side == "k" else cfg.b_v
    kind = cfg.kind
    if b == 16 or kind is SchemeKind.PASSTHROUGH16:
        return b, "pass16", None
    if kind is SchemeKind.UNIFORM:
        return b, "uniform", None
    if kind is SchemeKind.OUTLIER_REDUCED:
        return b, "outlier", cfg.s
    if kind is SchemeKind.GROUP_C:
        return b, "channel", cfg.g
    if kind is SchemeKind.GROUP_CN:
        return b, "channel_full", None
    if kind is SchemeKind.GROUP_T:
        return b, "token", cfg.g
    if kind is SchemeKind.HYBRID_KCVT:
        if side == "k":
            return (b, "channel", cfg.g1) if cfg.g1 is not None else (b, "channel_full", None)
        return b, "token", cfg.g2
    if kind is SchemeKind.HYBRID_KTVC:
        if side == "v":
            return (b, "channel", cfg.g2) if cfg.g2 is not None else (b, "channel_full", None)
        return b, "token", cfg.g1
    raise ConfigError(f"unhandled scheme kind {kind}")


def _quantize_side(t: Tensor2D, cfg: SchemeConfig, side: str) -> QuantizedTensor:
    """Quantize one side (K or V) of a pair per the config's geometry for it."""
    b, layout, param = side_layout(cfg, side)
    if layout == "pass16":
        q = quantize_passthrough(t)
    elif layout == "uniform":
        q = quantize_uniform(t, b)
    elif layout == "outlier":
        q = quantize_outlier_reduced(t, b, param)
    elif layout == "channel":
        q = quantize_grouped(t, PerChannel(int(param)), b)
    elif layout == "channel_full":
        q = quantize_grouped(t, PerChannelFull(), b)
    else:
        q = quantize_grouped(t, PerToken(int(param)), b)
    return QuantizedTensor(cfg, q.rows, q.cols, q.groups, q.outliers, q.residual_start, q.residual)


def quantize_kv_pair(K: Tensor2D, V: Tensor2D, cfg: SchemeConfig) -> tuple[QuantizedTensor, QuantizedTensor]:
    """Quantize a K/V pair, dispatching per-side geometry and bit width."""
    if K.shape != V.shape:
        raise ShapeError(f"K and V shapes differ: {K.shape} vs {V.shape}")
    return _quantize_side(K, cfg, "k"), _quantize_side(V, cfg, "v")


def dequantize(q: QuantizedTensor) -> Tensor2D:
    """Reconstruct float32 values. Validates that the payload tiles the shape."""
    out = np.zeros((q.rows, q.cols), dtype=np.float32)
    coverage = np.zeros((q.rows, q.cols), dtype=np.uint8)
    for grp in q.groups:
        r1, c1 = grp.row0 + grp.row_span, grp.col0 + grp.col_span
        if r1 > q.residual_start or c1 > q.cols or grp.row0 < 0 or grp.col0 < 0:
            raise CorruptionError(
                f"group at ({grp.row0},{grp.col0}) span {grp.row_span}x{grp.col_span} "
                f"escapes the dense region ({q.residual_start}x{q.cols})"
            )
        out[grp.row0 : r1, grp.col0 : c1] = grp.decode()
        coverage[grp.row0 : r1, grp.col0 : c1] += 1
    if q.residual is not None and q.residual.rows:
        out[q.residual_start :] = q.residual.data
        coverage[q.residual_start :] += 1
    if not (coverage == 1).all():
        raise CorruptionError("groups plus residual rows do not tile the tensor exactly once")
    if q.outliers:
        idx = np.fromiter(q.outliers.indices, dtype=np.int64, count=len(q.outliers))
        if (idx >= q.residual_start * q.cols).any():
            raise CorruptionError("outlier index points into the residual region")
        vals = np.fromiter(q.outliers.values, dtype=np.float32, count=len(q.outliers))
        out.reshape(-1)[idx] = vals
    return Tensor2D(out)


# ----- storage accounting and serialization ------------------------------------

@dataclass(frozen=True)
class StorageBytes:
    """Exact byte counts for one quantized tensor."""

    code_bytes: int
    metadata_bytes: int   # 2-byte delta + 2-byte zero_point per group
    residual_bytes: int   # 2 bytes per residual element
    outlier_bytes: int    # 4-byte u32 index + 2-byte value per outlier

    @property
    def total(self) -> int:
        return self.code_bytes + self.metadata_bytes + self.residual_bytes + self.outlier_bytes


def storage_bytes(q: QuantizedTensor) -> StorageBytes:
    n_res = q.residual.data.size if q.residual is not None else 0
    return StorageBytes(
        code_bytes=sum(len(g.codes) for g in q.groups),
        metadata_bytes=4 * len(q.groups),
        residual_bytes=2 * n_res,
        outlier_bytes=6 * len(q.outliers),
    )


def bits_per_element(q: QuantizedTensor) -> float:
    """Stored bits per tensor element, exact byte arithmetic (0.0 when empty)."""
    n = q.rows * q.cols
    return 8.0 * storage_bytes(q).total / n if n else 0.0


def to_json_dict(q: QuantizedTensor) -> dict:
    """Debug dump with a frozen schema; codes and residual are base64."""
    return {
        "scheme": q.scheme.to_dict(),
        "shape": [q.rows, q.cols],
        "groups": [
            {
                "origin": [g.row0, g.col0],
                "span": [g.row_span, g.col_span],
                "bits": g.bits,
                "delta": g.delta,
                "zero_point": g.zero_point,
                "codes": base64.b64encode(g.codes).decode("ascii"),
            }
            for g in q.groups
        ],
        "outliers": {
            "indices": list(q.outliers.indices),
            "values": list(q.outliers.values),
        },
        "residual_start": q.residual_start,
        "residual": (
            base64.b64encode(q.residual.data.astype(np.float16).tobytes()).decode("ascii")
            if q.residual is not None
            else None
        ),
    }
