"""Dense 2-D float32 tensors, synthetic data generators, and KVT1 file IO.

The container is deliberately minimal: row-major float32, immutable after
construction, finite values only. Rows play the token axis (N), columns the
channel axis (d_model) throughout the package.

KVT1 format (little-endian):

======  ====  =======================================
offset  size  field
======  ====  =======================================
0       4     magic bytes ``KVT1``
4       4     u32 ndim, must be 2
8       8     u64 rows
16      8     u64 cols
24      4*n   rows*cols IEEE-754 binary32, row-major
======  ====  =======================================

No padding, no trailing bytes.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, FormatError
from .rng import SplitMix64

__all__ = [
    "Tensor2D",
    "SyntheticSpec",
    "GENERATORS",
    "fp16_round",
    "generate",
    "read_tensor",
    "write_tensor",
]

_MAGIC = b"KVT1"
_HEADER = struct.Struct("<4sIQQ")

# Salt for the channel-selection substream of the ChannelOutlier generator.
# Kept separate from the data stream so the base tensor is identical for any
# (fraction, scale) at a fixed seed.
_CHANNEL_SALT = 0x5EED_C0DE_0001


def fp16_round(values: np.ndarray) -> np.ndarray:
    """Round float32 values through IEEE-754 binary16 (round-to-nearest-even).

    This is how every "FP16" storage path in the package is simulated while
    keeping float32 as the single in-memory dtype.
    """
    return np.asarray(values, dtype=np.float32).astype(np.float16).astype(np.float32)


class Tensor2D:
    """Immutable row-major float32 matrix.

    Construction validates shape and finiteness; the backing array is made
    read-only so instances can be shared freely.
    """

    __slots__ = ("_data",)

    def __init__(self, data: np.ndarray):
        arr = np.array(data, dtype=np.float32, order="C", copy=True)
        if arr.ndim != 2:
            raise ConfigError(f"Tensor2D requires a 2-D array, got ndim={arr.ndim}")
        if arr.shape[1] < 1:
            raise ConfigError(f"Tensor2D requires cols >= 1, got shape {arr.shape}")
        if arr.size and not np.isfinite(arr).all():
            bad = int(np.flatnonzero(~np.isfinite(arr.reshape(-1)))[0])
            raise ConfigError(f"non-finite value at flat index {bad}")
        arr.setflags(write=False)
        self._data = arr

    @property
    def data(self) -> np.ndarray:
        """Read-only float32 view of the contents."""
        return self._data

    @property
    def rows(self) -> int:
        return self._data.shape[0]

    @property
    def cols(self) -> int:
        return self._data.shape[1]

    @property
    def shape(self) -> tuple[int, int]:
        return self._data.shape

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Tensor2D):
            return NotImplemented
        return self.shape == other.shape and self._data.tobytes() == other._data.tobytes()

    def __hash__(self) -> int:
        return hash((self.shape, self._data.tobytes()))

    def __repr__(self) -> str:
        return f"Tensor2D(rows={self.rows}, cols={self.cols})"


GENERATORS = ("gaussian", "channel_outlier", "heavy_tail")


@dataclass(frozen=True)
class SyntheticSpec:
    """Recipe for a deterministic synthetic tensor.

    generator:
        ``gaussian``: iid standard normals.
        ``channel_outlier``: gaussian, then a fixed seeded subset of
        ceil(outlier_fraction * cols) channels multiplied by outlier_scale.
        Models caches where a few channels run hot. With the same seed the
        un-scaled channels match the plain gaussian tensor exactly.
        ``heavy_tail``: iid Student-t with tail_exponent degrees of freedom.
    """

    generator: str
    rows: int
    cols: int
    seed: int
    outlier_fraction: float = 0.0
    outlier_scale: float = 1.0
    tail_exponent: float = 3.0

    def validate(self) -> None:
        if self.generator not in GENERATORS:
            raise ConfigError(
                f"unknown generator {self.generator!r}, expected one of {GENERATORS}"
            )
        if self.rows < 1 or self.cols < 1:
            raise ConfigError(f"rows and cols must be >= 1, got {self.rows}x{self.cols}")
        if self.generator == "channel_outlier":
            if not (0.0 < self.outlier_fraction <= 1.0):
                raise ConfigError(
                    f"outlier_fraction must be in (0, 1], got {self.outlier_fraction}"
                )
            if self.outlier_scale < 1.0:
                raise ConfigError(f"outlier_scale must be >= 1, got {self.outlier_scale}")
        if self.generator == "heavy_tail" and self.tail_exponent <= 0:
            raise ConfigError(f"tail_exponent must be > 0, got {self.tail_exponent}")


def _outlier_channels(seed: int, cols: int, fraction: float) -> np.ndarray:
    """Indices of the seeded outlier channel subset (sorted, size ceil(f*cols))."""
    k = math.ceil(fraction * cols)
    keys = SplitMix64(seed ^ _CHANNEL_SALT).u64(cols)
    chosen = np.argsort(keys, kind="stable")[:k]
    return np.sort(chosen)


def generate(spec: SyntheticSpec) -> Tensor2D:
    """Produce the tensor described by ``spec``. Pure: same spec, same bytes."""
    spec.validate()
    stream = SplitMix64(spec.seed)
    n = spec.rows * spec.cols
    if spec.generator == "heavy_tail":
        flat = stream.student_t(n, spec.tail_exponent)
    else:
        flat = stream.gaussian(n)
    mat = flat.reshape(spec.rows, spec.cols).astype(np.float32)
    if spec.generator == "channel_outlier":
        cols = _outlier_channels(spec.seed, spec.cols, spec.outlier_fraction)
        mat[:, cols] *= np.float32(spec.outlier_scale)
    return Tensor2D(mat)


def write_tensor(path, t: Tensor2D) -> None:
    """Write ``t`` to ``path`` in KVT1 format."""
    header = _HEADER.pack(_MAGIC, 2, t.rows, t.cols)
    payload = t.data.astype("<f4", copy=False).tobytes(order="C")
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(payload)


def read_tensor(path) -> Tensor2D:
    """Read a KVT1 file. Parse failures raise FormatError with a byte offset."""
    with open(path, "rb") as fh:
        buf = fh.read()
    if len(buf) < 4 or buf[:4] != _MAGIC:
        raise FormatError(f"bad magic {buf[:4]!r}, expected {_MAGIC!r}", offset=0)
    if len(buf) < _HEADER.size:
        raise FormatError("truncated header", offset=len(buf))
    _, ndim, rows, cols = _HEADER.unpack_from(buf, 0)
    if ndim != 2:
        raise FormatError(f"ndim must be 2, got {ndim}", offset=4)
    if rows * cols * 4 > 2**62:
        raise FormatError(f"dimension overflow: {rows} x {cols}", offset=8)
    expected = _HEADER.size + rows * cols * 4
    if len(buf) < expected:
        raise FormatError(
            f"truncated payload: need {expected} bytes, file has {len(buf)}",
            offset=len(buf),
        )
    if len(buf) > expected:
        raise FormatError(f"{len(buf) - expected} trailing bytes", offset=expected)
    flat = np.frombuffer(buf, dtype="<f4", count=rows * cols, offset=_HEADER.size)
    if rows * cols and not np.isfinite(flat).all():
        bad = int(np.flatnonzero(~np.isfinite(flat))[0])
        raise FormatError(
            f"non-finite value at element {bad}", offset=_HEADER.size + bad * 4
        )
    if cols < 1:
        raise FormatError(f"cols must be >= 1, got {cols}", offset=16)
    return Tensor2D(flat.reshape(rows, cols))
