"""Little-endian bit packing for integer codes.

Layout contract, fixed for byte-exact tests: code i occupies bit positions
[i*b, (i+1)*b) of a continuous bitstream, least-significant bit first; byte j
of the output holds stream positions [8j, 8j+8), again LSB first. Equivalent
big-integer view: ``sum(code[i] << (i*b))`` serialized little-endian into
ceil(count*b/8) bytes. Codes cross byte boundaries without padding (the
3-bit case), and any unused bits of the final byte are zero.
"""

from __future__ import annotations

import numpy as np

from .errors import CorruptionError

__all__ = ["pack_codes", "unpack_codes", "packed_size"]

_VALID_BITS = (2, 3, 4, 8)


def packed_size(count: int, bits: int) -> int:
    """Bytes needed for ``count`` codes of width ``bits``."""
    return (count * bits + 7) // 8


def _check_bits(bits: int) -> None:
    if bits not in _VALID_BITS:
        raise ValueError(f"code width must be one of {_VALID_BITS}, got {bits}")


def pack_codes(codes: np.ndarray, bits: int) -> bytes:
    """Pack uint8 codes (each < 2**bits) into LSB-first bytes."""
    _check_bits(bits)
    codes = np.ascontiguousarray(codes, dtype=np.uint8)
    if codes.ndim != 1:
        raise ValueError(f"codes must be 1-D, got ndim={codes.ndim}")
    if codes.size and int(codes.max()) >= 1 << bits:
        raise ValueError(f"code {int(codes.max())} does not fit in {bits} bits")
    if bits == 8:
        return codes.tobytes()
    shifts = np.arange(bits, dtype=np.uint8)
    bitmat = (codes[:, None] >> shifts) & np.uint8(1)
    return np.packbits(bitmat.reshape(-1), bitorder="little").tobytes()


def unpack_codes(buf: bytes, bits: int, count: int) -> np.ndarray:
    """Inverse of pack_codes. Validates length and zero padding bits."""
    _check_bits(bits)
    expected = packed_size(count, bits)
    if len(buf) != expected:
        raise CorruptionError(
            f"packed buffer is {len(buf)} bytes, expected {expected} "
            f"for {count} codes of width {bits}"
        )
    raw = np.frombuffer(buf, dtype=np.uint8)
    if bits == 8:
        return raw.copy()
    stream = np.unpackbits(raw, bitorder="little")
    used, pad = stream[: count * bits], stream[count * bits :]
    if pad.any():
        raise CorruptionError("nonzero padding bits in packed buffer")
    weights = (np.uint16(1) << np.arange(bits, dtype=np.uint16)).astype(np.uint16)
    vals = (used.reshape(count, bits).astype(np.uint16) * weights).sum(axis=1)
    return vals.astype(np.uint8)
