"""Exception types shared across the toolkit.

Callers that want a single catch-all can handle :class:`KvcompError`;
the CLI maps these onto its exit codes.
"""

from __future__ import annotations

__all__ = [
    "KvcompError",
    "ConfigError",
    "FormatError",
    "ShapeError",
    "StateError",
    "CorruptionError",
]


class KvcompError(Exception):
    """Base class for all toolkit errors."""


class ConfigError(KvcompError):
    """Invalid configuration: bad scheme parameters, dims, or flag combinations."""


class FormatError(KvcompError):
    """Malformed KVT1 file. Carries the byte offset where parsing failed."""

    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} (byte offset {offset})")
        self.offset = offset


class ShapeError(KvcompError):
    """Tensor or row dimensions do not match what the operation requires."""


class StateError(KvcompError):
    """Operation called in the wrong lifecycle state (e.g. prefill on a non-empty cache)."""


class CorruptionError(KvcompError):
    """Internally inconsistent quantized payload (geometry gaps, overlaps, bad lengths)."""
