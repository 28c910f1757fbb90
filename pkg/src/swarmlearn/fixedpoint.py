"""Integer encoding of flat parameter vectors for on-chain storage.

A vector is stored as signed 64-bit integers together with a decimal scale:
``value_i = round_half_away(x_i * scale)``.  Scale ``0`` is reserved for
lossless mode, where the integers are the raw IEEE-754 bit patterns of the
float64 values (used when quantization is switched off).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

INT_BOUND = 2**63 - 1
RAW_SCALE = 0
DEFAULT_SCALE = 10**6


class Overflow(ValueError):
    """Raised when an element does not fit the integer range at the chosen scale."""

    def __init__(self, index: int):
        super().__init__(f"element {index} overflows the fixed-point range")
        self.index = index


@dataclass(frozen=True)
class FixedPointVector:
    values: tuple[int, ...]
    scale: int

    def __len__(self) -> int:
        return len(self.values)

    @property
    def lossless(self) -> bool:
        return self.scale == RAW_SCALE

    def to_array(self) -> np.ndarray:
        return dequantize(self)

    def with_value(self, index: int, value: int) -> "FixedPointVector":
        vals = list(self.values)
        vals[index] = value
        return FixedPointVector(tuple(vals), self.scale)


def quantize(x, scale: int = DEFAULT_SCALE) -> FixedPointVector:
    """Encode a real vector; rounding is half-away-from-zero."""
    arr = np.asarray(x, dtype=np.float64).ravel()
    if scale == RAW_SCALE:
        bad = ~np.isfinite(arr)
        if bad.any():
            raise Overflow(int(np.flatnonzero(bad)[0]))
        return FixedPointVector(tuple(int(v) for v in arr.view(np.int64)), RAW_SCALE)
    if scale < 1:
        raise ValueError(f"scale must be positive, got {scale}")
    scaled = arr * scale
    bad = ~np.isfinite(scaled) | (np.abs(scaled) + 0.5 >= INT_BOUND)
    if bad.any():
        raise Overflow(int(np.flatnonzero(bad)[0]))
    rounded = np.sign(scaled) * np.floor(np.abs(scaled) + 0.5)
    return FixedPointVector(tuple(int(v) for v in rounded), scale)


def dequantize(v: FixedPointVector) -> np.ndarray:
    if v.scale == RAW_SCALE:
        return np.array(v.values, dtype=np.int64).view(np.float64)
    return np.array(v.values, dtype=np.float64) / v.scale
