"""IEEE-754 binary32 bit access and shared-exponent fixed-point conversion.

A model vector is transported as the 23-bit fraction fields of a
shared-exponent fixed-point representation.  Adding the constant
``3 * 2**(e - 126)`` — where ``e`` is the biased exponent field of the
recorded infinity-norm bound — shifts every in-range element into
``[2**(e - 125), 2**(e - 124))``, so all elements share sign bit 0 and
exponent field ``e + 2``.  Only the fraction bits travel over the channel;
sign and exponent are reattached at the receiver.  The representable grid
has step ``2**(e - 148)`` (one unit in the last place of the shared
exponent), and flipping fraction bit ``j`` of an element moves its decoded
value by exactly ``2**(j - 23) * 2**(e - 125)``.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from .validation import check_bitstream, check_model

__all__ = [
    "FRACTION_BITS",
    "EXPONENT_BITS",
    "EXPONENT_BIAS",
    "FRACTION_MASK",
    "Binary32Parts",
    "FixedPointVector",
    "decompose",
    "recompose",
    "fixed_point_range",
    "grid_step",
    "fp_to_fx",
    "fraction_fields",
    "encode",
    "fractions_from_bits",
    "recover_model",
    "recover_from_fractions",
    "pack_bitstream",
    "unpack_bitstream",
]

FRACTION_BITS = 23
EXPONENT_BITS = 8
EXPONENT_BIAS = 127
FRACTION_MASK = (1 << FRACTION_BITS) - 1
_EXPONENT_MASK = (1 << EXPONENT_BITS) - 1
_BIT_INDICES = np.arange(FRACTION_BITS, dtype=np.uint32)

_HEADER = struct.Struct("<IB")  # element count (uint32 LE), shared exponent (uint8)


@dataclass(frozen=True)
class Binary32Parts:
    """Sign bit, biased exponent field, and fraction field of a binary32."""

    sign: int
    exponent: int
    fraction: int

    def __post_init__(self):
        if self.sign not in (0, 1):
            raise ValueError(f"sign must be 0 or 1, got {self.sign}")
        if not 1 <= self.exponent <= 254:
            raise ValueError(
                f"exponent field must be in [1, 254] (normalized), got {self.exponent}"
            )
        if not 0 <= self.fraction <= FRACTION_MASK:
            raise ValueError(f"fraction field must fit in 23 bits, got {self.fraction}")

    @property
    def value(self) -> float:
        """Recomposed value (-1)^s * 2^(E-127) * (1 + f * 2^-23)."""
        return recompose(self)


@dataclass(frozen=True)
class FixedPointVector:
    """Shared-exponent fixed-point form of a model vector.

    ``fractions`` holds the 23-bit fraction fields (uint32); every element
    implicitly carries sign bit 0 and exponent field ``shared_exponent``.
    """

    fractions: np.ndarray
    shared_exponent: int

    def __post_init__(self):
        fr = np.asarray(self.fractions, dtype=np.uint32)
        if fr.ndim != 1 or fr.size == 0:
            raise ValueError("fractions must be a non-empty 1-D array")
        if fr.max() > FRACTION_MASK:
            raise ValueError("fraction fields must fit in 23 bits")
        if not 1 <= self.shared_exponent <= 254:
            raise ValueError(
                f"shared_exponent must be in [1, 254], got {self.shared_exponent}"
            )
        object.__setattr__(self, "fractions", fr)

    @property
    def model_dim(self) -> int:
        return int(self.fractions.size)

    @property
    def decimal_values(self) -> np.ndarray:
        """Pre-shift decimal values 2^(ê-127) * (1 + f * 2^-23), float64."""
        scale = 2.0 ** (self.shared_exponent - EXPONENT_BIAS)
        return scale * (1.0 + self.fractions.astype(np.float64) * 2.0**-FRACTION_BITS)


def decompose(x) -> Binary32Parts:
    """Split a binary32 value into (sign, exponent field, fraction field).

    ``x`` is interpreted as binary32 (wider inputs are rounded by the cast).
    Zeros, subnormals, infinities and NaNs are rejected: the fixed-point
    transport assumes normalized values.
    """
    xf = np.float32(x)
    if not np.isfinite(xf):
        raise ValueError(f"expected a finite value, got {x!r}")
    (u,) = struct.unpack("<I", struct.pack("<f", float(xf)))
    sign = u >> 31
    exponent = (u >> FRACTION_BITS) & _EXPONENT_MASK
    fraction = u & FRACTION_MASK
    if exponent == 0:
        raise ValueError(f"{x!r} is zero or subnormal; only normalized values are supported")
    return Binary32Parts(sign, exponent, fraction)


def recompose(parts: Binary32Parts) -> float:
    """Inverse of :func:`decompose` (exact, via bit assembly)."""
    u = (parts.sign << 31) | (parts.exponent << FRACTION_BITS) | parts.fraction
    (value,) = struct.unpack("<f", struct.pack("<I", u))
    return value


def fixed_point_range(nu_inf) -> float:
    """Half-width 2^(e-126) of the representable element range for ``nu_inf``.

    Elements must satisfy ``|w| <= fixed_point_range(nu_inf)`` before
    conversion; clipping out-of-range values is the caller's job.
    """
    e = decompose(nu_inf).exponent
    return 2.0 ** (e - 126)


def grid_step(nu_inf) -> float:
    """Quantization step 2^(e-148) of the fixed-point grid for ``nu_inf``."""
    e = decompose(nu_inf).exponent
    return 2.0 ** (e - 148)


def fp_to_fx(model, nu_inf) -> FixedPointVector:
    """Convert a model vector to shared-exponent fixed point.

    Every element is shifted by ``3 * 2**(e - 126)`` (``e`` = exponent field
    of ``nu_inf``), which lands all in-range inputs in
    ``[2**(e - 125), 2**(e - 124))``, then rounded to the fixed-point grid
    (ties to even).  An input equal to the upper range boundary
    ``+2**(e - 126)`` maps onto the open interval's endpoint and is clamped
    to the all-ones fraction.

    Raises ``ValueError`` if any ``|element|`` exceeds the representable
    range or if the shared exponent ``e + 2`` would overflow the exponent
    field.  Out-of-range inputs are an error, not a silent clip.
    """
    arr = check_model(model)
    parts = decompose(nu_inf)
    if parts.sign:
        raise ValueError("nu_inf must be positive")
    e = parts.exponent
    if e + 2 > 254:
        raise ValueError(f"shared exponent {e + 2} overflows the exponent field")
    limit = 2.0 ** (e - 126)
    mags = np.abs(arr.astype(np.float64))
    if np.any(mags > limit):
        raise ValueError(
            f"model elements must satisfy |w| <= {limit} for nu_inf={nu_inf}; "
            f"max |w| = {mags.max()}"
        )
    # w / step + 2^22 is exact in float64 for every in-range binary32 w,
    # so np.rint applies true round-half-to-even on the grid.
    step = 2.0 ** (e - 148)
    f = np.rint(arr.astype(np.float64) / step + float(1 << 22))
    f = np.minimum(f, float(FRACTION_MASK)).astype(np.uint32)
    return FixedPointVector(f, e + 2)


def fraction_fields(model, nu_inf) -> np.ndarray:
    """Fraction fields of ``fp_to_fx(model, nu_inf)`` as a uint32 array."""
    return fp_to_fx(model, nu_inf).fractions


def encode(fx: FixedPointVector) -> np.ndarray:
    """Flatten fraction fields into a bitstream (uint8 array of 0/1).

    Bit ``k`` of the stream is fraction bit ``k % 23`` (LSB first) of
    element ``k // 23`` (parameter-major order).
    """
    fr = fx.fractions
    bits = (fr[:, None] >> _BIT_INDICES) & np.uint32(1)
    return bits.astype(np.uint8).ravel()


def fractions_from_bits(bits) -> np.ndarray:
    """Reassemble 23-bit fraction fields from a bitstream."""
    arr = check_bitstream(bits)
    groups = arr.reshape(-1, FRACTION_BITS).astype(np.uint32)
    return (groups << _BIT_INDICES).sum(axis=1, dtype=np.uint32)


def recover_from_fractions(fractions, shared_exponent: int) -> np.ndarray:
    """Decode fraction fields back to binary32 model elements.

    Inverse of the shift in :func:`fp_to_fx`:
    ``w = 2^(ê-127) * (1 + f * 2^-23) - 3 * 2^(ê-128)``, computed exactly as
    ``(f - 2^22) * 2^(ê-150)``.
    """
    fr = np.asarray(fractions, dtype=np.uint32)
    if not 3 <= shared_exponent <= 254:
        raise ValueError(f"shared_exponent must be in [3, 254], got {shared_exponent}")
    step = 2.0 ** (shared_exponent - 150)
    vals = (fr.astype(np.float64) - float(1 << 22)) * step
    return vals.astype(np.float32)


def recover_model(bits, nu_inf) -> np.ndarray:
    """Decode a received bitstream into a binary32 model vector.

    Any 0/1 pattern decodes to a value inside the representable range
    ``[-2**(e - 126), 2**(e - 126))``; there are no invalid payloads, which
    is what lets channel bit errors act directly as perturbation noise.
    """
    e = decompose(nu_inf).exponent
    return recover_from_fractions(fractions_from_bits(bits), e + 2)


def pack_bitstream(bits, shared_exponent: int) -> bytes:
    """Serialize a bitstream for the wire.

    Header: element count as uint32 little-endian, shared exponent field as
    uint8.  Payload: stream bits packed 8 per byte, LSB first, zero padding
    in the final byte.
    """
    arr = check_bitstream(bits)
    if not 1 <= shared_exponent <= 254:
        raise ValueError(f"shared_exponent must be in [1, 254], got {shared_exponent}")
    count = arr.size // FRACTION_BITS
    payload = np.packbits(arr, bitorder="little").tobytes()
    return _HEADER.pack(count, shared_exponent) + payload


def unpack_bitstream(data: bytes) -> tuple[np.ndarray, int]:
    """Deserialize :func:`pack_bitstream` output to (bits, shared_exponent).

    Padding bits in the final byte are ignored, so a corrupted pad never
    poisons the decode.
    """
    if len(data) < _HEADER.size:
        raise ValueError("buffer shorter than the stream header")
    count, shared_exponent = _HEADER.unpack_from(data, 0)
    if count == 0:
        raise ValueError("stream header declares zero elements")
    n_bits = count * FRACTION_BITS
    n_bytes = (n_bits + 7) // 8
    if len(data) != _HEADER.size + n_bytes:
        raise ValueError(
            f"expected {_HEADER.size + n_bytes} bytes for {count} elements, got {len(data)}"
        )
    payload = np.frombuffer(data, dtype=np.uint8, offset=_HEADER.size)
    bits = np.unpackbits(payload, count=n_bits, bitorder="little")
    return bits, shared_exponent
