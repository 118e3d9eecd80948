"""Check-bit codecs over small bit vectors.

Two code families are supported: Hamming single error correction (parity
bits at power-of-two codeword positions) and CRC remainders (polynomial
division, MSB first, init 0, no reflection, no final XOR).  Both are
linear over GF(2), so a code is fully described by one check-bit column
per data bit; scalar evaluation folds columns over set bits and batch
evaluation folds precomputed 256-entry byte tables.

Hamming construction (fixed, deterministic in the data width d):
codeword positions are numbered 1..d+p; positions that are powers of two
hold parity bits; data bits fill the remaining positions in ascending
order starting from data bit 0.  Parity j covers every non-power-of-two
position whose binary representation has bit j set, which makes the
column of data bit b simply its codeword position.
"""

from __future__ import annotations

import functools
from dataclasses import dataclass
from enum import Enum

import numpy as np

from .errors import ParameterError

MAX_DATA_WIDTH = 64

CRC8_POLY = 0x07
CRC16_POLY = 0x1021
CRC32_POLY = 0x04C11DB7


class CodeFamily(Enum):
    HSEC = "hsec"
    CRC = "crc"


def _check_value(data: int, width: int) -> None:
    if not 0 <= data < (1 << width):
        raise ParameterError(f"value {data:#x} does not fit in {width} bits")


def hamming_parity_width(data_width: int) -> int:
    """Smallest p with 2**p >= data_width + p + 1."""
    if not 1 <= data_width <= MAX_DATA_WIDTH:
        raise ParameterError(
            f"data width must be in [1, {MAX_DATA_WIDTH}], got {data_width}"
        )
    p = 1
    while (1 << p) < data_width + p + 1:
        p += 1
    return p


@dataclass(frozen=True)
class HammingLayout:
    """Coverage structure of the Hamming code for one data width."""

    data_width: int
    parity_width: int
    bit_position: tuple[int, ...]  # data bit -> 1-based codeword position

    @property
    def total_width(self) -> int:
        return self.data_width + self.parity_width

    def coverage(self, j: int) -> tuple[int, ...]:
        """Data bits covered by parity bit j."""
        if not 0 <= j < self.parity_width:
            raise ParameterError(f"parity index {j} out of range")
        return tuple(b for b, pos in enumerate(self.bit_position) if (pos >> j) & 1)

    @property
    def parity_masks(self) -> tuple[int, ...]:
        masks = []
        for j in range(self.parity_width):
            m = 0
            for b, pos in enumerate(self.bit_position):
                if (pos >> j) & 1:
                    m |= 1 << b
            masks.append(m)
        return tuple(masks)

    def data_bit_at(self, position: int) -> int | None:
        """Inverse of bit_position; None if the position holds no data bit."""
        try:
            return self.bit_position.index(position)
        except ValueError:
            return None


@functools.lru_cache(maxsize=None)
def hamming_layout(data_width: int) -> HammingLayout:
    p = hamming_parity_width(data_width)
    positions = tuple(
        pos for pos in range(1, data_width + p + 1) if pos & (pos - 1)
    )
    assert len(positions) == data_width
    return HammingLayout(data_width, p, positions)


def hamming_parity(data: int, data_width: int) -> int:
    """Even-parity check bits of a data word; bit j covers coverage set j."""
    layout = hamming_layout(data_width)
    _check_value(data, data_width)
    out = 0
    x = data
    while x:
        out ^= layout.bit_position[(x & -x).bit_length() - 1]
        x &= x - 1
    return out


def hamming_syndrome(data: int, stored_parity: int, data_width: int) -> int:
    """XOR of stored and recomputed parity; zero iff consistent."""
    layout = hamming_layout(data_width)
    _check_value(stored_parity, layout.parity_width)
    return hamming_parity(data, data_width) ^ stored_parity


class CorrectionStatus(Enum):
    CLEAN = "clean"
    CORRECTED = "corrected"
    PARITY_BIT_ERROR = "parity_bit_error"
    UNCORRECTABLE = "uncorrectable"


@dataclass(frozen=True)
class Correction:
    data: int
    status: CorrectionStatus
    bit: int | None = None  # corrected data bit, or erroneous parity bit


def hamming_correct(data: int, stored_parity: int, data_width: int) -> Correction:
    """Single-error correction.

    The syndrome is the codeword position of a single flipped bit: zero
    means clean, a power of two names a parity bit, any other in-range
    value names a data bit (which is restored).  Double errors alias to
    one of those cases and come back wrong or uncorrectable; this is a
    single-error code.
    """
    layout = hamming_layout(data_width)
    syndrome = hamming_syndrome(data, stored_parity, data_width)
    if syndrome == 0:
        return Correction(data, CorrectionStatus.CLEAN)
    if syndrome & (syndrome - 1) == 0 and syndrome <= layout.total_width:
        return Correction(data, CorrectionStatus.PARITY_BIT_ERROR,
                          syndrome.bit_length() - 1)
    bit = layout.data_bit_at(syndrome)
    if bit is None:
        return Correction(data, CorrectionStatus.UNCORRECTABLE)
    return Correction(data ^ (1 << bit), CorrectionStatus.CORRECTED, bit)


def _validate_crc(poly: int, check_width: int) -> None:
    if check_width < 1:
        raise ParameterError("CRC check width must be >= 1")
    if poly == 0:
        raise ParameterError("CRC generator polynomial must be nonzero")
    if poly >= (1 << check_width):
        raise ParameterError(
            f"CRC polynomial {poly:#x} wider than check width {check_width}"
        )
    if poly & 1 == 0:
        # A zero constant term would let some single-bit flips cancel out,
        # which the checker's detection guarantee relies on.
        raise ParameterError("CRC polynomial must have a nonzero constant term")


def crc_checkbits(data: int, data_width: int, poly: int, check_width: int) -> int:
    """Remainder of data * x**check_width modulo the generator polynomial.

    poly carries the generator without its implicit leading term, MSB
    first, e.g. 0x07 for x^8 + x^2 + x + 1.
    """
    _validate_crc(poly, check_width)
    if data_width < 1:
        raise ParameterError("data width must be >= 1")
    _check_value(data, data_width)
    mask = (1 << check_width) - 1
    reg = 0
    for i in range(data_width - 1, -1, -1):
        feedback = ((data >> i) & 1) ^ ((reg >> (check_width - 1)) & 1)
        reg = (reg << 1) & mask
        if feedback:
            reg ^= poly
    return reg


@dataclass(frozen=True)
class CodeKind:
    """Which code family a checker bank runs, and its CRC parameters."""

    family: CodeFamily
    poly: int | None = None
    check_width: int | None = None

    def __post_init__(self):
        if self.family is CodeFamily.CRC:
            if self.poly is None or self.check_width is None:
                raise ParameterError("CRC code needs a polynomial and check width")
            _validate_crc(self.poly, self.check_width)
        else:
            if self.poly is not None or self.check_width is not None:
                raise ParameterError("Hamming code takes no polynomial parameters")

    @staticmethod
    def hsec() -> "CodeKind":
        return CodeKind(CodeFamily.HSEC)

    @staticmethod
    def crc(poly: int, check_width: int) -> "CodeKind":
        return CodeKind(CodeFamily.CRC, poly, check_width)


class CheckCode:
    """A concrete check-bit function for one data width.

    Exposes the column form (one check-bit vector per data bit) and the
    byte-table form used by the batch kernels.  byte_tables always has 8
    rows so kernels can treat every code uniformly; rows beyond the data
    width are zero.
    """

    def __init__(self, kind: CodeKind, data_width: int):
        if not 1 <= data_width <= MAX_DATA_WIDTH:
            raise ParameterError(
                f"data width must be in [1, {MAX_DATA_WIDTH}], got {data_width}"
            )
        self.kind = kind
        self.data_width = data_width
        if kind.family is CodeFamily.HSEC:
            layout = hamming_layout(data_width)
            self.check_width = layout.parity_width
            columns = list(layout.bit_position)
        else:
            self.check_width = kind.check_width
            columns = []
            col = kind.poly  # x**c mod g
            top = 1 << (self.check_width - 1)
            mask = (1 << self.check_width) - 1
            for _ in range(data_width):
                columns.append(col)
                carry = col & top
                col = (col << 1) & mask
                if carry:
                    col ^= kind.poly
        self.columns = tuple(columns)
        tables = np.zeros((8, 256), dtype=np.uint64)
        for b, col in enumerate(self.columns):
            row, j = divmod(b, 8)
            block = 1 << j
            for v in range(block, 256, 2 * block):
                tables[row, v:v + block] ^= np.uint64(col)
        tables.setflags(write=False)
        self.byte_tables = tables

    def checkbits(self, data: int) -> int:
        _check_value(data, self.data_width)
        out = 0
        x = data
        while x:
            out ^= self.columns[(x & -x).bit_length() - 1]
            x &= x - 1
        return out

    @property
    def provenance(self) -> str:
        """Stable identifier of the exact code parameters, for report echoes."""
        if self.kind.family is CodeFamily.HSEC:
            return (f"hsec(d={self.data_width},p={self.check_width},"
                    f"construction=pow2-positions/lsb-data)")
        return (f"crc(w={self.data_width},c={self.check_width},"
                f"poly={self.kind.poly:#x},init=0,refin=false,refout=false,xorout=0)")

    def __repr__(self):
        return f"CheckCode({self.provenance})"
