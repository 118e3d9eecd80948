"""Address/instruction chunking and shadow-memory indexing.

An n-bit address and an n-bit instruction are sliced MSB-first into k
fields each; chunk i couples address slice i with instruction slice i,
either by XOR (chunk stays n/k bits wide) or by concatenation (address
slice in the high half, 2n/k bits).  The shadow memories of a checker
bank are indexed by word offset from the program base, modulo the
memory depth.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

from .errors import AlignmentError, ParameterError
from .codec import MAX_DATA_WIDTH

WORD_BYTES = 4


class Coupling(Enum):
    XOR = "xor"
    CONCAT = "concat"


@dataclass(frozen=True)
class ChunkingSpec:
    word_width: int = 32
    k: int = 1
    coupling: Coupling = Coupling.XOR

    def __post_init__(self):
        if not 1 <= self.word_width <= MAX_DATA_WIDTH:
            raise ParameterError(f"word width {self.word_width} out of range")
        if self.k < 1 or self.word_width % self.k != 0:
            raise ParameterError(
                f"fragmentation factor {self.k} must divide word width {self.word_width}"
            )
        if self.codec_width > MAX_DATA_WIDTH:
            raise ParameterError(
                f"coupled chunk width {self.codec_width} exceeds {MAX_DATA_WIDTH} bits"
            )

    @property
    def chunk_width(self) -> int:
        return self.word_width // self.k

    @property
    def codec_width(self) -> int:
        """Width of the bit vector each chunk feeds into a codec."""
        if self.coupling is Coupling.CONCAT:
            return 2 * self.chunk_width
        return self.chunk_width

    @property
    def word_mask(self) -> int:
        return (1 << self.word_width) - 1


def make_chunks(address: int, instruction: int, spec: ChunkingSpec) -> tuple[int, ...]:
    """Slice and couple one (address, instruction) pair into k chunks.

    Chunk 0 is built from the most-significant slices.
    """
    if not 0 <= address <= spec.word_mask:
        raise ParameterError(f"address {address:#x} wider than {spec.word_width} bits")
    if not 0 <= instruction <= spec.word_mask:
        raise ParameterError(
            f"instruction {instruction:#x} wider than {spec.word_width} bits"
        )
    w = spec.chunk_width
    cmask = (1 << w) - 1
    chunks = []
    for i in range(spec.k):
        shift = (spec.k - 1 - i) * w
        a = (address >> shift) & cmask
        b = (instruction >> shift) & cmask
        if spec.coupling is Coupling.CONCAT:
            chunks.append((a << w) | b)
        else:
            chunks.append(a ^ b)
    return tuple(chunks)


def memory_index(address: int, base: int, depth: int, word_width: int = 32) -> int:
    """Word offset of address from base, modulo depth.

    The subtraction wraps in word_width-bit two's complement, so an
    address numerically below base still yields a stable index.
    """
    if depth < 1:
        raise ParameterError(f"memory depth must be >= 1, got {depth}")
    if address % WORD_BYTES:
        raise AlignmentError(f"address {address:#x} is not word-aligned")
    mask = (1 << word_width) - 1
    return (((address - base) & mask) // WORD_BYTES) % depth
