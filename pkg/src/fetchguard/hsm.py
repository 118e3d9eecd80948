"""One security module: k check-bit shadow memories plus a configure/query state machine.

During configuration the module stores, for every installed (address,
instruction) pair, the check bits of each coupled chunk at the pair's
memory index.  After the one-way switch to query mode it recomputes the
check bits of whatever pair it is shown and raises an alarm on any
mismatch; queries never mutate the memories.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from enum import Enum

import numpy as np

from .chunking import ChunkingSpec, Coupling, make_chunks, memory_index
from .codec import CheckCode, CodeFamily, CodeKind
from .errors import ModeError, ParameterError

SNAPSHOT_MAGIC = b"FGM1"
SNAPSHOT_VERSION = 1


class UnconfiguredPolicy(Enum):
    ZERO_INIT = "zero_init"    # entries start at zero, no valid bit
    VALID_BIT = "valid_bit"    # querying an unwritten entry raises an alarm


class Mode(Enum):
    CONFIGURE = "configure"
    QUERY = "query"


class VerdictReason(Enum):
    MATCH = "match"
    PARITY_MISMATCH = "parity_mismatch"
    UNCONFIGURED_ENTRY = "unconfigured_entry"


@dataclass(frozen=True)
class Verdict:
    alarm: bool
    bank_mismatch: tuple[bool, ...]
    reason: VerdictReason


@dataclass(frozen=True)
class HsmSpec:
    chunking: ChunkingSpec
    code: CodeKind
    depth: int
    unconfigured: UnconfiguredPolicy = UnconfiguredPolicy.ZERO_INIT
    label: str = ""

    def __post_init__(self):
        if self.depth < 1:
            raise ParameterError(f"memory depth must be >= 1, got {self.depth}")
        # Constructing the code validates CRC parameters against the chunk width.
        CheckCode(self.code, self.chunking.codec_width)

    @property
    def entry_bits(self) -> int:
        return CheckCode(self.code, self.chunking.codec_width).check_width


class SecurityModule:
    """State machine over k shadow memories of check bits."""

    def __init__(self, spec: HsmSpec, base: int = 0):
        if base % 4:
            raise ParameterError(f"base address {base:#x} is not word-aligned")
        if not 0 <= base <= spec.chunking.word_mask:
            raise ParameterError(f"base address {base:#x} wider than the word width")
        self.spec = spec
        self.base = base
        self.code = CheckCode(spec.code, spec.chunking.codec_width)
        self._banks = np.zeros((spec.chunking.k, spec.depth), dtype=np.uint64)
        self._written = np.zeros(spec.depth, dtype=bool)
        self._mode = Mode.CONFIGURE
        self.collisions = 0

    @property
    def mode(self) -> Mode:
        return self._mode

    @property
    def label(self) -> str:
        return self.spec.label or self.code.provenance

    def _index(self, address: int) -> int:
        return memory_index(address, self.base, self.spec.depth,
                            self.spec.chunking.word_width)

    def configure(self, address: int, instruction: int) -> None:
        """Store the check bits of one program word; last write wins."""
        if self._mode is not Mode.CONFIGURE:
            raise ModeError("configure() called after the switch to query mode")
        idx = self._index(address)
        for i, chunk in enumerate(make_chunks(address, instruction, self.spec.chunking)):
            self._banks[i, idx] = self.code.checkbits(chunk)
        if self._written[idx]:
            self.collisions += 1
        self._written[idx] = True

    def switch_to_query(self) -> None:
        """One-way transition; idempotent."""
        self._mode = Mode.QUERY

    def reset(self) -> None:
        """Clear the memories and return to configure mode."""
        self._banks.fill(0)
        self._written.fill(False)
        self.collisions = 0
        self._mode = Mode.CONFIGURE

    def query(self, address: int, instruction: int) -> Verdict:
        """Recompute check bits and compare against the stored entry."""
        if self._mode is not Mode.QUERY:
            raise ModeError("query() called before the switch to query mode")
        idx = self._index(address)
        if (self.spec.unconfigured is UnconfiguredPolicy.VALID_BIT
                and not self._written[idx]):
            return Verdict(True, (False,) * self.spec.chunking.k,
                           VerdictReason.UNCONFIGURED_ENTRY)
        mismatch = tuple(
            int(self._banks[i, idx]) != self.code.checkbits(chunk)
            for i, chunk in enumerate(make_chunks(address, instruction,
                                                  self.spec.chunking))
        )
        if any(mismatch):
            return Verdict(True, mismatch, VerdictReason.PARITY_MISMATCH)
        return Verdict(False, mismatch, VerdictReason.MATCH)

    def storage_bits(self) -> int:
        """Total shadow-memory footprint in bits."""
        per_entry = self.code.check_width
        if self.spec.unconfigured is UnconfiguredPolicy.VALID_BIT:
            per_entry += 1
        return self.spec.chunking.k * self.spec.depth * per_entry

    # -- flat binary snapshots -------------------------------------------

    def to_bytes(self) -> bytes:
        """Serialize: versioned header, banks in order, entries LSB-first."""
        spec = self.spec
        label = spec.label.encode()
        head = struct.pack(
            "<4sHBBBBBBBBQIQQH",
            SNAPSHOT_MAGIC, SNAPSHOT_VERSION,
            spec.chunking.word_width, spec.chunking.k,
            0 if spec.chunking.coupling is Coupling.XOR else 1,
            0 if spec.code.family is CodeFamily.HSEC else 1,
            self.code.check_width,
            0 if spec.unconfigured is UnconfiguredPolicy.ZERO_INIT else 1,
            0 if self._mode is Mode.CONFIGURE else 1,
            len(label),
            spec.code.poly or 0,
            spec.depth, self.base, self.collisions,
            0,  # reserved
        )
        entry_bytes = (self.code.check_width + 7) // 8
        out = bytearray(head + label)
        for bank in self._banks:
            for value in bank:
                out += int(value).to_bytes(entry_bytes, "little")
        out += np.packbits(self._written, bitorder="little").tobytes()
        return bytes(out)

    @classmethod
    def from_bytes(cls, buf: bytes) -> "SecurityModule":
        head_size = struct.calcsize("<4sHBBBBBBBBQIQQH")
        if len(buf) < head_size:
            raise ParameterError("snapshot truncated")
        (magic, version, word_width, k, coupling, family, check_width,
         policy, mode, label_len, poly, depth, base, collisions,
         _reserved) = struct.unpack("<4sHBBBBBBBBQIQQH", buf[:head_size])
        if magic != SNAPSHOT_MAGIC:
            raise ParameterError("not a security-module snapshot")
        if version != SNAPSHOT_VERSION:
            raise ParameterError(f"unsupported snapshot version {version}")
        pos = head_size
        label = buf[pos:pos + label_len].decode()
        pos += label_len
        chunking = ChunkingSpec(word_width, k,
                                Coupling.XOR if coupling == 0 else Coupling.CONCAT)
        if family == 0:
            code = CodeKind.hsec()
        else:
            code = CodeKind.crc(poly, check_width)
        spec = HsmSpec(chunking, code, depth,
                       UnconfiguredPolicy.ZERO_INIT if policy == 0
                       else UnconfiguredPolicy.VALID_BIT,
                       label)
        module = cls(spec, base)
        entry_bytes = (check_width + 7) // 8
        need = k * depth * entry_bytes + (depth + 7) // 8
        if len(buf) - pos != need:
            raise ParameterError("snapshot body has the wrong size")
        for i in range(k):
            for j in range(depth):
                module._banks[i, j] = int.from_bytes(buf[pos:pos + entry_bytes],
                                                     "little")
                pos += entry_bytes
        bits = np.unpackbits(np.frombuffer(buf[pos:], dtype=np.uint8),
                             bitorder="little")[:depth]
        module._written[:] = bits.astype(bool)
        module.collisions = collisions
        module._mode = Mode.CONFIGURE if mode == 0 else Mode.QUERY
        return module
