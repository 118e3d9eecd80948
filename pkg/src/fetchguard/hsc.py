"""Composite checker: an ordered set of security modules with OR-combined alarms.

The recommended preset pairs the 32-bit-chunk and 8-bit-chunk Hamming
modules; single-module presets and CRC counterparts over the same chunk
divisions exist for comparison runs.  A checker is installed once per
program image and is immutable afterwards.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from enum import Enum

from .chunking import ChunkingSpec, Coupling
from .codec import (CRC8_POLY, CRC16_POLY, CRC32_POLY, CodeKind)
from .errors import CollisionError, DataError, ModeError, ParameterError
from .hsm import (HsmSpec, Mode, SecurityModule, UnconfiguredPolicy, Verdict)
from .riscv import ProgramImage

CHECKER_MAGIC = b"FGC1"
CHECKER_VERSION = 1

# preset name -> tuple of (label, fragmentation factor, code kind)
PRESETS: dict[str, tuple] = {
    "SINGLE_HSEC32": (("HSEC32", 1, CodeKind.hsec()),),
    "SINGLE_HSEC16": (("HSEC16", 2, CodeKind.hsec()),),
    "SINGLE_HSEC8": (("HSEC8", 4, CodeKind.hsec()),),
    "PAPER_COMBINED": (("HSEC32", 1, CodeKind.hsec()),
                       ("HSEC8", 4, CodeKind.hsec())),
    "CRC32": (("CRC32", 1, CodeKind.crc(CRC32_POLY, 32)),),
    "CRC16": (("CRC16", 2, CodeKind.crc(CRC16_POLY, 16)),),
    "CRC8": (("CRC8", 4, CodeKind.crc(CRC8_POLY, 8)),),
}


class DepthPolicy(Enum):
    EXACT = "exact"  # depth = program size; every index is configured
    POW2 = "pow2"    # depth = next power of two >= program size


def resolve_depth(size: int, policy: DepthPolicy) -> int:
    if size < 1:
        raise ParameterError(f"program size must be >= 1, got {size}")
    if policy is DepthPolicy.EXACT:
        return size
    return 1 << (size - 1).bit_length()


@dataclass(frozen=True)
class HscConfig:
    members: tuple[HsmSpec, ...]
    preset: str | None = None

    def __post_init__(self):
        if not self.members:
            raise ParameterError("a checker needs at least one member module")
        widths = {m.chunking.word_width for m in self.members}
        if len(widths) != 1:
            raise ParameterError("member modules must share one word width")

    @staticmethod
    def from_preset(name: str, depth: int,
                    unconfigured: UnconfiguredPolicy = UnconfiguredPolicy.ZERO_INIT,
                    coupling: Coupling = Coupling.XOR,
                    word_width: int = 32) -> "HscConfig":
        try:
            rows = PRESETS[name]
        except KeyError:
            raise ParameterError(
                f"unknown preset {name!r}; choose from {sorted(PRESETS)}") from None
        members = tuple(
            HsmSpec(ChunkingSpec(word_width, k, coupling), code, depth,
                    unconfigured, label)
            for label, k, code in rows
        )
        return HscConfig(members, name)


@dataclass(frozen=True)
class CheckResult:
    alarm: bool
    member_verdicts: tuple[Verdict, ...]

    @property
    def alarm_members(self) -> tuple[int, ...]:
        return tuple(i for i, v in enumerate(self.member_verdicts) if v.alarm)


class Checker:
    """An installed set of security modules sharing one program base."""

    def __init__(self, modules: list[SecurityModule], preset: str | None = None):
        if not modules:
            raise ParameterError("a checker needs at least one member module")
        self.modules = list(modules)
        self.preset = preset
        self._compiled = None

    @property
    def base(self) -> int:
        return self.modules[0].base

    def check(self, event) -> CheckResult:
        """OR-combine member verdicts for one fetch.

        Accepts anything with address/instruction attributes, or an
        (address, instruction) pair.
        """
        if hasattr(event, "address"):
            address, instruction = event.address, event.instruction
        else:
            address, instruction = event
        verdicts = tuple(m.query(address, instruction) for m in self.modules)
        return CheckResult(any(v.alarm for v in verdicts), verdicts)

    def storage_bits(self) -> int:
        return sum(m.storage_bits() for m in self.modules)

    def compiled(self):
        """Array form consumed by the batch kernels; built lazily, cached."""
        if self._compiled is None:
            from ._kernels import compile_checker
            self._compiled = compile_checker(self)
        return self._compiled

    def check_batch(self, addresses, instructions):
        """Vector of per-member alarm bitmasks, one per event."""
        from ._kernels import query_members
        return query_members(self.compiled(), addresses, instructions)

    def to_bytes(self) -> bytes:
        preset = (self.preset or "").encode()
        out = bytearray(struct.pack("<4sHBB", CHECKER_MAGIC, CHECKER_VERSION,
                                    len(self.modules), len(preset)))
        out += preset
        for module in self.modules:
            blob = module.to_bytes()
            out += struct.pack("<Q", len(blob))
            out += blob
        return bytes(out)

    @classmethod
    def from_bytes(cls, buf: bytes) -> "Checker":
        head = struct.calcsize("<4sHBB")
        if len(buf) < head:
            raise ParameterError("checker snapshot truncated")
        magic, version, count, preset_len = struct.unpack("<4sHBB", buf[:head])
        if magic != CHECKER_MAGIC:
            raise ParameterError("not a checker snapshot")
        if version != CHECKER_VERSION:
            raise ParameterError(f"unsupported checker snapshot version {version}")
        pos = head
        preset = buf[pos:pos + preset_len].decode() or None
        pos += preset_len
        modules = []
        for _ in range(count):
            if len(buf) < pos + 8:
                raise ParameterError("checker snapshot truncated")
            (size,) = struct.unpack("<Q", buf[pos:pos + 8])
            pos += 8
            if len(buf) < pos + size:
                raise ParameterError("checker snapshot truncated")
            modules.append(SecurityModule.from_bytes(buf[pos:pos + size]))
            pos += size
        return cls(modules, preset)

    def save(self, path: str) -> None:
        with open(path, "wb") as fh:
            fh.write(self.to_bytes())

    @classmethod
    def load(cls, path: str) -> "Checker":
        with open(path, "rb") as fh:
            return cls.from_bytes(fh.read())


def install(image: ProgramImage, config: HscConfig) -> Checker:
    """Configure every member with every image word, then switch to query mode.

    Index collisions (possible only when a member's depth is smaller than
    the image) are tolerated and counted under the zero-init policy, but
    rejected under the valid-bit policy whose out-of-image guarantee they
    would silently weaken.
    """
    if len(image) < 1:
        raise DataError("cannot install an empty image")
    modules = []
    for spec in config.members:
        module = SecurityModule(spec, image.base)
        if module.mode is not Mode.CONFIGURE:
            raise ModeError("member module is not in configure mode")
        for j, word in enumerate(image.words):
            module.configure(image.address_of(j), word)
        if (module.collisions
                and spec.unconfigured is UnconfiguredPolicy.VALID_BIT):
            raise CollisionError(module.collisions)
        module.switch_to_query()
        modules.append(module)
    return Checker(modules, config.preset)
