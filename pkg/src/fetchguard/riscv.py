"""RV32I decoding, program-image I/O, and synthetic benchmark generation.

Only the 32-bit base ISA is handled.  Decoding is total: every 32-bit
word maps to exactly one class, with ILLEGAL as the catch-all.  CSR
encodings under the SYSTEM opcode are classified as SYSTEM since real
firmware contains them and the trace walker treats them as redirects.
"""

from __future__ import annotations

import functools
import os
from dataclasses import dataclass
from enum import Enum

import numpy as np

from .codec import hamming_parity
from .errors import DataError, FormatError, ParameterError
from .rng import Stream

WORD_MASK = 0xFFFFFFFF


class OpClass(Enum):
    ALU_REG = "alu_reg"
    ALU_IMM = "alu_imm"
    LOAD = "load"
    STORE = "store"
    BRANCH = "branch"
    JAL = "jal"
    JALR = "jalr"
    LUI = "lui"
    AUIPC = "auipc"
    SYSTEM = "system"
    FENCE = "fence"
    ILLEGAL = "illegal"


@dataclass(frozen=True)
class DecodedInstr:
    cls: OpClass
    rd: int = 0
    rs1: int = 0
    rs2: int = 0
    imm: int = 0

    @property
    def control_flow(self) -> bool:
        return self.cls in (OpClass.BRANCH, OpClass.JAL, OpClass.JALR)


def _sign_extend(value: int, bits: int) -> int:
    sign = 1 << (bits - 1)
    return (value & (sign - 1)) - (value & sign)


def _imm_i(w: int) -> int:
    return _sign_extend(w >> 20, 12)


def _imm_s(w: int) -> int:
    return _sign_extend(((w >> 25) << 5) | ((w >> 7) & 0x1F), 12)


def _imm_b(w: int) -> int:
    v = ((((w >> 31) & 0x1) << 12) | (((w >> 7) & 0x1) << 11)
         | (((w >> 25) & 0x3F) << 5) | (((w >> 8) & 0xF) << 1))
    return _sign_extend(v, 13)


def _imm_u(w: int) -> int:
    return _sign_extend(w & 0xFFFF_F000, 32)


def _imm_j(w: int) -> int:
    v = ((((w >> 31) & 0x1) << 20) | (((w >> 12) & 0xFF) << 12)
         | (((w >> 20) & 0x1) << 11) | (((w >> 21) & 0x3FF) << 1))
    return _sign_extend(v, 21)


def decode(word: int) -> DecodedInstr:
    """Classify a 32-bit instruction word; never raises."""
    w = word & WORD_MASK
    opcode = w & 0x7F
    rd = (w >> 7) & 0x1F
    funct3 = (w >> 12) & 0x7
    rs1 = (w >> 15) & 0x1F
    rs2 = (w >> 20) & 0x1F
    funct7 = (w >> 25) & 0x7F

    if opcode == 0x37:
        return DecodedInstr(OpClass.LUI, rd=rd, imm=_imm_u(w))
    if opcode == 0x17:
        return DecodedInstr(OpClass.AUIPC, rd=rd, imm=_imm_u(w))
    if opcode == 0x6F:
        return DecodedInstr(OpClass.JAL, rd=rd, imm=_imm_j(w))
    if opcode == 0x67:
        if funct3 == 0:
            return DecodedInstr(OpClass.JALR, rd=rd, rs1=rs1, imm=_imm_i(w))
        return DecodedInstr(OpClass.ILLEGAL)
    if opcode == 0x63:
        if funct3 in (0, 1, 4, 5, 6, 7):
            return DecodedInstr(OpClass.BRANCH, rs1=rs1, rs2=rs2, imm=_imm_b(w))
        return DecodedInstr(OpClass.ILLEGAL)
    if opcode == 0x03:
        if funct3 in (0, 1, 2, 4, 5):
            return DecodedInstr(OpClass.LOAD, rd=rd, rs1=rs1, imm=_imm_i(w))
        return DecodedInstr(OpClass.ILLEGAL)
    if opcode == 0x23:
        if funct3 in (0, 1, 2):
            return DecodedInstr(OpClass.STORE, rs1=rs1, rs2=rs2, imm=_imm_s(w))
        return DecodedInstr(OpClass.ILLEGAL)
    if opcode == 0x13:
        if funct3 == 1 and funct7 != 0:
            return DecodedInstr(OpClass.ILLEGAL)
        if funct3 == 5 and funct7 not in (0x00, 0x20):
            return DecodedInstr(OpClass.ILLEGAL)
        return DecodedInstr(OpClass.ALU_IMM, rd=rd, rs1=rs1, imm=_imm_i(w))
    if opcode == 0x33:
        if funct7 == 0x00 or (funct7 == 0x20 and funct3 in (0, 5)):
            return DecodedInstr(OpClass.ALU_REG, rd=rd, rs1=rs1, rs2=rs2)
        return DecodedInstr(OpClass.ILLEGAL)
    if opcode == 0x0F:
        if funct3 == 0:
            return DecodedInstr(OpClass.FENCE, rd=rd, rs1=rs1, imm=_imm_i(w))
        return DecodedInstr(OpClass.ILLEGAL)
    if opcode == 0x73:
        if funct3 == 0:
            if w in (0x00000073, 0x00100073):  # ecall / ebreak
                return DecodedInstr(OpClass.SYSTEM, imm=(w >> 20) & 1)
            return DecodedInstr(OpClass.ILLEGAL)
        if funct3 in (1, 2, 3, 5, 6, 7):  # csr group
            return DecodedInstr(OpClass.SYSTEM, rd=rd, rs1=rs1, imm=(w >> 20) & 0xFFF)
        return DecodedInstr(OpClass.ILLEGAL)
    return DecodedInstr(OpClass.ILLEGAL)


class ProgramImage:
    """An installed program: base address plus ordered 32-bit words."""

    def __init__(self, words, base: int = 0, name: str = "image"):
        words = tuple(int(w) for w in words)
        if not words:
            raise DataError("a program image needs at least one instruction")
        if base % 4:
            raise ParameterError(f"base address {base:#x} is not word-aligned")
        if not 0 <= base <= WORD_MASK:
            raise ParameterError(f"base address {base:#x} is not a 32-bit word")
        for j, w in enumerate(words):
            if not 0 <= w <= WORD_MASK:
                raise ParameterError(f"word {j} ({w:#x}) is not a 32-bit value")
        if base + 4 * len(words) > WORD_MASK + 1:
            raise ParameterError("image runs past the end of the address space")
        self.words = words
        self.base = base
        self.name = name
        arr = np.array(words, dtype=np.uint64)
        arr.setflags(write=False)
        self.words_u64 = arr

    def __len__(self) -> int:
        return len(self.words)

    def __eq__(self, other) -> bool:
        return (isinstance(other, ProgramImage) and self.words == other.words
                and self.base == other.base and self.name == other.name)

    def __repr__(self):
        return f"ProgramImage({self.name!r}, base={self.base:#x}, words={len(self)})"

    @property
    def end(self) -> int:
        return self.base + 4 * len(self.words)

    def address_of(self, index: int) -> int:
        return self.base + 4 * index

    def contains(self, address: int) -> bool:
        return self.base <= address < self.end

    def word_index(self, address: int) -> int:
        if not self.contains(address) or address % 4:
            raise ParameterError(f"address {address:#x} is not an image word address")
        return (address - self.base) // 4

    def word_at(self, address: int) -> int:
        return self.words[self.word_index(address)]


def image_from_bytes(data: bytes, base: int = 0, name: str = "image") -> ProgramImage:
    """Assemble little-endian 32-bit words from a flat binary."""
    if len(data) % 4:
        raise FormatError("binary image has a truncated word",
                          offset=len(data) - len(data) % 4)
    if not data:
        raise DataError("binary image is empty")
    words = [int.from_bytes(data[i:i + 4], "little") for i in range(0, len(data), 4)]
    return ProgramImage(words, base, name)


def image_from_hex(text: str, base: int = 0, name: str = "image") -> ProgramImage:
    """Parse hex text: one 8-digit word per line, '#' starts a comment."""
    words = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        body = line[2:] if line.lower().startswith("0x") else line
        if len(body) != 8 or any(c not in "0123456789abcdefABCDEF" for c in body):
            raise FormatError(f"expected one 8-hex-digit word, got {line!r}",
                              line=lineno)
        words.append(int(body, 16))
    if not words:
        raise DataError("hex image contains no words")
    return ProgramImage(words, base, name)


def load_image(source, base: int = 0, name: str = "image") -> ProgramImage:
    """Dispatch on the payload type: bytes are binary, str is hex text."""
    if isinstance(source, (bytes, bytearray)):
        return image_from_bytes(bytes(source), base, name)
    if isinstance(source, str):
        return image_from_hex(source, base, name)
    raise ParameterError(f"cannot load an image from {type(source).__name__}")


def _read_sidecar(path: str) -> dict:
    meta = {}
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise FormatError(f"sidecar line is not key=value: {line!r}",
                                  line=lineno)
            key, value = line.split("=", 1)
            meta[key.strip()] = value.strip()
    return meta


def load_image_file(path: str, base: int | None = None,
                    name: str | None = None) -> ProgramImage:
    """Load .bin or .hex, honoring an optional key=value sidecar at path + '.meta'."""
    meta = {}
    sidecar = path + ".meta"
    if os.path.exists(sidecar):
        meta = _read_sidecar(sidecar)
    if base is None:
        base = int(meta.get("base", "0"), 0)
    if name is None:
        name = meta.get("name", os.path.splitext(os.path.basename(path))[0])
    if path.endswith(".bin"):
        with open(path, "rb") as fh:
            return image_from_bytes(fh.read(), base, name)
    with open(path, "r", encoding="utf-8") as fh:
        return image_from_hex(fh.read(), base, name)


def save_image(image: ProgramImage, path: str, sidecar: bool = True) -> None:
    """Write .bin (little-endian) or hex text, plus a metadata sidecar."""
    if path.endswith(".bin"):
        with open(path, "wb") as fh:
            for w in image.words:
                fh.write(w.to_bytes(4, "little"))
    else:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(f"# {image.name}: {len(image)} words\n")
            for w in image.words:
                fh.write(f"{w:08x}\n")
    if sidecar:
        with open(path + ".meta", "w", encoding="utf-8") as fh:
            fh.write(f"name={image.name}\nbase={image.base:#x}\n")


# -- synthetic benchmark generation --------------------------------------

# Field pools are deliberately clustered: real RV32 code keeps most traffic
# in a handful of registers and small immediates, which leaves the upper
# halfword of an instruction with little entropy.  Pool lengths are powers
# of two so modulo draws stay unbiased.
_REG_POOL = (8, 9, 10, 11, 12, 13, 14, 15, 10, 11, 12, 13, 2, 5, 6, 7)
_ALU_IMM_F3 = (0, 0, 0, 0, 7, 6, 4, 2)
_ALU_REG_F3 = (0, 0, 0, 4, 6, 7, 1, 5)
_LOAD_F3 = (2, 2, 2, 2, 0, 1, 4, 5)
_STORE_F3 = (2, 2, 2, 2, 2, 2, 0, 1)
_BRANCH_F3 = (0, 1, 4, 5, 6, 7, 0, 1)
_UPPER_POOL = (0x10, 0x11, 0x12, 0x13, 0x20, 0x21, 0x1000, 0x1001)

DEFAULT_MIX = {
    OpClass.ALU_IMM: 30,
    OpClass.ALU_REG: 25,
    OpClass.LOAD: 12,
    OpClass.STORE: 8,
    OpClass.BRANCH: 15,
    OpClass.JAL: 5,
    OpClass.LUI: 3,
    OpClass.AUIPC: 2,
}

_GENERATABLE = tuple(DEFAULT_MIX)


def _enc_r(funct7, rs2, rs1, funct3, rd, opcode):
    return (funct7 << 25) | (rs2 << 20) | (rs1 << 15) | (funct3 << 12) | (rd << 7) | opcode


def _enc_i(imm, rs1, funct3, rd, opcode):
    return ((imm & 0xFFF) << 20) | (rs1 << 15) | (funct3 << 12) | (rd << 7) | opcode


def _enc_s(imm, rs2, rs1, funct3, opcode):
    imm &= 0xFFF
    return (((imm >> 5) & 0x7F) << 25) | (rs2 << 20) | (rs1 << 15) \
        | (funct3 << 12) | ((imm & 0x1F) << 7) | opcode


def _enc_b(offset, rs2, rs1, funct3):
    imm = offset & 0x1FFF
    return ((((imm >> 12) & 0x1) << 31) | (((imm >> 5) & 0x3F) << 25)
            | (rs2 << 20) | (rs1 << 15) | (funct3 << 12)
            | (((imm >> 1) & 0xF) << 8) | (((imm >> 11) & 0x1) << 7) | 0x63)


def _enc_j(offset, rd):
    imm = offset & 0x1FFFFF
    return ((((imm >> 20) & 0x1) << 31) | (((imm >> 1) & 0x3FF) << 21)
            | (((imm >> 11) & 0x1) << 20) | (((imm >> 12) & 0xFF) << 12)
            | (rd << 7) | 0x6F)


def _pick_target(stream: Stream, j: int, size: int, window: int) -> int | None:
    lo = max(0, j - window)
    hi = min(size - 1, j + window - 1)
    if hi - lo < 1:
        return None
    t = lo + stream.below(hi - lo)  # hi - lo choices, skipping j below
    if t >= j:
        t += 1
    return min(t, size - 1)


def gen_synthetic(size: int, seed: int, mix: dict | None = None,
                  base: int = 0, name: str | None = None) -> ProgramImage:
    """Deterministic synthetic RV32I program of the requested size.

    Control-flow targets always land inside the image and every emitted
    word decodes to a non-ILLEGAL class.
    """
    if size < 1:
        raise ParameterError(f"image size must be >= 1, got {size}")
    weights = dict(DEFAULT_MIX)
    if mix:
        weights = {}
        for key, value in mix.items():
            cls = key if isinstance(key, OpClass) else OpClass(str(key).lower())
            if cls not in _GENERATABLE:
                raise ParameterError(f"cannot generate instruction class {cls}")
            if value < 0:
                raise ParameterError("mix weights must be non-negative")
            weights[cls] = value
    scaled = {cls: int(round(w * 1000)) for cls, w in weights.items() if w > 0}
    total = sum(scaled.values())
    if total == 0:
        raise ParameterError("mix weights must not all be zero")

    stream = Stream(seed)
    words = []
    for j in range(size):
        pick = stream.below(total)
        for cls, w in scaled.items():
            if pick < w:
                break
            pick -= w
        rd = stream.choice(_REG_POOL)
        rs1 = stream.choice(_REG_POOL)
        rs2 = stream.choice(_REG_POOL)
        if cls in (OpClass.BRANCH, OpClass.JAL):
            window = 1024 if cls is OpClass.BRANCH else min(size, 1 << 17)
            target = _pick_target(stream, j, size, window)
            if target is None:
                cls = OpClass.ALU_IMM
        if cls is OpClass.ALU_IMM:
            words.append(_enc_i(stream.below(64), rs1, stream.choice(_ALU_IMM_F3),
                                rd, 0x13))
        elif cls is OpClass.ALU_REG:
            funct3 = stream.choice(_ALU_REG_F3)
            funct7 = 0
            if funct3 in (0, 5) and stream.below(2):
                funct7 = 0x20
            words.append(_enc_r(funct7, rs2, rs1, funct3, rd, 0x33))
        elif cls is OpClass.LOAD:
            words.append(_enc_i(4 * stream.below(32), rs1, stream.choice(_LOAD_F3),
                                rd, 0x03))
        elif cls is OpClass.STORE:
            words.append(_enc_s(4 * stream.below(32), rs2, rs1,
                                stream.choice(_STORE_F3), 0x23))
        elif cls is OpClass.BRANCH:
            words.append(_enc_b(4 * (target - j), rs2, rs1,
                                stream.choice(_BRANCH_F3)))
        elif cls is OpClass.JAL:
            words.append(_enc_j(4 * (target - j), stream.choice((0, 0, 0, 1))))
        elif cls is OpClass.LUI:
            words.append((stream.choice(_UPPER_POOL) << 12) | (rd << 7) | 0x37)
        else:  # AUIPC
            words.append((stream.choice(_UPPER_POOL) << 12) | (rd << 7) | 0x17)
    return ProgramImage(words, base, name or f"synth-{size}-s{seed}")


@functools.lru_cache(maxsize=None)
def _blind_upper_mask() -> int:
    """Smallest upper-halfword variation the halfword code cannot see.

    Searches for a 16-bit pattern whose halfword parity footprint is zero
    while its footprint in the top parity bit of the 32-bit code is odd.
    Code clustered this way defeats halfword-chunk checkers without
    weakening full-word ones.
    """
    for m in range(1, 1 << 16):
        if hamming_parity(m, 16) == 0 and (m >> 10).bit_count() & 1:
            return m
    raise AssertionError("no halfword-blind variation pattern exists")


def gen_overlap(size: int, seed: int, base: int = 0,
                name: str | None = None) -> ProgramImage:
    """Stress corpus with a constant-looking, low-entropy upper halfword.

    Emits ADDI words whose lower halfword carries the entropy (register
    fields) while the upper halfword only toggles between two values that
    differ by the halfword-blind pattern of _blind_upper_mask().  A
    halfword-chunk checker's upper bank is blind on this corpus, so its
    miss rate collapses to the lower bank's alone; a full-word checker
    still sees the upper variation.
    """
    if size < 1:
        raise ParameterError(f"image size must be >= 1, got {size}")
    mask = _blind_upper_mask()
    stream = Stream(seed)
    words = []
    for _ in range(size):
        lower = 0x13 | (stream.below(32) << 7) | (stream.below(2) << 15)
        upper = 0x0004 ^ (mask if stream.below(2) else 0)
        words.append((upper << 16) | lower)
    return ProgramImage(words, base, name or f"overlap-{size}-s{seed}")


def gen_mirrored(size: int, seed: int, base: int = 0,
                 name: str | None = None) -> ProgramImage:
    """Stress corpus whose upper instruction halfword mirrors the lower one.

    Every word is an ADDI whose upper half equals its lower half, so the
    two halfword chunks of any pair of words overlap completely.  Checkers
    that slice words into halfword chunks see fully correlated chunk
    content on this corpus, which is the worst case for their combined
    check-bit entropy; full-word chunks keep more of it.
    """
    if size < 1:
        raise ParameterError(f"image size must be >= 1, got {size}")
    stream = Stream(seed)
    words = []
    for _ in range(size):
        low = 0x13 | (stream.below(32) << 7) | (stream.below(2) << 15)
        words.append((low << 16) | low)
    return ProgramImage(words, base, name or f"mirror-{size}-s{seed}")
