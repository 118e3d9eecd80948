import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fetchguard import (DataError, FormatError, OpClass, ParameterError,
                        ProgramImage, decode, gen_mirrored, gen_overlap,
                        gen_synthetic, image_from_bytes, image_from_hex,
                        load_image, load_image_file, save_image)

rng = np.random.default_rng(99)


# --- independent encoding oracle --------------------------------------------
# Builds words field-by-field from the base ISA tables; shares nothing with
# the decoder under test.

def asm(kind, **f):
    if kind == "addi":
        return (f["imm"] & 0xFFF) << 20 | f["rs1"] << 15 | 0x0 << 12 | f["rd"] << 7 | 0x13
    if kind == "add":
        return 0x00 << 25 | f["rs2"] << 20 | f["rs1"] << 15 | 0x0 << 12 | f["rd"] << 7 | 0x33
    if kind == "sub":
        return 0x20 << 25 | f["rs2"] << 20 | f["rs1"] << 15 | 0x0 << 12 | f["rd"] << 7 | 0x33
    if kind == "lw":
        return (f["imm"] & 0xFFF) << 20 | f["rs1"] << 15 | 0x2 << 12 | f["rd"] << 7 | 0x03
    if kind == "sw":
        imm = f["imm"] & 0xFFF
        return (imm >> 5) << 25 | f["rs2"] << 20 | f["rs1"] << 15 | 0x2 << 12 | (imm & 0x1F) << 7 | 0x23
    if kind == "beq":
        imm = f["imm"] & 0x1FFF
        return ((imm >> 12) << 31 | ((imm >> 5) & 0x3F) << 25 | f["rs2"] << 20
                | f["rs1"] << 15 | 0x0 << 12 | ((imm >> 1) & 0xF) << 8
                | ((imm >> 11) & 1) << 7 | 0x63)
    if kind == "jal":
        imm = f["imm"] & 0x1FFFFF
        return ((imm >> 20) << 31 | ((imm >> 1) & 0x3FF) << 21
                | ((imm >> 11) & 1) << 20 | ((imm >> 12) & 0xFF) << 12
                | f["rd"] << 7 | 0x6F)
    if kind == "jalr":
        return (f["imm"] & 0xFFF) << 20 | f["rs1"] << 15 | f["rd"] << 7 | 0x67
    if kind == "lui":
        return (f["imm"] & 0xFFFFF) << 12 | f["rd"] << 7 | 0x37
    if kind == "auipc":
        return (f["imm"] & 0xFFFFF) << 12 | f["rd"] << 7 | 0x17
    raise AssertionError(kind)


def test_canonical_nop():
    d = decode(0x00000013)
    assert d.cls is OpClass.ALU_IMM and d.rd == 0 and d.rs1 == 0 and d.imm == 0


def test_jal_self_loop():
    d = decode(0x0000006F)
    assert d.cls is OpClass.JAL and d.imm == 0 and d.control_flow


def test_all_ones_illegal():
    assert decode(0xFFFFFFFF).cls is OpClass.ILLEGAL


@pytest.mark.parametrize("kind,cls,fields", [
    ("addi", OpClass.ALU_IMM, dict(rd=5, rs1=6, imm=-7)),
    ("addi", OpClass.ALU_IMM, dict(rd=31, rs1=0, imm=2047)),
    ("add", OpClass.ALU_REG, dict(rd=1, rs1=2, rs2=3)),
    ("sub", OpClass.ALU_REG, dict(rd=8, rs1=9, rs2=10)),
    ("lw", OpClass.LOAD, dict(rd=4, rs1=8, imm=64)),
    ("sw", OpClass.STORE, dict(rs1=8, rs2=9, imm=-12)),
    ("beq", OpClass.BRANCH, dict(rs1=8, rs2=9, imm=-4096)),
    ("beq", OpClass.BRANCH, dict(rs1=1, rs2=2, imm=4094)),
    ("jal", OpClass.JAL, dict(rd=1, imm=-1048576)),
    ("jal", OpClass.JAL, dict(rd=0, imm=2048)),
    ("jalr", OpClass.JALR, dict(rd=1, rs1=5, imm=16)),
    ("lui", OpClass.LUI, dict(rd=7, imm=0xFEDCB)),
    ("auipc", OpClass.AUIPC, dict(rd=7, imm=0x00001)),
])
def test_decode_against_encoder(kind, cls, fields):
    word = asm(kind, **fields)
    d = decode(word)
    assert d.cls is cls
    for name, value in fields.items():
        if name == "imm" and kind in ("lui", "auipc"):
            # U-type immediates come back shifted into the upper 20 bits
            expected = value << 12
            if expected >= 1 << 31:
                expected -= 1 << 32
            assert d.imm == expected
        elif name == "imm":
            assert d.imm == value
        else:
            assert getattr(d, name) == value


def test_reserved_encodings_are_illegal():
    assert decode(0x00002063).cls is OpClass.ILLEGAL   # branch funct3=2
    assert decode(0x00003003).cls is OpClass.ILLEGAL   # load funct3=3
    assert decode(0x00003023).cls is OpClass.ILLEGAL   # store funct3=3
    assert decode(0x02000033).cls is OpClass.ILLEGAL   # alu funct7=1
    assert decode(0x40001013).cls is OpClass.ILLEGAL   # slli with funct7=0x20
    assert decode(0x00001067).cls is OpClass.ILLEGAL   # jalr funct3=1


def test_system_and_fence():
    assert decode(0x00000073).cls is OpClass.SYSTEM    # ecall
    assert decode(0x00100073).cls is OpClass.SYSTEM    # ebreak
    assert decode(0x00200073).cls is OpClass.ILLEGAL   # bad funct3=0 imm
    assert decode(0x30002573).cls is OpClass.SYSTEM    # csrrs
    assert decode(0x0000000F).cls is OpClass.FENCE
    assert decode(0x0000100F).cls is OpClass.ILLEGAL   # fence.i not decoded


@given(st.integers(min_value=0, max_value=2 ** 32 - 1))
@settings(max_examples=500, deadline=None)
def test_decode_total(word):
    d = decode(word)
    assert isinstance(d.cls, OpClass)


# --- images ------------------------------------------------------------------

def test_bytes_little_endian():
    img = image_from_bytes(bytes([0x13, 0x00, 0x00, 0x00]))
    assert img.words == (0x00000013,)


def test_bytes_truncated_word():
    with pytest.raises(FormatError) as err:
        image_from_bytes(bytes(5))
    assert err.value.offset == 4


def test_hex_basic_and_comments():
    img = image_from_hex("# prog\n00000013\n0x0000006f  # jump\n\n")
    assert img.words == (0x13, 0x6F)


def test_hex_bad_line_number():
    with pytest.raises(FormatError) as err:
        image_from_hex("00000013\nnot-hex\n")
    assert err.value.line == 2


def test_load_image_dispatch():
    assert load_image(b"\x13\x00\x00\x00").words == (0x13,)
    assert load_image("00000013\n").words == (0x13,)
    with pytest.raises(ParameterError):
        load_image(12345)


def test_image_invariants():
    with pytest.raises(DataError):
        ProgramImage([])
    with pytest.raises(ParameterError):
        ProgramImage([0x13], base=2)
    with pytest.raises(ParameterError):
        ProgramImage([1 << 32])
    img = ProgramImage([0x13, 0x6F], base=0x80000000)
    assert img.address_of(1) == 0x80000004
    assert img.word_at(0x80000004) == 0x6F
    assert not img.contains(0x80000008)
    with pytest.raises(ParameterError):
        img.word_index(0x7FFFFFFC)


def test_save_load_round_trip(tmp_path):
    img = gen_synthetic(50, seed=3, base=0x400, name="fifty")
    for suffix in ("hex", "bin"):
        path = str(tmp_path / f"img.{suffix}")
        save_image(img, path)
        back = load_image_file(path)
        assert back.words == img.words
        assert back.base == img.base and back.name == img.name  # via sidecar


def test_sidecar_override(tmp_path):
    img = gen_synthetic(10, seed=1)
    path = str(tmp_path / "img.hex")
    save_image(img, path, sidecar=False)
    loaded = load_image_file(path, base=0x100, name="custom")
    assert loaded.base == 0x100 and loaded.name == "custom"


# --- synthetic generation ------------------------------------------------------

def test_gen_deterministic():
    assert gen_synthetic(216, seed=1).words == gen_synthetic(216, seed=1).words
    assert gen_synthetic(216, seed=1).words != gen_synthetic(216, seed=2).words


@pytest.mark.parametrize("maker", [gen_synthetic, gen_overlap, gen_mirrored])
@pytest.mark.parametrize("size", [1, 2, 216, 4466])
def test_generated_images_decode_legal(maker, size):
    img = maker(size, seed=7)
    assert len(img) == size
    for w in img.words:
        assert decode(w).cls is not OpClass.ILLEGAL


@pytest.mark.parametrize("size", [2, 216, 4466])
def test_control_flow_targets_inside_image(size):
    img = gen_synthetic(size, seed=11)
    for j, w in enumerate(img.words):
        d = decode(w)
        if d.cls in (OpClass.BRANCH, OpClass.JAL):
            target = img.base + 4 * j + d.imm
            assert img.base <= target < img.end
            assert target % 4 == 0


def test_gen_size_zero_rejected():
    with pytest.raises(ParameterError):
        gen_synthetic(0, seed=1)
    with pytest.raises(ParameterError):
        gen_overlap(0, seed=1)


def test_gen_custom_mix():
    img = gen_synthetic(100, seed=5, mix={OpClass.ALU_IMM: 1.0})
    assert all(decode(w).cls is OpClass.ALU_IMM for w in img.words)
    with pytest.raises(ParameterError):
        gen_synthetic(10, seed=5, mix={OpClass.ALU_IMM: 0})
    with pytest.raises(ParameterError):
        gen_synthetic(10, seed=5, mix={OpClass.ALU_IMM: -1})
    with pytest.raises(ParameterError):
        gen_synthetic(10, seed=5, mix={OpClass.ILLEGAL: 1})


def test_gen_mix_shape_roughly_respected():
    img = gen_synthetic(4466, seed=9)
    counts = {}
    for w in img.words:
        counts[decode(w).cls] = counts.get(decode(w).cls, 0) + 1
    alu = counts.get(OpClass.ALU_IMM, 0) + counts.get(OpClass.ALU_REG, 0)
    assert 0.45 < alu / 4466 < 0.65
    assert 0.10 < counts.get(OpClass.BRANCH, 0) / 4466 < 0.20


def test_overlap_upper_halves_two_valued():
    img = gen_overlap(500, seed=3)
    uppers = {w >> 16 for w in img.words}
    assert len(uppers) == 2
    a, b = sorted(uppers)
    from fetchguard import hamming_parity
    assert hamming_parity(a ^ b, 16) == 0  # variation invisible to d=16 code
