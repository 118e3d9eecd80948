"""Codec tests against independent oracles.

The Hamming oracle builds an explicit codeword array from the position
rule and simulates even parity over enumerated coverage sets; the CRC
oracle does schoolbook long division over bit lists.  Neither shares code
with the implementation.
"""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fetchguard import (CheckCode, CodeFamily, CodeKind, CorrectionStatus,
                        ParameterError, crc_checkbits, hamming_correct,
                        hamming_layout, hamming_parity, hamming_parity_width,
                        hamming_syndrome)

rng = np.random.default_rng(1234)


# --- independent oracles ---------------------------------------------------

def oracle_coverage_sets(d):
    """Enumerate coverage sets straight from the position rule."""
    p = 1
    while 2 ** p < d + p + 1:
        p += 1
    data_positions = [pos for pos in range(1, d + p + 1)
                      if (pos & (pos - 1)) != 0]
    covers = []
    for j in range(p):
        covers.append({b for b, pos in enumerate(data_positions)
                       if (pos >> j) & 1})
    return p, covers


def oracle_hamming_parity(x, d):
    p, covers = oracle_coverage_sets(d)
    out = 0
    for j, cover in enumerate(covers):
        bit = 0
        for b in cover:
            bit ^= (x >> b) & 1
        out |= bit << j
    return out


def oracle_crc(data, w, poly, c):
    """Schoolbook polynomial long division over bit lists, MSB first."""
    bits = [(data >> i) & 1 for i in range(w - 1, -1, -1)] + [0] * c
    divisor = [1] + [(poly >> i) & 1 for i in range(c - 1, -1, -1)]
    for i in range(w):
        if bits[i]:
            for j, dbit in enumerate(divisor):
                bits[i + j] ^= dbit
    out = 0
    for bit in bits[w:]:
        out = (out << 1) | bit
    return out


# --- parity width ----------------------------------------------------------

@pytest.mark.parametrize("d,p", [(32, 6), (16, 5), (8, 4)])
def test_parity_width_table(d, p):
    assert hamming_parity_width(d) == p


@pytest.mark.parametrize("d", range(1, 65))
def test_parity_width_minimality(d):
    p = hamming_parity_width(d)
    assert 2 ** p >= d + p + 1
    if p > 1:
        assert 2 ** (p - 1) < d + (p - 1) + 1


@pytest.mark.parametrize("d", [0, -1, 65, 1000])
def test_parity_width_rejects_bad_width(d):
    with pytest.raises(ParameterError):
        hamming_parity_width(d)


# --- hamming parity ---------------------------------------------------------

def test_parity_zero_input():
    assert hamming_parity(0x00, 8) == 0


def test_parity_bit0_covers_p0_p1():
    # data bit 0 sits at codeword position 3 = 0b011
    assert hamming_parity(0x01, 8) == 0b0011


def test_parity_golden_ff():
    # frozen from oracle_hamming_parity(0xFF, 8)
    assert hamming_parity(0xFF, 8) == 0x3
    assert oracle_hamming_parity(0xFF, 8) == 0x3


@pytest.mark.parametrize("d", [8])
def test_parity_exhaustive_vs_oracle(d):
    for x in range(256):
        assert hamming_parity(x, d) == oracle_hamming_parity(x, d)


@pytest.mark.parametrize("d", [4, 16, 32, 64])
def test_parity_sampled_vs_oracle(d):
    for x in rng.integers(0, 2 ** d, size=200, dtype=np.uint64):
        assert hamming_parity(int(x), d) == oracle_hamming_parity(int(x), d)


@pytest.mark.parametrize("d", [8, 16, 32])
def test_single_bit_sensitivity(d):
    if d == 8:
        xs = range(256)
    else:
        xs = (int(v) for v in rng.integers(0, 2 ** d, size=10_000, dtype=np.uint64))
    for x in xs:
        base = hamming_parity(x, d)
        for b in range(d):
            assert hamming_parity(x ^ (1 << b), d) != base


def test_layout_coverage_matches_oracle():
    for d in (4, 8, 16, 32):
        layout = hamming_layout(d)
        p, covers = oracle_coverage_sets(d)
        assert layout.parity_width == p
        for j in range(p):
            assert set(layout.coverage(j)) == covers[j]
        # every data bit is covered at least once
        union = set().union(*covers)
        assert union == set(range(d))


def test_parity_width_mismatch_rejected():
    with pytest.raises(ParameterError):
        hamming_parity(0x100, 8)
    with pytest.raises(ParameterError):
        hamming_parity(-1, 8)


# --- syndrome / correction ---------------------------------------------------

def test_syndrome_round_trip_exhaustive():
    for x in range(256):
        assert hamming_syndrome(x, hamming_parity(x, 8), 8) == 0


def test_syndrome_zero_data_nonzero_parity():
    assert hamming_syndrome(0x00, 0b0001, 8) == 0b0001


def test_syndrome_nonzero_on_any_single_flip():
    for x in range(256):
        par = hamming_parity(x, 8)
        for b in range(8):
            assert hamming_syndrome(x ^ (1 << b), par, 8) != 0


def test_correct_exhaustive_single_bit():
    for x in range(256):
        par = hamming_parity(x, 8)
        for b in range(8):
            res = hamming_correct(x ^ (1 << b), par, 8)
            assert res.status is CorrectionStatus.CORRECTED
            assert res.data == x
            assert res.bit == b


@pytest.mark.parametrize("d", [16, 32])
def test_correct_sampled_single_bit(d):
    for v in rng.integers(0, 2 ** d, size=500, dtype=np.uint64):
        x = int(v)
        par = hamming_parity(x, d)
        for b in range(d):
            res = hamming_correct(x ^ (1 << b), par, d)
            assert res.status is CorrectionStatus.CORRECTED and res.data == x


def test_correct_clean_passthrough():
    for x in (0, 1, 0x5A, 0xFF):
        res = hamming_correct(x, hamming_parity(x, 8), 8)
        assert res.status is CorrectionStatus.CLEAN and res.data == x


def test_correct_parity_bit_error_flagged():
    x = 0x3C
    par = hamming_parity(x, 8)
    res = hamming_correct(x, par ^ 0b0001, 8)  # syndrome 1 = parity position 1
    assert res.status is CorrectionStatus.PARITY_BIT_ERROR
    assert res.data == x


def test_double_error_not_silently_ok():
    # SEC only: two flipped bits must come back wrong or flagged, never as
    # a clean verdict on the corrupted word.
    x = 0xA5
    par = hamming_parity(x, 8)
    for b1 in range(8):
        for b2 in range(b1 + 1, 8):
            corrupted = x ^ (1 << b1) ^ (1 << b2)
            res = hamming_correct(corrupted, par, 8)
            assert not (res.status is CorrectionStatus.CLEAN
                        and res.data == corrupted == x)
            assert res.status is not CorrectionStatus.CLEAN


# --- CRC ---------------------------------------------------------------------

def test_crc_zero_data():
    assert crc_checkbits(0, 8, 0x07, 8) == 0
    assert crc_checkbits(0, 32, 0x04C11DB7, 32) == 0


def test_crc_one_bit_matches_oracle():
    assert crc_checkbits(1, 8, 0x07, 8) == oracle_crc(1, 8, 0x07, 8) == 0x07


def test_crc8_exhaustive_vs_oracle():
    for x in range(256):
        assert crc_checkbits(x, 8, 0x07, 8) == oracle_crc(x, 8, 0x07, 8)


@pytest.mark.parametrize("w,poly,c", [(16, 0x1021, 16), (32, 0x04C11DB7, 32),
                                      (12, 0x80F, 12), (8, 0x07, 8)])
def test_crc_sampled_vs_oracle(w, poly, c):
    for v in rng.integers(0, 2 ** w, size=300, dtype=np.uint64):
        assert crc_checkbits(int(v), w, poly, c) == oracle_crc(int(v), w, poly, c)


def test_crc_single_bit_sensitivity_exhaustive():
    for x in range(256):
        base = crc_checkbits(x, 8, 0x07, 8)
        for b in range(8):
            assert crc_checkbits(x ^ (1 << b), 8, 0x07, 8) != base


def test_crc_rejects_bad_polynomials():
    with pytest.raises(ParameterError):
        crc_checkbits(1, 8, 0, 8)
    with pytest.raises(ParameterError):
        crc_checkbits(1, 8, 0x06, 8)  # even constant term
    with pytest.raises(ParameterError):
        crc_checkbits(1, 8, 0x107, 8)  # wider than c


# --- unified CheckCode -------------------------------------------------------

@pytest.mark.parametrize("d", [4, 8, 16, 32, 64])
def test_checkcode_hsec_matches_scalar(d):
    code = CheckCode(CodeKind.hsec(), d)
    for v in rng.integers(0, 2 ** min(d, 63), size=300, dtype=np.uint64):
        assert code.checkbits(int(v)) == hamming_parity(int(v), d)


@pytest.mark.parametrize("w,poly", [(8, 0x07), (16, 0x1021), (32, 0x04C11DB7)])
def test_checkcode_crc_matches_scalar(w, poly):
    code = CheckCode(CodeKind.crc(poly, w), w)
    for v in rng.integers(0, 2 ** w, size=300, dtype=np.uint64):
        assert code.checkbits(int(v)) == crc_checkbits(int(v), w, poly, w)


@pytest.mark.parametrize("d", [8, 16, 32, 64])
def test_byte_tables_match_columns(d):
    code = CheckCode(CodeKind.hsec(), d)
    vals = rng.integers(0, 2 ** min(d, 63), size=1000, dtype=np.uint64)
    folded = np.zeros_like(vals)
    tmp = vals.copy()
    for b in range((d + 7) // 8):
        folded ^= code.byte_tables[b][(tmp & np.uint64(0xFF)).astype(np.intp)]
        tmp >>= np.uint64(8)
    for v, f in zip(vals, folded):
        assert code.checkbits(int(v)) == int(f)


@given(st.integers(min_value=0, max_value=2 ** 32 - 1))
@settings(max_examples=200, deadline=None)
def test_parity_deterministic(x):
    assert hamming_parity(x, 32) == hamming_parity(x, 32)
    assert crc_checkbits(x, 32, 0x04C11DB7, 32) == crc_checkbits(x, 32, 0x04C11DB7, 32)


def test_codekind_validation():
    with pytest.raises(ParameterError):
        CodeKind.crc(0, 8)
    with pytest.raises(ParameterError):
        CodeKind(CodeFamily.CRC)  # missing polynomial
    with pytest.raises(ParameterError):
        CodeKind(CodeFamily.HSEC, poly=0x07, check_width=8)
