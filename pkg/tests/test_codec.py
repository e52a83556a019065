import binascii

import numpy as np
import pytest

from gfsim import codec


def _rand_bits(rng, n):
    return rng.integers(0, 2, n).astype(np.uint8)


def test_crc16_matches_crc_hqx():
    """The appended CRC must equal CRC-16/CCITT-FALSE of the packed payload."""
    rng = np.random.default_rng(3)
    for n in (8, 64, 160, 256):
        bits = _rand_bits(rng, n)
        out = codec.crc16_attach(bits)
        assert out.size == n + 16
        assert np.array_equal(out[:n], bits)
        got = int("".join(map(str, out[n:])), 2)
        want = binascii.crc_hqx(np.packbits(bits).tobytes(), 0xFFFF)
        assert got == want
        assert codec.crc16_check(out)


def test_crc16_rejects_any_single_bit_flip():
    rng = np.random.default_rng(4)
    word = codec.crc16_attach(_rand_bits(rng, 160))
    for pos in range(word.size):
        bad = word.copy()
        bad[pos] ^= 1
        assert not codec.crc16_check(bad), f"flip at {pos} slipped through"


def test_crc16_burst_errors_mostly_rejected():
    # 16-bit CRC: random corruption passes with prob ~2^-16
    rng = np.random.default_rng(5)
    word = codec.crc16_attach(_rand_bits(rng, 160))
    hits = 0
    for _ in range(2_000):
        bad = word.copy()
        idx = rng.choice(word.size, size=8, replace=False)
        bad[idx] ^= 1
        hits += codec.crc16_check(bad)
    assert hits <= 1


def test_mother_code_is_zero_tailed_nonrecursive():
    """Re-derive the K=7 (133,171) zero-tail encoder and compare bit for bit."""
    rng = np.random.default_rng(6)
    bits = _rand_bits(rng, 176)
    mother_len = codec.mother_code_length(176)
    assert mother_len == 2 * (176 + 6)
    coded = codec.fec_encode(bits, mother_len)
    # undo the rate-match interleaver to reach the raw encoder output
    perm = codec.rate_match_interleaver(mother_len)
    mother = np.empty(mother_len, dtype=np.uint8)
    mother[perm] = coded[:mother_len]

    # newest bit enters at the MSB of the 7-bit window, so the octal
    # generators mask the window with the most recent input on top
    window = 0
    ref = []
    for b in np.concatenate([bits, np.zeros(6, np.uint8)]):
        window = (window >> 1) | (int(b) << 6)
        ref.append(bin(window & 0o133).count("1") & 1)
        ref.append(bin(window & 0o171).count("1") & 1)
    assert np.array_equal(mother, np.array(ref, dtype=np.uint8))


def test_rate_match_is_circular_repetition():
    rng = np.random.default_rng(7)
    bits = _rand_bits(rng, 176)
    m = codec.mother_code_length(176)
    coded = codec.fec_encode(bits, 1440)
    assert coded.size == 1440
    for i in range(1440):
        assert coded[i] == coded[i % m] or i < m  # cheap identity for i >= m
    assert np.array_equal(coded[m : 2 * m], coded[:m])


def test_interleaver_is_permutation():
    for n_info in (64, 176, 200):
        m = codec.mother_code_length(n_info)
        perm = codec.rate_match_interleaver(m)
        assert np.array_equal(np.sort(perm), np.arange(m))


def test_fec_roundtrip_clean_llrs():
    # the decoder's ok flag re-runs the CRC, so the input must carry one
    rng = np.random.default_rng(8)
    for n_info in (80, 176):
        bits = codec.crc16_attach(_rand_bits(rng, n_info - 16))
        coded = codec.fec_encode(bits, 1440)
        llr = (1.0 - 2.0 * coded.astype(float)) * 12.0
        dec, ok = codec.fec_decode(llr, n_info)
        assert ok
        assert np.array_equal(dec, bits)


def test_fec_corrects_moderate_noise():
    rng = np.random.default_rng(9)
    n_info, n_coded = 176, 1440
    errors = 0
    for _ in range(30):
        bits = _rand_bits(rng, n_info)
        coded = codec.fec_encode(bits, n_coded)
        x = 1.0 - 2.0 * coded.astype(float)
        # rate ~0.25 after repetition; 0 dB Es/N0 is comfortable territory
        noisy = x + rng.normal(0.0, 1.0, n_coded)
        dec, _ = codec.fec_decode(2.0 * noisy, n_info)
        errors += not np.array_equal(dec, bits)
    assert errors == 0


def test_fec_fails_in_pure_noise():
    rng = np.random.default_rng(10)
    wrong = 0
    for _ in range(50):
        llr = rng.normal(0.0, 4.0, 1440)
        _, ok = codec.fec_decode(llr, 176)
        wrong += ok
    assert wrong == 0  # CRC gate holds at roughly 2^-16 per trial


def test_qpsk_gray_mapping_and_power():
    bits = np.array([0, 0, 0, 1, 1, 0, 1, 1], dtype=np.uint8)
    sym = codec.qpsk_modulate(bits)
    s2 = np.sqrt(2.0)
    assert np.allclose(
        sym, np.array([1 + 1j, 1 - 1j, -1 + 1j, -1 - 1j]) / s2
    )
    rng = np.random.default_rng(12)
    b = _rand_bits(rng, 600)
    s = codec.qpsk_modulate(b)
    assert np.allclose(np.abs(s) ** 2, 1.0)
    # adjacent constellation points differ in exactly one bit
    assert np.array_equal(
        codec.qpsk_modulate(np.array([0, 0], dtype=np.uint8)).real,
        codec.qpsk_modulate(np.array([0, 1], dtype=np.uint8)).real,
    )


def test_qpsk_llr_scale_sign_and_clip():
    sym = np.array([0.5 + 0.25j, -0.125 - 1.0j])
    llr = codec.qpsk_llr(sym, effective_gain=1.0, noise_var=1.0)
    scale = 2.0 * np.sqrt(2.0)
    assert llr.shape == (4,)
    assert np.allclose(llr, [scale * 0.5, scale * 0.25, -scale * 0.125, -scale * 1.0])
    # doubling the gain doubles the LLR until the clip kicks in
    assert np.allclose(codec.qpsk_llr(sym, 2.0, 1.0), 2 * llr)
    big = codec.qpsk_llr(np.array([100.0 + 100.0j]), 1.0, 1.0)
    assert np.allclose(big, [30.0, 30.0])
    zero = codec.qpsk_llr(np.zeros(3, complex), 1.0, 1e-3)
    assert np.allclose(zero, 0.0)
