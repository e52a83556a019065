"""Bit-level codec: CRC-16 outer code, rate-matched convolutional FEC, QPSK.

The FEC is the memory-6 convolutional code with generators 133/171 (octal),
zero-tail terminated, followed by a fixed coprime-stride interleaver and
circular repetition out to the requested codeword length. The interleaver is
part of the code definition: it spreads the heavily structured head of the
convolutional output so that any short prefix of the transmitted codeword
behaves like independent fair coin flips (the pilot-selection readout taps
exactly such a prefix).
"""

from __future__ import annotations

import math

import numpy as np
from numba import njit

CRC16_POLY = 0x1021
CRC16_INIT = 0xFFFF
CRC16_BITS = 16

CONV_G1 = 0o133
CONV_G2 = 0o171
CONV_MEMORY = 6

LLR_CLIP = 30.0


# ---------------------------------------------------------------------------
# CRC-16 (CCITT-FALSE: poly 0x1021, init 0xFFFF, MSB-first, no final xor)
# ---------------------------------------------------------------------------

def _build_crc_table() -> np.ndarray:
    table = np.zeros(256, dtype=np.uint32)
    for byte in range(256):
        reg = byte << 8
        for _ in range(8):
            if reg & 0x8000:
                reg = ((reg << 1) ^ CRC16_POLY) & 0xFFFF
            else:
                reg = (reg << 1) & 0xFFFF
        table[byte] = reg
    return table


_CRC_TABLE = _build_crc_table()


def _crc16_bits(bits: np.ndarray) -> int:
    """CRC register after shifting in ``bits`` MSB-first."""
    reg = CRC16_INIT
    n = bits.size
    n_bytes, tail = divmod(n, 8)
    if n_bytes:
        packed = np.packbits(bits[: 8 * n_bytes].astype(np.uint8))
        for byte in packed:
            reg = ((reg << 8) & 0xFFFF) ^ int(_CRC_TABLE[((reg >> 8) ^ int(byte)) & 0xFF])
    for b in bits[8 * n_bytes :]:
        fb = ((reg >> 15) & 1) ^ int(b)
        reg = (reg << 1) & 0xFFFF
        if fb:
            reg ^= CRC16_POLY
    return reg


def crc16_attach(payload_bits: np.ndarray) -> np.ndarray:
    """Append the 16 CRC bits (MSB first) to a payload bit array."""
    bits = np.asarray(payload_bits, dtype=np.uint8)
    if bits.ndim != 1 or bits.size == 0:
        raise ValueError("payload must be a nonempty 1-D bit array")
    crc = _crc16_bits(bits)
    crc_bits = (crc >> np.arange(CRC16_BITS - 1, -1, -1)) & 1
    return np.concatenate([bits, crc_bits.astype(np.uint8)])


def crc16_check(bits_with_crc: np.ndarray) -> bool:
    """True iff the trailing 16 bits are the CRC of the leading bits."""
    bits = np.asarray(bits_with_crc, dtype=np.uint8)
    if bits.ndim != 1 or bits.size < CRC16_BITS + 1:
        raise ValueError("need at least one payload bit plus 16 CRC bits")
    # appending a correct CRC drives the register to zero (no output xor)
    return _crc16_bits(bits) == 0


# ---------------------------------------------------------------------------
# Convolutional code with stride interleaver and circular repetition
# ---------------------------------------------------------------------------

def _taps(poly: int) -> np.ndarray:
    # MSB of the 7-bit generator is the tap on the current input bit
    return np.array([(poly >> (CONV_MEMORY - k)) & 1 for k in range(CONV_MEMORY + 1)], dtype=np.uint8)


_TAPS1 = _taps(CONV_G1)
_TAPS2 = _taps(CONV_G2)


def _build_output_tables() -> tuple[np.ndarray, np.ndarray]:
    """Per-(state, input) branch symbols as +/-1 signs, state bit0 = newest."""
    sgn1 = np.zeros((64, 2))
    sgn2 = np.zeros((64, 2))
    for s in range(64):
        past = (s >> np.arange(CONV_MEMORY)) & 1
        for u in (0, 1):
            c1 = (_TAPS1[0] * u + (_TAPS1[1:] * past).sum()) & 1
            c2 = (_TAPS2[0] * u + (_TAPS2[1:] * past).sum()) & 1
            sgn1[s, u] = 1.0 - 2.0 * c1
            sgn2[s, u] = 1.0 - 2.0 * c2
    return sgn1, sgn2


_SGN1, _SGN2 = _build_output_tables()


def mother_code_length(n_info_bits: int) -> int:
    """Coded length of one zero-tail mother block for ``n_info_bits`` inputs."""
    return 2 * (n_info_bits + CONV_MEMORY)


def rate_match_interleaver(mother_len: int) -> np.ndarray:
    """Fixed stride permutation used between the encoder and repetition.

    The stride is the coprime integer nearest ``0.618 * mother_len``, so
    consecutive transmitted positions come from input windows far apart in the
    mother block.
    """
    if mother_len < 2:
        raise ValueError("mother block too short")
    target = max(1, round(0.618 * mother_len))
    stride = None
    for delta in range(mother_len):
        for cand in (target - delta, target + delta):
            if 1 <= cand < mother_len and math.gcd(cand, mother_len) == 1:
                stride = cand
                break
        if stride is not None:
            break
    return (np.arange(mother_len) * stride) % mother_len


def _conv_encode(bits: np.ndarray) -> np.ndarray:
    flushed = np.concatenate([bits, np.zeros(CONV_MEMORY, dtype=np.uint8)])
    c1 = np.convolve(flushed, _TAPS1)[: flushed.size] & 1
    c2 = np.convolve(flushed, _TAPS2)[: flushed.size] & 1
    out = np.empty(2 * flushed.size, dtype=np.uint8)
    out[0::2] = c1
    out[1::2] = c2
    return out


def fec_encode(bits_with_crc: np.ndarray, n_coded_bits: int) -> np.ndarray:
    """Encode to exactly ``n_coded_bits`` via conv code + interleave + repeat.

    Parameters
    ----------
    bits_with_crc:
        Input bit array (payload plus CRC).
    n_coded_bits:
        Target codeword length; must hold at least one mother block.
    """
    bits = np.asarray(bits_with_crc, dtype=np.uint8)
    if bits.ndim != 1 or bits.size == 0:
        raise ValueError("input must be a nonempty 1-D bit array")
    m = mother_code_length(bits.size)
    if n_coded_bits < m:
        raise ValueError(f"n_coded_bits={n_coded_bits} shorter than mother block {m}")
    interleaved = _conv_encode(bits)[rate_match_interleaver(m)]
    return interleaved[np.arange(n_coded_bits) % m]


@njit(cache=True, nogil=True)
def _viterbi(mother_llrs: np.ndarray, sgn1: np.ndarray, sgn2: np.ndarray) -> np.ndarray:
    """Max-log Viterbi over the 64-state trellis, zero start and end state."""
    n_steps = mother_llrs.shape[0] // 2
    metric = np.full(64, -1e18)
    metric[0] = 0.0
    survivor = np.zeros((n_steps, 64), dtype=np.uint8)
    scratch = np.empty(64)
    for t in range(n_steps):
        l1 = mother_llrs[2 * t]
        l2 = mother_llrs[2 * t + 1]
        for ns in range(64):
            u = ns & 1
            s0 = ns >> 1
            s1 = s0 | 32
            m0 = metric[s0] + sgn1[s0, u] * l1 + sgn2[s0, u] * l2
            m1 = metric[s1] + sgn1[s1, u] * l1 + sgn2[s1, u] * l2
            if m0 >= m1:
                scratch[ns] = m0
                survivor[t, ns] = 0
            else:
                scratch[ns] = m1
                survivor[t, ns] = 1
        for i in range(64):
            metric[i] = scratch[i]
    bits = np.zeros(n_steps, dtype=np.uint8)
    state = 0
    for t in range(n_steps - 1, -1, -1):
        bits[t] = state & 1
        state = (state >> 1) | (survivor[t, state] << 5)
    return bits


def fec_decode(llrs: np.ndarray, n_info_bits: int) -> tuple[np.ndarray, bool]:
    """Soft-decode a rate-matched codeword back to ``n_info_bits`` bits.

    Repetition copies are LLR-combined into the mother block, de-interleaved,
    and Viterbi-decoded; the returned flag is the CRC verdict over the decoded
    bits (payload plus CRC).

    Parameters
    ----------
    llrs:
        Per-bit LLRs for the transmitted codeword, positive favouring bit 0.
    n_info_bits:
        Length of the encoder input (including the CRC), at least 17.
    """
    soft = np.asarray(llrs, dtype=np.float64)
    if n_info_bits < CRC16_BITS + 1:
        raise ValueError("n_info_bits must cover payload plus CRC")
    m = mother_code_length(n_info_bits)
    if soft.ndim != 1 or soft.size < m:
        raise ValueError(f"need at least {m} LLRs, got {soft.size}")
    perm = rate_match_interleaver(m)
    acc = np.zeros(m)
    np.add.at(acc, perm[np.arange(soft.size) % m], soft)
    decoded = _viterbi(acc, _SGN1, _SGN2)[:n_info_bits]
    return decoded, crc16_check(decoded)


# ---------------------------------------------------------------------------
# QPSK
# ---------------------------------------------------------------------------

_SQRT2 = math.sqrt(2.0)


def qpsk_modulate(bits: np.ndarray) -> np.ndarray:
    """Gray-map bit pairs to unit-power QPSK: (1-2b0 + j(1-2b1)) / sqrt(2)."""
    b = np.asarray(bits, dtype=np.uint8)
    if b.ndim != 1 or b.size % 2:
        raise ValueError("bit array length must be even")
    re = 1.0 - 2.0 * b[0::2]
    im = 1.0 - 2.0 * b[1::2]
    return (re + 1j * im) / _SQRT2


def qpsk_llr(soft_symbols: np.ndarray, effective_gain: float, noise_var: float) -> np.ndarray:
    """Per-bit LLRs for QPSK symbols observed as gain * s + CN(0, noise_var).

    Positive LLR means bit 0 is more likely; outputs are clipped to +/-30.
    """
    if noise_var <= 0.0:
        raise ValueError("noise_var must be positive")
    if effective_gain <= 0.0:
        raise ValueError("effective_gain must be positive")
    y = np.asarray(soft_symbols, dtype=np.complex128)
    scale = 2.0 * _SQRT2 * effective_gain / noise_var
    llrs = np.empty(2 * y.size)
    llrs[0::2] = scale * y.real
    llrs[1::2] = scale * y.imag
    np.clip(llrs, -LLR_CLIP, LLR_CLIP, out=llrs)
    return llrs
