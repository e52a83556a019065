"""Transmit side: payload -> CRC -> codeword -> pilot selection -> symbols.

Pilot indices are not signalled: each user derives them from the first
``w * bits_per_index`` bits of its own codeword, so a receiver that decodes
the data can re-derive which pilots that user must have sent.

Data-bit scrambling is tied to the pilots. The codeword is split into w equal
segments and segment p is scrambled by a sequence seeded with the pilot index
used in block p. Everyone sharing a rate-matching map would otherwise transmit
repetition copies that carry identical interference in flat fading (the
codeword is periodic with the same period for every user), which destroys the
combining gain exactly when the receiver is interference limited. Seeding by
the pilot index keeps the receiver blind: detecting a pilot is enough to
descramble the matching segment.
"""

from __future__ import annotations

import functools
from dataclasses import dataclass

import numpy as np

from . import codec
from .pilots import PilotLayout, PilotPool, PilotSelection

_SCRAMBLE_SALT = 0x5C12A


@dataclass(frozen=True)
class ResourceConfig:
    """Per-opportunity resource budget and pilot layout."""

    layout: PilotLayout
    n_pilot_re: int = 24
    n_data_re: int = 720
    n_rx: int = 2
    pilot_boost_db: float = 0.0

    def __post_init__(self) -> None:
        if self.n_pilot_re < 1 or self.n_data_re < 1 or self.n_rx < 1:
            raise ValueError("resource counts must be positive")
        if self.layout.total_pilot_re != self.n_pilot_re:
            raise ValueError(
                f"layout spends {self.layout.total_pilot_re} pilot REs, "
                f"config allocates {self.n_pilot_re}"
            )

    @property
    def n_coded_bits(self) -> int:
        return 2 * self.n_data_re

    @property
    def pilot_amplitude(self) -> float:
        """Per-element pilot amplitude implementing the power boost."""
        return 10.0 ** (self.pilot_boost_db / 20.0)


@dataclass(frozen=True)
class UeTransmission:
    """One user's modulated opportunity: w pilot blocks plus a data block."""

    ue_id: int
    payload: np.ndarray
    codeword: np.ndarray
    selection: PilotSelection
    pilot_symbols: tuple[np.ndarray, ...]
    data_symbols: np.ndarray


def select_pilots_from_codeword(codeword: np.ndarray, layout: PilotLayout) -> PilotSelection:
    """Derive the w pilot indices from the leading codeword bits.

    Each index reads ``bits_per_index`` consecutive bits MSB-first and reduces
    them modulo the pool size.
    """
    bits = np.asarray(codeword, dtype=np.uint8)
    m = layout.bits_per_index
    need = layout.w * m
    if bits.ndim != 1 or bits.size < need:
        raise ValueError(f"codeword too short: need {need} bits, got {bits.size}")
    weights = 1 << np.arange(m - 1, -1, -1)
    vals = bits[:need].reshape(layout.w, m) @ weights
    return PilotSelection(indices=tuple(int(v) % layout.pool_size for v in vals))


def data_segment_bounds(n_symbols: int, w: int) -> tuple[tuple[int, int], ...]:
    """Split ``n_symbols`` data symbols into w contiguous, near-equal segments.

    Segment p is the part of the data block whose scrambling is keyed by the
    pilot index of block p. Returned as (start, stop) symbol ranges.
    """
    if w < 1 or n_symbols < w:
        raise ValueError("need at least one symbol per segment")
    base, extra = divmod(n_symbols, w)
    bounds = []
    start = 0
    for p in range(w):
        stop = start + base + (1 if p < extra else 0)
        bounds.append((start, stop))
        start = stop
    return tuple(bounds)


@functools.lru_cache(maxsize=512)
def scramble_bits(block: int, pilot_index: int, n_bits: int) -> np.ndarray:
    """Fixed pseudo-random bit sequence for (pilot block, pilot index).

    Cached and marked read-only; callers XOR it onto coded bits.
    """
    seq = np.random.SeedSequence([_SCRAMBLE_SALT, block, pilot_index, n_bits])
    bits = np.random.default_rng(seq).integers(0, 2, size=n_bits, dtype=np.uint8)
    bits.flags.writeable = False
    return bits


def scramble_codeword(codeword: np.ndarray, selection: PilotSelection) -> np.ndarray:
    """Apply per-segment scrambling keyed by the user's pilot indices."""
    out = np.array(codeword, dtype=np.uint8, copy=True)
    bounds = data_segment_bounds(out.size // 2, len(selection.indices))
    for p, (a, b) in enumerate(bounds):
        out[2 * a : 2 * b] ^= scramble_bits(p, selection.indices[p], 2 * (b - a))
    return out


def descramble_segment(soft: np.ndarray, block: int, pilot_index: int) -> np.ndarray:
    """Undo segment scrambling on equalized symbols.

    ``soft`` is the segment's symbol slice. Bit-level XOR at the transmitter
    is an independent sign flip on the I and Q rails, so descrambling is the
    same flip applied to the soft symbols.
    """
    soft = np.asarray(soft)
    bits = scramble_bits(block, pilot_index, 2 * soft.size)
    re_sign = 1.0 - 2.0 * bits[0::2]
    im_sign = 1.0 - 2.0 * bits[1::2]
    return re_sign * soft.real + 1j * (im_sign * soft.imag)


def build_ue_transmission(
    ue_id: int,
    payload_bits: np.ndarray,
    config: ResourceConfig,
    pool: PilotPool,
) -> UeTransmission:
    """Assemble a user's transmission from its payload bits.

    The total pilot energy is the same for every layout (``n_pilot_re`` times
    the boosted per-element power); splitting into w blocks just divides it.
    """
    payload = np.asarray(payload_bits, dtype=np.uint8)
    layout = config.layout
    if pool.length != layout.block_length:
        raise ValueError(
            f"pool length {pool.length} does not match pilot block length "
            f"{layout.block_length}"
        )
    if payload.size + codec.CRC16_BITS > config.n_coded_bits:
        raise ValueError("payload does not fit the data allocation")
    codeword = codec.fec_encode(codec.crc16_attach(payload), config.n_coded_bits)
    selection = select_pilots_from_codeword(codeword, layout)
    amp = config.pilot_amplitude
    pilot_symbols = tuple(amp * pool.sequences[i] for i in selection.indices)
    data_symbols = codec.qpsk_modulate(scramble_codeword(codeword, selection))
    return UeTransmission(
        ue_id=ue_id,
        payload=payload,
        codeword=codeword,
        selection=selection,
        pilot_symbols=pilot_symbols,
        data_symbols=data_symbols,
    )
