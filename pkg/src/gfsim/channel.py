"""Rayleigh block-fading channel and received-grid superposition."""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from .tx import ResourceConfig, UeTransmission


class ChannelMode(enum.Enum):
    # one gain per user/antenna, shared by every block of the opportunity
    FLAT = "flat"
    # independent gain per user/antenna/block
    PER_BLOCK = "per_block"


@dataclass(frozen=True)
class ChannelRealization:
    """Complex gains with shape (n_ue, n_blocks, n_rx); blocks 0..w-1 are the
    pilot blocks, block w is the data block."""

    mode: ChannelMode
    gains: np.ndarray


@dataclass
class RxGrid:
    """Received opportunity: per-block antenna samples plus the noise power."""

    pilot_blocks: list[np.ndarray]  # each (block_length, n_rx)
    data_block: np.ndarray  # (n_data_re, n_rx)
    noise_var: float

    def copy(self) -> "RxGrid":
        return RxGrid(
            pilot_blocks=[b.copy() for b in self.pilot_blocks],
            data_block=self.data_block.copy(),
            noise_var=self.noise_var,
        )

    @property
    def total_energy(self) -> float:
        e = float(np.sum(np.abs(self.data_block) ** 2))
        for b in self.pilot_blocks:
            e += float(np.sum(np.abs(b) ** 2))
        return e


def _cn(rng: np.random.Generator, var: float, shape: tuple[int, ...]) -> np.ndarray:
    sigma = np.sqrt(var / 2.0)
    return rng.normal(0.0, sigma, shape) + 1j * rng.normal(0.0, sigma, shape)


def draw_channel(
    n_ue: int,
    config: ResourceConfig,
    mode: ChannelMode,
    rng: np.random.Generator,
) -> ChannelRealization:
    """Draw i.i.d. CN(0,1) gains per user and antenna (per block if PER_BLOCK)."""
    if n_ue < 0:
        raise ValueError("n_ue must be nonnegative")
    n_blocks = config.layout.w + 1
    if mode is ChannelMode.FLAT:
        flat = _cn(rng, 1.0, (n_ue, 1, config.n_rx))
        gains = np.broadcast_to(flat, (n_ue, n_blocks, config.n_rx)).copy()
    else:
        gains = _cn(rng, 1.0, (n_ue, n_blocks, config.n_rx))
    return ChannelRealization(mode=mode, gains=gains)


def noise_var_from_snr_db(snr_db: float) -> float:
    """Noise power for unit average per-antenna signal power on a data RE."""
    return float(10.0 ** (-snr_db / 10.0))


def apply_channel(
    transmissions: list[UeTransmission],
    realization: ChannelRealization,
    snr_db: float,
    rng: np.random.Generator,
) -> RxGrid:
    """Superpose all users through their gains and add white noise.

    SNR is defined per receive antenna on a data RE: unit-power QPSK through a
    CN(0,1) gain against noise ``10**(-snr_db/10)``.
    """
    if not transmissions:
        raise ValueError("need at least one transmission")
    if realization.gains.shape[0] != len(transmissions):
        raise ValueError("channel realization does not cover all users")
    w = len(transmissions[0].pilot_symbols)
    n_rx = realization.gains.shape[2]
    noise_var = noise_var_from_snr_db(snr_db)

    pilot_blocks = [
        _cn(rng, noise_var, (tr_len, n_rx))
        for tr_len in (transmissions[0].pilot_symbols[p].size for p in range(w))
    ]
    data_block = _cn(rng, noise_var, (transmissions[0].data_symbols.size, n_rx))
    for u, tr in enumerate(transmissions):
        for p in range(w):
            pilot_blocks[p] += np.outer(tr.pilot_symbols[p], realization.gains[u, p])
        data_block += np.outer(tr.data_symbols, realization.gains[u, w])
    return RxGrid(pilot_blocks=pilot_blocks, data_block=data_block, noise_var=noise_var)
