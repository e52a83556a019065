"""Pilot pools, pilot layouts, and pilot-collision probabilities.

A transmission opportunity carries ``total_pilot_re`` pilot resource elements.
The traditional scheme (TSP) spends all of them on one long pilot drawn from a
pool of ``total_pilot_re`` orthogonal sequences; the multi-pilot scheme (IMP)
splits them into ``w`` blocks and draws ``w`` independent short pilots from a
pool of ``total_pilot_re / w`` sequences per block.
"""

from __future__ import annotations

import enum
import math
import zlib
from dataclasses import dataclass

import numpy as np


class Scheme(enum.Enum):
    TSP = "tsp"
    IMP = "imp"


class CollisionEvent(enum.Enum):
    """Events measured by the Monte Carlo collision oracle."""

    # some pair of users picked identical indices at every pilot position
    ANY_PAIR_ALL_PILOTS = "any_pair_all_pilots"
    # some pair of users picked the same index at one or more positions
    ANY_TSP_COLLISION = "any_tsp_collision"


@dataclass(frozen=True)
class PilotPool:
    """Orthogonal pilot sequences, one per row of ``sequences``."""

    length: int
    sequences: np.ndarray  # (length, length) complex, unit-modulus entries


def make_pilot_pool(length: int) -> PilotPool:
    """Build the deterministic DFT pool of ``length`` orthogonal sequences.

    Rows have unit per-element power, sequence energy ``length``, and Gram
    matrix ``length * I``.
    """
    if length < 1:
        raise ValueError(f"pool length must be positive, got {length}")
    n = np.arange(length)
    seqs = np.exp(-2j * np.pi * np.outer(n, n) / length)
    return PilotPool(length=length, sequences=seqs)


@dataclass(frozen=True)
class PilotLayout:
    """How the pilot budget of a transmission opportunity is spent.

    ``w`` pilot blocks of ``total_pilot_re / w`` resource elements each; the
    per-block pool holds one sequence per block length. TSP is the ``w = 1``
    corner with a full-width pool.
    """

    scheme: Scheme
    total_pilot_re: int
    w: int

    def __post_init__(self) -> None:
        if self.total_pilot_re < 1:
            raise ValueError("total_pilot_re must be positive")
        if self.w < 1:
            raise ValueError("w must be positive")
        if self.total_pilot_re % self.w:
            raise ValueError(
                f"w={self.w} does not divide total_pilot_re={self.total_pilot_re}"
            )
        if self.scheme is Scheme.TSP and self.w != 1:
            raise ValueError("TSP uses a single pilot (w=1)")
        if self.scheme is Scheme.IMP and self.w < 2:
            raise ValueError("IMP needs w>=2 pilot blocks")
        if self.pool_size < 2:
            raise ValueError("degenerate layout: pool of fewer than 2 sequences")

    @property
    def block_length(self) -> int:
        return self.total_pilot_re // self.w

    @property
    def pool_size(self) -> int:
        # one orthogonal sequence per block resource element
        return self.block_length

    @property
    def bits_per_index(self) -> int:
        return max(1, math.ceil(math.log2(self.pool_size)))

    @property
    def tag(self) -> str:
        return f"{self.scheme.value}-n{self.total_pilot_re}-w{self.w}"

    @property
    def seed_tag(self) -> int:
        """Stable integer identifying the layout inside seed derivations."""
        return zlib.crc32(self.tag.encode("ascii"))

    @classmethod
    def tsp(cls, total_pilot_re: int) -> "PilotLayout":
        return cls(Scheme.TSP, total_pilot_re, 1)

    @classmethod
    def imp(cls, total_pilot_re: int, w: int) -> "PilotLayout":
        return cls(Scheme.IMP, total_pilot_re, w)


@dataclass(frozen=True)
class PilotSelection:
    """The pilot indices a user transmits, one per pilot block."""

    indices: tuple[int, ...]

    @property
    def w(self) -> int:
        return len(self.indices)


def tsp_collision_probability(n_pilots: int, n_users: int) -> float:
    """Probability that at least two of ``n_users`` uniform picks from
    ``n_pilots`` sequences coincide (single-pilot collision)."""
    if n_pilots < 1:
        raise ValueError("n_pilots must be positive")
    if n_users < 0:
        raise ValueError("n_users must be nonnegative")
    if n_users < 2:
        return 0.0
    if n_users > n_pilots:
        return 1.0
    p_clear = 1.0
    for j in range(n_users):
        p_clear *= (n_pilots - j) / n_pilots
    return 1.0 - p_clear


def imp_pairwise_collision_probability(pool_size: int, w: int, n_users: int) -> float:
    """Pairwise approximation of the full-collision probability under IMP.

    A pair fully collides when it matches on all ``w`` independently drawn
    indices, probability ``pool_size**-w``; the union over C(K, 2) pairs is
    approximated by its first-order term (tight when K^2 << pool_size**w).
    """
    if pool_size < 1:
        raise ValueError("pool_size must be positive")
    if w < 1:
        raise ValueError("w must be positive")
    if n_users < 0:
        raise ValueError("n_users must be nonnegative")
    if n_users < 2:
        return 0.0
    p = math.comb(n_users, 2) / float(pool_size) ** w
    return min(p, 1.0)


def random_pilot_selection(layout: PilotLayout, rng: np.random.Generator) -> PilotSelection:
    """Draw one uniform, independent index per pilot block."""
    idx = rng.integers(0, layout.pool_size, size=layout.w)
    return PilotSelection(indices=tuple(int(i) for i in idx))


def simulate_collision_probability(
    layout: PilotLayout,
    n_users: int,
    event: CollisionEvent,
    n_trials: int,
    seed: int = 0,
) -> tuple[float, float]:
    """Monte Carlo estimate of a collision event probability.

    Draws ``n_users`` independent selections per trial and counts trials where
    ``event`` occurs. Returns ``(estimate, std_error)`` with the binomial
    standard error; the run is deterministic in ``seed``.
    """
    if n_users < 0:
        raise ValueError("n_users must be nonnegative")
    if n_trials < 1:
        raise ValueError("n_trials must be positive")
    rng = np.random.default_rng(np.random.SeedSequence([seed, layout.seed_tag, n_users]))
    pool = layout.pool_size
    hits = 0
    chunk = 200_000
    done = 0
    while done < n_trials:
        m = min(chunk, n_trials - done)
        draws = rng.integers(0, pool, size=(m, n_users, layout.w))
        if n_users >= 2:
            if event is CollisionEvent.ANY_PAIR_ALL_PILOTS:
                # a pair collides on all pilots iff their index tuples are equal;
                # encode each tuple as one integer and look for duplicates
                weights = pool ** np.arange(layout.w, dtype=np.int64)
                codes = np.sort((draws * weights).sum(axis=2), axis=1)
                hit = (np.diff(codes, axis=1) == 0).any(axis=1)
            elif event is CollisionEvent.ANY_TSP_COLLISION:
                per_pos = np.sort(draws, axis=1)
                hit = (np.diff(per_pos, axis=1) == 0).any(axis=(1, 2))
            else:  # pragma: no cover - exhaustive enum
                raise ValueError(f"unknown event {event}")
            hits += int(hit.sum())
        done += m
    est = hits / n_trials
    se = math.sqrt(max(est * (1.0 - est), 0.0) / n_trials)
    return est, se
