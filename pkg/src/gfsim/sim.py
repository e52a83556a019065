"""Monte Carlo campaign driver and delimited metrics output.

Every drop owns a seed derived from (base_seed, layout, SNR index, load,
drop index), and per-cell statistics are integer counts summed in a fixed
order, so campaign results are byte-identical regardless of worker count or
scheduling.
"""

from __future__ import annotations

import functools
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .channel import ChannelMode, apply_channel, draw_channel
from .config import SchemeSpec, SimConfig
from .pilots import PilotLayout, PilotPool, make_pilot_pool
from .rx import CeMode, run_receiver
from .tx import build_ue_transmission

log = logging.getLogger("gfsim")

CSV_COLUMNS = (
    "scheme", "w", "snr_db", "n_ue", "bler", "bler_ci95",
    "avg_attempts_per_ue", "collision_rate", "miss_rate",
    "false_alarm_rate", "n_drops",
)

# below this many observed error events a BLER estimate is flagged, not trusted
MIN_ERROR_EVENTS = 20

_CHUNK = 256


@dataclass(frozen=True)
class DropResult:
    """Integer outcome of one drop, ready for lossless aggregation."""

    n_ue: int
    n_decoded: int
    decode_attempts: int
    rounds_run: int
    full_collision: bool
    any_index_collision: bool
    aud_misses: int
    aud_false_alarms: int
    n_active_targets: int
    n_inactive_targets: int


@dataclass(frozen=True)
class MetricsRow:
    scheme: str
    w: int
    snr_db: float
    n_ue: int
    bler: float
    bler_ci95: float
    avg_attempts_per_ue: float
    collision_rate: float
    miss_rate: float
    false_alarm_rate: float
    n_drops: int
    n_error_events: int

    @property
    def low_confidence(self) -> bool:
        return self.n_error_events < MIN_ERROR_EVENTS


@functools.lru_cache(maxsize=None)
def _pool_for(block_length: int) -> PilotPool:
    return make_pilot_pool(block_length)


def drop_seed(config: SimConfig, layout: PilotLayout, snr_index: int, n_ue: int, drop_index: int) -> np.random.SeedSequence:
    return np.random.SeedSequence(
        [config.base_seed, layout.seed_tag, snr_index, n_ue, drop_index]
    )


def run_drop(
    config: SimConfig,
    spec: SchemeSpec,
    snr_index: int,
    n_ue: int,
    drop_index: int,
) -> DropResult:
    """Simulate one transmission opportunity end to end."""
    resource = config.resource_for(spec)
    layout = resource.layout
    pool = _pool_for(layout.block_length)
    rng = np.random.default_rng(drop_seed(config, layout, snr_index, n_ue, drop_index))

    payloads = rng.integers(0, 2, size=(n_ue, config.transport_block_size), dtype=np.uint8)
    transmissions = [
        build_ue_transmission(u, payloads[u], resource, pool) for u in range(n_ue)
    ]
    realization = draw_channel(n_ue, resource, config.channel_mode, rng)
    grid = apply_channel(transmissions, realization, config.snr_db[snr_index], rng)
    report = run_receiver(
        grid,
        resource,
        pool,
        config.rx_options(),
        n_info_bits=config.n_info_bits,
        per_block_ce=(
            config.channel_mode is ChannelMode.PER_BLOCK
            and config.ic_ce_mode is CeMode.DATA_AIDED
        ),
    )

    decoded_keys = {d.payload.tobytes() for d in report.decoded}
    n_decoded = sum(payloads[u].tobytes() in decoded_keys for u in range(n_ue))

    selections = [tr.selection.indices for tr in transmissions]
    full_collision = len(set(selections)) < n_ue
    any_index = any(
        len({sel[p] for sel in selections}) < n_ue for p in range(layout.w)
    )

    misses = false_alarms = active = inactive = 0
    for p in range(layout.w):
        truth = {sel[p] for sel in selections}
        seen = set(report.initial_detections[p])
        misses += len(truth - seen)
        false_alarms += len(seen - truth)
        active += len(truth)
        inactive += layout.pool_size - len(truth)

    return DropResult(
        n_ue=n_ue,
        n_decoded=n_decoded,
        decode_attempts=report.decode_attempts,
        rounds_run=report.rounds_run,
        full_collision=full_collision,
        any_index_collision=any_index,
        aud_misses=misses,
        aud_false_alarms=false_alarms,
        n_active_targets=active,
        n_inactive_targets=inactive,
    )


def _zero_counts() -> np.ndarray:
    # decoded, attempts, full_collisions, misses, false_alarms, active, inactive
    return np.zeros(7, dtype=np.int64)


def _accumulate_chunk(
    config: SimConfig, spec: SchemeSpec, snr_index: int, n_ue: int, start: int, stop: int
) -> np.ndarray:
    acc = _zero_counts()
    for drop in range(start, stop):
        r = run_drop(config, spec, snr_index, n_ue, drop)
        acc += (
            r.n_decoded, r.decode_attempts, int(r.full_collision),
            r.aud_misses, r.aud_false_alarms, r.n_active_targets, r.n_inactive_targets,
        )
    return acc


def _row_from_counts(
    config: SimConfig, spec: SchemeSpec, snr_index: int, n_ue: int, counts: np.ndarray
) -> MetricsRow:
    decoded, attempts, collisions, misses, fas, active, inactive = (int(c) for c in counts)
    n_drops = config.n_drops
    n_blocks = n_ue * n_drops
    n_fail = n_blocks - decoded
    bler = n_fail / n_blocks
    ci95 = 1.96 * math.sqrt(max(bler * (1.0 - bler), 0.0) / n_blocks)
    return MetricsRow(
        scheme=spec.scheme.value,
        w=spec.w,
        snr_db=config.snr_db[snr_index],
        n_ue=n_ue,
        bler=bler,
        bler_ci95=ci95,
        avg_attempts_per_ue=attempts / n_blocks,
        collision_rate=collisions / n_drops,
        miss_rate=misses / active if active else 0.0,
        false_alarm_rate=fas / inactive if inactive else 0.0,
        n_drops=n_drops,
        n_error_events=n_fail,
    )


def run_cell(
    config: SimConfig, spec: SchemeSpec, snr_index: int, n_ue: int, threads: int = 1
) -> MetricsRow:
    """Run all drops of one (scheme, SNR, load) cell and reduce to a row."""
    bounds = [
        (s, min(s + _CHUNK, config.n_drops)) for s in range(0, config.n_drops, _CHUNK)
    ]
    if threads > 1 and len(bounds) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            futures = [
                pool.submit(_accumulate_chunk, config, spec, snr_index, n_ue, a, b)
                for a, b in bounds
            ]
            # fixed reduction order; integer sums make it moot, but keep it tidy
            counts = sum((f.result() for f in futures), _zero_counts())
    else:
        counts = sum(
            (_accumulate_chunk(config, spec, snr_index, n_ue, a, b) for a, b in bounds),
            _zero_counts(),
        )
    return _row_from_counts(config, spec, snr_index, n_ue, counts)


def run_campaign(config: SimConfig, threads: int = 1) -> list[MetricsRow]:
    """Sweep schemes x SNR x load; returns one row per simulated cell.

    Cells with ``n_ue = 0`` have no block error rate and are skipped.
    """
    config.validate()
    rows = []
    for spec in config.schemes:
        for snr_index in range(len(config.snr_db)):
            for n_ue in config.n_ue:
                if n_ue == 0:
                    log.info("skipping n_ue=0 cell (no blocks to score)")
                    continue
                row = run_cell(config, spec, snr_index, n_ue, threads)
                if row.low_confidence:
                    log.warning(
                        "low confidence: %s w=%d snr=%g n_ue=%d saw %d error events",
                        row.scheme, row.w, row.snr_db, row.n_ue, row.n_error_events,
                    )
                rows.append(row)
    return rows


def _fmt(x: float) -> str:
    return f"{x:.9g}"


def write_results(rows: list[MetricsRow], path: str) -> None:
    """Write rows as comma-delimited text with a fixed header."""
    lines = [",".join(CSV_COLUMNS)]
    for r in rows:
        lines.append(
            ",".join(
                (
                    r.scheme, str(r.w), _fmt(r.snr_db), str(r.n_ue),
                    _fmt(r.bler), _fmt(r.bler_ci95), _fmt(r.avg_attempts_per_ue),
                    _fmt(r.collision_rate), _fmt(r.miss_rate),
                    _fmt(r.false_alarm_rate), str(r.n_drops),
                )
            )
        )
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")
