"""Campaign-layer checks: determinism, threading, aggregation, CSV output."""

import dataclasses

import numpy as np
import pytest

from gfsim import SimConfig, run_campaign, run_drop, write_results
from gfsim.config import Scheme, SchemeSpec
from gfsim.sim import CSV_COLUMNS, drop_seed, run_cell


def _small_config(**kw):
    base = dict(
        snr_db=(20.0,),
        n_ue=(2,),
        n_drops=24,
        n_rx=4,
        schemes=(SchemeSpec(Scheme.IMP, 2),),
    )
    base.update(kw)
    return SimConfig(**base)


def test_run_drop_is_deterministic():
    cfg = _small_config()
    spec = cfg.schemes[0]
    a = run_drop(cfg, spec, 0, 4, 11)
    b = run_drop(cfg, spec, 0, 4, 11)
    assert a == b  # frozen dataclass, field-wise equality


def test_drop_seeds_are_distinct():
    cfg = SimConfig()
    seen = set()
    for spec in cfg.schemes:
        layout = cfg.layout_for(spec)
        for snr_index in range(2):
            for n_ue in (2, 4):
                for drop in range(5):
                    key = drop_seed(cfg, layout, snr_index, n_ue, drop).entropy
                    seen.add(tuple(key))
    assert len(seen) == 2 * 2 * 2 * 5


def test_distinct_drops_differ():
    cfg = _small_config()
    spec = cfg.schemes[0]
    results = [run_drop(cfg, spec, 0, 4, i) for i in range(6)]
    # not all drops can be identical in attempts+decodes
    assert len({(r.n_decoded, r.decode_attempts, r.rounds_run) for r in results}) > 1


def test_drop_counts_are_consistent():
    cfg = _small_config()
    spec = cfg.schemes[0]
    for drop in range(8):
        r = run_drop(cfg, spec, 0, 5, drop)
        assert 0 <= r.n_decoded <= r.n_ue == 5
        assert r.decode_attempts >= r.n_decoded  # each decode costs >= 1 attempt
        assert r.n_active_targets + r.n_inactive_targets == 2 * 12  # w blocks x pool
        assert r.aud_misses <= r.n_active_targets
        assert r.aud_false_alarms <= r.n_inactive_targets
        if r.full_collision:
            assert r.any_index_collision


def test_run_cell_threads_invariant():
    cfg = _small_config(n_drops=12)
    spec = cfg.schemes[0]
    row1 = run_cell(cfg, spec, 0, 2, threads=1)
    row2 = run_cell(cfg, spec, 0, 2, threads=3)
    assert row1 == row2


def test_bler_improves_with_snr():
    cfg = SimConfig(
        snr_db=(0.0, 30.0), n_ue=(4,), n_drops=60, n_rx=4,
        schemes=(SchemeSpec(Scheme.IMP, 2),),
    )
    rows = run_campaign(cfg)
    assert len(rows) == 2
    low, high = rows
    assert low.snr_db == 0.0 and high.snr_db == 30.0
    assert high.bler < low.bler


def test_campaign_skips_empty_cells():
    cfg = _small_config(n_ue=(0, 2), n_drops=6)
    rows = run_campaign(cfg)
    assert [r.n_ue for r in rows] == [2]


def test_metrics_row_aggregation():
    """Re-derive the row statistics from raw drops."""
    cfg = _small_config(n_drops=20)
    spec = cfg.schemes[0]
    drops = [run_drop(cfg, spec, 0, 2, i) for i in range(20)]
    row = run_cell(cfg, spec, 0, 2)
    blocks = 20 * 2
    errs = sum(d.n_ue - d.n_decoded for d in drops)
    assert row.bler == pytest.approx(errs / blocks)
    assert row.avg_attempts_per_ue == pytest.approx(
        sum(d.decode_attempts for d in drops) / blocks
    )
    assert row.collision_rate == pytest.approx(
        sum(d.full_collision for d in drops) / 20
    )
    assert row.miss_rate == pytest.approx(
        sum(d.aud_misses for d in drops) / sum(d.n_active_targets for d in drops)
    )
    assert row.false_alarm_rate == pytest.approx(
        sum(d.aud_false_alarms for d in drops) / sum(d.n_inactive_targets for d in drops)
    )
    assert row.n_drops == 20
    assert row.n_error_events == errs
    p = row.bler
    assert row.bler_ci95 == pytest.approx(1.96 * np.sqrt(p * (1 - p) / blocks))


def test_low_confidence_flag():
    cfg = _small_config(n_drops=4)
    row = run_cell(cfg, cfg.schemes[0], 0, 2)
    # 8 blocks cannot produce 20 error events at 20 dB
    assert row.low_confidence


def test_write_results_format(tmp_path):
    cfg = _small_config(n_drops=6)
    rows = run_campaign(cfg)
    out = tmp_path / "r.csv"
    write_results(rows, str(out))
    text = out.read_text()
    lines = text.strip().split("\n")
    assert lines[0] == ",".join(CSV_COLUMNS)
    assert len(lines) == 1 + len(rows)
    first = lines[1].split(",")
    assert len(first) == len(CSV_COLUMNS)
    assert first[0] == "imp"
    assert first[1] == "2"
    # numeric fields parse back (9 significant digits)
    assert float(first[4]) == pytest.approx(rows[0].bler, rel=1e-8)
    assert int(first[10]) == rows[0].n_drops
    assert text.endswith("\n")


def test_campaign_row_order():
    cfg = SimConfig(
        snr_db=(10.0, 20.0), n_ue=(2, 4), n_drops=2, n_rx=2,
        schemes=(SchemeSpec(Scheme.TSP, 1), SchemeSpec(Scheme.IMP, 2)),
    )
    rows = run_campaign(cfg)
    keys = [(r.scheme, r.snr_db, r.n_ue) for r in rows]
    assert keys == [
        ("tsp", 10.0, 2), ("tsp", 10.0, 4), ("tsp", 20.0, 2), ("tsp", 20.0, 4),
        ("imp", 10.0, 2), ("imp", 10.0, 4), ("imp", 20.0, 2), ("imp", 20.0, 4),
    ]
