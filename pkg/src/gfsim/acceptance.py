"""Built-in validation criteria.

Each criterion checks one numerically binding property of the library, from
closed-form values through end-to-end campaign trends. ``quick=True`` shrinks
trial counts for a smoke run; the stated tolerances are only meaningful at the
full counts.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass

import numpy as np

from . import sim
from .channel import ChannelMode, apply_channel, draw_channel
from .config import SchemeSpec, SimConfig
from .pilots import (
    CollisionEvent,
    PilotLayout,
    Scheme,
    imp_pairwise_collision_probability,
    make_pilot_pool,
    simulate_collision_probability,
    tsp_collision_probability,
)
from .rx import (
    CeMode,
    RxOptions,
    cancel_user,
    correlate_pilots,
    data_aided_ce,
    detect_active_pilots,
    run_receiver,
)
from .tx import ResourceConfig, build_ue_transmission

_SEED = 20260815


@dataclass
class CriterionResult:
    number: int
    name: str
    passed: bool
    detail: str

    def format_line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        return f"{status} {self.number:2d} {self.name}: {self.detail}"


def _result(number: int, name: str, passed: bool, detail: str, quick: bool) -> CriterionResult:
    if quick:
        detail += " [quick]"
    return CriterionResult(number, name, bool(passed), detail)


# ---------------------------------------------------------------------------
# closed forms and the Monte Carlo oracle
# ---------------------------------------------------------------------------

def criterion_1(quick: bool = False) -> CriterionResult:
    """tsp_collision_probability(24, 3) equals 0.121528 within 1e-6."""
    value = tsp_collision_probability(24, 3)
    err = abs(value - 0.121528)
    return _result(1, "tsp-closed-form", err <= 1e-6, f"value={value:.9f} err={err:.2e}", quick)


def criterion_2(quick: bool = False) -> CriterionResult:
    """imp_pairwise_collision_probability(12, 2, 3) equals 0.020833 within 1e-6."""
    value = imp_pairwise_collision_probability(12, 2, 3)
    err = abs(value - 0.020833)
    return _result(2, "imp-closed-form", err <= 1e-6, f"value={value:.9f} err={err:.2e}", quick)


def criterion_3(quick: bool = False) -> CriterionResult:
    """Two-user advantage: IMP(N/2, w=2) / TSP(N) == 4 / N within 1e-12."""
    worst = 0.0
    for n in (8, 16, 24, 48):
        ratio = imp_pairwise_collision_probability(n // 2, 2, 2) / tsp_collision_probability(n, 2)
        worst = max(worst, abs(ratio - 4.0 / n))
    return _result(3, "collision-ratio", worst <= 1e-12, f"max |ratio - 4/N| = {worst:.3e}", quick)


def criterion_4(quick: bool = False) -> CriterionResult:
    """MC collision rates within 4 std errors of the closed forms, < 30 s."""
    trials = 10_000 if quick else 1_000_000
    start = time.perf_counter()
    worst_pull = 0.0
    detail_parts = []
    for n in (12, 24):
        for k in (2, 3, 4):
            est, se = simulate_collision_probability(
                PilotLayout.tsp(n), k, CollisionEvent.ANY_TSP_COLLISION, trials, _SEED
            )
            pull = abs(est - tsp_collision_probability(n, k)) / se
            worst_pull = max(worst_pull, pull)
            est, se = simulate_collision_probability(
                PilotLayout.imp(2 * n, 2), k, CollisionEvent.ANY_PAIR_ALL_PILOTS, trials, _SEED
            )
            pull = abs(est - imp_pairwise_collision_probability(n, 2, k)) / se
            worst_pull = max(worst_pull, pull)
    elapsed = time.perf_counter() - start
    detail_parts.append(f"max pull={worst_pull:.2f} sigma, {elapsed:.1f} s")
    ok = worst_pull <= 4.0 and elapsed < 30.0
    return _result(4, "collision-oracle", ok, "; ".join(detail_parts), quick)


# ---------------------------------------------------------------------------
# channel estimation and cancellation algebra
# ---------------------------------------------------------------------------

def _ce_error_variance(layout: PilotLayout, noise_var: float, trials: int, seed: int) -> float:
    """Mean per-antenna error power of the pilot-correlation estimate."""
    pool = make_pilot_pool(layout.block_length)
    rng = np.random.default_rng(seed)
    length = layout.block_length
    total = 0.0
    for _ in range(trials):
        h = (rng.normal(size=2) + 1j * rng.normal(size=2)) / math.sqrt(2.0)
        idx = int(rng.integers(0, layout.pool_size))
        noise = (
            rng.normal(size=(length, 2)) + 1j * rng.normal(size=(length, 2))
        ) * math.sqrt(noise_var / 2.0)
        block = np.outer(pool.sequences[idx], h) + noise
        est = correlate_pilots(block, pool)[idx]
        total += float(np.mean(np.abs(est - h) ** 2))
    return total / trials


def criterion_5(quick: bool = False) -> CriterionResult:
    """CE error variance = noise_var / E_seq; IMP/TSP ratios 2x and 3x."""
    trials = 5_000 if quick else 100_000
    noise_var = 0.1
    v_tsp = _ce_error_variance(PilotLayout.tsp(24), noise_var, trials, _SEED + 5)
    v_imp2 = _ce_error_variance(PilotLayout.imp(24, 2), noise_var, trials, _SEED + 6)
    v_imp3 = _ce_error_variance(PilotLayout.imp(24, 3), noise_var, trials, _SEED + 7)
    rel = abs(v_tsp - noise_var / 24.0) / (noise_var / 24.0)
    r2 = v_imp2 / v_tsp
    r3 = v_imp3 / v_tsp
    ok = rel <= 0.05 and abs(r2 - 2.0) <= 0.1 and abs(r3 - 3.0) <= 0.15
    detail = f"tsp_var={v_tsp:.3e} (rel err {rel:.3f}), ratios w2={r2:.3f} w3={r3:.3f}"
    return _result(5, "ce-variance", ok, detail, quick)


def criterion_6(quick: bool = False) -> CriterionResult:
    """Noiseless cancellation with true channels leaves <= 1e-9 of the energy."""
    worst = 0.0
    for layout in (PilotLayout.tsp(24), PilotLayout.imp(24, 2)):
        resource = ResourceConfig(layout=layout)
        pool = make_pilot_pool(layout.block_length)
        rng = np.random.default_rng(_SEED + 60)
        txs = [
            build_ue_transmission(u, rng.integers(0, 2, 160, dtype=np.uint8), resource, pool)
            for u in range(2)
        ]
        realization = draw_channel(2, resource, ChannelMode.FLAT, rng)
        grid = apply_channel(txs, realization, math.inf, rng)
        residual = grid
        for u, tr in enumerate(txs):
            residual = cancel_user(residual, tr, realization.gains[u])
        worst = max(worst, residual.total_energy / grid.total_energy)
    return _result(6, "ic-exactness", worst <= 1e-9, f"residual fraction = {worst:.2e}", quick)


def _two_users_same_pilot(resource: ResourceConfig, pool, seed: int):
    """Two transmissions that happen to pick identical pilot selections."""
    rng = np.random.default_rng(seed)
    seen: dict[tuple, np.ndarray] = {}
    while True:
        payload = rng.integers(0, 2, 160, dtype=np.uint8)
        tr = build_ue_transmission(len(seen), payload, resource, pool)
        key = tr.selection.indices
        if key in seen and not np.array_equal(seen[key], payload):
            first = build_ue_transmission(0, seen[key], resource, pool)
            return first, tr
        seen.setdefault(key, payload)


def criterion_7(quick: bool = False) -> CriterionResult:
    """Data-aided LS separates same-pilot users; noisy MSE matches theory."""
    layout = PilotLayout.tsp(24)
    resource = ResourceConfig(layout=layout)
    pool = make_pilot_pool(layout.block_length)
    tr0, tr1 = _two_users_same_pilot(resource, pool, _SEED + 70)
    rng = np.random.default_rng(_SEED + 71)
    realization = draw_channel(2, resource, ChannelMode.FLAT, rng)
    grid = apply_channel([tr0, tr1], realization, math.inf, rng)
    gains = data_aided_ce(grid, [tr0, tr1])
    err_noiseless = float(np.max(np.abs(gains[0] - realization.gains[:, 0, :])))

    # noisy covariance check against noise_var * (D^H D)^-1
    noise_var = 0.1
    snr_db = -10.0 * math.log10(noise_var)
    d = np.concatenate(
        [
            np.stack([tr0.pilot_symbols[0], tr1.pilot_symbols[0]], axis=1),
            np.stack([tr0.data_symbols, tr1.data_symbols], axis=1),
        ],
        axis=0,
    )
    theory = noise_var * np.real(np.diag(np.linalg.inv(d.conj().T @ d)))
    trials = 100 if quick else 1000
    sq = np.zeros(2)
    for t in range(trials):
        rng_t = np.random.default_rng(np.random.SeedSequence([_SEED + 72, t]))
        real_t = draw_channel(2, resource, ChannelMode.FLAT, rng_t)
        grid_t = apply_channel([tr0, tr1], real_t, snr_db, rng_t)
        g = data_aided_ce(grid_t, [tr0, tr1])
        err = g[0] - real_t.gains[:, 0, :]
        sq += np.mean(np.abs(err) ** 2, axis=1)
    mse = sq / trials
    rel = float(np.max(np.abs(mse - theory) / theory))
    ok = err_noiseless <= 1e-9 and rel <= 0.20
    detail = f"noiseless max err={err_noiseless:.2e}, noisy MSE rel dev={rel:.3f}"
    return _result(7, "data-aided-ls", ok, detail, quick)


# ---------------------------------------------------------------------------
# receiver behaviour
# ---------------------------------------------------------------------------

def _payload_with_selection(resource, pool, target: tuple[int, ...], rng) -> np.ndarray:
    while True:
        payload = rng.integers(0, 2, 160, dtype=np.uint8)
        tr = build_ue_transmission(0, payload, resource, pool)
        if tr.selection.indices == target:
            return payload


def criterion_8(quick: bool = False) -> CriterionResult:
    """Three-user partial-collision scenario resolves via iterated IC.

    Users pick (2,6), (2,4), (3,4) from the 12-sequence pool: the middle user
    collides with a neighbour on each of its pilots. At 30 dB the serial
    pilot-only receiver must decode all three in >= 99% of drops, with the
    middle user decoded strictly after round 1 in >= 95% of those drops.
    """
    layout = PilotLayout.imp(24, 2)
    resource = ResourceConfig(layout=layout)
    pool = make_pilot_pool(layout.block_length)
    rng = np.random.default_rng(_SEED + 80)
    targets = [(2, 6), (2, 4), (3, 4)]
    txs = [
        build_ue_transmission(u, _payload_with_selection(resource, pool, t, rng), resource, pool)
        for u, t in enumerate(targets)
    ]
    keys = [tr.payload.tobytes() for tr in txs]
    n_drops = 200 if quick else 1000
    all_three = 0
    middle_late = 0
    for drop in range(n_drops):
        rng_d = np.random.default_rng(np.random.SeedSequence([_SEED + 81, drop]))
        realization = draw_channel(3, resource, ChannelMode.FLAT, rng_d)
        grid = apply_channel(txs, realization, 30.0, rng_d)
        report = run_receiver(grid, resource, pool, RxOptions(), n_info_bits=176)
        rounds = {d.payload.tobytes(): d.round_index for d in report.decoded}
        if all(k in rounds for k in keys):
            all_three += 1
            if rounds[keys[1]] > 1:
                middle_late += 1
    frac_all = all_three / n_drops
    frac_late = middle_late / all_three if all_three else 0.0
    ok = frac_all >= 0.99 and frac_late >= 0.95
    detail = f"all-three={frac_all:.3f} (need >=0.99), middle-after-round-1={frac_late:.3f} (need >=0.95)"
    return _result(8, "collision-resolution-scenario", ok, detail, quick)


def criterion_9(quick: bool = False) -> CriterionResult:
    """AUD operating point: false alarm <= 1.5e-3, 10 dB single-user miss <= 1e-3."""
    trials = 5_000 if quick else 100_000
    layout = PilotLayout.tsp(24)
    pool = make_pilot_pool(layout.block_length)
    length = layout.block_length

    rng = np.random.default_rng(_SEED + 90)
    noise_var = 1.0
    fa = 0
    for _ in range(trials):
        block = (
            rng.normal(size=(length, 2)) + 1j * rng.normal(size=(length, 2))
        ) * math.sqrt(noise_var / 2.0)
        fa += len(detect_active_pilots(block, pool, noise_var).detections)
    fa_rate = fa / (trials * layout.pool_size)

    noise_var = 0.1  # 10 dB
    misses = 0
    for _ in range(trials):
        h = (rng.normal(size=2) + 1j * rng.normal(size=2)) / math.sqrt(2.0)
        idx = int(rng.integers(0, layout.pool_size))
        block = np.outer(pool.sequences[idx], h) + (
            rng.normal(size=(length, 2)) + 1j * rng.normal(size=(length, 2))
        ) * math.sqrt(noise_var / 2.0)
        det = detect_active_pilots(block, pool, noise_var)
        if idx not in [d.index for d in det.detections]:
            misses += 1
    miss_rate = misses / trials
    ok = fa_rate <= 1.5e-3 and miss_rate <= 1e-3
    detail = f"false_alarm={fa_rate:.2e} (<=1.5e-3), miss={miss_rate:.2e} (<=1e-3)"
    return _result(9, "aud-rates", ok, detail, quick)


# ---------------------------------------------------------------------------
# campaign trends
# ---------------------------------------------------------------------------

_TSP = SchemeSpec(Scheme.TSP, 1)
_IMP2 = SchemeSpec(Scheme.IMP, 2)
_IMP3 = SchemeSpec(Scheme.IMP, 3)


def criterion_10(quick: bool = False) -> CriterionResult:
    """High-SNR error floor: TSP > 3x IMP(w=2) at 30 dB, and TSP floors out."""
    n_drops = 1_500 if quick else 20_000
    cfg = SimConfig(
        snr_db=(20.0, 30.0), n_ue=(6,), n_drops=n_drops,
        base_seed=_SEED + 10, schemes=(_TSP, _IMP2),
    )
    tsp20 = sim.run_cell(cfg, _TSP, 0, 6)
    tsp30 = sim.run_cell(cfg, _TSP, 1, 6)
    imp30 = sim.run_cell(cfg, _IMP2, 1, 6)
    ok = (
        imp30.bler > 0.0
        and tsp30.bler > 3.0 * imp30.bler
        and tsp30.bler >= 0.5 * tsp20.bler
    )
    detail = (
        f"bler tsp30={tsp30.bler:.4f} imp30={imp30.bler:.4f} "
        f"(ratio {tsp30.bler / imp30.bler if imp30.bler else math.inf:.2f}, need >3), "
        f"tsp20={tsp20.bler:.4f}"
    )
    return _result(10, "bler-floor-separation", ok, detail, quick)


def criterion_11(quick: bool = False) -> CriterionResult:
    """At the lowest SNR where both schemes exceed BLER 0.5, TSP <= IMP + 2 ci."""
    n_drops = 400 if quick else 3_000
    cfg = SimConfig(
        snr_db=(-8.0, -6.0, -4.0), n_ue=(6,), n_drops=n_drops,
        base_seed=_SEED + 11, schemes=(_TSP, _IMP2),
    )
    for snr_index in range(len(cfg.snr_db)):
        tsp_row = sim.run_cell(cfg, _TSP, snr_index, 6)
        imp_row = sim.run_cell(cfg, _IMP2, snr_index, 6)
        if tsp_row.bler > 0.5 and imp_row.bler > 0.5:
            ok = tsp_row.bler <= imp_row.bler + 2.0 * imp_row.bler_ci95
            detail = (
                f"snr={cfg.snr_db[snr_index]:g} dB: tsp={tsp_row.bler:.4f} "
                f"imp={imp_row.bler:.4f} (+2ci {imp_row.bler + 2 * imp_row.bler_ci95:.4f})"
            )
            return _result(11, "low-snr-crossover", ok, detail, quick)
    return _result(11, "low-snr-crossover", False, "no SNR point had both BLERs above 0.5", quick)


def criterion_12(quick: bool = False) -> CriterionResult:
    """Decode-attempt overhead of multi-pilot access stays within bounds."""
    n_drops = 800 if quick else 5_000
    cfg = SimConfig(
        snr_db=(30.0,), n_ue=(6,), n_drops=n_drops,
        base_seed=_SEED + 12, schemes=(_TSP, _IMP2, _IMP3),
    )
    att = {}
    for spec in cfg.schemes:
        att[spec.w] = sim.run_cell(cfg, spec, 0, 6).avg_attempts_per_ue
    r2 = att[2] / att[1]
    r3 = att[3] / att[1]
    ok = 1.1 <= r2 <= 2.2 and r3 >= r2
    detail = f"attempts/UE tsp={att[1]:.3f} imp2={att[2]:.3f} imp3={att[3]:.3f}; ratios {r2:.2f}, {r3:.2f}"
    return _result(12, "decode-attempts-overhead", ok, detail, quick)


def criterion_13(quick: bool = False) -> CriterionResult:
    """Data-aided IC never hurts BLER or attempts, strictly helps at K=8."""
    n_drops = 1_500 if quick else 10_000
    rows = {}
    for mode in (CeMode.PILOT_ONLY, CeMode.DATA_AIDED):
        cfg = SimConfig(
            snr_db=(30.0,), n_ue=(6, 8), n_drops=n_drops, ic_ce_mode=mode,
            base_seed=_SEED + 13, schemes=(_IMP2,),
        )
        for k in cfg.n_ue:
            rows[(mode, k)] = sim.run_cell(cfg, _IMP2, 0, k)
    checks = []
    for k in (6, 8):
        po = rows[(CeMode.PILOT_ONLY, k)]
        da = rows[(CeMode.DATA_AIDED, k)]
        checks.append(da.bler <= po.bler and da.avg_attempts_per_ue <= po.avg_attempts_per_ue)
    strict = rows[(CeMode.DATA_AIDED, 8)].bler < rows[(CeMode.PILOT_ONLY, 8)].bler
    ok = all(checks) and strict
    detail = "; ".join(
        f"K={k}: bler {rows[(CeMode.PILOT_ONLY, k)].bler:.4f}->{rows[(CeMode.DATA_AIDED, k)].bler:.4f}, "
        f"att {rows[(CeMode.PILOT_ONLY, k)].avg_attempts_per_ue:.3f}->{rows[(CeMode.DATA_AIDED, k)].avg_attempts_per_ue:.3f}"
        for k in (6, 8)
    )
    return _result(13, "data-aided-gain", ok, detail, quick)


def criterion_14(quick: bool = False) -> CriterionResult:
    """CSV output is byte-identical for --threads 1 and --threads 8."""
    import tempfile
    from pathlib import Path

    from .cli import main as cli_main

    config_text = (
        "snr_db = 10\n"
        "n_ue = 4\n"
        "n_drops = 60\n"
        "base_seed = 3\n"
        "\n[scheme]\nscheme = tsp\n"
        "\n[scheme]\nscheme = imp\nw = 2\n"
    )
    with tempfile.TemporaryDirectory() as tmp:
        cfg_path = Path(tmp) / "c14.cfg"
        cfg_path.write_text(config_text)
        outs = []
        for threads in ("1", "8"):
            out = Path(tmp) / f"out{threads}.csv"
            code = cli_main(
                ["simulate", "--config", str(cfg_path), "--out", str(out), "--threads", threads]
            )
            if code != 0:
                return _result(14, "csv-determinism", False, f"simulate exited {code}", quick)
            outs.append(out.read_bytes())
    ok = outs[0] == outs[1]
    return _result(14, "csv-determinism", ok, f"{len(outs[0])} bytes, identical={ok}", quick)


CRITERIA = {
    1: criterion_1,
    2: criterion_2,
    3: criterion_3,
    4: criterion_4,
    5: criterion_5,
    6: criterion_6,
    7: criterion_7,
    8: criterion_8,
    9: criterion_9,
    10: criterion_10,
    11: criterion_11,
    12: criterion_12,
    13: criterion_13,
    14: criterion_14,
}


def run_criteria(numbers: list[int] | None = None, quick: bool = False) -> list[CriterionResult]:
    """Run the requested criteria (all by default) in numeric order."""
    selected = sorted(CRITERIA) if numbers is None else sorted(set(numbers))
    return [CRITERIA[n](quick=quick) for n in selected]
