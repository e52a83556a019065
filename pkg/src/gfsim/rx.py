"""Blind multi-user receiver: detection, MMSE equalization, decode, IC.

The receiver never knows which users transmitted. Per pilot block it
correlates against the whole pool, thresholds the per-sequence energy metric,
MMSE-equalizes the data block against every surviving detection, and tries to
decode each stream. A CRC-passing decode is accepted only if the pilot index
re-derived from the decoded bits matches the detection that produced it; the
accepted user's full transmission is reconstructed and cancelled. Iterating
detection/decoding/cancellation resolves users whose pilots collided, which is
what makes the multi-pilot scheme work.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np

from . import codec, tx
from .channel import RxGrid
from .pilots import PilotLayout, PilotPool, PilotSelection
from .tx import ResourceConfig, UeTransmission

# Noise-only detection metric (2 rx antennas) is Gamma(2,1) scaled by
# noise_var / E_seq; (1 + g) * exp(-g) = 1e-3 at g = 9.2334, i.e. a 1e-3
# per-sequence false-alarm target.
DEFAULT_AUD_GAMMA = 9.2334

# relative floor that keeps exact-arithmetic residues out of noiseless runs
_METRIC_FLOOR_REL = 1e-9

_POST_SINR_MAX = 1e12
_POST_SINR_MIN = 1e-9

# Measured decode rates fall below ~3e-3 under this post-SINR floor. The
# rescue path combines the full block so it can succeed somewhat further
# down, but its hit rate collapses ~10x below the same floor, which the
# hypothesis scan's cost does not repay; both gates therefore sit at 0.35.
# A failed attempt is only retried after a 10 % SINR improvement.
_MIN_SEGMENT_ATTEMPT_SINR = 0.35
_MIN_RESCUE_ATTEMPT_SINR = 0.35
_RETRY_SINR_MARGIN = 1.1

# A decode whose data-aided channel refit disagrees with its anchor estimate
# by more than this power fraction is a capture off a collision composite
# (measured: clean anchors stay under ~0.04, captures tail out past 1.0).
_ANCHOR_MISMATCH_MAX = 0.1


class Procedure(enum.Enum):
    SERIAL = "serial"
    PARALLEL = "parallel"


class CeMode(enum.Enum):
    PILOT_ONLY = "pilot"
    DATA_AIDED = "data_aided"


class DuplicatePolicy(enum.Enum):
    STRONGER_PILOT = "stronger_pilot"
    AVERAGE = "average"


class EstimateSource(enum.Enum):
    PILOT_CORRELATION = "pilot_correlation"
    DATA_AIDED = "data_aided"


@dataclass(eq=False)
class ChannelEstimate:
    """Per-antenna complex gains attributed to one detected sequence."""

    gains: np.ndarray  # (n_rx,)
    source: EstimateSource
    block: int
    pilot_index: int


@dataclass(eq=False)
class Detection:
    index: int
    metric: float
    estimate: ChannelEstimate


@dataclass
class DetectionRound:
    block: int
    threshold: float
    detections: list[Detection]  # sorted by metric, strongest first


@dataclass
class EqualizedStream:
    """Bias-corrected MMSE output: soft = s + residual, unit effective gain."""

    soft_symbols: np.ndarray
    post_sinr: float


@dataclass
class RxOptions:
    procedure: Procedure = Procedure.SERIAL
    ic_ce_mode: CeMode = CeMode.PILOT_ONLY
    aud_gamma: float = DEFAULT_AUD_GAMMA
    max_rounds: int = 10
    duplicate_policy: DuplicatePolicy = DuplicatePolicy.STRONGER_PILOT


@dataclass
class AudEvents:
    consistency_rejections: int = 0
    duplicate_decodes: int = 0


@dataclass
class DecodedUe:
    payload: np.ndarray
    selection: PilotSelection
    round_index: int
    block: int
    pilot_index: int
    metric: float
    transmission: UeTransmission
    estimate: ChannelEstimate


@dataclass
class DecodeReport:
    decoded: list[DecodedUe]
    decode_attempts: int
    rounds_run: int
    aud_events: AudEvents
    # pool indices detected on the pristine grid, one list per pilot block
    initial_detections: list[list[int]] = field(default_factory=list)


def correlate_pilots(
    pilot_block: np.ndarray, pool: PilotPool, pilot_scale: float = 1.0
) -> np.ndarray:
    """LS gain of every pool sequence against a received block, shape (n, n_rx).

    For reference sequence ``pilot_scale * z`` the estimate is
    ``z^H y / (pilot_scale * |z|^2)``.
    """
    return pool.sequences.conj() @ pilot_block / (pilot_scale * pool.length)


def detect_active_pilots(
    pilot_block: np.ndarray,
    pool: PilotPool,
    noise_var: float,
    gamma: float = DEFAULT_AUD_GAMMA,
    pilot_scale: float = 1.0,
    block: int = 0,
) -> DetectionRound:
    """Threshold the summed per-antenna estimate energy of every sequence.

    The threshold is ``gamma * noise_var / E_seq`` with ``E_seq`` the boosted
    sequence energy, so ``gamma`` directly sets the noise-only false-alarm
    quantile.
    """
    if noise_var < 0.0:
        raise ValueError("noise_var must be nonnegative")
    gains = correlate_pilots(pilot_block, pool, pilot_scale)
    metrics = np.sum(np.abs(gains) ** 2, axis=1)
    e_seq = pilot_scale**2 * pool.length
    threshold = gamma * noise_var / e_seq
    floor = _METRIC_FLOOR_REL * float(metrics.max(initial=0.0))
    effective = max(threshold, floor, 1e-300)
    detections = [
        Detection(
            index=int(i),
            metric=float(metrics[i]),
            estimate=ChannelEstimate(
                gains=gains[i].copy(),
                source=EstimateSource.PILOT_CORRELATION,
                block=block,
                pilot_index=int(i),
            ),
        )
        for i in np.flatnonzero(metrics >= effective)
    ]
    detections.sort(key=lambda d: d.metric, reverse=True)
    return DetectionRound(block=block, threshold=effective, detections=detections)


def mmse_equalize(
    data_block: np.ndarray,
    estimates: list[ChannelEstimate],
    noise_var: float,
) -> list[EqualizedStream]:
    """Joint linear MMSE over all estimated streams on one data block.

    The filter bank is ``W = R^-1 H`` with H (n_rx x S) the estimate matrix
    and R the sample covariance of the received data block. When the model is
    complete R converges to ``H H^H + noise_var I`` and this is the textbook
    MMSE; using the measured covariance also whitens interference the active
    set does not explain (colliding users merged into one composite estimate,
    imperfect cancellation), which a detection-driven model cannot see.
    Stream s is bias-corrected by ``mu_s = w_s^H h_s`` and reported with
    ``post_sinr = mu_s / (1 - mu_s)``. Flat fading means one filter serves
    the whole block.
    """
    if not estimates:
        return []
    h = np.stack([e.gains for e in estimates], axis=1)  # (n_rx, S)
    n_rx, n_streams = h.shape
    y = np.asarray(data_block)
    cov = np.einsum("ia,ib->ab", y, y.conj()) / y.shape[0]
    # Keep R invertible for noise-free inputs and honest for empty blocks.
    floor = max(noise_var, 1e-12 * float(np.real(np.trace(cov))) / n_rx, 1e-300)
    cov = cov + floor * np.eye(n_rx)
    w = np.linalg.solve(cov, h)
    mu = np.real(np.sum(w.conj() * h, axis=0))
    raw = data_block @ w.conj()  # (n_re, S)
    streams = []
    for s in range(n_streams):
        m = float(np.clip(mu[s], 1e-15, 1.0 - 1e-15))
        sinr = float(np.clip(m / (1.0 - m), _POST_SINR_MIN, _POST_SINR_MAX))
        streams.append(EqualizedStream(soft_symbols=raw[:, s] / m, post_sinr=sinr))
    return streams


def _descrambled_soft(
    soft_symbols: np.ndarray, pairs: list[tuple[int, int]], w: int
) -> np.ndarray:
    soft = np.asarray(soft_symbols)
    out = np.zeros_like(soft)
    bounds = tx.data_segment_bounds(soft.size, w)
    for block, pilot_index in pairs:
        a, b = bounds[block]
        out[a:b] = tx.descramble_segment(soft[a:b], block, pilot_index)
    return out


def segment_soft_symbols(
    soft_symbols: np.ndarray, block: int, pilot_index: int, w: int
) -> np.ndarray:
    """Isolate and descramble the data segment tied to a pilot detection.

    A blind detection yields one (block, index) pair, which is only enough to
    descramble the matching segment of the data block; the other segments are
    erased (zero symbols produce zero LLRs downstream, i.e. punctured bits).
    """
    return _descrambled_soft(soft_symbols, [(block, pilot_index)], w)


def attempt_decode(
    soft_symbols: np.ndarray,
    effective_gain: float,
    post_sinr: float,
    layout: PilotLayout,
    n_info_bits: int,
) -> tuple[bool, np.ndarray | None, PilotSelection | None]:
    """Demap, decode, CRC-check one equalized stream.

    ``effective_gain`` is the constellation gain remaining in the soft symbols
    (1.0 for bias-corrected MMSE output); ``1 / post_sinr`` serves as the
    residual noise variance for LLR scaling. On CRC success the codeword is
    re-encoded to re-derive the pilot selection the decoded user must have
    used. The CRC gate keeps the pure-noise acceptance rate below 1e-3.
    """
    sinr = float(np.clip(post_sinr, _POST_SINR_MIN, _POST_SINR_MAX))
    llrs = codec.qpsk_llr(soft_symbols, effective_gain, 1.0 / sinr)
    bits, ok = codec.fec_decode(llrs, n_info_bits)
    if not ok:
        return False, None, None
    codeword = codec.fec_encode(bits, 2 * np.asarray(soft_symbols).size)
    selection = tx.select_pilots_from_codeword(codeword, layout)
    return True, bits[: n_info_bits - codec.CRC16_BITS], selection


def cancel_user(
    rx_grid: RxGrid,
    reconstructed: UeTransmission,
    h_tilde: np.ndarray,
) -> RxGrid:
    """Subtract a reconstructed transmission weighted by its channel estimate.

    ``h_tilde`` is either per-antenna gains (n_rx,) applied to every block, or
    per-block gains (w + 1, n_rx).
    """
    h = np.asarray(h_tilde)
    w = len(rx_grid.pilot_blocks)
    if h.ndim == 1:
        h = np.broadcast_to(h, (w + 1, h.size))
    elif h.shape[0] != w + 1:
        raise ValueError(f"need gains for {w + 1} blocks, got {h.shape[0]}")
    out = rx_grid.copy()
    for p in range(w):
        out.pilot_blocks[p] -= np.outer(reconstructed.pilot_symbols[p], h[p])
    out.data_block -= np.outer(reconstructed.data_symbols, h[w])
    return out


def _design_columns(decoded: list[UeTransmission]) -> list[np.ndarray]:
    """Per-block design matrices; column q is user q's known symbols."""
    w = len(decoded[0].pilot_symbols)
    cols = []
    for p in range(w):
        cols.append(np.stack([d.pilot_symbols[p] for d in decoded], axis=1))
    cols.append(np.stack([d.data_symbols for d in decoded], axis=1))
    return cols


def data_aided_ce(
    original_grid: RxGrid,
    decoded: list[UeTransmission],
    per_block: bool = False,
) -> np.ndarray | None:
    """Joint LS re-estimation of all decoded users from their full codewords.

    Solves ``min || y - D h ||`` over the original (uncancelled) grid, where D
    stacks every decoded user's known pilot and data symbols. Returns gains of
    shape (n_blocks, n_users, n_rx); with ``per_block`` each block is solved
    separately (rank-deficient blocks fall back to the joint flat solution).
    Returns None when the joint system itself is rank deficient.
    """
    if not decoded:
        raise ValueError("need at least one decoded user")
    blocks = list(original_grid.pilot_blocks) + [original_grid.data_block]
    design = _design_columns(decoded)
    n_users = len(decoded)
    n_blocks = len(blocks)
    n_rx = original_grid.data_block.shape[1]

    d_all = np.concatenate(design, axis=0)
    y_all = np.concatenate(blocks, axis=0)
    flat, _, rank, _ = np.linalg.lstsq(d_all, y_all, rcond=None)
    if rank < n_users:
        return None
    gains = np.broadcast_to(flat, (n_blocks, n_users, n_rx)).copy()
    if per_block:
        for b in range(n_blocks):
            sol, _, rank_b, _ = np.linalg.lstsq(design[b], blocks[b], rcond=None)
            if rank_b == n_users:
                gains[b] = sol
    return gains


def _rebuild_residual(
    original: RxGrid,
    decoded: list[UeTransmission],
    gains: np.ndarray,
) -> RxGrid:
    """Original grid minus every decoded user at the supplied gains."""
    out = original.copy()
    w = len(out.pilot_blocks)
    for q, d in enumerate(decoded):
        for p in range(w):
            out.pilot_blocks[p] -= np.outer(d.pilot_symbols[p], gains[p, q])
        out.data_block -= np.outer(d.data_symbols, gains[w, q])
    return out


class _ReceiverState:
    """Bookkeeping shared by the serial and parallel procedures."""

    def __init__(
        self,
        grid: RxGrid,
        config: ResourceConfig,
        pool: PilotPool,
        options: RxOptions,
        n_info_bits: int,
        per_block_ce: bool,
    ):
        self.original = grid
        self.residual = grid.copy()
        self.config = config
        self.pool = pool
        self.options = options
        self.n_info_bits = n_info_bits
        self.per_block_ce = per_block_ce
        self.decoded: list[DecodedUe] = []
        self.seen_payloads: set[bytes] = set()
        self.attempts = 0
        self.events = AudEvents()
        self._tried: dict[tuple, float] = {}
        # CRC-valid decodes parked by the anchor-consistency check: payload
        # bytes -> (payload, selection, anchor detection). Re-validated against
        # later residuals at zero decode-attempt cost.
        self.parked: dict[bytes, tuple[np.ndarray, PilotSelection, Detection]] = {}

    def worth_trying(self, key: tuple, post_sinr: float, floor: float) -> bool:
        """Spend a decode attempt only when it can plausibly succeed.

        The decode waterfall is effectively zero below an SINR floor, and a
        detection that already failed is only worth retrying once
        cancellations moved its stream materially. The key carries the
        detection metric so that the surviving half of a resolved collision
        (same index, new residual pilot energy) is treated as a fresh stream.
        """
        if post_sinr < floor:
            return False
        last = self._tried.get(key)
        if last is not None and post_sinr <= last * _RETRY_SINR_MARGIN:
            return False
        self._tried[key] = post_sinr
        return True

    def detect(self, block: int) -> DetectionRound:
        return detect_active_pilots(
            self.residual.pilot_blocks[block],
            self.pool,
            self.residual.noise_var,
            self.options.aud_gamma,
            self.config.pilot_amplitude,
            block,
        )

    def capture_suspect(
        self, payload: np.ndarray, det: Detection, data_block: np.ndarray
    ) -> bool:
        """Flag a decode whose data-aided refit contradicts its anchor.

        Correlating a pilot sequence over a collision returns the *sum* of the
        collided channels, yet the equalized stream built on that composite can
        still decode its dominant member. A least-squares refit against the
        decoded user's own symbols recovers that member's channel alone, so an
        anchor that disagrees with the refit by a non-noise power fraction
        exposes the capture. Only meaningful when pilot and data blocks share
        one coherent channel, hence skipped under per-block estimation.
        """
        if self.per_block_ce:
            return False
        recon = tx.build_ue_transmission(-1, payload, self.config, self.pool)
        s = recon.data_symbols
        h_fit = data_block.T @ s.conj() / float(np.real(np.vdot(s, s)))
        delta = det.estimate.gains - h_fit
        scale = float(np.real(np.vdot(h_fit, h_fit)))
        scale += data_block.shape[1] * self.residual.noise_var
        mismatch = float(np.real(np.vdot(delta, delta))) / max(scale, 1e-300)
        return mismatch > _ANCHOR_MISMATCH_MAX

    def try_stream(
        self,
        stream: EqualizedStream,
        det: Detection,
        extra_pairs: list[tuple[int, int]] | None = None,
    ) -> tuple[bool, np.ndarray | None, PilotSelection | None]:
        self.attempts += 1
        pairs = [(det.estimate.block, det.index)] + (extra_pairs or [])
        soft = _descrambled_soft(stream.soft_symbols, pairs, self.config.layout.w)
        ok, payload, selection = attempt_decode(
            soft, 1.0, stream.post_sinr, self.config.layout, self.n_info_bits
        )
        if not ok:
            return False, None, None
        if selection.indices[det.estimate.block] != det.index:
            self.events.consistency_rejections += 1
            return False, None, None
        return True, payload, selection

    def accept(
        self,
        payload: np.ndarray,
        selection: PilotSelection,
        det: Detection,
        round_index: int,
        cancel_gains: np.ndarray,
    ) -> None:
        recon = tx.build_ue_transmission(-1, payload, self.config, self.pool)
        self.decoded.append(
            DecodedUe(
                payload=payload,
                selection=selection,
                round_index=round_index,
                block=det.estimate.block,
                pilot_index=det.index,
                metric=det.metric,
                transmission=recon,
                estimate=det.estimate,
            )
        )
        self.seen_payloads.add(payload.tobytes())
        self.parked.pop(payload.tobytes(), None)
        if self.options.ic_ce_mode is CeMode.DATA_AIDED:
            self._refit_and_rebuild()
        else:
            self.residual = cancel_user(self.residual, recon, cancel_gains)

    def _refit_and_rebuild(self) -> None:
        recons = [d.transmission for d in self.decoded]
        gains = data_aided_ce(self.original, recons, self.per_block_ce)
        if gains is None:
            # rank-deficient joint system: fall back to pilot-based cancellation
            self.residual = self.original.copy()
            for d in self.decoded:
                self.residual = cancel_user(self.residual, d.transmission, d.estimate.gains)
            return
        self.residual = _rebuild_residual(self.original, recons, gains)


def _rescue_pass(state: _ReceiverState, rnd: int, capped: bool) -> int:
    """Stall recovery through cross-block descrambling hypotheses.

    A single detection descrambles only 1/w of the data block, which costs
    3 dB of combining at w = 2 and occasionally leaves every remaining stream
    just under the decode threshold. The stalled user's other pilot indices
    are not known, but they must be among the detections of the other blocks,
    so the anchor detection is retried against each of those candidates with
    both segments descrambled. ``capped`` selects whether the anchors are the
    single-user-consistent streams or the collision composites (see
    ``_run_serial``). Stops at the first accepted decode so the normal
    (cheaper) rounds take over again.
    """
    w = state.config.layout.w
    if w < 2:
        return 0
    per_block = [state.detect(block).detections for block in range(w)]
    for block in range(w):
        dets = per_block[block]
        if not dets:
            continue
        streams = mmse_equalize(
            state.residual.data_block,
            [d.estimate for d in dets],
            state.residual.noise_var,
        )
        for det, stream in zip(dets, streams):
            if (stream.post_sinr >= _POST_SINR_MAX) != capped:
                continue
            for other in range(w):
                if other == block:
                    continue
                for cand in per_block[other]:
                    # no metric in the key: a hypothesis pair names the same
                    # target user no matter how cancellations move the anchor,
                    # so a retry must show the 10 % stream improvement rather
                    # than re-qualifying at the floor on every fresh metric
                    key = ("rescue", block, det.index, other, cand.index)
                    if not state.worth_trying(
                        key, stream.post_sinr, _MIN_RESCUE_ATTEMPT_SINR
                    ):
                        continue
                    ok, payload, selection = state.try_stream(
                        stream, det, extra_pairs=[(other, cand.index)]
                    )
                    if not ok:
                        continue
                    if payload.tobytes() in state.seen_payloads:
                        state.events.duplicate_decodes += 1
                        continue
                    if not capped and state.capture_suspect(
                        payload, det, state.residual.data_block
                    ):
                        continue
                    state.accept(payload, selection, det, rnd, det.estimate.gains)
                    return 1
    return 0



def _run_serial(state: _ReceiverState) -> int:
    w = state.config.layout.w
    rounds_run = 0
    for rnd in range(1, state.options.max_rounds + 1):
        rounds_run = rnd
        new_this_round = 0
        # Detections and the data block are snapshot at the round start: every
        # decode in the round works off the same evidence and cancellations
        # only feed the next round. A user freed by a mid-round cancellation
        # is therefore picked up one round later, not within the round.
        snapshot = [state.detect(block).detections for block in range(w)]
        data_block = state.residual.data_block.copy()
        noise_var = state.residual.noise_var
        equalized = []
        for block in range(w):
            dets = snapshot[block]
            streams = mmse_equalize(data_block, [d.estimate for d in dets], noise_var)
            equalized.append(list(zip(dets, streams)))
        # A post-SINR at the cap means mu > 1: the estimate explains more
        # power than one stream can carry, i.e. it is a collision composite.
        # Those are only worth decoding (capturing the dominant member) once
        # the single-user streams are exhausted. Composites whose members sum
        # destructively slip under the cap, so uncapped decodes that fail the
        # anchor-consistency check are parked instead of accepted; a parked
        # payload is accepted without redecoding once a cancellation turns one
        # of its anchors clean, or drained with the composites on a stall.
        claimed: set[tuple[int, int]] = set()
        for pay_key, (payload, selection, _) in list(state.parked.items()):
            for block in range(w):
                match = next(
                    (
                        ds
                        for ds in equalized[block]
                        if ds[0].index == selection.indices[block]
                    ),
                    None,
                )
                if match is None or (block, match[0].index) in claimed:
                    continue
                if state.capture_suspect(payload, match[0], data_block):
                    continue
                state.accept(payload, selection, match[0], rnd, match[0].estimate.gains)
                claimed.update(enumerate(selection.indices))
                new_this_round += 1
                break
        # pairs owned by still-parked payloads would only re-decode the same
        # codeword, so they are off limits until the stall drain
        claimed.update(
            (b, i)
            for _, sel, _ in state.parked.values()
            for b, i in enumerate(sel.indices)
        )

        def attempt_streams(capped_pass: bool) -> int:
            got = 0
            for block in range(w):
                for det, stream in equalized[block]:
                    if (stream.post_sinr >= _POST_SINR_MAX) != capped_pass:
                        continue
                    if (block, det.index) in claimed:
                        continue
                    key = ("round", block, det.index, det.metric)
                    if not state.worth_trying(
                        key, stream.post_sinr, _MIN_SEGMENT_ATTEMPT_SINR
                    ):
                        continue
                    ok, payload, selection = state.try_stream(stream, det)
                    if not ok:
                        continue
                    pay_key = payload.tobytes()
                    if pay_key in state.seen_payloads:
                        state.events.duplicate_decodes += 1
                        continue
                    if not capped_pass and state.capture_suspect(payload, det, data_block):
                        if pay_key in state.parked:
                            state.events.duplicate_decodes += 1
                        else:
                            state.parked[pay_key] = (payload, selection, det)
                        claimed.update(enumerate(selection.indices))
                        continue
                    state.accept(payload, selection, det, rnd, det.estimate.gains)
                    claimed.update(enumerate(selection.indices))
                    got += 1
            return got

        new_this_round += attempt_streams(capped_pass=False)
        # Stall ladder, cheapest certain progress first: parked payloads are
        # already CRC-valid and cost nothing, then the rescue scan over
        # single-user anchors, then capture attempts on the composites, and
        # only then rescue over the composites themselves.
        if new_this_round == 0:
            for pay_key, (payload, selection, det) in list(state.parked.items()):
                state.accept(payload, selection, det, rnd, det.estimate.gains)
                new_this_round += 1
        if new_this_round == 0:
            new_this_round += _rescue_pass(state, rnd, capped=False)
        if new_this_round == 0:
            new_this_round += attempt_streams(capped_pass=True)
        if new_this_round == 0:
            new_this_round += _rescue_pass(state, rnd, capped=True)
        if new_this_round == 0:
            break
    # a stalled round drains every parked decode before breaking, so only a
    # round-budget exhaustion can leave validated payloads behind
    for payload, selection, det in list(state.parked.values()):
        state.accept(payload, selection, det, rounds_run, det.estimate.gains)
    return rounds_run


def _run_parallel(state: _ReceiverState) -> int:
    w = state.config.layout.w
    rounds_run = 0
    for rnd in range(1, state.options.max_rounds + 1):
        rounds_run = rnd
        dets = [d for block in range(w) for d in state.detect(block).detections]
        dets.sort(key=lambda d: d.metric, reverse=True)
        new_this_round = 0
        if dets:
            streams = mmse_equalize(
                state.residual.data_block,
                [d.estimate for d in dets],
                state.residual.noise_var,
            )
            accepted: dict[bytes, tuple[np.ndarray, PilotSelection, list[Detection]]] = {}
            # parked payloads ride along for free once an anchor comes clean
            for pay_key, (payload, selection, _) in list(state.parked.items()):
                match = next(
                    (
                        d
                        for d in dets
                        if d.index == selection.indices[d.estimate.block]
                        and not state.capture_suspect(
                            payload, d, state.residual.data_block
                        )
                    ),
                    None,
                )
                if match is not None:
                    accepted[pay_key] = (payload, selection, [match])
            # decode the whole union first, reconcile duplicates at cancellation
            for capped_pass in (False, True):
                if capped_pass:
                    if accepted:
                        break
                    # no clean decode anywhere: let the parked captures through
                    accepted.update(
                        (k, (p, s, [d])) for k, (p, s, d) in state.parked.items()
                    )
                for det, stream in zip(dets, streams):
                    if (stream.post_sinr >= _POST_SINR_MAX) != capped_pass:
                        continue
                    key = ("round", det.estimate.block, det.index, det.metric)
                    if not state.worth_trying(
                        key, stream.post_sinr, _MIN_SEGMENT_ATTEMPT_SINR
                    ):
                        continue
                    ok, payload, selection = state.try_stream(stream, det)
                    if not ok:
                        continue
                    pay_key = payload.tobytes()
                    if pay_key in state.seen_payloads:
                        state.events.duplicate_decodes += 1
                        continue
                    if pay_key in accepted:
                        state.events.duplicate_decodes += 1
                        accepted[pay_key][2].append(det)
                        continue
                    suspect = not capped_pass and state.capture_suspect(
                        payload, det, state.residual.data_block
                    )
                    if pay_key in state.parked:
                        state.events.duplicate_decodes += 1
                        if not suspect:
                            accepted[pay_key] = (payload, selection, [det])
                    elif suspect:
                        state.parked[pay_key] = (payload, selection, det)
                    else:
                        accepted[pay_key] = (payload, selection, [det])
            for payload, selection, group in accepted.values():
                best = max(group, key=lambda d: d.metric)
                if (
                    state.options.duplicate_policy is DuplicatePolicy.AVERAGE
                    and len(group) > 1
                ):
                    gains = np.mean([d.estimate.gains for d in group], axis=0)
                else:
                    gains = best.estimate.gains
                state.accept(payload, selection, best, rnd, gains)
                new_this_round += 1
        if new_this_round == 0:
            for capped_pass in (False, True):
                new_this_round += _rescue_pass(state, rnd, capped_pass)
                if new_this_round:
                    break
        if new_this_round == 0:
            break
    for payload, selection, det in list(state.parked.values()):
        state.accept(payload, selection, det, rounds_run, det.estimate.gains)
    return rounds_run


def run_receiver(
    rx_grid: RxGrid,
    config: ResourceConfig,
    pool: PilotPool,
    options: RxOptions | None = None,
    n_info_bits: int | None = None,
    per_block_ce: bool = False,
) -> DecodeReport:
    """Run the blind detection/equalization/decoding/cancellation loop.

    Serial sweeps pilot blocks one at a time, cancelling immediately after
    each accepted decode; parallel detects on every block, decodes the union
    against the round-start residual, and cancels at the end of the round.
    Iteration stops after a full round with no new decode, or after
    ``max_rounds``.

    Parameters
    ----------
    n_info_bits:
        Encoder input length (payload + CRC). Defaults to the desk-scale
        160-bit transport block plus CRC.
    per_block_ce:
        Use per-block LS in data-aided mode (for per-block fading channels).
    """
    opts = options or RxOptions()
    if opts.max_rounds < 1:
        raise ValueError("max_rounds must be positive")
    n_info = n_info_bits if n_info_bits is not None else 160 + codec.CRC16_BITS
    state = _ReceiverState(rx_grid, config, pool, opts, n_info, per_block_ce)
    initial = [
        [d.index for d in state.detect(block).detections]
        for block in range(config.layout.w)
    ]
    if opts.procedure is Procedure.SERIAL:
        rounds = _run_serial(state)
    else:
        rounds = _run_parallel(state)
    return DecodeReport(
        decoded=state.decoded,
        decode_attempts=state.attempts,
        rounds_run=rounds,
        aud_events=state.events,
        initial_detections=initial,
    )
