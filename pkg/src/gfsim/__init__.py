"""Link-level simulator for contention-based grant-free uplink access.

Compares the traditional single-pilot scheme (one long orthogonal pilot per
user) against independent multi-pilot access (several short pilots whose
indices are derived from the user's own codeword), with a blind MMSE-IC
receiver that detects, equalizes, decodes, and cancels until nothing new
decodes.
"""

from .channel import ChannelMode, ChannelRealization, RxGrid, apply_channel, draw_channel
from .codec import crc16_attach, crc16_check, fec_decode, fec_encode, qpsk_llr, qpsk_modulate
from .config import ConfigError, SchemeSpec, SimConfig, load_config, parse_config
from .pilots import (
    CollisionEvent,
    PilotLayout,
    PilotPool,
    PilotSelection,
    Scheme,
    imp_pairwise_collision_probability,
    make_pilot_pool,
    random_pilot_selection,
    simulate_collision_probability,
    tsp_collision_probability,
)
from .rx import (
    DEFAULT_AUD_GAMMA,
    CeMode,
    ChannelEstimate,
    DecodeReport,
    DuplicatePolicy,
    Procedure,
    RxOptions,
    attempt_decode,
    cancel_user,
    data_aided_ce,
    detect_active_pilots,
    mmse_equalize,
    run_receiver,
)
from .sim import DropResult, MetricsRow, run_campaign, run_drop, write_results
from .tx import (
    ResourceConfig,
    UeTransmission,
    build_ue_transmission,
    data_segment_bounds,
    descramble_segment,
    scramble_codeword,
    select_pilots_from_codeword,
)

__version__ = "0.1.0"
