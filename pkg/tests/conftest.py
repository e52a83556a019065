import numpy as np
import pytest

from gfsim import (
    ChannelMode,
    PilotLayout,
    ResourceConfig,
    apply_channel,
    build_ue_transmission,
    draw_channel,
    make_pilot_pool,
    select_pilots_from_codeword,
)


@pytest.fixture
def tsp_resource():
    return ResourceConfig(layout=PilotLayout.tsp(24), n_rx=4)


@pytest.fixture
def imp2_resource():
    return ResourceConfig(layout=PilotLayout.imp(24, 2), n_rx=4)


def payload_with_selection(resource, pool, targets, rng, n_info=176):
    """Draw random payloads until the codeword-derived pilot selection hits
    ``targets``; lets tests stage specific collision patterns."""
    for _ in range(200_000):
        payload = rng.integers(0, 2, n_info - 16).astype(np.uint8)
        tx = build_ue_transmission(0, payload, resource, pool)
        if tuple(tx.selection.indices) == tuple(targets):
            return payload
    raise RuntimeError(f"no payload found for selection {targets}")


def received(txs, resource, snr_db, rng, mode=ChannelMode.FLAT):
    ch = draw_channel(len(txs), resource, mode, rng)
    return apply_channel(txs, ch, snr_db, rng), ch
