import math

import numpy as np
import pytest

from gfsim import (
    CollisionEvent,
    PilotLayout,
    Scheme,
    imp_pairwise_collision_probability,
    make_pilot_pool,
    random_pilot_selection,
    simulate_collision_probability,
    tsp_collision_probability,
)


def test_pool_sequences_are_orthogonal():
    for n in (4, 8, 12, 24):
        pool = make_pilot_pool(n)
        assert pool.sequences.shape == (n, n)
        gram = pool.sequences @ pool.sequences.conj().T
        assert np.allclose(gram, n * np.eye(n), atol=1e-10)
        # constant modulus keeps the per-RE power budget flat
        assert np.allclose(np.abs(pool.sequences), 1.0)


def test_tsp_collision_closed_form_matches_counting():
    # P(no collision among K users on N pilots) = N!/(N-K)! / N^K
    for n, k in [(4, 2), (6, 3), (12, 4), (24, 6)]:
        p_free = math.perm(n, k) / n**k
        assert tsp_collision_probability(n, k) == pytest.approx(1.0 - p_free, rel=1e-12)
    assert tsp_collision_probability(12, 0) == 0.0
    assert tsp_collision_probability(12, 1) == 0.0
    assert tsp_collision_probability(3, 4) == 1.0  # pigeonhole


def test_imp_two_user_product_form():
    # two users share all w pilots only if every independent block collides
    for n, w in [(12, 2), (8, 3), (6, 2)]:
        assert imp_pairwise_collision_probability(n, w, 2) == pytest.approx(
            (1.0 / n) ** w, rel=1e-12
        )


def test_imp_vs_tsp_ratio_for_pair():
    # same total pilot budget: TSP pool 2N vs two length-N blocks
    n = 12
    tsp = tsp_collision_probability(2 * n, 2)
    imp = imp_pairwise_collision_probability(n, 2, 2)
    assert imp / tsp == pytest.approx(4.0 / (2 * n), rel=1e-12)


def test_imp_collision_probability_union_bound_shape():
    # grows with K, shrinks with N and w
    p = imp_pairwise_collision_probability
    assert p(12, 2, 4) > p(12, 2, 3) > p(12, 2, 2)
    assert p(12, 2, 4) > p(24, 2, 4)
    assert p(12, 3, 4) < p(12, 2, 4)


def test_monte_carlo_matches_closed_form_tsp():
    layout = PilotLayout.tsp(24)
    p_hat, se = simulate_collision_probability(
        layout, 4, CollisionEvent.ANY_TSP_COLLISION, n_trials=40_000, seed=5
    )
    p = tsp_collision_probability(24, 4)
    assert abs(p_hat - p) < 4 * se + 1e-9
    assert 0.0 < se < 0.01


def test_monte_carlo_matches_closed_form_imp_pair():
    layout = PilotLayout.imp(24, 2)
    p_hat, se = simulate_collision_probability(
        layout, 2, CollisionEvent.ANY_PAIR_ALL_PILOTS, n_trials=200_000, seed=6
    )
    p = imp_pairwise_collision_probability(12, 2, 2)
    assert abs(p_hat - p) < 4 * se + 1e-9


def test_random_selection_uniform_over_blocks():
    layout = PilotLayout.imp(24, 2)
    rng = np.random.default_rng(11)
    counts = np.zeros((2, 12), dtype=int)
    n = 6_000
    for _ in range(n):
        sel = random_pilot_selection(layout, rng)
        assert len(sel.indices) == 2
        for b, idx in enumerate(sel.indices):
            counts[b, idx] += 1
    # each index should land near n/12; 5 sigma of a binomial
    expect = n / 12
    sigma = math.sqrt(n * (1 / 12) * (11 / 12))
    assert np.all(np.abs(counts - expect) < 5 * sigma)


def test_layout_validation():
    layout = PilotLayout.imp(24, 2)
    assert layout.block_length == 12
    assert PilotLayout.tsp(24).block_length == 24
    with pytest.raises(ValueError):
        PilotLayout(Scheme.IMP, 24, 5).validate()  # 24 not divisible by 5
    with pytest.raises(ValueError):
        PilotLayout(Scheme.TSP, 24, 2).validate()
