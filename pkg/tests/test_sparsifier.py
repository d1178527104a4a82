from itertools import combinations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from otafl import (
    AGEK,
    AGETOPK,
    RANDOMK,
    RTOPK,
    TOPK,
    STRATEGY_KINDS,
    ConfigurationError,
    SparseMask,
    compression_error,
    full_mask,
    gamma_of,
    gen_bounded_ratio_vector,
    make_strategy,
    select,
    select_top_k_by_age,
    select_top_r,
)

G_HAND = np.array([5.0, -3.0, 0.5, 2.0, -1.0])


# ---------------------------- stage one ---------------------------- #

def test_top_r_hand_example():
    np.testing.assert_array_equal(select_top_r(G_HAND, 3), [0, 1, 3])


def test_top_r_all_zero_ties_to_low_index():
    np.testing.assert_array_equal(select_top_r(np.zeros(5), 2), [0, 1])


def test_top_r_full():
    np.testing.assert_array_equal(select_top_r(G_HAND, 5), np.arange(5))


def test_top_r_range_check():
    with pytest.raises(ConfigurationError):
        select_top_r(G_HAND, 0)
    with pytest.raises(ConfigurationError):
        select_top_r(G_HAND, 6)


def test_top_r_magnitude_tie_low_index_wins():
    np.testing.assert_array_equal(select_top_r(np.array([2.0, -2.0, 3.0]), 2), [0, 2])


# ---------------------------- stage two ---------------------------- #

def test_age_selection_hand_example():
    ages = np.array([0, 2, 9, 3, 9])  # entries at 2 and 4 are outside the shortlist
    mask = select_top_k_by_age(np.array([0, 1, 3]), ages, G_HAND, 2)
    np.testing.assert_array_equal(mask.indices, [1, 3])


def test_age_tie_breaks_by_magnitude():
    mask = select_top_k_by_age(np.array([0, 1, 3]), np.zeros(5, dtype=int), G_HAND, 2)
    np.testing.assert_array_equal(mask.indices, [0, 1])


def test_age_selection_keeps_whole_shortlist_when_k_matches():
    s_r = np.array([1, 2, 4])
    mask = select_top_k_by_age(s_r, np.array([5, 0, 1, 2, 3]), G_HAND, 3)
    np.testing.assert_array_equal(mask.indices, s_r)


def test_age_selection_k_too_large():
    with pytest.raises(ConfigurationError):
        select_top_k_by_age(np.array([0, 1]), np.zeros(5, dtype=int), G_HAND, 3)


# ---------------------------- strategies ---------------------------- #

def test_strategy_normalization():
    assert make_strategy(TOPK, d=10, k=3).r == 3
    assert make_strategy(AGEK, d=10, k=3).r == 10
    assert make_strategy(RANDOMK, d=10, k=3).r == 3
    with pytest.raises(ConfigurationError):
        make_strategy(AGETOPK, d=10, k=3)       # r required
    with pytest.raises(ConfigurationError):
        make_strategy(AGETOPK, d=10, k=5, r=3)  # k > r
    with pytest.raises(ConfigurationError):
        make_strategy("nope", d=10, k=3)


def test_agetopk_with_r_equal_k_reduces_to_topk():
    rng = np.random.default_rng(7)
    for _ in range(50):
        g = rng.normal(size=12)
        ages = rng.integers(0, 9, size=12)
        two_stage = select(make_strategy(AGETOPK, 12, k=4, r=4), g, ages, rng)
        magnitude = select(make_strategy(TOPK, 12, k=4), g, ages, rng)
        assert two_stage == magnitude


def test_agetopk_with_r_equal_d_reduces_to_agek():
    rng = np.random.default_rng(8)
    for _ in range(50):
        g = rng.normal(size=12)
        ages = rng.integers(0, 9, size=12)
        wide = select(make_strategy(AGETOPK, 12, k=4, r=12), g, ages, rng)
        age_only = select(make_strategy(AGEK, 12, k=4), g, ages, rng)
        assert wide == age_only


def test_randomk_subset_frequencies():
    # every 2-subset of {0..3} should appear with frequency ~1/6
    rng = np.random.default_rng(123)
    strategy = make_strategy(RANDOMK, d=4, k=2)
    counts = {frozenset(c): 0 for c in combinations(range(4), 2)}
    n = 10_000
    for _ in range(n):
        mask = select(strategy, np.zeros(4), np.zeros(4, dtype=int), rng)
        counts[frozenset(mask.indices.tolist())] += 1
    expected = n / 6
    sigma = np.sqrt(n * (1 / 6) * (5 / 6))
    for subset, count in counts.items():
        assert abs(count - expected) <= 3 * sigma, (subset, count)


def test_rtopk_samples_within_shortlist():
    rng = np.random.default_rng(5)
    strategy = make_strategy(RTOPK, d=10, k=2, r=4)
    g = np.array([9.0, 1.0, 8.0, 2.0, 7.0, 0.1, 6.0, 0.2, 0.3, 0.4])
    shortlist = set(select_top_r(g, 4).tolist())
    seen = set()
    for _ in range(200):
        mask = select(strategy, g, np.zeros(10, dtype=int), rng)
        assert set(mask.indices.tolist()) <= shortlist
        seen.update(mask.indices.tolist())
    assert seen == shortlist  # all candidates reachable


@given(
    d=st.integers(min_value=2, max_value=30),
    kind=st.sampled_from(STRATEGY_KINDS),
    seed=st.integers(min_value=0, max_value=2**31),
)
@settings(max_examples=150, deadline=None)
def test_every_strategy_returns_k_distinct_indices(d, kind, seed):
    rng = np.random.default_rng(seed)
    k = int(rng.integers(1, d + 1))
    r = int(rng.integers(k, d + 1))
    strategy = make_strategy(kind, d=d, k=k, r=r)
    g = rng.normal(size=d)
    ages = rng.integers(0, 20, size=d)
    mask = select(strategy, g, ages, rng)
    assert mask.k == k
    assert np.unique(mask.indices).size == k
    assert mask.indices.min() >= 0 and mask.indices.max() < d


def test_selection_deterministic_given_seed():
    for kind in STRATEGY_KINDS:
        strategy = make_strategy(kind, d=20, k=5, r=8)
        g = np.random.default_rng(1).normal(size=20)
        ages = np.random.default_rng(2).integers(0, 10, size=20)
        first = select(strategy, g, ages, np.random.default_rng(99))
        second = select(strategy, g, ages, np.random.default_rng(99))
        assert first == second


def test_agek_round_robin_periodicity():
    # from all-zero ages, age-only selection covers every index once per window
    d, k = 12, 3
    ages = np.zeros(d, dtype=int)
    g = np.random.default_rng(3).normal(size=d)
    strategy = make_strategy(AGEK, d=d, k=k)
    rng = np.random.default_rng(0)
    picks = []
    for _ in range(4 * (d // k)):
        mask = select(strategy, g, ages, rng)
        picks.append(mask.indices)
        ages = ages + 1
        ages[mask.indices] = 0
    window = d // k
    for w in range(0, len(picks), window):
        chosen = np.concatenate(picks[w:w + window])
        np.testing.assert_array_equal(np.sort(chosen), np.arange(d))


def test_agek_covers_everything_when_k_does_not_divide_d():
    # ceil(d/k) consecutive rounds still touch every coordinate at least once
    d, k = 11, 3
    ages = np.zeros(d, dtype=int)
    g = np.random.default_rng(4).normal(size=d)
    strategy = make_strategy(AGEK, d=d, k=k)
    rng = np.random.default_rng(0)
    picks = []
    for _ in range(30):
        mask = select(strategy, g, ages, rng)
        picks.append(set(mask.indices.tolist()))
        ages = ages + 1
        ages[mask.indices] = 0
    window = -(-d // k)
    for start in range(len(picks) - window):
        assert set().union(*picks[start:start + window]) == set(range(d))


# ---------------------------- quality formula ---------------------------- #

def test_gamma_lossless():
    assert gamma_of(8, 8, 8, 1.0).gamma == 1.0


def test_gamma_pure_topk():
    assert gamma_of(10, 2, 2, 3.0).gamma == pytest.approx(0.2)


def test_gamma_hand_example():
    assert gamma_of(10, 4, 2, 2.0).gamma == pytest.approx(1.0 / 6.0)


def test_gamma_validation():
    with pytest.raises(ConfigurationError):
        gamma_of(10, 4, 5, 2.0)
    with pytest.raises(ConfigurationError):
        gamma_of(10, 4, 2, 0.5)


# ---------------------------- bounded-ratio generator ---------------------------- #

def test_bounded_ratio_vector_beta_one_head_is_flat():
    rng = np.random.default_rng(0)
    v = gen_bounded_ratio_vector(20, 5, 1.0, rng)
    mags = np.sort(np.abs(v))[::-1]
    np.testing.assert_allclose(mags[:5], mags[0])


@pytest.mark.parametrize("beta", [1.0, 2.0, 5.0])
def test_bounded_ratio_vector_respects_beta(beta):
    rng = np.random.default_rng(11)
    for _ in range(1000):
        v = gen_bounded_ratio_vector(30, 6, beta, rng)
        mags = np.sort(np.abs(v))[::-1]
        assert mags[0] <= beta * mags[5] + 1e-12
        # tail entries never exceed the r-th largest magnitude
        assert mags[6:].max(initial=0.0) <= mags[5] + 1e-12


# ---------------------------- compression error ---------------------------- #

def test_compression_error_full_mask_is_zero():
    assert compression_error(full_mask(5), G_HAND) == 0.0


def test_compression_error_zero_vector():
    assert compression_error(SparseMask([0], 3), np.zeros(3)) == 0.0


def test_compression_error_hand_example():
    mask = SparseMask(select_top_r(G_HAND, 2), 5)
    assert compression_error(mask, G_HAND) == pytest.approx(5.25 / 39.25)


def test_topk_error_bounded_by_one_minus_k_over_d():
    rng = np.random.default_rng(42)
    d, k = 50, 10
    for _ in range(2000):
        g = rng.normal(size=d)
        mask = SparseMask(select_top_r(g, k), d)
        assert compression_error(mask, g) <= 1.0 - k / d + 1e-12


def test_agetopk_error_bounded_on_bounded_ratio_vectors():
    # selected entries sit in the magnitude shortlist, so retained energy is
    # at least k*m^2 against a total of at most r*(beta*m)^2 + (d-r)*m^2
    rng = np.random.default_rng(7)
    d, r, k, beta = 60, 12, 6, 2.0
    strategy = make_strategy(AGETOPK, d=d, k=k, r=r)
    limit = 1.0 - k / (r * beta**2 + d - r)
    for _ in range(2000):
        g = gen_bounded_ratio_vector(d, r, beta, rng)
        ages = rng.integers(0, 50, size=d)
        mask = select(strategy, g, ages, rng)
        assert compression_error(mask, g) <= limit + 1e-12
