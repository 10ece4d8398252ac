import itertools
import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy.stats import chisquare

from tamperbias.space import (
    BlockDomain,
    NotEnumerableError,
    ProductSpace,
    SupportCapExceeded,
    derive_rng,
    explicit,
    hamming,
    power,
    sampler_space,
    uniform_bits,
    uniform_ints,
)


def test_uniform_bit_block_is_fair(rng):
    space = uniform_bits(3)
    draws = [space.sample_block(2, rng) for _ in range(20_000)]
    counts = np.bincount(draws, minlength=2)
    assert chisquare(counts).pvalue > 1e-3


def test_point_mass_block_always_returns_its_value(rng):
    space = explicit([[(7, 1.0)]])
    assert {space.sample_block(1, rng) for _ in range(100)} == {7}


def test_weighted_block_frequency(rng):
    space = explicit([[("a", 0.25), ("b", 0.75)]])
    draws = space.sample_batch(rng, 100_000)[:, 0]
    assert abs(np.mean(draws == "b") - 0.75) <= 0.01


def test_sample_block_index_is_one_based(rng):
    space = uniform_bits(2)
    with pytest.raises(IndexError):
        space.sample_block(0, rng)
    with pytest.raises(IndexError):
        space.sample_block(3, rng)


def test_sample_full_two_bits_is_uniform_over_four_tuples(rng):
    rows = uniform_bits(2).sample_batch(rng, 100_000)
    codes = rows[:, 0] * 2 + rows[:, 1]
    freq = np.bincount(codes, minlength=4) / len(codes)
    assert np.all(np.abs(freq - 0.25) <= 0.01)


def test_sample_full_point_masses_and_empty(rng):
    assert explicit([[(3, 1.0)], [("z", 1.0)]]).sample_full(rng) == (3, "z")
    assert uniform_bits(0).sample_full(rng) == ()


def test_coordinates_uncorrelated(rng):
    rows = uniform_bits(4).sample_batch(rng, 100_000).astype(float)
    cov = np.cov(rows.T)
    off = cov[~np.eye(4, dtype=bool)]
    assert np.all(np.abs(off) <= 0.02)


def test_sample_full_values_lie_in_support(rng):
    space = explicit([[(1, 0.5), (5, 0.5)], [("x", 0.1), ("y", 0.9)]])
    for _ in range(200):
        assert space.contains(space.sample_full(rng))


def test_same_seed_same_samples():
    space = uniform_ints(5, 7)
    a = [space.sample_full(derive_rng(9, "s")) for _ in range(3)]
    b = [space.sample_full(derive_rng(9, "s")) for _ in range(3)]
    assert a == b
    c = space.sample_batch(derive_rng(9, "other"), 50)
    d = space.sample_batch(derive_rng(9, "s"), 50)
    assert not np.array_equal(c, d)


def test_enumerate_three_bits():
    items = list(uniform_bits(3).enumerate_support())
    assert len(items) == 8
    assert len({t for t, _ in items}) == 8
    assert all(p == pytest.approx(1 / 8) for _, p in items)


def test_enumerate_bit_times_point_mass():
    items = list(explicit([[(0, 0.5), (1, 0.5)], [("a", 1.0)]]).enumerate_support())
    assert items == [((0, "a"), 0.5), ((1, "a"), 0.5)]


def test_enumerate_product_probability():
    space = explicit([[("a", 0.25), ("b", 0.75)]] * 2)
    probs = dict(space.enumerate_support())
    assert probs[("b", "b")] == pytest.approx(0.5625)
    assert sum(probs.values()) == pytest.approx(1.0, abs=1e-9)


def test_enumerate_counts_product_of_supports():
    space = ProductSpace((BlockDomain(values=(0, 1, 2)), BlockDomain(values=("p", "q")), BlockDomain(values=(9,))))
    assert len(list(space.enumerate_support())) == 6 == space.support_size()
    assert space.support_array().shape == (6, 3)


def test_enumerate_errors():
    with pytest.raises(NotEnumerableError):
        list(sampler_space(2, lambda r: 0, 1).enumerate_support())
    with pytest.raises(SupportCapExceeded):
        list(uniform_bits(10).enumerate_support(cap=100))


def test_block_weight_validation():
    with pytest.raises(ValueError):
        BlockDomain(values=(0, 1), weights=(0.6, 0.6))
    with pytest.raises(ValueError):
        BlockDomain(values=(0, 1), weights=(1.5, -0.5))
    with pytest.raises(ValueError):
        BlockDomain(values=(0, 0))
    with pytest.raises(ValueError):
        BlockDomain()


def test_bit_length():
    assert uniform_bits(3).blocks[0].bit_length == 1
    assert uniform_ints(2, 256).blocks[0].bit_length == 8


def test_power_space_blocks_are_instances():
    sq = power(uniform_bits(2), 3)
    assert sq.n == 3 and sq.blocks[0].size == 4
    assert sq.blocks[0].values[3] == (1, 1)


@pytest.mark.parametrize("u,v,d", [((0, 1, 1), (0, 1, 1), 0), ((0, 0, 0), (1, 1, 1), 3), ((0, 1, 0, 1), (0, 0, 0, 0), 2)])
def test_hamming_examples(u, v, d):
    assert hamming(u, v) == d


def test_hamming_length_mismatch():
    with pytest.raises(ValueError):
        hamming((0, 1), (0,))


vectors = st.integers(1, 8).flatmap(lambda n: st.tuples(*[st.lists(st.integers(0, 2), min_size=n, max_size=n)] * 3))


@given(vectors)
def test_hamming_is_a_metric(triple):
    u, v, w = triple
    assert hamming(u, v) == hamming(v, u)
    assert (hamming(u, v) == 0) == (u == v)
    assert hamming(u, w) <= hamming(u, v) + hamming(v, w)


@given(st.lists(st.lists(st.floats(0.01, 1.0), min_size=1, max_size=3), min_size=1, max_size=4))
def test_enumerated_probabilities_sum_to_one(raw):
    blocks = [[(j, w / sum(ws)) for j, w in enumerate(ws)] for ws in raw]
    space = explicit(blocks)
    items = list(space.enumerate_support())
    assert len(items) == math.prod(len(ws) for ws in raw)
    assert sum(p for _, p in items) == pytest.approx(1.0, abs=1e-9)
    assert len({t for t, _ in items}) == len(items)
    assert set(t for t, _ in items) == set(itertools.product(*[range(len(ws)) for ws in raw]))
