"""Tests for the deterministic random streams."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from clickdr.rng import SplitMix64, fnv1a64, seed_derive, uniform_block


def test_splitmix_reference_sequence():
    # first outputs of SplitMix64 for seed 0, widely published
    g = SplitMix64(0)
    assert g.next_u64() == 0xE220A8397B1DCDAF
    assert g.next_u64() == 0x6E789E6AA1B965F4
    assert g.next_u64() == 0x06C45D188009454F


def test_fnv1a64_reference_values():
    # standard FNV-1a 64-bit test vectors
    assert fnv1a64("") == 0xCBF29CE484222325
    assert fnv1a64("a") == 0xAF63DC4C8601EC8C
    assert fnv1a64("foobar") == 0x85944171F73967E8


def test_uniform_in_unit_interval():
    g = SplitMix64(1234)
    draws = [g.uniform() for _ in range(1000)]
    assert all(0.0 <= u < 1.0 for u in draws)
    assert 0.4 < np.mean(draws) < 0.6


def test_seed_derive_is_stable():
    a = seed_derive(7, "q1", 3)
    b = seed_derive(7, "q1", 3)
    assert a == b
    assert 0 <= a < 2 ** 64


def test_seed_derive_distinguishes_inputs():
    # note the mixing input is master XOR hash(qid) XOR session, so
    # (master=0, session=1) and (master=1, session=0) collide by design;
    # distinctness is only expected across sessions, queries and unrelated seeds
    seeds = {
        seed_derive(0, "q1", 0),
        seed_derive(0, "q1", 1),
        seed_derive(0, "q1", 2),
        seed_derive(0, "q2", 0),
        seed_derive(7, "q1", 0),
    }
    assert len(seeds) == 5


@given(st.integers(min_value=0, max_value=2 ** 64 - 1))
def test_scalar_stream_is_reproducible(seed):
    g1 = SplitMix64(seed)
    g2 = SplitMix64(seed)
    assert [g1.next_u64() for _ in range(5)] == [g2.next_u64() for _ in range(5)]


@settings(max_examples=50)
@given(
    st.lists(st.integers(min_value=0, max_value=2 ** 64 - 1), min_size=1, max_size=8),
    st.integers(min_value=1, max_value=30),
)
def test_uniform_block_matches_scalar_bit_for_bit(seeds, n_draws):
    block = uniform_block(np.array(seeds, dtype=np.uint64), n_draws)
    for i, seed in enumerate(seeds):
        g = SplitMix64(seed)
        expected = [g.uniform() for _ in range(n_draws)]
        assert block[i].tolist() == expected


def test_uniform_block_shape():
    out = uniform_block(np.array([1, 2, 3], dtype=np.uint64), 7)
    assert out.shape == (3, 7)
