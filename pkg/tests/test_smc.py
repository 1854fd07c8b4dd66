import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.stats import chisquare

from disagg.smc import (MODULUS, SCALE, aggregate, aggregate_raw, decode, encode, quantize, sigma, smc_sum,
                        smc_sum_scalar, split, sum_mod)


def test_encode_decode_round_trip():
    v = np.array([0.0, 1.5, -2.25, 1e6, -1e-7])
    assert decode(encode(v)) == pytest.approx(np.rint(v * SCALE) / SCALE, abs=0)
    assert encode([-1.0 / SCALE])[0] == MODULUS - 1


def test_encode_rejects_bad_values():
    with pytest.raises(ValueError):
        encode([np.inf])
    with pytest.raises(OverflowError):
        encode([2.0**60])


def test_modular_sum_wraps():
    w = np.array([MODULUS - 1, MODULUS - 2], dtype=np.uint64)
    assert sum_mod(np.stack([w, w])).tolist() == [MODULUS - 2, MODULUS - 4]


vectors = st.integers(1, 6).flatmap(
    lambda n: st.lists(st.lists(st.floats(-1e4, 1e4), min_size=3, max_size=3), min_size=n, max_size=n)
)


@settings(max_examples=200, deadline=None)
@given(vectors, st.integers(0, 2**32 - 1))
def test_secure_sum_equals_quantized_plain_sum(rows, seed):
    rngs = [np.random.default_rng([seed, n]) for n in range(len(rows))]
    got = smc_sum(rows, rngs)
    want = decode(sum_mod([encode(r) for r in rows]))
    assert np.array_equal(got, want)
    # same thing computed with python integers
    ints = [sum(int(round(r[t] * SCALE)) for r in rows) for t in range(3)]
    assert got.tolist() == [i / SCALE for i in ints]


def test_order_of_agents_does_not_matter():
    rows = np.random.default_rng(0).normal(size=(5, 4))
    a = smc_sum(rows, [np.random.default_rng(n) for n in range(5)])
    b = smc_sum(rows[::-1], [np.random.default_rng(10 + n) for n in range(5)])
    assert np.array_equal(a, b)


def test_single_agent_shares_its_own_encoding():
    rng = np.random.default_rng(0)
    (b,) = split([1.25], 1, rng)
    assert b.shares.tolist() == encode([1.25]).tolist()
    assert smc_sum_scalar([3.5], [rng]) == 3.5


def test_shares_sum_to_encoding():
    rng = np.random.default_rng(1)
    bundles = split([0.5, -3.0], 4, rng, sender=2)
    assert [b.receiver for b in bundles] == [0, 1, 2, 3] and all(b.sender == 2 for b in bundles)
    assert sum_mod([b.shares for b in bundles]).tolist() == encode([0.5, -3.0]).tolist()


def test_sigma_and_aggregate_guards():
    rng = np.random.default_rng(2)
    bundles = split([1.0], 2, rng)
    with pytest.raises(ValueError):
        sigma(0, bundles)
    s0, s1 = sigma(0, [bundles[0]]), sigma(1, [bundles[1]])
    assert aggregate([s0, s1], 2).tolist() == [1.0]
    with pytest.raises(ValueError):
        aggregate_raw([s0, s0])
    with pytest.raises(ValueError):
        aggregate_raw([s0], 2)


def test_range_check_scales_with_agent_count():
    rng = np.random.default_rng(0)
    split([1e11], 2, rng)
    with pytest.raises(OverflowError):
        split([1e11], 1000, rng)


def test_individual_shares_look_uniform():
    """Shares a single agent sends for a fixed secret: 64 equal bins of [0, M)."""
    rng = np.random.default_rng(123)
    draws = np.array([split([42.0], 3, rng)[1].shares[0] for _ in range(20000)], dtype=np.uint64)
    bins = np.bincount((draws >> np.uint64(55)).astype(int), minlength=64)
    assert chisquare(bins).pvalue > 0.001


def test_quantize_is_idempotent():
    v = np.random.default_rng(4).normal(size=10)
    assert np.array_equal(quantize(quantize(v)), quantize(v))
