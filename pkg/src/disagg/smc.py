"""Secure summation by additive secret sharing over fixed-point words modulo 2**61."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

SCALE_BITS = 20
SCALE = 1 << SCALE_BITS
MODULUS = 1 << 61
_M = np.uint64(MODULUS)


def encode(values) -> np.ndarray:
    """Reals to fixed-point words (two's-complement style modulo M)."""
    v = np.asarray(values, dtype=float)
    if not np.all(np.isfinite(v)):
        raise ValueError("cannot encode non-finite values")
    q = np.rint(v * SCALE)
    if np.any(np.abs(q) >= MODULUS // 4):
        raise OverflowError("value too large for the fixed-point range")
    return np.mod(q.astype(np.int64), MODULUS).astype(np.uint64)


def decode(raw) -> np.ndarray:
    r = np.asarray(raw, dtype=np.uint64).astype(np.int64)
    r = np.where(r >= MODULUS // 2, r - MODULUS, r)
    return r.astype(float) / SCALE


def quantize(values) -> np.ndarray:
    return decode(encode(values))


def add_mod(a, b) -> np.ndarray:
    """(a + b) mod M for words already below M (no uint64 overflow since M = 2**61)."""
    return (np.asarray(a, dtype=np.uint64) + np.asarray(b, dtype=np.uint64)) % _M


def sum_mod(words, axis: int = 0) -> np.ndarray:
    words = np.asarray(words, dtype=np.uint64)
    acc = np.zeros(np.delete(words.shape, axis), dtype=np.uint64)
    for w in np.moveaxis(words, axis, 0):
        acc = add_mod(acc, w)
    return acc


@dataclass(frozen=True)
class ShareBundle:
    sender: int
    receiver: int
    shares: np.ndarray  # uint64 words, one per coordinate


@dataclass(frozen=True)
class SigmaVector:
    owner: int
    values: np.ndarray


def check_range(values, n_agents: int) -> None:
    v = np.asarray(values, dtype=float)
    if np.any(np.abs(v) * SCALE >= MODULUS / (4 * n_agents)):
        raise OverflowError("value magnitude exceeds the secure-sum range for this many agents")


def split(x, n_agents: int, rng: np.random.Generator, sender: int = 0) -> list[ShareBundle]:
    """N share vectors: the first N-1 uniform on [0, M), the last fixing the sum to encode(x)."""
    x = np.atleast_1d(np.asarray(x, dtype=float))
    check_range(x, n_agents)
    target = encode(x)
    rand = rng.integers(0, MODULUS, size=(n_agents - 1, x.size), dtype=np.uint64)
    last = (target + (_M - sum_mod(rand) if n_agents > 1 else np.uint64(0))) % _M
    shares = list(rand) + [last]
    return [ShareBundle(sender, m, s) for m, s in enumerate(shares)]


def sigma(owner: int, bundles: list[ShareBundle]) -> SigmaVector:
    if any(b.receiver != owner for b in bundles):
        raise ValueError("bundle addressed to another agent")
    return SigmaVector(owner, sum_mod([b.shares for b in bundles]))


def aggregate_raw(sigmas: list[SigmaVector], n_agents: int | None = None) -> np.ndarray:
    owners = [s.owner for s in sigmas]
    if len(set(owners)) != len(owners):
        raise ValueError("duplicate sigma owner")
    if n_agents is not None and sorted(owners) != list(range(n_agents)):
        raise ValueError("missing sigma from some agent")
    return sum_mod([s.values for s in sigmas])


def aggregate(sigmas: list[SigmaVector], n_agents: int | None = None) -> np.ndarray:
    return decode(aggregate_raw(sigmas, n_agents))


def smc_sum(vectors, rngs) -> np.ndarray:
    """Run the whole exchange locally: returns the decoded aggregate of the rows of ``vectors``."""
    vectors = [np.atleast_1d(np.asarray(v, dtype=float)) for v in vectors]
    N = len(vectors)
    inbox: list[list[ShareBundle]] = [[] for _ in range(N)]
    for n, (v, rng) in enumerate(zip(vectors, rngs)):
        for b in split(v, N, rng, sender=n):
            inbox[b.receiver].append(b)
    return aggregate([sigma(m, inbox[m]) for m in range(N)], N)


def smc_sum_scalar(values, rngs) -> float:
    return float(smc_sum([[v] for v in values], rngs)[0])
