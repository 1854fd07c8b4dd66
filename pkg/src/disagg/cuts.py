"""Hoffman inequalities: brute-force oracle, cut extraction from APM output, validity checks."""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

from .apm import ApmResult
from .model import TransportInstance
from .projections import AgentBlock, project_agents


@dataclass(frozen=True)
class HoffmanCut:
    """sum_{t in time_set} p_t <= rhs."""

    time_set: tuple[int, ...]
    rhs: float
    provenance: str = "apm"

    def lhs(self, p) -> float:
        return float(np.sum(np.asarray(p)[list(self.time_set)]))

    def violation(self, p) -> float:
        return self.lhs(p) - self.rhs

    def normal(self, horizon: int) -> np.ndarray:
        a = np.zeros(horizon)
        a[list(self.time_set)] = 1.0
        return a

    def to_dict(self) -> dict:
        return {"time_set": list(self.time_set), "rhs": self.rhs}

    def __str__(self) -> str:
        return " + ".join(f"p{t + 1}" for t in self.time_set) + f" <= {self.rhs:.6g}"


@dataclass(frozen=True)
class LambdaCut:
    """lambda0.p + beta >= 0, stored with ||lambda0||_inf = 1."""

    lambda0: np.ndarray
    beta: float

    def value(self, p) -> float:
        return float(self.lambda0 @ np.asarray(p)) + self.beta

    def violation(self, p) -> float:
        return -self.value(p)

    def normalized(self) -> LambdaCut:
        s = float(np.abs(self.lambda0).max())
        return LambdaCut(self.lambda0 / s, self.beta / s)

    def to_dict(self) -> dict:
        return {"lambda0": self.lambda0.tolist(), "beta": self.beta}

    def __str__(self) -> str:
        terms = " ".join(f"{c:+.4g}*p{t + 1}" for t, c in enumerate(self.lambda0))
        return f"{terms} >= {-self.beta:.6g}"


@dataclass
class HoffmanVerdict:
    feasible: bool
    time_set: tuple[int, ...] | None = None
    agent_set: tuple[int, ...] | None = None
    slack: float = 0.0  # most negative rhs - lhs; positive margin when feasible


def _terms(instance: TransportInstance, mask: np.ndarray) -> np.ndarray:
    """E_n - sum_{t not in T} lower - sum_{t in T} upper, for each subset row of ``mask``."""
    m = mask.astype(float)
    return instance.demand[None, :] - (1 - m) @ instance.lower.T - m @ instance.upper.T


def strongest_n(instance: TransportInstance, time_set) -> tuple[tuple[int, ...], float]:
    """Agent set minimizing the Hoffman right-hand side for ``time_set``, and that rhs."""
    ts = sorted(set(int(t) for t in time_set))
    T = instance.horizon
    if not ts or len(ts) >= T:
        raise ValueError("time set must be a proper nonempty subset")
    mask = np.zeros((1, T), dtype=bool)
    mask[0, ts] = True
    term = _terms(instance, mask)[0]
    agents = tuple(int(n) for n in np.nonzero(term < 0)[0])
    rhs = float(term[term < 0].sum() + instance.upper[:, ts].sum())
    return agents, rhs


MAX_ENUM_HORIZON = 20


def hoffman_feasible(instance: TransportInstance, p, tol: float = 1e-9) -> HoffmanVerdict:
    """Decide disaggregability of ``p`` by enumerating every proper time subset."""
    T = instance.horizon
    if T > MAX_ENUM_HORIZON:
        raise ValueError(f"horizon {T} too large for subset enumeration")
    p = np.asarray(p, dtype=float)
    if abs(p.sum() - instance.demand.sum()) > tol:
        return HoffmanVerdict(False, None, None, -abs(p.sum() - instance.demand.sum()))
    codes = np.arange(1, 2**T - 1)
    mask = ((codes[:, None] >> np.arange(T)) & 1).astype(bool)
    term = _terms(instance, mask)
    rhs = np.minimum(term, 0.0).sum(axis=1) + mask.astype(float) @ instance.upper.sum(axis=0)
    slack = rhs - mask.astype(float) @ p
    i = int(np.argmin(slack))
    ts = tuple(int(t) for t in np.nonzero(mask[i])[0])
    agents = tuple(int(n) for n in np.nonzero(term[i] < 0)[0])
    return HoffmanVerdict(bool(slack[i] >= -tol), ts, agents, float(slack[i]))


def support_value(instance: TransportInstance, weights) -> float:
    """max of weights.(sum_n x_n) over X."""
    return sum(AgentBlock(lo, up, E).support(weights)
               for lo, up, E in zip(instance.lower, instance.upper, instance.demand))


def cut_time_set(nu, threshold: float, include_ties: bool = True) -> tuple[int, ...]:
    """Periods kept in the cut.

    Empty unless some multiplier clearly exceeds ``threshold``; those periods always
    belong to the set.  Periods whose multiplier is within ``threshold`` of zero are
    kept too when ``include_ties`` is set.  Both choices give an exact Hoffman
    inequality with the same violation at the limit.
    """
    nu = np.asarray(nu)
    if not np.any(nu > threshold):
        return ()
    keep = nu > -threshold if include_ties else nu > threshold
    return tuple(int(t) for t in np.nonzero(keep)[0])


def extract_cut(result: ApmResult, instance: TransportInstance, p, threshold_b: float = 10.0,
                eps_cvg: float = 1e-6, include_ties: bool = True) -> HoffmanCut | None:
    """Cut from a converged APM run; rhs is the aggregate of the final iterate over the time set."""
    ts = cut_time_set(result.multiplier, threshold_b * eps_cvg, include_ties)
    if not ts or len(ts) == instance.horizon:
        return None
    rhs = float(result.x_final[:, list(ts)].sum())
    return HoffmanCut(ts, rhs, "apm")


def sample_disaggregable(instance: TransportInstance, rng: np.random.Generator, focus=None) -> np.ndarray:
    """A random disaggregable allocation; ``focus`` pushes mass toward a set of periods."""
    lo, up = instance.lower, instance.upper
    y = lo + rng.uniform(-0.5, 1.5, size=lo.shape) * (up - lo)
    if focus is not None:
        y[:, list(focus)] += rng.exponential(1.0) * (up - lo).max()
    return project_agents(y, lo, up, instance.demand).sum(axis=0)


def cut_is_valid(cut: HoffmanCut, instance: TransportInstance, samples: int = 100, seed: int = 0,
                 tol: float = 1e-8) -> bool:
    rng = np.random.default_rng(seed)
    for i in range(samples):
        p = sample_disaggregable(instance, rng, cut.time_set if i % 2 else None)
        if cut.lhs(p) > cut.rhs + tol:
            return False
    return True


def all_time_sets(horizon: int):
    for r in range(1, horizon):
        yield from itertools.combinations(range(horizon), r)

