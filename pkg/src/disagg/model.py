"""Domain types, validation and instance generators."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Any

import numpy as np

# Allocations p (length T) and profile matrices x, y (N x T) are plain float arrays.
Allocation = np.ndarray
ProfileMatrix = np.ndarray


@dataclass(frozen=True)
class TransportInstance:
    """Per-agent bounds and demands: X_n = {x : sum_t x_t = demand[n], lower[n] <= x <= upper[n]}."""

    lower: np.ndarray
    upper: np.ndarray
    demand: np.ndarray
    microgrid: MicrogridSpec | None = None

    def __post_init__(self):
        object.__setattr__(self, "lower", np.array(self.lower, dtype=float, ndmin=2))
        object.__setattr__(self, "upper", np.array(self.upper, dtype=float, ndmin=2))
        object.__setattr__(self, "demand", np.array(self.demand, dtype=float, ndmin=1))

    @property
    def n_agents(self) -> int:
        return self.lower.shape[0]

    @property
    def horizon(self) -> int:
        return self.lower.shape[1]

    def permuted(self, perm) -> TransportInstance:
        """Instance whose agent ``k`` is agent ``perm[k]`` of this one."""
        perm = np.asarray(perm)
        return TransportInstance(self.lower[perm], self.upper[perm], self.demand[perm], self.microgrid)

    def to_dict(self) -> dict[str, Any]:
        return {
            "n_agents": self.n_agents,
            "horizon": self.horizon,
            "lower": self.lower.tolist(),
            "upper": self.upper.tolist(),
            "demand": self.demand.tolist(),
            "microgrid": None if self.microgrid is None else self.microgrid.to_dict(),
        }

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> TransportInstance:
        mg = d.get("microgrid")
        inst = cls(d["lower"], d["upper"], d["demand"], None if mg is None else MicrogridSpec.from_dict(mg))
        if inst.n_agents != d["n_agents"] or inst.horizon != d["horizon"]:
            raise ValueError("declared dimensions do not match the bound matrices")
        return inst


@dataclass(frozen=True)
class AggregateBox:
    sum_target: float
    col_lower: np.ndarray
    col_upper: np.ndarray


@dataclass(frozen=True)
class QuadraticCost:
    """Uniform separable cost sum_t lin * p_t + quad * p_t**2."""

    lin: float
    quad: float

    def __post_init__(self):
        if not self.quad > 0:
            raise ValueError("quadratic coefficient must be positive")

    def __call__(self, p) -> float:
        p = np.asarray(p, dtype=float)
        return float(np.sum(self.lin * p + self.quad * p * p))


@dataclass(frozen=True)
class MicrogridSpec:
    """Generator with piecewise-linear cost plus photovoltaic production."""

    theta: np.ndarray
    marginal_cost: np.ndarray
    alpha1: float
    start_cost: float
    p_min: float
    p_max: float
    pv: np.ndarray
    scale: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "theta", np.asarray(self.theta, dtype=float))
        object.__setattr__(self, "marginal_cost", np.asarray(self.marginal_cost, dtype=float))
        object.__setattr__(self, "pv", np.asarray(self.pv, dtype=float))
        th = self.theta
        if len(th) < 2 or th[0] != 0 or np.any(np.diff(th) <= 0):
            raise ValueError("theta must start at 0 and be strictly increasing")
        if not math.isclose(th[-1], self.p_max, rel_tol=1e-12, abs_tol=1e-12):
            raise ValueError("last breakpoint must equal p_max")
        if len(self.marginal_cost) != len(th) - 1:
            raise ValueError("one marginal cost per piece is required")

    @property
    def horizon(self) -> int:
        return len(self.pv)

    @property
    def n_breakpoints(self) -> int:
        return len(self.marginal_cost)

    def to_dict(self) -> dict[str, Any]:
        return {
            "theta": self.theta.tolist(),
            "marginal_cost": self.marginal_cost.tolist(),
            "alpha1": self.alpha1,
            "start_cost": self.start_cost,
            "p_min": self.p_min,
            "p_max": self.p_max,
            "pv": self.pv.tolist(),
            "scale": self.scale,
        }

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> MicrogridSpec:
        return cls(**d)


@dataclass
class Violation:
    kind: str
    agent: int | None = None
    period: int | None = None
    detail: str = ""


@dataclass
class ValidationReport:
    violations: list[Violation] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.violations

    def __bool__(self) -> bool:
        return self.ok


def validate(instance: TransportInstance, tol: float = 1e-9) -> ValidationReport:
    """Collect every invariant violation; never raises.

    Demands may exceed the bound sums by ``tol`` relative to their size (rounding slack).
    """
    rep = ValidationReport()
    lo, up, dem = instance.lower, instance.upper, instance.demand
    if lo.shape != up.shape:
        rep.violations.append(Violation("shape", detail=f"lower {lo.shape} vs upper {up.shape}"))
        return rep
    n, t = lo.shape
    if dem.shape != (n,):
        rep.violations.append(Violation("shape", detail=f"demand {dem.shape}, expected ({n},)"))
        return rep
    if n < 1:
        rep.violations.append(Violation("shape", detail="at least one agent is required"))
    if t < 2:
        rep.violations.append(Violation("shape", detail="horizon must be at least 2"))
    for arr, name in ((lo, "lower"), (up, "upper")):
        for i, j in zip(*np.nonzero(~np.isfinite(arr))):
            rep.violations.append(Violation("non-finite", int(i), int(j), name))
    for i in np.nonzero(~np.isfinite(dem))[0]:
        rep.violations.append(Violation("non-finite", int(i), None, "demand"))
    for i, j in zip(*np.nonzero(lo > up)):
        rep.violations.append(Violation("bounds", int(i), int(j), f"lower {lo[i, j]} > upper {up[i, j]}"))
    slo, sup = lo.sum(axis=1), up.sum(axis=1)
    for i in range(n):
        slack = tol * max(1.0, abs(dem[i]))
        if dem[i] < slo[i] - slack or dem[i] > sup[i] + slack:
            rep.violations.append(
                Violation("demand", i, None, f"demand {dem[i]} outside [{slo[i]}, {sup[i]}]")
            )
    return rep


def aggregate_box(instance: TransportInstance) -> AggregateBox:
    return AggregateBox(
        float(instance.demand.sum()), instance.lower.sum(axis=0), instance.upper.sum(axis=0)
    )


def toy_instance() -> tuple[TransportInstance, QuadraticCost]:
    upper = [[0.8, 0.2, 0.7, 0.1], [0.5, 0.1, 0.3, 0.6], [0.1, 0.1, 0.7, 0.2]]
    inst = TransportInstance(np.zeros((3, 4)), upper, [1.8, 0.4, 1.1])
    return inst, QuadraticCost(0.8, 0.1)


def stream(seed: int, *key: int) -> np.random.Generator:
    """Counter-based generator addressed by (seed, key...); independent of draw order."""
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(seed, spawn_key=key)))


# stream identifiers for generator draws
_CONSUMER, _PV, _RANDOM = 1, 2, 3


def microgrid_spec(n_agents: int, horizon: int, seed: int) -> MicrogridSpec:
    kappa = n_agents / 20
    rng = stream(seed, _PV)
    noise = rng.uniform(0.0, 10.0, size=horizon)
    pv = np.zeros(horizon)
    for t in range(1, horizon + 1):
        if 6 <= t <= 20:
            pv[t - 1] = (50 * (1 - math.cos((t - 6) * 2 * math.pi / 16)) + noise[t - 1]) * kappa
    return MicrogridSpec(
        theta=np.array([0.0, 70.0, 100.0, 300.0]) * kappa,
        marginal_cost=[0.2, 0.4, 0.5],
        alpha1=4.0,
        start_cost=15.0,
        p_min=50.0 * kappa,
        p_max=300.0 * kappa,
        pv=pv,
        scale=kappa,
    )


def microgrid_instance(n_agents: int, horizon: int, seed: int) -> TransportInstance:
    if n_agents < 1 or horizon < 2:
        raise ValueError("need n_agents >= 1 and horizon >= 2")
    lower = np.empty((n_agents, horizon))
    upper = np.empty((n_agents, horizon))
    demand = np.empty(n_agents)
    for n in range(n_agents):
        rng = stream(seed, _CONSUMER, n)
        lower[n] = rng.uniform(0.0, 10.0, size=horizon)
        upper[n] = lower[n] + rng.uniform(0.0, 5.0, size=horizon)
        demand[n] = rng.uniform(lower[n].sum(), upper[n].sum())
    return TransportInstance(lower, upper, demand, microgrid_spec(n_agents, horizon, seed))


def random_instance(n_agents: int, horizon: int, seed: int, *key: int) -> TransportInstance:
    """Small random instance for property tests (bounds in [0, 1] scale)."""
    rng = stream(seed, _RANDOM, *key)
    lower = np.round(rng.uniform(0.0, 0.5, size=(n_agents, horizon)) * rng.integers(0, 2, size=(n_agents, horizon)), 3)
    upper = np.round(lower + rng.uniform(0.05, 1.0, size=(n_agents, horizon)), 3)
    w = rng.uniform(0.05, 0.95, size=n_agents)
    demand = lower.sum(axis=1) + w * (upper - lower).sum(axis=1)
    return TransportInstance(lower, upper, demand)


def random_point(instance: TransportInstance, rng: np.random.Generator) -> ProfileMatrix:
    """A random profile matrix with x_n in X_n for every n."""
    from .projections import project_agents

    lo, up = instance.lower, instance.upper
    y = lo + rng.uniform(-0.5, 1.5, size=lo.shape) * (up - lo)
    return project_agents(y, lo, up, instance.demand)


def dump_instance(instance: TransportInstance, path) -> None:
    with open(path, "w") as f:
        json.dump(instance.to_dict(), f, indent=1)


def load_instance(path) -> TransportInstance:
    with open(path) as f:
        return TransportInstance.from_dict(json.load(f))
