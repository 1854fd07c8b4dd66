"""Graph Laplacian of the face configuration and the smallest positive eigenvalue behind the APM rate."""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .apm import rate_kappa
from .linalg import symmetric_eigenvalues
from .model import stream

KERNEL_THRESHOLD = 1e-9
EIGEN_TOL = 1e-10


@dataclass(frozen=True)
class FaceConfig:
    """``saturated[n]`` lists the periods where agent n sits at a bound."""

    n_agents: int
    horizon: int
    saturated: tuple[frozenset, ...]

    def __post_init__(self):
        sat = tuple(frozenset(int(t) for t in s) for s in self.saturated)
        object.__setattr__(self, "saturated", sat)
        if len(sat) != self.n_agents:
            raise ValueError("one saturated set per agent expected")
        for s in sat:
            if any(t < 0 or t >= self.horizon for t in s):
                raise ValueError("period out of range")
            if len(s) >= self.horizon:
                raise ValueError("every agent needs at least one free period")

    def free_mask(self) -> np.ndarray:
        m = np.ones((self.n_agents, self.horizon), dtype=bool)
        for n, s in enumerate(self.saturated):
            m[n, list(s)] = False
        return m


def laplacian(config: FaceConfig) -> np.ndarray:
    """Edge weight between k and l: (1/N) sum_n [k, l both free for n] / (#free periods of n)."""
    free = config.free_mask().astype(float)
    N, T = free.shape
    w = free / free.sum(axis=1, keepdims=True)
    S = free.T @ w / N
    P = -S
    np.fill_diagonal(P, 0.0)
    P[np.diag_indices(T)] = -P.sum(axis=1)
    return P


def face_matrices(config: FaceConfig) -> tuple[np.ndarray, np.ndarray]:
    """Orthonormal-row matrices of the aggregate subspace and of the face subspace in R^{NT}."""
    N, T = config.n_agents, config.horizon
    A = np.kron(np.ones((1, N)), np.eye(T)) / np.sqrt(N)
    free = config.free_mask()
    rows = []
    for n in range(N):
        r = np.zeros(N * T)
        r[n * T:(n + 1) * T] = free[n] / np.sqrt(free[n].sum())
        rows.append(r)
    for n in range(N):
        for t in sorted(config.saturated[n]):
            r = np.zeros(N * T)
            r[n * T + t] = 1.0
            rows.append(r)
    return A, np.array(rows)


def laplacian_from_faces(config: FaceConfig) -> np.ndarray:
    """I - (A B^T)(B A^T), built from the explicit matrices."""
    A, B = face_matrices(config)
    C = A @ B.T
    return np.eye(config.horizon) - C @ C.T


def lambda1(config: FaceConfig) -> float:
    """Smallest eigenvalue above the kernel threshold, on the periods free for some agent."""
    P = laplacian(config)
    active = config.free_mask().any(axis=0)
    block = P[np.ix_(active, active)]
    if not np.any(np.abs(block) > KERNEL_THRESHOLD):
        return 0.0
    ev = symmetric_eigenvalues(block, tol=EIGEN_TOL)
    pos = ev[ev > KERNEL_THRESHOLD]
    return float(pos[0]) if pos.size else 0.0


def random_config(n_agents: int, horizon: int, rng: np.random.Generator, kind: str = "window") -> FaceConfig:
    """Random saturated sets.

    ``window``: each agent is free on a random contiguous run of periods (start uniform,
    end uniform after it) and saturated elsewhere.  ``bernoulli``: each period saturated
    independently with probability 1/2, redrawing the full set.
    """
    sets = []
    for _ in range(n_agents):
        if kind == "window":
            a = int(rng.integers(0, horizon))
            b = int(rng.integers(a, horizon))
            m = np.ones(horizon, dtype=bool)
            m[a:b + 1] = False
        elif kind == "bernoulli":
            while True:
                m = rng.random(horizon) < 0.5
                if not m.all():
                    break
        else:
            raise ValueError(f"unknown draw {kind!r}")
        sets.append(frozenset(np.nonzero(m)[0].tolist()))
    return FaceConfig(n_agents, horizon, tuple(sets))


@dataclass
class ScalingRow:
    horizon: int
    worst_lambda1: float
    kappa_bound: float
    draws: int
    violations: int


def scaling_experiment(n_agents: int, horizons, draws_per_t: int | None = None, seed: int = 0,
                       kind: str = "window") -> tuple[list[ScalingRow], float]:
    """Worst lambda1 over random configurations per horizon, and the log-log slope in T."""
    rows = []
    for T in horizons:
        rng = stream(seed, 5, T)
        draws = 100 * T if draws_per_t is None else draws_per_t
        kappa = rate_kappa(n_agents, T)
        vals = np.array([lambda1(random_config(n_agents, T, rng, kind)) for _ in range(draws)])
        vals = vals[vals > 0]
        worst = float(vals.min()) if vals.size else float("nan")
        rows.append(ScalingRow(T, worst, kappa, draws, int(np.sum(vals < kappa))))
    return rows, loglog_slope([r.horizon for r in rows], [r.worst_lambda1 for r in rows])


def loglog_slope(x, y) -> float:
    lx, ly = np.log(np.asarray(x, dtype=float)), np.log(np.asarray(y, dtype=float))
    slope, _ = np.polyfit(lx, ly, 1)
    return float(slope)


def write_scaling_csv(rows: list[ScalingRow], path) -> None:
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["T", "worst_lambda1", "kappa_bound"])
        for r in rows:
            w.writerow([r.horizon, repr(r.worst_lambda1), repr(r.kappa_bound)])
