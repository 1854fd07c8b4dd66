"""Euclidean projections: agent blocks, the aggregate affine space, halfspaces, Dykstra."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


class InfeasibleBlock(ValueError):
    pass


class NonConvergence(RuntimeError):
    def __init__(self, msg: str, point: np.ndarray, residual: float):
        super().__init__(msg)
        self.point = point
        self.residual = residual


@dataclass(frozen=True)
class AgentBlock:
    lower: np.ndarray
    upper: np.ndarray
    demand: float

    def __post_init__(self):
        object.__setattr__(self, "lower", np.asarray(self.lower, dtype=float))
        object.__setattr__(self, "upper", np.asarray(self.upper, dtype=float))
        object.__setattr__(self, "demand", float(self.demand))

    def project(self, y) -> np.ndarray:
        return project_agent(y, self)

    def initial(self) -> np.ndarray:
        return self.lower.copy()

    def support(self, weights) -> float:
        """max of weights.x over the block: fill the highest weights first."""
        w = np.asarray(weights, dtype=float)
        x = self.lower.copy()
        left = self.demand - x.sum()
        for t in np.argsort(-w, kind="stable"):
            if left <= 0:
                break
            take = min(self.upper[t] - self.lower[t], left)
            x[t] += take
            left -= take
        return float(w @ x)

    def contains(self, x, tol: float = 1e-9) -> bool:
        x = np.asarray(x, dtype=float)
        return bool(
            np.all(x >= self.lower - tol) and np.all(x <= self.upper + tol)
            and abs(x.sum() - self.demand) <= tol * max(1.0, abs(self.demand))
        )


@dataclass(frozen=True)
class Halfspace:
    """a.x <= b (kind '<=') or a.x = b (kind '=')."""

    normal: np.ndarray
    offset: float
    kind: str = "<="

    def __post_init__(self):
        a = np.asarray(self.normal, dtype=float)
        object.__setattr__(self, "normal", a)
        object.__setattr__(self, "offset", float(self.offset))
        if not np.any(a != 0):
            raise ValueError("halfspace normal must be nonzero")
        if self.kind not in ("<=", "="):
            raise ValueError("kind must be '<=' or '='")

    def violation(self, v) -> float:
        s = float(self.normal @ v) - self.offset
        return abs(s) if self.kind == "=" else max(s, 0.0)


def project_agents(Y, lower, upper, demand, tol: float = 1e-9) -> np.ndarray:
    """Row-wise projection of Y onto {x : lower <= x <= upper, sum x = demand}.

    Each row solves x(lam) = clip(y + lam, lower, upper) with sum x(lam) = demand. The
    sum is piecewise linear in lam with kinks at lower - y and upper - y, so the root
    is found by locating the bracketing kinks and solving the linear piece exactly.
    """
    Y = np.atleast_2d(np.asarray(Y, dtype=float))
    lo = np.broadcast_to(np.asarray(lower, dtype=float), Y.shape)
    up = np.broadcast_to(np.asarray(upper, dtype=float), Y.shape)
    E = np.broadcast_to(np.asarray(demand, dtype=float), Y.shape[:1])
    slo, sup = lo.sum(axis=1), up.sum(axis=1)
    scale = np.maximum(1.0, np.abs(E))
    if np.any(E < slo - tol * scale) or np.any(E > sup + tol * scale) or np.any(lo > up):
        raise InfeasibleBlock("agent block is empty")
    if not np.all(np.isfinite(Y)):
        raise ValueError("non-finite point to project")
    n, T = Y.shape
    kinks = np.sort(np.concatenate([lo - Y, up - Y], axis=1), axis=1)
    # G[i, j] = sum_t clip(y_t + kink_j, lo_t, up_t)
    G = np.clip(Y[:, None, :] + kinks[:, :, None], lo[:, None, :], up[:, None, :]).sum(axis=2)
    j = np.sum(G <= E[:, None], axis=1) - 1
    j = np.clip(j, 0, 2 * T - 1)
    rows = np.arange(n)
    lam = kinks[rows, j].copy()
    inner = (j < 2 * T - 1) & (G[rows, j] < E)
    if np.any(inner):
        r = rows[inner]
        mid = 0.5 * (kinks[r, j[inner]] + kinks[r, j[inner] + 1])
        z = Y[r] + mid[:, None]
        free = (z > lo[r]) & (z < up[r])
        fixed = np.where(z <= lo[r], lo[r], up[r])
        nfree = free.sum(axis=1)
        ok = nfree > 0
        num = E[r] - np.where(free, 0.0, fixed).sum(axis=1) - np.where(free, Y[r], 0.0).sum(axis=1)
        lam[r[ok]] = num[ok] / nfree[ok]
    return np.clip(Y + lam[:, None], lo, up)


def project_agent(y, block: AgentBlock, tol: float = 1e-9) -> np.ndarray:
    return project_agents(np.asarray(y, dtype=float)[None, :], block.lower, block.upper,
                          np.array([block.demand]), tol)[0]


def project_aggregate(x, p) -> np.ndarray:
    """Projection onto Y_p = {y : sum_n y_n = p}: shift every row by (p - sum_n x_n)/N."""
    x = np.asarray(x, dtype=float)
    p = np.asarray(p, dtype=float)
    if x.ndim != 2 or p.shape != x.shape[1:]:
        raise ValueError("dimension mismatch between profiles and allocation")
    return x + (p - x.sum(axis=0)) / x.shape[0]


def project_halfspace(v, h: Halfspace) -> np.ndarray:
    v = np.asarray(v, dtype=float)
    s = float(h.normal @ v) - h.offset
    if h.kind == "<=" and s <= 0:
        return v.copy()
    return v - (s / float(h.normal @ h.normal)) * h.normal


def dykstra_project(v, halfspaces: list[Halfspace], tol: float = 1e-10, max_iter: int | None = None) -> np.ndarray:
    """Dykstra's cyclic projections onto the intersection of ``halfspaces``.

    Stops when a full cycle changes neither the iterate nor the correction terms by
    more than ``tol`` and every constraint holds within ``tol``; the iterate alone can
    repeat for several cycles while the corrections are still draining.  Raises
    :class:`NonConvergence` when the budget runs out.
    """
    v = np.asarray(v, dtype=float)
    if not halfspaces:
        return v.copy()
    m = len(halfspaces)
    if max_iter is None:
        max_iter = 10 * v.size * m
    A = np.array([h.normal for h in halfspaces])
    b = np.array([h.offset for h in halfspaces])
    eq = np.array([h.kind == "=" for h in halfspaces])
    nrm2 = np.einsum("ij,ij->i", A, A)
    z = v.copy()
    incr = np.zeros((m, v.size))
    resid = np.inf
    for _ in range(max_iter):
        z_prev = z.copy()
        incr_prev = incr.copy()
        for i in range(m):
            w = z + incr[i]
            s = A[i] @ w - b[i]
            if eq[i] or s > 0:
                znew = w - (s / nrm2[i]) * A[i]
            else:
                znew = w
            incr[i] = w - znew
            z = znew
        viol = A @ z - b
        viol = np.where(eq, np.abs(viol), np.maximum(viol, 0.0))
        resid = max(float(np.abs(z - z_prev).max()), float(np.abs(incr - incr_prev).max()), float(viol.max()))
        if resid <= tol:
            return z
    raise NonConvergence("Dykstra iteration budget exhausted", z, resid)


def _kkt_polish(v, A, b, eq, z, band: float, tol: float):
    """Solve the equality-constrained problem on the active set guessed at ``z``; verify KKT."""
    slack = A @ z - b
    act = eq | (slack >= -band)
    if not act.any():
        x = v.copy()
        lam = np.zeros(0)
    else:
        Aa = A[act]
        lam, *_ = np.linalg.lstsq(Aa @ Aa.T, Aa @ v - b[act], rcond=None)
        x = v - Aa.T @ lam
    scale = max(1.0, float(np.abs(b).max(initial=0.0)))
    s = A @ x - b
    if np.any(s[~eq] > tol * scale) or np.any(np.abs(s[eq]) > tol * scale):
        return None
    if act.any() and np.any(lam[~eq[act]] < -tol * scale):
        return None
    return x


def project_polyhedron(v, halfspaces: list[Halfspace], tol: float = 1e-10,
                       max_iter: int | None = None) -> np.ndarray:
    """Exact projection onto a polyhedron: coarse Dykstra, then an active-set KKT solve.

    Falls back to fully converged Dykstra when the guessed active set fails the KKT check.
    """
    v = np.asarray(v, dtype=float)
    if not halfspaces:
        return v.copy()
    A = np.array([h.normal for h in halfspaces])
    b = np.array([h.offset for h in halfspaces])
    eq = np.array([h.kind == "=" for h in halfspaces])
    for coarse in (1e-5, 1e-8):
        try:
            z = dykstra_project(v, halfspaces, tol=coarse, max_iter=max_iter)
        except NonConvergence as err:
            z = err.point
        for band in (1e-6, 1e-4, 1e-8):
            x = _kkt_polish(v, A, b, eq, z, band, tol)
            if x is not None:
                return x
    return dykstra_project(v, halfspaces, tol=tol, max_iter=max_iter)
