"""Agents with general polyhedral feasible sets {x : A x <= b} and support-function cuts."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .cuts import LambdaCut
from .linalg import EQ, LE, LinearProgram, solve_lp
from .master import FeasibleRegion
from .model import AggregateBox, TransportInstance, stream
from .projections import Halfspace, project_polyhedron
from .protocol import RunReport, run_outer
from .smc import smc_sum_scalar


class DualInfeasible(RuntimeError):
    """The direction is not in the cone spanned by the agent's constraint rows."""


@dataclass
class PolyAgent:
    constraint_matrix: np.ndarray
    rhs: np.ndarray
    halfspaces: list[Halfspace] = field(init=False, repr=False)

    def __post_init__(self):
        self.constraint_matrix = np.atleast_2d(np.asarray(self.constraint_matrix, dtype=float))
        self.rhs = np.asarray(self.rhs, dtype=float).ravel()
        if self.constraint_matrix.shape[0] != self.rhs.size:
            raise ValueError("constraint matrix and rhs disagree")
        self.halfspaces = _merge_rows(self.constraint_matrix, self.rhs)

    @property
    def horizon(self) -> int:
        return self.constraint_matrix.shape[1]

    def check(self) -> None:
        """Raise unless the polyhedron is nonempty and bounded."""
        T = self.horizon
        free = np.full(T, -np.inf), np.full(T, np.inf)
        for t in range(T):
            for sense in ("min", "max"):
                c = np.zeros(T)
                c[t] = 1.0
                out = solve_lp(LinearProgram(c, self.constraint_matrix, self.rhs, [LE] * self.rhs.size,
                                             *free, sense=sense))
                if out.status == "infeasible":
                    raise ValueError("agent polyhedron is empty")
                if out.status != "optimal":
                    raise ValueError("agent polyhedron is unbounded")

    def contains(self, x, tol: float = 1e-9) -> bool:
        return bool(np.all(self.constraint_matrix @ np.asarray(x) <= self.rhs + tol))

    def project(self, y) -> np.ndarray:
        return project_poly_agent(y, self)

    def initial(self) -> np.ndarray:
        return np.zeros(self.horizon)

    def dual(self, direction) -> tuple[float, np.ndarray]:
        """min b.lam s.t. A^T lam = direction, lam >= 0; equals max direction.x over the polyhedron."""
        A, b = self.constraint_matrix, self.rhs
        d = np.asarray(direction, dtype=float)
        out = solve_lp(LinearProgram(b, A.T, d, [EQ] * d.size))
        if out.status != "optimal":
            raise DualInfeasible(f"dual program is {out.status}")
        return float(out.objective), out.x

    def support(self, direction) -> float:
        return self.dual(direction)[0]


def _merge_rows(A: np.ndarray, b: np.ndarray, tol: float = 1e-12) -> list[Halfspace]:
    """Halfspaces, with pairs a.x <= c and -a.x <= -c fused into one equality."""
    used = np.zeros(len(b), dtype=bool)
    out = []
    for i in range(len(b)):
        if used[i]:
            continue
        used[i] = True
        twin = [j for j in range(i + 1, len(b)) if not used[j]
                and np.allclose(A[j], -A[i], atol=tol) and abs(b[j] + b[i]) <= tol]
        if twin:
            used[twin[0]] = True
            out.append(Halfspace(A[i], b[i], "="))
        else:
            out.append(Halfspace(A[i], b[i]))
    return out


def project_poly_agent(y, agent: PolyAgent, tol: float = 1e-10) -> np.ndarray:
    return project_polyhedron(np.asarray(y, dtype=float), agent.halfspaces, tol=tol)


def transport_as_poly(instance: TransportInstance) -> list[PolyAgent]:
    """Each box-and-demand block written as A x <= b."""
    T = instance.horizon
    eye, one = np.eye(T), np.ones((1, T))
    A = np.vstack([eye, -eye, one, -one])
    return [PolyAgent(A, np.concatenate([up, -lo, [E], [-E]]))
            for lo, up, E in zip(instance.lower, instance.upper, instance.demand)]


def lambda_from_orbit(mu, agents: list[PolyAgent], p, seed: int = 0,
                      tol: float = 1e-8) -> tuple[LambdaCut, list[np.ndarray]]:
    """Cut -mu.p + sum_n M_n >= 0 from the limit displacement y - x (one row per agent).

    Every row of ``mu`` must be the same vector; each agent's dual program yields M_n and
    the multipliers lam_n with A_n^T lam_n = mu_n.  The M_n are combined by secure summation.
    """
    mu = np.atleast_2d(np.asarray(mu, dtype=float))
    if len(mu) != len(agents):
        raise ValueError("one displacement row per agent expected")
    if np.abs(mu - mu[0]).max() > tol * max(1.0, np.abs(mu).max()):
        raise ValueError("displacement rows differ across agents")
    values, multipliers = [], []
    for a, m in zip(agents, mu):
        val, lam = a.dual(m)
        values.append(val)
        multipliers.append(lam)
    rngs = [stream(seed, 11, n) for n in range(len(agents))]
    beta = smc_sum_scalar(values, rngs)
    return LambdaCut(-mu[0], beta).normalized(), multipliers


def optimal_disaggregation_poly(agents: list[PolyAgent], master_solver, box: AggregateBox, eps_dis: float = 0.01,
                                eps_cvg0: float = 0.1, max_outer: int = 500, **kw) -> RunReport:
    """Outer loop with support-function cuts; ``box`` is the operator's aggregate box and total."""
    region = FeasibleRegion(box)
    return run_outer(agents, master_solver, region, "lambda", eps_dis, eps_cvg0, max_outer=max_outer, **kw)
