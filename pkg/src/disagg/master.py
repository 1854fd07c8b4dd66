"""Master problems over the current outer approximation of the disaggregable set."""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np

from .cuts import HoffmanCut, LambdaCut
from .linalg import EQ, GE, LE, LinearProgram, solve_lp
from .model import AggregateBox, MicrogridSpec, QuadraticCost
from .projections import Halfspace, project_polyhedron

MAX_MICROGRID_HORIZON = 16


@dataclass
class FeasibleRegion:
    """Aggregate box and sum equality, intersected with the accepted cuts."""

    box: AggregateBox
    cuts: list[HoffmanCut] = field(default_factory=list)
    lambda_cuts: list[LambdaCut] = field(default_factory=list)

    @property
    def horizon(self) -> int:
        return len(self.box.col_lower)

    def add_cut(self, cut: HoffmanCut) -> None:
        """Keep one cut per time set, the tightest one."""
        for i, old in enumerate(self.cuts):
            if old.time_set == cut.time_set:
                if cut.rhs < old.rhs:
                    self.cuts[i] = cut
                return
        self.cuts.append(cut)

    def add_lambda_cut(self, cut: LambdaCut) -> None:
        for old in self.lambda_cuts:
            if np.array_equal(old.lambda0, cut.lambda0) and old.beta == cut.beta:
                return
        self.lambda_cuts.append(cut)

    def cut_rows(self) -> tuple[np.ndarray, np.ndarray]:
        """Cuts as rows A p <= b."""
        T = self.horizon
        rows = [c.normal(T) for c in self.cuts] + [-c.lambda0 for c in self.lambda_cuts]
        rhs = [c.rhs for c in self.cuts] + [c.beta for c in self.lambda_cuts]
        return np.array(rows).reshape(-1, T), np.array(rhs, dtype=float)

    def halfspaces(self) -> list[Halfspace]:
        T = self.horizon
        hs = []
        for t in range(T):
            e = np.zeros(T)
            e[t] = 1.0
            hs.append(Halfspace(e, self.box.col_upper[t]))
            hs.append(Halfspace(-e, -self.box.col_lower[t]))
        hs.append(Halfspace(np.ones(T), self.box.sum_target, "="))
        A, b = self.cut_rows()
        hs.extend(Halfspace(a, r) for a, r in zip(A, b))
        return hs

    def contains(self, p, tol: float = 1e-9) -> bool:
        return all(h.violation(p) <= tol for h in self.halfspaces())

    def is_empty(self, tol: float = 1e-9) -> bool:
        T = self.horizon
        A, b = self.cut_rows()
        lp = LinearProgram(
            np.zeros(T),
            np.vstack([np.ones((1, T)), A]),
            np.concatenate([[self.box.sum_target], b]),
            [EQ] + [LE] * len(b),
            self.box.col_lower,
            self.box.col_upper,
        )
        return solve_lp(lp, tol).status == "infeasible"


@dataclass
class MasterResult:
    status: str  # "optimal" | "infeasible"
    p: np.ndarray | None = None
    objective: float | None = None
    schedule: tuple[int, ...] | None = None
    generation: np.ndarray | None = None


def solve_quadratic_master(region: FeasibleRegion, cost: QuadraticCost, tol: float = 1e-8) -> MasterResult:
    """Uniform separable quadratic: the argmin is the projection of -b/(2a) * 1 onto the region."""
    if region.is_empty():
        return MasterResult("infeasible")
    T = region.horizon
    target = np.full(T, -cost.lin / (2 * cost.quad))
    p = project_polyhedron(target, region.halfspaces(), tol=min(tol, 1e-10))
    return MasterResult("optimal", p, cost(p))


class QuadraticMaster:
    def __init__(self, cost: QuadraticCost, tol: float = 1e-8):
        self.cost, self.tol = cost, tol

    def __call__(self, region: FeasibleRegion) -> MasterResult:
        return solve_quadratic_master(region, self.cost, self.tol)


def commitment_fixed_cost(on: tuple[int, ...], spec: MicrogridSpec) -> float:
    starts = sum(1 for a, b in zip(on[:-1], on[1:]) if b > a)
    return spec.alpha1 * sum(on) + spec.start_cost * starts


def _pattern_lp(region: FeasibleRegion, spec: MicrogridSpec, on: np.ndarray) -> LinearProgram:
    """Variables: p (T) then generation pieces g[k, t] (K*T, piece-major)."""
    T, K = region.horizon, spec.n_breakpoints
    width = np.diff(spec.theta)
    nv = T + K * T
    c = np.zeros(nv)
    lo = np.zeros(nv)
    up = np.zeros(nv)
    lo[:T], up[:T] = region.box.col_lower, region.box.col_upper
    for k in range(K):
        c[T + k * T:T + (k + 1) * T] = spec.marginal_cost[k]
        up[T + k * T:T + (k + 1) * T] = width[k] * on
    rows, rhs, kinds = [], [], []
    for t in range(T):
        gsum = np.zeros(nv)
        gsum[T + t::T] = 1.0
        if on[t]:
            rows.append(gsum)
            rhs.append(spec.p_min)
            kinds.append(GE)
        r = -gsum
        r[t] = 1.0
        rows.append(r)
        rhs.append(spec.pv[t])
        kinds.append(LE)
    s = np.zeros(nv)
    s[:T] = 1.0
    rows.append(s)
    rhs.append(region.box.sum_target)
    kinds.append(EQ)
    A, b = region.cut_rows()
    for a, r in zip(A, b):
        row = np.zeros(nv)
        row[:T] = a
        rows.append(row)
        rhs.append(r)
        kinds.append(LE)
    return LinearProgram(c, np.array(rows), np.array(rhs), kinds, lo, up)


def solve_microgrid_master(region: FeasibleRegion, spec: MicrogridSpec, tol: float = 1e-6) -> MasterResult:
    """Enumerate on/off schedules; each schedule leaves a linear program in (p, generation pieces)."""
    T = region.horizon
    if T > MAX_MICROGRID_HORIZON:
        raise ValueError(f"horizon {T} exceeds the enumeration limit {MAX_MICROGRID_HORIZON}")
    if spec.horizon != T:
        raise ValueError("microgrid horizon does not match the region")
    patterns = sorted(itertools.product((0, 1), repeat=T), key=lambda on: (commitment_fixed_cost(on, spec), on))
    best = MasterResult("infeasible")
    target = region.box.sum_target
    for on in patterns:
        fixed = commitment_fixed_cost(on, spec)
        if best.objective is not None and fixed >= best.objective - tol:
            break
        onv = np.array(on, dtype=float)
        cap = spec.pv + spec.p_max * onv
        if cap.sum() < target - tol or np.any(region.box.col_lower > cap + tol):
            continue
        out = solve_lp(_pattern_lp(region, spec, onv), min(tol, 1e-9))
        if out.status != "optimal":
            continue
        total = fixed + out.objective
        if best.objective is None or total < best.objective - tol:
            g = out.x[T:].reshape(spec.n_breakpoints, T)
            best = MasterResult("optimal", out.x[:T], total, on, g)
    return best


def pieces_fill_in_order(generation: np.ndarray, spec: MicrogridSpec, tol: float = 1e-6) -> bool:
    """A piece is used only once every cheaper piece is full."""
    width = np.diff(spec.theta)
    for k in range(1, generation.shape[0]):
        used = generation[k] > tol
        if np.any(generation[k - 1][used] < width[k - 1] - tol):
            return False
    return True


class MicrogridMaster:
    def __init__(self, spec: MicrogridSpec, tol: float = 1e-6):
        self.spec, self.tol = spec, tol

    def __call__(self, region: FeasibleRegion) -> MasterResult:
        return solve_microgrid_master(region, self.spec, self.tol)
