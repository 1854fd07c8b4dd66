"""Alternating projections between the agent product set X and the affine set Y_p."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np

from .model import TransportInstance
from .projections import project_agents, project_aggregate

MAX_ITER_CAP = 10**6


def rate_kappa(n_agents: int, horizon: int) -> float:
    """Lower bound on the spectral gap; the APM rate is at most 1 - kappa."""
    return 4.0 / (n_agents * (horizon + 1) ** 2 * (horizon - 1))


def norm(x: np.ndarray, kind: str = "op") -> float:
    """``op``: max over agents of the row l1 norm; ``l2``: Frobenius norm."""
    if kind == "op":
        return float(np.abs(x).sum(axis=1).max())
    if kind == "l2":
        return float(np.sqrt(np.sum(x * x)))
    raise ValueError(f"unknown norm {kind!r}")


def default_budget(first_step: float, eps: float, n_agents: int, horizon: int) -> int:
    if first_step < eps:
        return 1
    k = math.log(eps / first_step) / math.log1p(-rate_kappa(n_agents, horizon))
    return int(min(MAX_ITER_CAP, math.ceil(k) + 1))


@dataclass
class ApmResult:
    x_final: np.ndarray
    y_final: np.ndarray
    iterations: int
    residual: float
    gap: float
    multiplier: np.ndarray
    converged: bool
    steps: np.ndarray = field(repr=False)  # Euclidean step lengths ||x^(k) - x^(k-1)||_2
    contraction_ratios: np.ndarray = field(repr=False)
    monotone: bool = True


def contraction_ratios(steps, floor: float = 0.0) -> np.ndarray:
    """Successive step ratios; NaN where the previous step is at or below ``floor``."""
    steps = np.asarray(steps, dtype=float)
    prev, cur = steps[:-1], steps[1:]
    out = np.full(cur.shape, np.nan)
    ok = prev > floor
    out[ok] = cur[ok] / prev[ok]
    return out


def run_apm(instance: TransportInstance, p, y0=None, eps_cvg: float = 1e-6, max_iter: int | None = None,
            norm_spec: str = "op", trace_path=None) -> ApmResult:
    """Iterate x <- P_X(y), y <- P_Y(x) until ||x^(k) - x^(k-1)|| < eps_cvg.

    The first point x^(0) is P_X(y0), so the step lengths are nonincreasing.
    """
    p = np.asarray(p, dtype=float)
    if not np.all(np.isfinite(p)):
        raise ValueError("allocation has non-finite entries")
    lo, up, E = instance.lower, instance.upper, instance.demand
    N, T = lo.shape
    y = lo.copy() if y0 is None else np.array(y0, dtype=float)
    x_prev = project_agents(y, lo, up, E)  # x^(0), so every step compares two points of X
    y = project_aggregate(x_prev, p)
    steps = []
    budget = max_iter
    scale = max(1.0, float(np.abs(p).max()), float(np.abs(up).max()))
    floor = 1e-11 * scale
    writer = None
    fh = None
    if trace_path is not None:
        fh = open(trace_path, "w", newline="")
        writer = csv.writer(fh)
        writer.writerow(["k", "residual", "gap", "ratio"])
    try:
        k = 0
        while True:
            k += 1
            x = project_agents(y, lo, up, E)
            y = project_aggregate(x, p)
            if not np.all(np.isfinite(y)):
                raise FloatingPointError(f"non-finite iterate at sweep {k}")
            d = x - x_prev
            res = norm(d, norm_spec)
            steps.append(norm(d, "l2"))
            if budget is None:
                budget = default_budget(res, eps_cvg, N, T)
            if writer is not None:
                ratio = steps[-1] / steps[-2] if k > 1 and steps[-2] > floor else float("nan")
                writer.writerow([k, repr(res), repr(norm(x - y, norm_spec)), repr(ratio)])
            x_prev = x
            if res < eps_cvg or k >= budget:
                break
    finally:
        if fh is not None:
            fh.close()
    steps = np.array(steps)
    ratios = contraction_ratios(steps, floor)
    monotone = bool(np.all(np.nan_to_num(ratios, nan=0.0) <= 1.0 + 1e-9))
    return ApmResult(
        x_final=x,
        y_final=y,
        iterations=k,
        residual=res,
        gap=norm(x - y, norm_spec),
        multiplier=(p - x.sum(axis=0)) / N,
        converged=res < eps_cvg,
        steps=steps,
        contraction_ratios=ratios,
        monotone=monotone,
    )


def observed_rate(result: ApmResult) -> float:
    """Largest successive step ratio over the last half of the sweeps."""
    if result.iterations < 3:
        raise ValueError("at least three sweeps are needed to estimate a rate")
    tail = result.contraction_ratios[len(result.contraction_ratios) // 2:]
    tail = tail[np.isfinite(tail)]
    return float(tail.max()) if tail.size else 0.0
