"""Dense primal simplex with certificates, and a cyclic Jacobi eigensolver."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

LE, EQ, GE = "<=", "=", ">="


class DimensionError(ValueError):
    pass


@dataclass
class LinearProgram:
    """Optimize c.x subject to rows A x (<=|=|>=) b and var_lower <= x <= var_upper."""

    objective: np.ndarray
    constraint_matrix: np.ndarray
    rhs: np.ndarray
    row_kinds: list[str]
    var_lower: np.ndarray | None = None
    var_upper: np.ndarray | None = None
    sense: str = "min"

    def __post_init__(self):
        self.objective = np.asarray(self.objective, dtype=float).ravel()
        d = self.objective.size
        A = np.asarray(self.constraint_matrix, dtype=float)
        if A.size == 0:
            A = A.reshape(0, d)
        self.constraint_matrix = A
        self.rhs = np.asarray(self.rhs, dtype=float).ravel()
        self.row_kinds = list(self.row_kinds)
        self.var_lower = np.zeros(d) if self.var_lower is None else np.asarray(self.var_lower, dtype=float).ravel()
        self.var_upper = np.full(d, np.inf) if self.var_upper is None else np.asarray(self.var_upper, dtype=float).ravel()
        m = self.rhs.size
        if A.shape != (m, d) or len(self.row_kinds) != m or self.var_lower.size != d or self.var_upper.size != d:
            raise DimensionError("inconsistent linear program dimensions")
        if any(k not in (LE, EQ, GE) for k in self.row_kinds):
            raise ValueError("row kinds must be '<=', '=' or '>='")
        if self.sense not in ("min", "max"):
            raise ValueError("sense must be 'min' or 'max'")
        for arr in (self.objective, A, self.rhs):
            if not np.all(np.isfinite(arr)):
                raise ValueError("non-finite LP data")
        if np.any(np.isnan(self.var_lower)) or np.any(np.isnan(self.var_upper)):
            raise ValueError("NaN variable bound")
        if np.any(self.var_lower > self.var_upper):
            raise ValueError("variable lower bound exceeds upper bound")


@dataclass
class LpOutcome:
    """Result of :func:`solve_lp`.

    ``dual`` holds one multiplier per row with the convention y <= 0 on '<=' rows and
    y >= 0 on '>=' rows for minimization (signs flip for maximization).  For an
    infeasible program ``certificate`` is a row multiplier y with those min-convention
    signs such that max over the variable box of (A^T y).x is below b.y.  For an
    unbounded program it is an improving ray of the feasible set.
    """

    status: str
    x: np.ndarray | None = None
    objective: float | None = None
    dual: np.ndarray | None = None
    certificate: np.ndarray | None = None
    pivots: int = 0
    info: dict = field(default_factory=dict)


def _box_max(r: np.ndarray, lo: np.ndarray, up: np.ndarray) -> float:
    """max of r.x over lo <= x <= up (may be +inf)."""
    with np.errstate(invalid="ignore"):
        vals = np.where(r > 0, r * up, np.where(r < 0, r * lo, 0.0))
    return float(np.sum(vals))


def farkas_holds(lp: LinearProgram, y: np.ndarray, tol: float = 1e-9) -> bool:
    """Check an infeasibility certificate in the convention of :class:`LpOutcome`."""
    y = np.asarray(y, dtype=float)
    for yi, kind in zip(y, lp.row_kinds):
        if (kind == LE and yi > tol) or (kind == GE and yi < -tol):
            return False
    r = lp.constraint_matrix.T @ y
    r[np.abs(r) <= tol] = 0.0
    return _box_max(r, lp.var_lower, lp.var_upper) < float(y @ lp.rhs) - tol


def solve_lp(lp: LinearProgram, tol: float = 1e-9, max_pivots: int = 100000) -> LpOutcome:
    c = lp.objective if lp.sense == "min" else -lp.objective
    A, b = lp.constraint_matrix, lp.rhs
    lo, up = lp.var_lower, lp.var_upper
    m0, d = A.shape

    # Substitute x = x0 + S z with z >= 0.
    cols, x0 = [], np.zeros(d)
    bound_rows = []
    for j in range(d):
        if np.isfinite(lo[j]):
            x0[j] = lo[j]
            cols.append((j, 1.0))
            if np.isfinite(up[j]):
                bound_rows.append((len(cols) - 1, up[j] - lo[j]))
        elif np.isfinite(up[j]):
            x0[j] = up[j]
            cols.append((j, -1.0))
        else:
            cols.append((j, 1.0))
            cols.append((j, -1.0))
    nz = len(cols)
    S = np.zeros((d, nz))
    for k, (j, s) in enumerate(cols):
        S[j, k] = s

    kinds = list(lp.row_kinds) + [LE] * len(bound_rows)
    m = m0 + len(bound_rows)
    Az = np.zeros((m, nz))
    Az[:m0] = A @ S
    bz = np.empty(m)
    bz[:m0] = b - A @ x0
    for i, (k, width) in enumerate(bound_rows):
        Az[m0 + i, k] = 1.0
        bz[m0 + i] = width
    slack_rows = [i for i in range(m) if kinds[i] != EQ]
    ns = len(slack_rows)
    n = nz + ns
    Abar = np.zeros((m, n))
    Abar[:, :nz] = Az
    for k, i in enumerate(slack_rows):
        Abar[i, nz + k] = 1.0 if kinds[i] == LE else -1.0
    flip = np.where(bz < 0, -1.0, 1.0)
    Abar *= flip[:, None]
    bz = bz * flip

    # Tableau [Abar | I | b]; the identity block tracks B^{-1}.
    tab = np.hstack([Abar, np.eye(m), bz[:, None]])
    basis = list(range(n, n + m))
    n_total = n + m
    pivots = 0

    def pivot(r: int, q: int):
        nonlocal pivots
        tab[r] /= tab[r, q]
        col = tab[:, q].copy()
        col[r] = 0.0
        tab[:] -= np.outer(col, tab[r])
        basis[r] = q
        pivots += 1

    def run(cost: np.ndarray, allowed: int):
        """Bland's-rule simplex on columns [0, allowed). Returns entering column if unbounded."""
        while True:
            if pivots > max_pivots:
                raise RuntimeError("simplex pivot limit reached")
            cb = cost[basis]
            red = cost[:allowed] - cb @ tab[:, :allowed]
            cand = np.nonzero(red < -tol)[0]
            if cand.size == 0:
                return None
            q = int(cand[0])
            colq = tab[:, q]
            pos = np.nonzero(colq > tol)[0]
            if pos.size == 0:
                return q
            ratios = tab[pos, -1] / colq[pos]
            best = ratios.min()
            ties = pos[ratios <= best + tol * max(1.0, abs(best))]
            r = int(min(ties, key=lambda i: basis[i]))
            pivot(r, q)

    # Phase 1
    cost1 = np.zeros(n_total)
    cost1[n:] = 1.0
    run(cost1, n)
    infeas = float(cost1[basis] @ tab[:, -1])
    scale = max(1.0, float(np.abs(bz).max(initial=0.0)))
    if infeas > 100 * tol * scale:
        y = cost1[basis] @ tab[:, n:n_total]
        y = y * flip
        return LpOutcome("infeasible", certificate=y[:m0], pivots=pivots, info={"phase1": infeas})

    # Drive remaining artificials out of the basis; drop redundant rows.
    keep = np.ones(m, dtype=bool)
    for r in range(m):
        if basis[r] >= n:
            cand = np.nonzero(np.abs(tab[r, :n]) > tol)[0]
            if cand.size:
                pivot(r, int(cand[0]))
            else:
                keep[r] = False
    if not keep.all():
        tab = tab[keep]
        basis = [bv for bv, k in zip(basis, keep) if k]

    # Phase 2
    cost2 = np.zeros(n_total)
    cost2[:nz] = S.T @ c
    q = run(cost2, n)
    if q is not None:
        dz = np.zeros(n)
        dz[q] = 1.0
        for r, bv in enumerate(basis):
            if bv < n:
                dz[bv] = -tab[r, q]
        ray = S @ dz[:nz]
        return LpOutcome("unbounded", certificate=ray, pivots=pivots)

    w = np.zeros(n_total)
    w[basis] = tab[:, -1]
    x = x0 + S @ w[:nz]
    y = (cost2[basis] @ tab[:, n:n_total]) * flip
    y = y[:m0]
    sgn = 1.0 if lp.sense == "min" else -1.0
    return LpOutcome("optimal", x=x, objective=float(lp.objective @ x), dual=sgn * y, pivots=pivots)


def dual_objective(lp: LinearProgram, y: np.ndarray) -> float:
    """Dual value b.y plus the bound terms implied by reduced costs."""
    r = lp.objective - lp.constraint_matrix.T @ y
    if lp.sense == "min":
        with np.errstate(invalid="ignore"):
            terms = np.where(r > 0, r * lp.var_lower, np.where(r < 0, r * lp.var_upper, 0.0))
    else:
        with np.errstate(invalid="ignore"):
            terms = np.where(r < 0, r * lp.var_lower, np.where(r > 0, r * lp.var_upper, 0.0))
    return float(lp.rhs @ y + np.sum(terms))


def symmetric_eigenvalues(M, tol: float = 1e-12, max_sweeps: int = 100) -> np.ndarray:
    """Eigenvalues of a symmetric matrix by cyclic Jacobi rotations, ascending."""
    A = np.array(M, dtype=float)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise DimensionError("square matrix required")
    d = A.shape[0]
    scale = max(1.0, float(np.abs(A).max(initial=0.0)))
    if np.abs(A - A.T).max(initial=0.0) > tol * scale:
        raise ValueError("matrix is not symmetric")
    A = (A + A.T) / 2
    target = tol * scale
    for _ in range(max_sweeps):
        off = np.sqrt(np.sum(np.tril(A, -1) ** 2))
        if off <= target:
            break
        for p in range(d - 1):
            for q in range(p + 1, d):
                apq = A[p, q]
                if abs(apq) <= 1e-300:
                    continue
                theta = (A[q, q] - A[p, p]) / (2.0 * apq)
                if abs(theta) > 1e150:
                    t = 0.5 / theta  # theta**2 would overflow
                else:
                    t = np.copysign(1.0, theta) / (abs(theta) + np.sqrt(theta * theta + 1.0))
                c = 1.0 / np.sqrt(t * t + 1.0)
                s = t * c
                colp, colq = A[:, p].copy(), A[:, q].copy()
                A[:, p] = c * colp - s * colq
                A[:, q] = s * colp + c * colq
                rowp, rowq = A[p, :].copy(), A[q, :].copy()
                A[p, :] = c * rowp - s * rowq
                A[q, :] = s * rowp + c * rowq
                A[p, q] = A[q, p] = 0.0
    else:
        raise RuntimeError("Jacobi sweeps did not converge")
    return np.sort(np.diag(A))
