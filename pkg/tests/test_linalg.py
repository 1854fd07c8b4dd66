import itertools

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from disagg.linalg import (EQ, GE, LE, DimensionError, LinearProgram, dual_objective, farkas_holds, solve_lp,
                           symmetric_eigenvalues)


def vertex_optimum(c, A, b, ub):
    """Brute force over all vertices of {A x <= b, 0 <= x <= ub}."""
    d = len(c)
    G = np.vstack([A, np.eye(d), -np.eye(d)])
    h = np.concatenate([b, ub, np.zeros(d)])
    best = None
    for rows in itertools.combinations(range(len(h)), d):
        M = G[list(rows)]
        if abs(np.linalg.det(M)) < 1e-10:
            continue
        x = np.linalg.solve(M, h[list(rows)])
        if np.all(G @ x <= h + 1e-9):
            v = c @ x
            best = v if best is None else min(best, v)
    return best


def test_min_single_lower_bound():
    out = solve_lp(LinearProgram([1.0], [[1.0]], [1.0], [GE]))
    assert out.status == "optimal"
    assert out.x == pytest.approx([1.0])


def test_max_on_simplex():
    out = solve_lp(LinearProgram([1.0, 1.0], [[1.0, 1.0]], [2.0], [LE], sense="max"))
    assert out.status == "optimal"
    assert out.objective == pytest.approx(2.0)


def test_contradictory_rows_infeasible_with_certificate():
    lp = LinearProgram([0.0], [[1.0], [1.0]], [0.0, 1.0], [LE, GE], var_lower=[-np.inf])
    out = solve_lp(lp)
    assert out.status == "infeasible"
    assert farkas_holds(lp, out.certificate)


def test_unbounded_ray_improves():
    lp = LinearProgram([-1.0, 0.0], [[1.0, -1.0]], [1.0], [LE])
    out = solve_lp(lp)
    assert out.status == "unbounded"
    ray = out.certificate
    assert lp.objective @ ray < 0
    assert np.all(lp.constraint_matrix @ ray <= 1e-9) and np.all(ray >= -1e-9)


@pytest.mark.parametrize("seed", range(40))
def test_random_lp_matches_vertex_enumeration(seed):
    rng = np.random.default_rng(seed)
    d, m = int(rng.integers(1, 5)), int(rng.integers(1, 7))
    A = rng.normal(size=(m, d))
    b = rng.uniform(0.5, 3.0, size=m)  # origin feasible
    c = rng.normal(size=d)
    ub = np.full(d, 5.0)
    lp = LinearProgram(c, A, b, [LE] * m, np.zeros(d), ub)
    out = solve_lp(lp)
    assert out.status == "optimal"
    assert out.objective == pytest.approx(vertex_optimum(c, A, b, ub), abs=1e-7)
    # strong duality, bound terms included
    assert dual_objective(lp, out.dual) == pytest.approx(out.objective, abs=1e-7)
    assert np.all(out.dual <= 1e-9)
    assert np.all(A @ out.x <= b + 1e-8)


@pytest.mark.parametrize("seed", range(20))
def test_random_equality_lp_duality(seed):
    rng = np.random.default_rng(100 + seed)
    d = 5
    A = rng.uniform(0.1, 1.0, size=(2, d))
    x_feas = rng.uniform(0, 1, size=d)
    b = A @ x_feas
    c = rng.normal(size=d)
    lp = LinearProgram(c, A, b, [EQ, EQ], np.zeros(d), np.ones(d), sense="max")
    out = solve_lp(lp)
    assert out.status == "optimal"
    assert np.allclose(A @ out.x, b, atol=1e-8)
    assert dual_objective(lp, out.dual) == pytest.approx(out.objective, abs=1e-7)


@pytest.mark.parametrize("seed", range(20))
def test_random_infeasible_certificates(seed):
    rng = np.random.default_rng(200 + seed)
    d = int(rng.integers(1, 4))
    a = rng.normal(size=d)
    # a.x <= -1 and a.x >= 1 cannot both hold; padding rows are random
    extra = rng.normal(size=(2, d))
    A = np.vstack([a, a, extra])
    b = np.concatenate([[-1.0, 1.0], rng.uniform(1, 2, size=2)])
    lp = LinearProgram(np.zeros(d), A, b, [LE, GE, LE, LE], np.full(d, -np.inf))
    out = solve_lp(lp)
    assert out.status == "infeasible"
    assert farkas_holds(lp, out.certificate)


def test_dimension_and_nan_errors():
    with pytest.raises(DimensionError):
        LinearProgram([1.0, 2.0], [[1.0]], [1.0], [LE])
    with pytest.raises(ValueError):
        LinearProgram([np.nan], [[1.0]], [1.0], [LE])


def test_eigen_identity_and_diagonal():
    assert symmetric_eigenvalues(np.eye(3)) == pytest.approx([1, 1, 1])
    assert symmetric_eigenvalues(np.diag([5.0, 0.0, 2.0])) == pytest.approx([0, 2, 5])


def test_eigen_rejects_nonsymmetric():
    with pytest.raises(ValueError):
        symmetric_eigenvalues([[1.0, 2.0], [0.0, 1.0]])


@pytest.mark.parametrize("seed", range(15))
def test_eigen_laplacian_matches_characteristic_roots(seed):
    rng = np.random.default_rng(seed)
    W = rng.uniform(0, 1, size=(4, 4))
    W = np.triu(W, 1)
    W = W + W.T
    L = np.diag(W.sum(axis=1)) - W
    roots = np.sort(np.roots(np.poly(L)).real)
    ev = symmetric_eigenvalues(L)
    assert ev == pytest.approx(roots, abs=1e-6)
    assert ev.sum() == pytest.approx(np.trace(L), abs=4 * 1e-11)


sym = st.integers(2, 5).flatmap(
    lambda d: st.tuples(
        st.lists(st.floats(-3, 3), min_size=d * d, max_size=d * d),
        st.lists(st.floats(-0.1, 0.1), min_size=d * d, max_size=d * d),
        st.just(d),
    )
)


@settings(max_examples=60, deadline=None)
@given(sym)
def test_weyl_perturbation_bound(data):
    a, e, d = data
    M = np.array(a).reshape(d, d)
    M = (M + M.T) / 2
    D = np.array(e).reshape(d, d)
    D = (D + D.T) / 2
    shift = np.abs(symmetric_eigenvalues(M + D) - symmetric_eigenvalues(M))
    assert np.all(shift <= np.linalg.norm(D, 2) + 1e-9)
