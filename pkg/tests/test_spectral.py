import csv

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from disagg.apm import rate_kappa
from disagg.spectral import (FaceConfig, face_matrices, lambda1, laplacian, laplacian_from_faces, loglog_slope,
                             random_config, scaling_experiment, write_scaling_csv)


def numpy_lambda1(config):
    P = laplacian(config)
    active = config.free_mask().any(axis=0)
    ev = np.linalg.eigvalsh(P[np.ix_(active, active)])
    pos = ev[ev > 1e-9]
    return pos[0] if pos.size else 0.0


def test_single_agent_two_periods():
    c = FaceConfig(1, 2, (frozenset(),))
    assert laplacian(c) == pytest.approx(np.array([[0.5, -0.5], [-0.5, 0.5]]))
    assert lambda1(c) == pytest.approx(1.0)


def test_saturated_period_is_isolated():
    c = FaceConfig(2, 3, ({2}, {2}))
    P = laplacian(c)
    assert P[2] == pytest.approx([0, 0, 0])
    assert lambda1(c) == pytest.approx(1.0)


def test_config_validation():
    with pytest.raises(ValueError):
        FaceConfig(1, 2, ({0, 1},))
    with pytest.raises(ValueError):
        FaceConfig(2, 2, ({0},))
    with pytest.raises(ValueError):
        FaceConfig(1, 2, ({5},))
    with pytest.raises(ValueError):
        random_config(2, 3, np.random.default_rng(0), kind="uniform")


configs = st.integers(1, 4).flatmap(lambda N: st.integers(2, 6).flatmap(lambda T: st.tuples(
    st.just(N), st.just(T),
    st.lists(st.sets(st.integers(0, T - 1), max_size=T - 1), min_size=N, max_size=N))))


@settings(max_examples=150, deadline=None)
@given(configs)
def test_laplacian_structure(data):
    N, T, sets = data
    c = FaceConfig(N, T, tuple(sets))
    P = laplacian(c)
    assert np.allclose(P, P.T)
    assert np.allclose(P.sum(axis=1), 0)
    assert np.all(np.linalg.eigvalsh(P) >= -1e-12)
    # the same operator assembled from orthonormal bases of the two subspaces
    assert laplacian_from_faces(c) == pytest.approx(P, abs=1e-12)
    assert lambda1(c) == pytest.approx(numpy_lambda1(c), abs=1e-9)


@settings(max_examples=100, deadline=None)
@given(configs)
def test_smallest_positive_eigenvalue_above_rate_bound(data):
    N, T, sets = data
    lam = lambda1(FaceConfig(N, T, tuple(sets)))
    if lam > 0:
        assert lam >= rate_kappa(N, T)


def test_face_matrices_have_orthonormal_rows():
    rng = np.random.default_rng(0)
    for _ in range(10):
        c = random_config(3, 5, rng)
        A, B = face_matrices(c)
        assert A @ A.T == pytest.approx(np.eye(5))
        assert B @ B.T == pytest.approx(np.eye(len(B)))


@pytest.mark.parametrize("kind", ["window", "bernoulli"])
def test_random_configs_leave_a_free_period(kind):
    rng = np.random.default_rng(1)
    for _ in range(200):
        c = random_config(4, 6, rng, kind)
        assert c.free_mask().any(axis=1).all()


def test_window_draw_frees_contiguous_runs():
    rng = np.random.default_rng(2)
    for _ in range(100):
        free = random_config(1, 8, rng).free_mask()[0]
        idx = np.nonzero(free)[0]
        assert np.array_equal(idx, np.arange(idx[0], idx[-1] + 1))


def test_scaling_experiment_is_deterministic(tmp_path):
    rows, slope = scaling_experiment(4, [3, 5], draws_per_t=30, seed=1)
    again, slope2 = scaling_experiment(4, [3, 5], draws_per_t=30, seed=1)
    assert [r.worst_lambda1 for r in rows] == [r.worst_lambda1 for r in again] and slope == slope2
    assert all(r.violations == 0 for r in rows)
    path = tmp_path / "s.csv"
    write_scaling_csv(rows, path)
    got = list(csv.reader(open(path)))
    assert got[0] == ["T", "worst_lambda1", "kappa_bound"]
    assert float(got[1][1]) == rows[0].worst_lambda1


def test_loglog_slope_of_power_law():
    T = np.array([4, 6, 8, 12])
    assert loglog_slope(T, 3.0 * T**-1.5) == pytest.approx(-1.5)
