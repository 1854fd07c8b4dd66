import csv

import numpy as np
import pytest

from disagg.apm import contraction_ratios, default_budget, norm, observed_rate, rate_kappa, run_apm
from disagg.cli import oracle_case
from disagg.cuts import hoffman_feasible, sample_disaggregable
from disagg.model import TransportInstance, random_instance, toy_instance


def two_period_instance():
    # agent 0 must put 1 in each period, so no allocation with p_1 < 1 disaggregates
    return TransportInstance(np.zeros((3, 2)), np.ones((3, 2)), [2.0, 0.5, 0.5])


def test_rate_kappa_value():
    assert rate_kappa(6, 4) == pytest.approx(4 / (6 * 25 * 3))
    assert rate_kappa(3, 4) == pytest.approx(4 / 225)


def test_norms():
    x = np.array([[1.0, -2.0], [0.5, 0.5]])
    assert norm(x, "op") == 3.0
    assert norm(x, "l2") == pytest.approx(np.sqrt(5.5))
    with pytest.raises(ValueError):
        norm(x, "max")


def test_infeasible_two_period_case_leaves_a_gap():
    res = run_apm(two_period_instance(), [0.0, 3.0], eps_cvg=1e-12)
    assert res.converged
    assert res.x_final[0] == pytest.approx([1.0, 1.0])
    # the limit displacement is the same for every agent and points toward the deficient period
    d = res.y_final - res.x_final
    assert np.allclose(d, d[0])
    assert res.multiplier[0] < 0 < res.multiplier[1]
    assert res.gap == pytest.approx(np.abs(d).sum(axis=1).max())
    assert res.gap > 0.1


def test_feasible_start_stops_after_one_sweep():
    inst = two_period_instance()
    p = [1.5, 1.5]
    x = np.array([[1.0, 1.0], [0.25, 0.25], [0.25, 0.25]])
    res = run_apm(inst, p, y0=x, eps_cvg=1e-9)
    assert res.iterations == 1 and res.gap == pytest.approx(0.0, abs=1e-12)


@pytest.mark.parametrize("index", range(16))
def test_gap_verdict_matches_subset_oracle(index):
    inst, p, feasible = oracle_case(7, index)
    assert hoffman_feasible(inst, p).feasible == feasible
    res = run_apm(inst, p, eps_cvg=1e-10)
    assert (res.gap <= 1e-4) == feasible


@pytest.mark.parametrize("seed", range(8))
def test_steps_nonincreasing_and_tail_rate(seed):
    inst = random_instance(4, 4, seed, 5)
    rng = np.random.default_rng(seed)
    p = sample_disaggregable(inst, rng) + np.array([0.3, -0.3, 0.2, -0.2])
    res = run_apm(inst, p, eps_cvg=1e-9)
    assert res.monotone
    r = res.contraction_ratios[np.isfinite(res.contraction_ratios)]
    assert np.all(r <= 1 + 1e-9)
    tail = r[len(r) // 2:]
    assert np.all(tail <= 1 - rate_kappa(4, 4) + 1e-6)


def test_toy_first_iterate_contraction():
    inst, _ = toy_instance()
    res = run_apm(inst, [1.0, 0.4, 1.0, 0.9], eps_cvg=1e-10)
    assert res.monotone
    assert observed_rate(res) < 1 - rate_kappa(3, 4)


def test_trace_csv(tmp_path):
    path = tmp_path / "trace.csv"
    res = run_apm(two_period_instance(), [0.5, 2.5], eps_cvg=1e-8, trace_path=path)
    rows = list(csv.DictReader(open(path)))
    assert list(rows[0]) == ["k", "residual", "gap", "ratio"]
    assert len(rows) == res.iterations
    assert float(rows[-1]["gap"]) == pytest.approx(res.gap)


def test_contraction_ratio_floor():
    r = contraction_ratios([1.0, 0.5, 0.0, 0.0], floor=1e-12)
    assert r[:2] == pytest.approx([0.5, 0.0])
    assert np.isnan(r[2])


def test_budget_and_errors():
    assert default_budget(1e-9, 1e-6, 3, 4) == 1
    assert default_budget(1.0, 1e-6, 3, 4) > 100
    with pytest.raises(ValueError):
        run_apm(two_period_instance(), [np.nan, 3.0])
    res = run_apm(two_period_instance(), [1.5, 1.5], y0=np.array([[1, 1], [.25, .25], [.25, .25]]))
    with pytest.raises(ValueError):
        observed_rate(res)


def test_max_iter_caps_sweeps():
    inst = random_instance(4, 4, 0, 5)
    p = sample_disaggregable(inst, np.random.default_rng(0)) + np.array([0.3, -0.3, 0.2, -0.2])
    res = run_apm(inst, p, eps_cvg=1e-30, max_iter=5)
    assert res.iterations == 5 and not res.converged
