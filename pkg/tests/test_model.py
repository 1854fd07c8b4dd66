import json

import numpy as np
import pytest

from disagg.model import (MicrogridSpec, QuadraticCost, TransportInstance, aggregate_box, dump_instance,
                          load_instance, microgrid_instance, microgrid_spec, random_instance, random_point, stream,
                          toy_instance, validate)


def test_toy_instance_shape_and_box():
    inst, cost = toy_instance()
    assert (inst.n_agents, inst.horizon) == (3, 4)
    assert validate(inst).ok
    box = aggregate_box(inst)
    assert box.sum_target == pytest.approx(3.3)
    assert box.col_upper == pytest.approx([1.4, 0.4, 1.7, 0.9])
    assert box.col_lower == pytest.approx([0, 0, 0, 0])
    assert cost([1.0, 0.0, 0.0, 0.0]) == pytest.approx(0.9)


def test_validate_collects_every_violation():
    inst = TransportInstance([[0.0, 2.0], [0.0, np.nan]], [[1.0, 1.0], [1.0, 1.0]], [5.0, 0.5])
    kinds = sorted(v.kind for v in validate(inst).violations)
    assert kinds == ["bounds", "demand", "non-finite"]
    assert not validate(inst)


def test_validate_short_horizon_and_shape():
    assert [v.kind for v in validate(TransportInstance([[0.0]], [[1.0]], [0.5])).violations] == ["shape"]
    bad = TransportInstance([[0.0, 0.0]], [[1.0, 1.0]], [0.5, 0.5])
    assert [v.kind for v in validate(bad).violations] == ["shape"]


def test_json_round_trip(tmp_path):
    inst = microgrid_instance(3, 4, 7)
    path = tmp_path / "inst.json"
    dump_instance(inst, path)
    back = load_instance(path)
    assert np.array_equal(back.lower, inst.lower)
    assert np.array_equal(back.upper, inst.upper)
    assert np.array_equal(back.demand, inst.demand)
    assert np.array_equal(back.microgrid.pv, inst.microgrid.pv)
    assert back.microgrid.p_max == inst.microgrid.p_max


def test_declared_dimensions_checked():
    d = toy_instance()[0].to_dict()
    d["horizon"] = 5
    with pytest.raises(ValueError):
        TransportInstance.from_dict(json.loads(json.dumps(d)))


def test_microgrid_generator_is_deterministic_and_valid():
    a, b = microgrid_instance(16, 6, 3), microgrid_instance(16, 6, 3)
    assert np.array_equal(a.lower, b.lower) and np.array_equal(a.demand, b.demand)
    assert validate(a).ok
    assert np.all(a.upper - a.lower <= 5.0) and np.all(a.lower >= 0) and np.all(a.lower <= 10)
    assert not np.array_equal(a.lower, microgrid_instance(16, 6, 4).lower)


def test_microgrid_prefix_stable_across_agent_count():
    # per-agent streams: adding agents does not change the first ones
    assert np.array_equal(microgrid_instance(4, 6, 1).lower, microgrid_instance(8, 6, 1).lower[:4])


def test_microgrid_spec_scaling():
    spec = microgrid_spec(20, 24, 0)
    assert spec.p_max == pytest.approx(300.0) and spec.p_min == pytest.approx(50.0)
    assert spec.theta == pytest.approx([0, 70, 100, 300])
    # no sun before period 6 or after 20; at t = 6 the cosine term vanishes, leaving only the noise
    assert np.all(spec.pv[:5] == 0) and np.all(spec.pv[20:] == 0)
    assert 0 <= spec.pv[5] <= 10
    half = microgrid_spec(10, 24, 0)
    assert half.p_max == pytest.approx(150.0)
    assert half.pv == pytest.approx(spec.pv / 2)


def test_microgrid_spec_rejects_bad_breakpoints():
    with pytest.raises(ValueError):
        MicrogridSpec([0, 50, 40], [0.1, 0.2], 1, 1, 0, 40, [0, 0])
    with pytest.raises(ValueError):
        MicrogridSpec([0, 50, 100], [0.1, 0.2], 1, 1, 0, 90, [0, 0])


def test_quadratic_cost_requires_positive_curvature():
    with pytest.raises(ValueError):
        QuadraticCost(1.0, 0.0)


def test_permuted_instance_has_same_aggregate_box():
    inst = random_instance(5, 4, 0)
    perm = [3, 0, 4, 1, 2]
    q = inst.permuted(perm)
    assert np.array_equal(q.lower[1], inst.lower[0])
    a, b = aggregate_box(inst), aggregate_box(q)
    assert a.sum_target == pytest.approx(b.sum_target)
    assert a.col_upper == pytest.approx(b.col_upper)


@pytest.mark.parametrize("seed", range(10))
def test_random_instances_valid_and_points_inside(seed):
    inst = random_instance(4, 5, seed)
    assert validate(inst).ok
    x = random_point(inst, np.random.default_rng(seed))
    assert np.all(x >= inst.lower - 1e-12) and np.all(x <= inst.upper + 1e-12)
    assert x.sum(axis=1) == pytest.approx(inst.demand)


def test_streams_depend_only_on_key():
    a = stream(5, 1, 2).random(3)
    stream(5, 9).random(100)
    assert np.array_equal(a, stream(5, 1, 2).random(3))
    assert not np.array_equal(a, stream(5, 2, 1).random(3))
