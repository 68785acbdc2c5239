import math
from types import SimpleNamespace

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from racetraj3d.racingline import RacingLine, apex_path, offline_racing_line
from racetraj3d.sampling import VehicleState, longitudinal_arrays
from racetraj3d.selection import (
    CostWeights,
    Prediction,
    filter_in_range,
    prediction_term,
    racing_line_speed,
    select,
    total_cost,
)
from racetraj3d.trajgen import generate_candidates, to_cartesian
from racetraj3d.validation import SelectionError


def constant_line(v=30.0, n=0.0, horizon=10.0):
    t = np.linspace(0.0, horizon, 101)
    z = np.zeros_like(t)
    return RacingLine(t, v * t, np.full_like(t, v), z, np.full_like(t, n), z.copy(), z.copy())


def fake_candidates(n, v, T=3.0, N=30):
    t = np.linspace(0.0, T, N)
    n = np.atleast_2d(n)
    return SimpleNamespace(t=t, T=T, s=np.broadcast_to(30.0 * t, n.shape), n=n,
                           kin=SimpleNamespace(v=np.broadcast_to(v, n.shape)))


def test_prediction_examples():
    pr = Prediction(np.array([[10.0]]), np.array([[0.0]]))
    assert prediction_term(np.array([[10.0]]), np.array([[0.0]]), pr)[0, 0] == 1.0
    assert prediction_term(np.array([[0.0]]), np.array([[0.0]]), pr)[0, 0] == pytest.approx(math.exp(-1.5))
    assert math.exp(-1.5) == pytest.approx(0.2231, abs=1e-4)
    empty = prediction_term(np.zeros((2, 3)), np.zeros((2, 3)), Prediction.empty(3))
    assert np.all(empty == 0.0)


@given(st.floats(0.0, 50.0), st.floats(0.01, 10.0), st.floats(0.0, 5.0), st.floats(0.01, 3.0))
def test_prediction_decreases_with_distance(ds, dds, dn, ddn):
    pr = Prediction(np.array([[0.0]]), np.array([[0.0]]))
    base = prediction_term(np.array([[ds]]), np.array([[dn]]), pr)[0, 0]
    if base > 0.0:
        assert prediction_term(np.array([[ds + dds]]), np.array([[dn]]), pr)[0, 0] < base
        assert prediction_term(np.array([[ds]]), np.array([[dn + ddn]]), pr)[0, 0] < base


def test_prediction_wraps_on_closed_track(circle):
    L = circle.total_length
    pr = Prediction(np.array([[2.0]]), np.array([[0.0]]))
    near = prediction_term(np.array([[L - 2.0]]), np.array([[0.0]]), pr, track=circle)[0, 0]
    assert near == pytest.approx(math.exp(-0.015 * 16.0))


def test_filter_in_range(circle):
    L = circle.total_length
    pr = Prediction(np.array([[L - 50.0], [300.0], [150.0]]), np.zeros((3, 1)))
    kept = filter_in_range(pr, 20.0, 200.0, circle)
    assert kept.s[:, 0].tolist() == [L - 50.0, 150.0]


def test_cost_zero_on_line():
    rl = constant_line(v=30.0, n=0.5)
    c = fake_candidates(np.full(30, 0.5), 30.0)
    cost = total_cost(c, rl, Prediction.empty(30), CostWeights(), v_rl=np.full(30, 30.0))
    assert cost[0] == 0.0


def test_cost_lateral_example():
    rl = constant_line(v=30.0)
    c = fake_candidates(np.ones(30), 30.0)
    cost = total_cost(c, rl, Prediction.empty(30), CostWeights(), v_rl=np.full(30, 30.0))
    assert cost[0] == pytest.approx(0.3, rel=1e-12)


def test_cost_speed_term_is_normalized():
    rl = constant_line(v=30.0)
    c = fake_candidates(np.zeros(30), 27.0)
    cost = total_cost(c, rl, Prediction.empty(30), CostWeights(), v_rl=np.full(30, 30.0))
    assert cost[0] == pytest.approx(100.0 * 0.01 * 3.0)


def test_cost_prediction_weight_is_linear():
    rl = constant_line(v=30.0)
    c = fake_candidates(np.full(30, 0.3), 29.0)
    pr = Prediction(np.full((1, 30), 40.0), np.zeros((1, 30)))
    v = np.full(30, 30.0)
    base = total_cost(c, rl, Prediction.empty(30), CostWeights(), v_rl=v)[0]
    one = total_cost(c, rl, pr, CostWeights(w_pr=5000.0), v_rl=v)[0]
    two = total_cost(c, rl, pr, CostWeights(w_pr=10000.0), v_rl=v)[0]
    assert two - base == pytest.approx(2.0 * (one - base), rel=1e-12)


def test_cost_rejects_stationary_line():
    rl = constant_line(v=30.0)
    c = fake_candidates(np.zeros(30), 30.0)
    with pytest.raises(SelectionError):
        total_cost(c, rl, Prediction.empty(30), CostWeights(), v_rl=np.zeros(30))


def test_select_examples():
    assert select([5.0], [0]) == (0, False)
    assert select([2.0, 1.0, 3.0], [0, 1, 2]) == (1, False)
    assert select([1.0, 1.0 + 1e-13, 0.5], [1, 0]) == (0, False)
    assert select([1.0], [], fallback=0) == (0, True)
    with pytest.raises(SelectionError):
        select([1.0], [])


@pytest.fixture(scope="module")
def oval_set(oval, gg):
    rl = offline_racing_line(oval, gg).anchored(250.0)
    r = rl.state_at(0.0)
    ego = VehicleState(250.0, float(r.s_dot), float(r.s_ddot), float(r.n), float(r.n_dot), float(r.n_ddot))
    c = to_cartesian(generate_candidates(ego, rl, longitudinal_arrays(ego, rl, 3.0), T=3.0, track=oval), oval)
    return c, rl


def test_racing_line_candidate_strictly_cheapest(complex_track, gg):
    rl = offline_racing_line(complex_track, gg, apex_path(complex_track)).anchored(600.0)
    r = rl.state_at(0.0)
    ego = VehicleState(600.0, float(r.s_dot), float(r.s_ddot), float(r.n), float(r.n_dot), float(r.n_ddot))
    c = to_cartesian(generate_candidates(ego, rl, longitudinal_arrays(ego, rl, 3.0), T=3.0,
                                         track=complex_track), complex_track)
    costs = total_cost(c, rl, Prediction.empty(c.t.size), CostWeights(), track=complex_track)
    k = int(np.flatnonzero(c.is_racing_line)[0])
    assert costs[k] == pytest.approx(0.0, abs=1e-12)
    assert np.all(np.delete(costs, k) > costs[k])


def test_zero_cost_only_for_copies_of_the_line(oval, oval_set):
    # on a straight-centred line a jerk-optimal quintic can coincide with the line itself
    c, rl = oval_set
    costs = total_cost(c, rl, Prediction.empty(c.t.size), CostWeights(), track=oval)
    k = int(np.flatnonzero(c.is_racing_line)[0])
    for i in np.flatnonzero(costs <= 1e-12):
        assert np.allclose(c.n[i], c.n[k], atol=1e-9) and np.allclose(c.s[i], c.s[k], atol=1e-9)


def test_weight_scaling_keeps_argmin(oval, oval_set):
    c, rl = oval_set
    rng = np.random.default_rng(9)
    feasible = np.arange(len(c))
    for _ in range(20):
        pr = Prediction(c.s[:1] + rng.uniform(5.0, 60.0), np.full((1, c.t.size), rng.uniform(-3.0, 3.0)))
        w = CostWeights(*rng.uniform(0.01, 10.0, 3))
        base = select(total_cost(c, rl, pr, w, track=oval), feasible)
        scaled = select(total_cost(c, rl, pr, w.scaled(rng.uniform(0.1, 100.0)), track=oval), feasible)
        assert base == scaled


def test_racing_line_speed_uses_transform(oval, oval_set):
    c, rl = oval_set
    v = racing_line_speed(rl, c.t, oval)
    k = int(np.flatnonzero(c.is_racing_line)[0])
    assert np.allclose(v, c.kin.v[k], rtol=1e-12)


def test_prediction_ignores_heading():
    # opponent crossing the track versus travelling along it: same offsets, same cost
    s = np.array([[10.0, 20.0]])
    n = np.array([[0.0, 1.0]])
    a = prediction_term(s, n, Prediction(np.array([[12.0, 20.0]]), np.array([[0.0, -1.0]])))
    b = prediction_term(s, n, Prediction(np.array([[12.0, 20.0]]), np.array([[0.0, 3.0]])))
    assert a[0, 0] == b[0, 0] and a[0, 1] == b[0, 1]
