import dataclasses
import math

import numpy as np
import pytest

from racetraj3d.simulation import (
    TRACE_COLUMNS,
    OpponentSpec,
    PlannerParams,
    ScenarioConfig,
    ScenarioResult,
    WorldState,
    _lap_crossings,
    build_context,
    initial_world,
    opponent_position,
    overtake_completion,
    plan_cycle,
    predict_opponents,
    run_scenario,
    step,
    write_trace,
)
from racetraj3d.validation import ScenarioAborted


def config(**kw):
    base = dict(name="t", ego={"s": 100.0}, laps=0, duration=0.5)
    base.update(kw)
    return ScenarioConfig(**base)


@pytest.fixture(scope="module")
def oval_ctx(oval, gg):
    return build_context(config(), track=oval, gg=gg)


def ctx_with(ctx, **kw):
    return ctx._replace(config=dataclasses.replace(ctx.config, **kw))


def test_config_validation():
    with pytest.raises(ValueError):
        config(racing_line_mode="sometimes")
    with pytest.raises(ValueError):
        config(dynamics_mode="4d")
    with pytest.raises(ValueError):
        ScenarioConfig(laps=0)
    with pytest.raises(ValueError):
        PlannerParams(T=-1.0)
    with pytest.raises(ValueError):
        PlannerParams(dt_sim=5.0)
    with pytest.raises(ValueError):
        OpponentSpec(type="teleporter", s=0.0)
    with pytest.raises(ValueError):
        ScenarioConfig.from_dict({"colour": "red"})
    with pytest.raises(ValueError):
        ScenarioConfig.from_dict({"planner": {"T_max": 3.0}})


def test_config_yaml_round_trip(tmp_path):
    import yaml

    cfg = config(opponents=[{"type": "static", "s": 300.0, "n": 1.0}], planner={"T": 2.5})
    path = tmp_path / "c.yaml"
    data = cfg.to_dict()
    data["planner"]["blend_length"] = list(data["planner"]["blend_length"][:3])
    path.write_text(yaml.safe_dump(data))
    back = ScenarioConfig.from_yaml(path)
    assert back.planner.T == 2.5 and back.opponents == cfg.opponents
    assert back.ego == cfg.ego


def test_planner_defaults():
    p = PlannerParams()
    assert (p.H_rl, p.T, p.N_sdot, p.K_sdot, p.N_n, p.s0_thr, p.N, p.dt_sim) == (500.0, 3.0, 40, 1.2, 15, 0.3, 30, 0.1)
    assert (p.d_w, p.d_s, p.kappa_max, p.d_s_rl, p.a_mgn, p.a_abs_mgn) == (1.93, 0.2, 0.1, 0.5, 0.1, 0.8)
    assert (p.w_n, p.w_v, p.w_pr, p.k_s, p.k_n, p.d_snr) == (0.1, 100.0, 5000.0, 0.015, 0.5, 200.0)


def test_static_prediction_is_constant(oval_ctx):
    ctx = ctx_with(oval_ctx, opponents=(OpponentSpec("static", 300.0, 1.5),))
    pr = predict_opponents(ctx, initial_world(ctx), np.linspace(0.0, 3.0, 30))
    assert np.all(pr.s == 300.0) and np.all(pr.n == 1.5)


def test_follower_runs_at_speed_fraction(oval_ctx):
    spec = OpponentSpec("follower", 200.0, speed_fraction=0.7)
    s0, _ = opponent_position(oval_ctx, spec, 0.0)
    s1, _ = opponent_position(oval_ctx, spec, 2.0)
    rl = oval_ctx.offline
    assert float(s0) == pytest.approx(200.0)
    # two seconds of follower motion cover 1.4 s of racing-line time
    assert float(rl.time_at(s1) - rl.time_at(s0)) == pytest.approx(1.4, abs=1e-9)
    # a whole racing-line lap at 70 % pace takes 1/0.7 lap times
    L, lap = oval_ctx.offline.lap_length, oval_ctx.offline.horizon
    s_lap, _ = opponent_position(oval_ctx, spec, lap / 0.7)
    assert float(s_lap) == pytest.approx(200.0 + L, abs=1e-6)


def test_prediction_matches_replayed_motion(oval_ctx):
    ctx = ctx_with(oval_ctx, opponents=(OpponentSpec("follower", 200.0), OpponentSpec("constant_speed", 50.0, 2.0, 40.0)),
                   duration=1.0)
    world = initial_world(ctx)
    res = run_scenario(ctx.config, ctx)
    # predicted from the initial state, evaluated at every later logged clock
    pr = predict_opponents(ctx, world, res.trace["time"])
    assert np.array_equal(pr.s[0], res.opponent_trace["opp0_s"])
    assert np.array_equal(pr.s[1], res.opponent_trace["opp1_s"])
    assert np.array_equal(pr.n[1], res.opponent_trace["opp1_n"])


def test_solo_cycle_follows_racing_line(oval_ctx):
    out = plan_cycle(oval_ctx, initial_world(oval_ctx))
    c = out.candidates
    k = int(np.flatnonzero(c.is_racing_line)[0])
    assert out.cost == pytest.approx(0.0, abs=1e-12)
    # the choice is the racing-line candidate or an identical copy of it
    assert np.allclose(c.s[out.index], c.s[k], atol=1e-9) and np.allclose(c.n[out.index], c.n[k], atol=1e-9)
    assert not out.soft_fallback


def test_parked_opponent_is_avoided(oval_ctx):
    ctx = ctx_with(oval_ctx, opponents=(OpponentSpec("static", 150.0, 0.0),))
    out = plan_cycle(ctx, initial_world(ctx))
    c = out.candidates
    k = int(np.flatnonzero(c.is_racing_line)[0])

    def clearance(i):
        # lateral gap at the moment the candidate passes the parked car
        return abs(float(np.interp(150.0, c.s[i], c.n[i])))

    assert c.s[k, -1] > 150.0 and c.s[out.index, -1] > 150.0

    assert clearance(out.index) > clearance(k)


def test_step_moves_along_chosen_candidate(oval_ctx):
    world = initial_world(oval_ctx)
    out = plan_cycle(oval_ctx, world)
    nxt = step(oval_ctx, world, out)
    assert nxt.clock == pytest.approx(0.1) and nxt.cycle == 1
    assert nxt.ego == out.candidates.state_at(out.index, 0.1)


def test_replanning_extends_previous_plan(oval_ctx):
    world = initial_world(oval_ctx)
    prev = plan_cycle(oval_ctx, world)
    for _ in range(5):
        world = step(oval_ctx, world, prev)
        cur = plan_cycle(oval_ctx, world)
        for t in np.linspace(0.0, 2.9, 15):
            a = prev.candidates.state_at(prev.index, t + 0.1).as_array()
            b = cur.candidates.state_at(cur.index, t).as_array()
            assert np.max(np.abs(a - b)) < 1e-6
        prev = cur


def test_lap_crossing_interpolation():
    assert _lap_crossings(100.0, 95.0, 105.0, 10.0, 0.1) == [pytest.approx(10.05)]
    assert _lap_crossings(100.0, 10.0, 20.0, 0.0, 0.1) == []


def test_runs_are_deterministic(oval_ctx, tmp_path):
    ctx = ctx_with(oval_ctx, opponents=(OpponentSpec("follower", 150.0),), duration=0.8)
    a = run_scenario(ctx.config, ctx)
    b = run_scenario(ctx.config, ctx)
    write_trace(a, tmp_path / "a.csv")
    write_trace(b, tmp_path / "b.csv")
    assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()
    header = (tmp_path / "a.csv").read_text().splitlines()[0].split(",")
    assert header == list(TRACE_COLUMNS) + ["opp0_s", "opp0_n"]


def test_clock_in_exact_steps(oval_ctx):
    res = run_scenario(oval_ctx.config, oval_ctx)
    assert res.trace["cycle"].tolist() == [0, 1, 2, 3, 4]
    assert np.allclose(res.trace["time"], 0.1 * np.arange(5))


def test_persistent_fallback_aborts(oval_ctx):
    ctx = ctx_with(oval_ctx, planner=PlannerParams(d_s=8.0), abort_after=3, duration=2.0)
    with pytest.raises(ScenarioAborted) as info:
        run_scenario(ctx.config, ctx)
    res = info.value.result
    assert res.aborted and res.soft_fallbacks == 3 and "consecutive" in res.message


def test_flat_mode_uses_level_checks(oval, gg):
    ctx = build_context(config(dynamics_mode="2d"), track=oval, gg=gg)
    ctx3 = build_context(config(), track=oval, gg=gg)
    # without banking support the stored lap is slower
    assert ctx.offline.horizon > ctx3.offline.horizon


def test_overtake_completion():
    res = ScenarioResult("x", [], [], 1.0, 0, {"s": np.array([0.0, 10.0, 20.0, 30.0])}, {
        "opp0_s": np.array([15.0, 18.0, 21.0, 24.0])})
    assert overtake_completion(res) == 30.0
    assert overtake_completion(res, gap=10.0) is None
    ahead = ScenarioResult("x", [], [], 1.0, 0, {"s": np.array([30.0])}, {"opp0_s": np.array([0.0])})
    assert overtake_completion(ahead) is None


def test_world_is_immutable(oval_ctx):
    w = initial_world(oval_ctx)
    with pytest.raises(dataclasses.FrozenInstanceError):
        w.clock = 1.0
    assert isinstance(w, WorldState) and math.isclose(w.ego.s_0, 100.0)
