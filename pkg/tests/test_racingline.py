import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from racetraj3d.ggenvelope import check_accel, query, scale_for_racing_line, synth_gg
from racetraj3d.kinematics import road_kinematics
from racetraj3d.racingline import (
    LateralPath,
    RacingLine,
    RacingLineMargins,
    RLState,
    apex_path,
    centerline_path,
    load_racing_line,
    offline_racing_line,
    online_racing_line,
    profile_path,
    reparam_lateral,
)
from racetraj3d.sampling import VehicleState
from racetraj3d.synthetic import flat_circle, oval_banked, straight
from racetraj3d.validation import RacingLineError

NO_MARGIN = RacingLineMargins(d_s_rl=0.0, a_mgn=0.0, a_abs_mgn=0.0, lat_reserve=0.0)


def smooth_line(rng):
    """Random smooth racing line sampled densely from analytic s(t), n(t)."""
    v0 = rng.uniform(20.0, 60.0)
    a = rng.uniform(-3.0, 3.0)
    b = rng.uniform(-0.5, 0.5)
    amp = rng.uniform(0.5, 3.0)
    w = rng.uniform(0.3, 1.5)
    ph = rng.uniform(0.0, 2 * math.pi)
    t = np.linspace(0.0, 6.0, 60001)
    s = v0 * t + 0.5 * a * t**2 + b * t**3 / 6.0
    sd = v0 + a * t + 0.5 * b * t**2
    sdd = a + b * t
    n = amp * np.sin(w * t + ph)
    nd = amp * w * np.cos(w * t + ph)
    ndd = -amp * w * w * np.sin(w * t + ph)
    return RacingLine(t, s, sd, sdd, n, nd, ndd)


def test_reparam_identity_on_own_curve():
    rng = np.random.default_rng(0)
    rl = smooth_line(rng)
    t = np.linspace(0.0, 5.0, 11)
    r = rl.state_at(t)
    n, nd, ndd = reparam_lateral(rl, r.s, r.s_dot, r.s_ddot)
    assert np.allclose(n, r.n, atol=1e-12)
    assert np.allclose(nd, r.n_dot, atol=1e-12)
    assert np.allclose(ndd, r.n_ddot, atol=1e-12)


def test_reparam_constant_rates():
    t = np.linspace(0.0, 10.0, 11)
    rl = RacingLine(t, 20.0 * t, np.full(11, 20.0), np.zeros(11), t.copy(), np.ones(11), np.zeros(11))
    n, nd, ndd = reparam_lateral(rl, 50.0, 10.0, 0.0)
    assert float(nd) == pytest.approx(0.5)
    assert float(ndd) == pytest.approx(0.0)


class AnalyticLine:
    """Racing line given in closed form; ``time_at`` inverts ``s(t)`` by Newton steps."""

    def __init__(self, rng):
        # s_dot stays above 10 m/s over the sampled range, so s(t) is invertible
        self.v0 = rng.uniform(20.0, 60.0)
        self.a = rng.uniform(-1.5, 3.0)
        self.b = rng.uniform(0.0, 0.5)
        self.amp = rng.uniform(0.5, 3.0)
        self.w = rng.uniform(0.3, 1.5)
        self.ph = rng.uniform(0.0, 2 * math.pi)

    def _s(self, t):
        return self.v0 * t + 0.5 * self.a * t**2 + self.b * t**3 / 6.0

    def _sd(self, t):
        return self.v0 + self.a * t + 0.5 * self.b * t**2

    def time_at(self, s):
        t = s / self.v0
        for _ in range(50):
            t = t - (self._s(t) - s) / self._sd(t)
        return t

    def state_at(self, t):
        amp, w, ph = self.amp, self.w, self.ph
        return RLState(t, self._s(t), self._sd(t), self.a + self.b * t,
                       amp * np.sin(w * t + ph), amp * w * np.cos(w * t + ph), -amp * w * w * np.sin(w * t + ph))


def _fd_case(rng):
    rl = AnalyticLine(rng)
    s0 = rng.uniform(5.0, 20.0)
    v = rng.uniform(15.0, 50.0)
    acc = rng.uniform(-4.0, 4.0)
    jerk = rng.uniform(-1.0, 1.0)

    def s_i(t):
        return s0 + v * t + 0.5 * acc * t**2 + jerk * t**3 / 6.0, v + acc * t + 0.5 * jerk * t**2, acc + jerk * t

    return rl, s_i


def test_reparam_derivatives_match_finite_differences():
    rng = np.random.default_rng(42)
    h = 1e-3
    for _ in range(1000):
        rl, s_i = _fd_case(rng)
        t = rng.uniform(0.2, 2.0)
        n0 = reparam_lateral(rl, *s_i(t))
        n_p = reparam_lateral(rl, *s_i(t + h))[0]
        n_m = reparam_lateral(rl, *s_i(t - h))[0]
        fd1 = (n_p - n_m) / (2 * h)
        fd2 = (n_p - 2 * n0[0] + n_m) / h**2
        # relative error, measured against unit scale for near-zero derivatives
        assert abs(fd1 - n0[1]) <= 1e-5 * max(1.0, abs(n0[1]))
        assert abs(fd2 - n0[2]) <= 1e-5 * max(1.0, abs(n0[2]))


def test_reparam_outside_range_raises():
    t = np.linspace(0.0, 1.0, 5)
    rl = RacingLine(t, 10.0 * t, np.full(5, 10.0), np.zeros(5), np.zeros(5), np.zeros(5), np.zeros(5))
    with pytest.raises(RacingLineError):
        reparam_lateral(rl, 11.0, 10.0, 0.0)


def test_state_at_interpolation():
    t = np.array([0.0, 1.0, 2.0])
    rl = RacingLine(t, np.array([0.0, 10.0, 30.0]), np.array([10.0, 10.0, 20.0]), np.zeros(3),
                    np.array([0.0, 1.0, 3.0]), np.zeros(3), np.zeros(3))
    assert rl.state_at(0.0).s == 0.0
    assert rl.state_at(1.0).n == 1.0
    mid = rl.state_at(1.5)
    assert mid.s == pytest.approx(20.0) and mid.s_dot == pytest.approx(15.0) and mid.n == pytest.approx(2.0)
    with pytest.raises(RacingLineError):
        rl.state_at(2.5)


def test_racing_line_rejects_non_monotone_s():
    t = np.array([0.0, 1.0, 2.0])
    with pytest.raises(RacingLineError):
        RacingLine(t, np.array([0.0, 10.0, 5.0]), np.ones(3), np.zeros(3), np.zeros(3), np.zeros(3), np.zeros(3))


def test_csv_round_trip(tmp_path, oval, gg):
    rl = offline_racing_line(oval, gg)
    rl.to_csv(tmp_path / "rl.csv")
    back = load_racing_line(tmp_path / "rl.csv")
    assert back.lap_length == rl.lap_length
    for f in ("t", "s", "s_dot", "s_ddot", "n", "n_dot", "n_ddot"):
        assert np.array_equal(getattr(back, f), getattr(rl, f))


def test_straight_loop_runs_at_top_speed(gg):
    # a very large circle behaves like a straight: only the speed cap is active
    track = flat_circle(radius=1e5, width=10.0, ds=500.0)
    rl = offline_racing_line(track, gg, margins=RacingLineMargins(v_max=50.0))
    assert np.allclose(rl.s_dot, 50.0)


def test_flat_circle_steady_speed():
    gg = synth_gg(1.0, 0.9, 20.0, 2.0, np.linspace(0.0, 60.0, 7), np.linspace(1.0, 20.0, 20))
    track = flat_circle(radius=100.0, width=10.0, ds=1.0)
    rl = offline_racing_line(track, gg, margins=NO_MARGIN)
    # ay_max = 0.9 * 9.81
    assert np.allclose(rl.s_dot, math.sqrt(9.81 * 0.9 * 100.0), rtol=1e-6)
    assert math.sqrt(8.829 * 100.0) == pytest.approx(29.71, abs=1e-2)


def test_hairpin_profile_brakes_and_accelerates(gg, complex_track):
    prof = profile_path(complex_track, gg, apex_path(complex_track))
    assert prof.v.min() < 0.6 * prof.v.max()
    # the pointwise speed limit bounds the result of both passes
    assert np.all(prof.v <= prof.v_limit + 1e-9)
    # it is reached in corners, and braking keeps the speed well below it elsewhere
    assert np.any(np.isclose(prof.v, prof.v_limit, rtol=1e-9))
    assert np.any(prof.v < 0.8 * prof.v_limit)


@pytest.mark.parametrize("track_name", ["oval", "complex_track"])
def test_offline_line_respects_margined_envelope(request, gg, track_name):
    track = request.getfixturevalue(track_name)
    margins = RacingLineMargins()
    path = apex_path(track) if track_name == "complex_track" else centerline_path(track)
    rl = offline_racing_line(track, gg, path, margins)
    pts = track.evaluate(rl.s)
    kin = road_kinematics(pts, rl.s_dot, rl.s_ddot, rl.n, rl.n_dot, rl.n_ddot)
    shape = scale_for_racing_line(query(gg, kin.v, kin.apparent.g_tilde), margins.a_mgn, margins.a_abs_mgn)
    assert np.all(check_accel(shape, kin.apparent).worst >= -1e-9)
    assert np.all(np.diff(rl.s) > 0) and np.all(rl.s_dot > 0)
    n_l, n_r = track.bounds_at(rl.s)
    half = 0.5 * margins.d_w + margins.d_s_rl
    assert np.all(rl.n <= n_l - half + 1e-12) and np.all(rl.n >= n_r + half - 1e-12)


def test_offline_needs_closed_track(gg, line):
    with pytest.raises(RacingLineError):
        offline_racing_line(line, gg)


def test_infeasible_path_names_interval(gg):
    tight = flat_circle(radius=5.0, width=10.0, ds=0.5)
    with pytest.raises(RacingLineError, match=r"s in \["):
        # path pushed outside the margined corridor
        offline_racing_line(tight, gg, LateralPath(tight.s, np.full(tight.s.shape, 4.9), True))


def test_anchored_line_starts_at_ego(oval, gg):
    rl = offline_racing_line(oval, gg)
    L = oval.total_length
    a = rl.anchored(L + 123.0)
    assert a.s[0] == L + 123.0 and a.s[-1] == 2 * L + 123.0
    assert a.horizon == pytest.approx(rl.horizon, rel=1e-12)
    assert float(a.state_at(0.0).s_dot) == pytest.approx(float(rl.speed_at_s(123.0)), rel=1e-9)


def test_online_on_line_matches_offline_restriction(oval, gg):
    rl = offline_racing_line(oval, gg)
    s0 = 300.0
    r = rl.anchored(s0).state_at(0.0)
    ego = VehicleState(s0, float(r.s_dot), float(r.s_ddot), float(r.n), float(r.n_dot), float(r.n_ddot))
    on = online_racing_line(oval, gg, centerline_path(oval), ego, horizon=500.0, reference=rl)
    assert on.s[0] == s0
    assert on.s[-1] - on.s[0] >= 500.0 - 1e-9
    ref_sd = rl.speed_at_s(on.s)
    ref_n = np.interp(np.mod(on.s, oval.total_length), rl.s, rl.n)
    assert np.max(np.abs(on.n - ref_n)) < 1e-3
    assert np.max(np.abs(on.s_dot - ref_sd)) < 1e-2


def test_online_accelerates_from_low_speed_on_straight(gg):
    track = straight(length=2000.0, width=12.0, ds=2.0)
    margins = RacingLineMargins(v_max=80.0)
    v0 = 25.0
    ego = VehicleState(100.0, v0, 0.0, 0.0, 0.0, 0.0)
    on = online_racing_line(track, gg, None, ego, horizon=500.0, margins=margins)
    # drive limit 8 shrunk by both margins
    ax = 0.9 * 8.0 - 0.8
    expected = np.minimum(np.sqrt(v0**2 + 2.0 * ax * (on.s - on.s[0])), 80.0)
    assert np.allclose(on.s_dot, expected, rtol=1e-9)


def test_online_horizon_covers_requested_distance(oval, gg):
    ego = VehicleState(50.0, 60.0, 0.0, 1.0, 0.0, 0.0)
    on = online_racing_line(oval, gg, None, ego, horizon=500.0, reference=offline_racing_line(oval, gg))
    assert on.s[0] == 50.0
    assert on.s[-1] - on.s[0] >= 500.0 - 1e-9
    assert on.n[0] == pytest.approx(1.0)


def test_online_start_above_bound_reports_excess(gg):
    track = straight(length=2000.0, width=12.0, ds=2.0)
    ego = VehicleState(100.0, 70.0, 0.0, 0.0, 0.0, 0.0)
    on = online_racing_line(track, gg, None, ego, horizon=500.0, margins=RacingLineMargins(v_max=50.0))
    assert on.start_excess == pytest.approx(20.0)
    assert on.s_dot[0] == 70.0
    assert np.all(on.s_dot[1:] <= 50.0 + 1e-9)


def test_online_ego_outside_track_rejected(oval, gg):
    with pytest.raises(RacingLineError):
        online_racing_line(oval, gg, None, VehicleState(0.0, 50.0, 0.0, 20.0, 0.0, 0.0))


@settings(max_examples=25, deadline=None)
@given(st.floats(0.0, 2000.0), st.floats(-3.0, 3.0), st.floats(40.0, 85.0))
def test_online_lines_are_monotone(s0, n0, v0):
    oval, gg, ref = _oval_setup()
    on = online_racing_line(oval, gg, None, VehicleState(s0, v0, 0.0, n0, 0.0, 0.0), reference=ref)
    assert np.all(np.diff(on.s) > 0) and np.all(np.diff(on.t) > 0)
    assert on.s[0] == s0


_SETUP = {}


def _oval_setup():
    if not _SETUP:
        track = oval_banked()
        gg = synth_gg(1.5, 1.5, 8.0, 1.5, np.linspace(0.0, 100.0, 11), np.linspace(2.0, 30.0, 15))
        _SETUP["v"] = (track, gg, offline_racing_line(track, gg))
    return _SETUP["v"]


def test_apex_path_leans_inside(complex_track):
    path = apex_path(complex_track)
    yaw = complex_track.omega_nodes[:, 2]
    strong = np.abs(yaw) > 0.02
    assert np.all(np.sign(path.n[strong]) == np.sign(yaw[strong]))


def test_lateral_path_closes(complex_track):
    path = apex_path(complex_track)
    n0 = path.evaluate(0.0)
    nL = path.evaluate(complex_track.total_length)
    assert np.allclose(n0, nL)
