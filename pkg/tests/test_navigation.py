import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from sglstm import navigation as nav
from sglstm.core import EntityWindow, PredictionHorizon

from nav_oracles import rk4_arc


def test_straight_limit():
    x, y, a = nav.arc_body(1.3, 1e-12, 2.0)
    assert abs(float(x) - 2.6) < 1e-9 and abs(float(y)) < 1e-9


def test_quarter_arc():
    p = nav.propagate(nav.Control(1.0, math.pi / 4), math.pi / 2)
    np.testing.assert_allclose(p, [1.0, 1.0], atol=1e-12)


@settings(max_examples=200)
@given(st.floats(0, 2), st.floats(-1.4, 1.4), st.floats(0, 5))
def test_arc_length_bound(us, up, t):
    p = nav.propagate(nav.Control(us, up), t)
    assert np.hypot(*p) <= us * t * (1 + 1e-12) + 1e-15


def test_matches_rk4_sample(rng):
    us, up, t = rng.uniform(0, 2, 200), rng.uniform(-1.2, 1.2, 200), rng.uniform(0, 5, 200)
    x, y, a = nav.arc_body(us, up, t)
    ref = rk4_arc(us, up, t)
    assert np.max(np.hypot(x - ref[:, 0], y - ref[:, 1])) < 1e-6
    np.testing.assert_allclose(a, ref[:, 2], atol=1e-9)


@given(st.floats(0, 2), st.floats(0, 5), st.sampled_from([-1.0, 1.0]))
def test_branches_agree_at_switchover(us, t, sign):
    lo = nav.arc_body(us, sign * np.nextafter(nav.SERIES_SWITCH, 0), t)
    hi = nav.arc_body(us, sign * nav.SERIES_SWITCH, t)
    assert abs(float(lo[0]) - float(hi[0])) < 1e-8 and abs(float(lo[1]) - float(hi[1])) < 1e-8


def test_world_frame_rotation():
    st_ = nav.RobotState(1.0, 2.0, math.pi / 2)
    np.testing.assert_allclose(nav.propagate(nav.Control(1.0, 0.0), 2.0, st_), [1.0, 4.0], atol=1e-12)
    nxt = nav.advance(st_, nav.Control(1.0, math.pi / 4), math.pi / 2)
    assert nxt.phi == pytest.approx(math.pi, abs=1e-12) or nxt.phi == pytest.approx(-math.pi, abs=1e-12)


def test_state_and_config_validation():
    assert nav.RobotState(0, 0, 3 * math.pi).phi == pytest.approx(math.pi)
    assert -math.pi < nav.RobotState(0, 0, -math.pi).phi <= math.pi
    with pytest.raises(ValueError):
        nav.RobotConfig(radius=0)
    with pytest.raises(ValueError):
        nav.RobotConfig(max_steering=math.pi / 2)
    with pytest.raises(ValueError):
        nav.propagate(nav.Control(1, 0), -1.0)


def empty_forecast(dt=0.4):
    return nav.ObstacleForecast(np.zeros((0, 2)), np.zeros((0, 5, 2)), np.zeros(0), dt)


def static(points, radius=0.3, dt=0.4):
    pts = np.asarray(points, float).reshape(-1, 2)
    return nav.ObstacleForecast(pts, np.repeat(pts[:, None], 5, axis=1), np.full(len(pts), radius), dt)


def test_unconstrained_goes_straight_full_speed():
    s = nav.RobotState(0, 0, 0, nav.RobotConfig(goal=(20.0, 0.0)))
    c = nav.select_control(s, empty_forecast(), 2.0)
    assert c.u_phi == 0.0 and c.u_s == s.config.max_speed


def brute_select(state, forecast, horizon, pcfg=nav.PlannerConfig()):
    cfg = state.config
    speeds = np.linspace(0, cfg.max_speed, pcfg.n_speeds)
    steers = np.linspace(-cfg.max_steering, cfg.max_steering, pcfg.n_steering)
    times = [horizon * (k + 1) / pcfg.n_subsamples for k in range(pcfg.n_subsamples)]
    best = None
    for us in speeds:
        for up in steers:
            ctl = nav.Control(float(us), float(up))
            ok = True
            for t in times:
                p = nav.propagate(ctl, t, state)
                obs = forecast.at(np.array([t]))[:, 0]
                for k in range(len(forecast)):
                    if np.hypot(*(p - obs[k])) < cfg.radius + forecast.radii[k]:
                        ok = False
            if not ok:
                continue
            end = nav.propagate(ctl, horizon, state)
            cost = math.hypot(end[0] - cfg.goal[0], end[1] - cfg.goal[1]) + pcfg.steering_cost * abs(up)
            if best is None or cost < best[0]:
                best = (cost, ctl)
    return best[1] if best else nav.Control(0.0, 0.0)


def test_static_obstacle_forces_turn():
    s = nav.RobotState(0, 0, 0, nav.RobotConfig(goal=(10.0, 0.0)))
    fc = static([(1.5, 0.0)])
    c = nav.select_control(s, fc, 2.0)
    assert c.u_phi != 0.0
    ref = brute_select(s, fc, 2.0)
    assert (c.u_s, c.u_phi) == pytest.approx((ref.u_s, ref.u_phi), abs=1e-12)
    times = 2.0 * np.arange(1, 21) / 20
    path = nav.lattice_paths(s, np.array([c.u_s]), np.array([c.u_phi]), times)
    assert nav.clearances(path, fc, times, s.config.radius)[0] >= 0


def test_enclosed_robot_stops():
    ring = [(0.5 * math.cos(a), 0.5 * math.sin(a)) for a in np.linspace(0, 2 * math.pi, 12, endpoint=False)]
    c = nav.select_control(nav.RobotState(0, 0, 0), static(ring), 2.0)
    assert (c.u_s, c.u_phi) == (0.0, 0.0)


def test_forecast_group_radius_and_interp():
    w = EntityWindow(0, 0, np.zeros((5, 2)), (1, 2), np.array([[0.5, 0.0], [-0.5, 0.0]]))
    hz = PredictionHorizon(np.stack([np.arange(1, 6.0), np.zeros(5)], axis=1))
    fc = nav.ObstacleForecast.from_predictions([w], [hz], 0.4, 0.3)
    assert fc.radii[0] == pytest.approx(0.8)
    np.testing.assert_allclose(fc.at(np.array([0.2, 0.4, 5.0]))[0], [[0.5, 0], [1, 0], [5, 0]])
    with pytest.raises(ValueError):
        nav.ObstacleForecast(np.zeros((1, 2)), np.zeros((1, 5, 2)), np.zeros(1), 0.4)


@pytest.mark.parametrize("name", sorted(nav.CANONICAL))
def test_canonical_scenarios_safe(name):
    res = nav.simulate(nav.CANONICAL[name]())
    assert res.reached and not res.collided
    assert res.min_clearance >= 0
    if name == "group":
        assert min(res.group_margins) >= 0


def test_empty_walkway_near_straight():
    res = nav.simulate(nav.empty_walkway())
    start, end = res.states[0].position, res.states[-1].position
    assert res.path_length <= 1.05 * np.linalg.norm(end - start)


def test_simulation_deterministic_with_noise():
    sc = nav.crossing_group()
    from dataclasses import replace
    noisy = replace(sc, noise=0.05, seed=9)
    a, b = nav.simulate(noisy), nav.simulate(noisy)
    assert nav.trace_csv(a) == nav.trace_csv(b)
    assert nav.trace_svg(noisy, a) == nav.trace_svg(noisy, b)


def test_auto_grouping_path_in_sim():
    from dataclasses import replace
    res = nav.simulate(replace(nav.crossing_group(), groups=None))
    assert not res.collided


def test_malformed_scenarios():
    with pytest.raises(ValueError):
        nav.scenario_from_dict({"robot": {}})
    sc = nav.scenario_to_dict(nav.crossing_pedestrian())
    sc["pedestrians"][0]["positions"] = [[0, 0, 0]]
    with pytest.raises(ValueError):
        nav.scenario_from_dict(sc)
    bad = nav.scenario_to_dict(nav.crossing_group())
    bad["groups"] = [[1, 2], [2, 3]]
    with pytest.raises(ValueError):
        nav.scenario_from_dict(bad)
    with pytest.raises(ValueError):
        nav.simulate(nav.Scenario(nav.RobotConfig(), (0, 0, 0), {}, start_step=2))


def test_scenario_roundtrip():
    sc = nav.crossing_group()
    back = nav.scenario_from_dict(nav.scenario_to_dict(sc))
    assert nav.trace_csv(nav.simulate(sc)) == nav.trace_csv(nav.simulate(back))


def test_trace_header_and_columns():
    text = nav.trace_csv(nav.simulate(nav.empty_walkway()), header="sglstm test")
    lines = text.splitlines()
    assert lines[0] == "# sglstm test"
    assert lines[1] == "step,x_r,y_r,phi,u_s,u_phi,min_clearance"
    svg = nav.trace_svg(nav.empty_walkway(), nav.simulate(nav.empty_walkway()))
    assert svg.startswith("<?xml") and svg.rstrip().endswith("</svg>")
