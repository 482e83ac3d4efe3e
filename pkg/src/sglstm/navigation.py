"""Generalized-velocity-obstacle planning for a car-like robot among
forecast pedestrians and pedestrian groups, plus a 2-D stepping simulator."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

from .core import OBS_LEN, PRED_LEN, EntityWindow, Grouping, PredictionHorizon, Scene, Track, observed_windows
from .grouping import GroupingConfig, cluster_frame, persist_groups
from .predictors import predict_linear

#: Below this steering magnitude (rad) the arc is evaluated by its Taylor series.
SERIES_SWITCH = 1e-4


@dataclass(frozen=True)
class RobotConfig:
    radius: float = 0.4
    goal: Tuple[float, float] = (12.0, 0.0)
    max_speed: float = 1.2
    max_steering: float = 0.5
    wheelbase: float = 1.0

    def __post_init__(self):
        if not self.radius > 0:
            raise ValueError("robot radius must be positive")
        if not 0 < self.max_steering < math.pi / 2:
            raise ValueError("max_steering must lie in (0, pi/2)")
        if not self.max_speed > 0 or not self.wheelbase > 0:
            raise ValueError("max_speed and wheelbase must be positive")


def wrap_angle(a: float) -> float:
    """Map to (-pi, pi]."""
    a = math.fmod(a + math.pi, 2 * math.pi)
    if a <= 0:
        a += 2 * math.pi
    return a - math.pi


@dataclass(frozen=True)
class RobotState:
    x: float
    y: float
    phi: float
    config: RobotConfig = field(default_factory=RobotConfig)

    def __post_init__(self):
        object.__setattr__(self, "phi", wrap_angle(self.phi))

    @property
    def position(self) -> np.ndarray:
        return np.array([self.x, self.y])


@dataclass(frozen=True)
class Control:
    u_s: float
    u_phi: float


def arc_body(u_s, u_phi, t, wheelbase: float = 1.0):
    """Body-frame displacement and heading change after ``t`` seconds at fixed
    controls. Broadcasts over array inputs."""
    u_s, u_phi, t = np.broadcast_arrays(np.asarray(u_s, float), np.asarray(u_phi, float), np.asarray(t, float))
    k = np.tan(u_phi) / wheelbase
    s = u_s * t
    a = s * k
    small = np.abs(u_phi) < SERIES_SWITCH
    with np.errstate(divide="ignore", invalid="ignore"):
        kk = np.where(small, 1.0, k)
        x_cf = np.sin(a) / kk
        y_cf = 2.0 * np.sin(a / 2) ** 2 / kk
    a2 = a * a
    x_ser = s * (1 - a2 / 6 * (1 - a2 / 20))
    y_ser = s * a * (0.5 - a2 / 24 * (1 - a2 / 30))
    x = np.where(small, x_ser, x_cf)
    y = np.where(small, y_ser, y_cf)
    return x, y, a


def propagate(control: Control, t: float, state: Optional[RobotState] = None, wheelbase: Optional[float] = None):
    """Position after ``t`` seconds of constant ``control``.

    Without ``state`` the body-frame displacement is returned; with it the
    world-frame position. Heading advances by ``u_s * tan(u_phi) * t / wheelbase``.
    """
    if t < 0:
        raise ValueError("t must be nonnegative")
    if wheelbase is None:
        wheelbase = state.config.wheelbase if state is not None else 1.0
    x, y, _ = arc_body(control.u_s, control.u_phi, t, wheelbase)
    x, y = float(x), float(y)
    if state is None:
        return np.array([x, y])
    c, s = math.cos(state.phi), math.sin(state.phi)
    return np.array([state.x + c * x - s * y, state.y + s * x + c * y])


def advance(state: RobotState, control: Control, t: float) -> RobotState:
    x, y, a = arc_body(control.u_s, control.u_phi, t, state.config.wheelbase)
    c, s = math.cos(state.phi), math.sin(state.phi)
    return RobotState(state.x + c * float(x) - s * float(y), state.y + s * float(x) + c * float(y),
                      state.phi + float(a), state.config)


@dataclass(frozen=True)
class ObstacleForecast:
    """``current`` (K, 2) positions now, ``future`` (K, 5, 2) at ``dt`` spacing,
    ``radii`` (K,) disc radii, ``members`` the pedestrians each disc covers."""

    current: np.ndarray
    future: np.ndarray
    radii: np.ndarray
    dt: float
    members: Tuple[Tuple[int, ...], ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "current", np.asarray(self.current, float).reshape(-1, 2))
        object.__setattr__(self, "future", np.asarray(self.future, float).reshape(-1, PRED_LEN, 2))
        object.__setattr__(self, "radii", np.asarray(self.radii, float).reshape(-1))
        if np.any(self.radii <= 0):
            raise ValueError("obstacle radii must be positive")

    def __len__(self):
        return len(self.radii)

    def at(self, times: np.ndarray) -> np.ndarray:
        """(K, T, 2) linearly interpolated centres; held at the last step beyond the horizon."""
        knots = np.arange(PRED_LEN + 1) * self.dt
        path = np.concatenate([self.current[:, None], self.future], axis=1)
        times = np.clip(np.asarray(times, float), 0, knots[-1])
        out = np.empty((len(self), len(times), 2))
        for j in range(2):
            for k in range(len(self)):
                out[k, :, j] = np.interp(times, knots, path[k, :, j])
        return out

    @classmethod
    def from_predictions(cls, windows: Sequence[EntityWindow], horizons: Sequence[PredictionHorizon], dt: float,
                         personal_radius: float = 0.3) -> "ObstacleForecast":
        if not windows:
            return cls(np.zeros((0, 2)), np.zeros((0, PRED_LEN, 2)), np.zeros(0), dt)
        radii = [personal_radius + (float(np.max(np.linalg.norm(w.member_offsets, axis=1))) if w.size > 1 else 0.0)
                 for w in windows]
        return cls(np.stack([w.observed[-1] for w in windows]), np.stack([h.positions for h in horizons]),
                   np.array(radii), dt, tuple(w.members for w in windows))


@dataclass(frozen=True)
class PlannerConfig:
    n_speeds: int = 15
    n_steering: int = 21
    n_subsamples: int = 20
    steering_cost: float = 0.1


def control_lattice(cfg: RobotConfig, pcfg: PlannerConfig = PlannerConfig()):
    speeds = np.linspace(0.0, cfg.max_speed, pcfg.n_speeds)
    steers = np.linspace(-cfg.max_steering, cfg.max_steering, pcfg.n_steering)
    us, up = np.meshgrid(speeds, steers, indexing="ij")
    return us.reshape(-1), up.reshape(-1)


def lattice_paths(state: RobotState, us: np.ndarray, up: np.ndarray, times: np.ndarray) -> np.ndarray:
    """(L, T, 2) world positions of each lattice control at each time."""
    x, y, _ = arc_body(us[:, None], up[:, None], times[None, :], state.config.wheelbase)
    c, s = math.cos(state.phi), math.sin(state.phi)
    return np.stack([state.x + c * x - s * y, state.y + s * x + c * y], axis=-1)


def clearances(paths: np.ndarray, forecast: ObstacleForecast, times: np.ndarray, robot_radius: float) -> np.ndarray:
    """(L,) minimum over obstacles and times of centre distance minus the radius sum."""
    if len(forecast) == 0:
        return np.full(len(paths), np.inf)
    obs = forecast.at(times)  # (K, T, 2)
    d = np.linalg.norm(paths[:, None, :, :] - obs[None], axis=-1)  # (L, K, T)
    return (d - (forecast.radii[None, :, None] + robot_radius)).min(axis=(1, 2))


def select_control(state: RobotState, forecast: ObstacleForecast, horizon: float,
                   pcfg: PlannerConfig = PlannerConfig()) -> Control:
    """Lowest-cost collision-free lattice control, or stop if none is free.

    Cost is distance to goal at the horizon plus ``steering_cost * |u_phi|``;
    ties go to the lowest lattice index.
    """
    us, up = control_lattice(state.config, pcfg)
    times = horizon * np.arange(1, pcfg.n_subsamples + 1) / pcfg.n_subsamples
    paths = lattice_paths(state, us, up, times)
    free = clearances(paths, forecast, times, state.config.radius) >= 0
    if not np.any(free):
        return Control(0.0, 0.0)
    cost = np.linalg.norm(paths[:, -1] - np.asarray(state.config.goal), axis=1) + pcfg.steering_cost * np.abs(up)
    cost = np.where(free, cost, np.inf)
    best = int(np.argmin(cost))
    return Control(float(us[best]), float(up[best]))


# ------------------------------------------------------------- simulation

@dataclass(frozen=True)
class Scenario:
    """Scripted pedestrians at model-step cadence.

    ``pedestrians[pid] = (first_step, positions)``; the robot plans from step
    ``start_step`` on, which must leave at least 5 observed steps.
    """

    robot: RobotConfig
    start: Tuple[float, float, float]
    pedestrians: Dict[int, Tuple[int, np.ndarray]]
    dt: float = 0.4
    groups: Optional[Tuple[Tuple[int, ...], ...]] = None
    max_steps: int = 100
    personal_radius: float = 0.3
    start_step: int = OBS_LEN - 1
    noise: float = 0.0
    seed: int = 0
    name: str = ""

    def validate(self):
        if self.start_step < OBS_LEN - 1:
            raise ValueError(f"start_step must leave {OBS_LEN} observed steps")
        if not self.dt > 0 or self.max_steps < 1 or not self.personal_radius > 0:
            raise ValueError("dt, max_steps and personal_radius must be positive")
        for pid, (first, pos) in self.pedestrians.items():
            arr = np.asarray(pos, float)
            if arr.ndim != 2 or arr.shape[1] != 2 or first < 0:
                raise ValueError(f"pedestrian {pid}: positions must be an (n, 2) list and first_step >= 0")
            if not np.all(np.isfinite(arr)):
                raise ValueError(f"pedestrian {pid}: non-finite positions")
        if self.groups is not None:
            seen = set()
            for g in self.groups:
                if seen & set(g):
                    raise ValueError("scenario groups overlap")
                seen |= set(g)
                if not set(g) <= set(self.pedestrians):
                    raise ValueError(f"group {g} names unknown pedestrians")

    def position(self, pid: int, step: int) -> Optional[np.ndarray]:
        first, pos = self.pedestrians[pid]
        k = step - first
        if 0 <= k < len(pos):
            return np.asarray(pos[k], float)
        return None


@dataclass
class SimResult:
    states: List[RobotState]
    controls: List[Control]
    clearances: List[float]
    group_margins: List[float]
    events: List[str]
    reached: bool
    collided: bool
    forecasts: List[ObstacleForecast]

    @property
    def min_clearance(self) -> float:
        return min(self.clearances) if self.clearances else math.inf

    @property
    def path_length(self) -> float:
        p = np.array([[s.x, s.y] for s in self.states])
        return float(np.sum(np.linalg.norm(np.diff(p, axis=0), axis=1)))


Predictor = Callable[[List[EntityWindow]], List[PredictionHorizon]]


def linear_predictor(windows: List[EntityWindow]) -> List[PredictionHorizon]:
    return [PredictionHorizon(predict_linear(w)) for w in windows]


def _history_scene(sc: Scenario, step: int, rng) -> Scene:
    """Last 5 observed steps of every visible pedestrian, padded at the front
    with its earliest sighting."""
    tracks = {}
    for pid in sorted(sc.pedestrians):
        seen = [sc.position(pid, step - OBS_LEN + 1 + k) for k in range(OBS_LEN)]
        if seen[-1] is None:
            continue
        first = next(k for k, p in enumerate(seen) if p is not None)
        for k in range(OBS_LEN):
            if seen[k] is None:
                seen[k] = seen[first] if k < first else seen[k - 1]
        xy = np.array(seen)
        if sc.noise > 0:
            xy = xy + rng.normal(0, sc.noise, xy.shape)
        tracks[pid] = Track(pid, np.arange(OBS_LEN), xy)
    return Scene(np.arange(OBS_LEN), sc.dt, tracks)


def _grouping(sc: Scenario, hist: Scene, cfg: GroupingConfig, group_aware: bool) -> Grouping:
    ids = list(hist.tracks)
    if not group_aware:
        return Grouping.singletons(ids)
    if sc.groups is not None:
        return Grouping.from_groups([list(g) for g in sc.groups]).restricted(ids)
    steps = []
    for k in range(1, OBS_LEN):
        pos = {pid: hist.tracks[pid].xy[k] for pid in ids}
        vel = {pid: (hist.tracks[pid].xy[k] - hist.tracks[pid].xy[k - 1]) / sc.dt for pid in ids}
        steps.append(cluster_frame(pos, vel, cfg))
    return persist_groups(steps, cfg).restricted(ids)


def simulate(sc: Scenario, predictor: Optional[Predictor] = None, group_aware: bool = True,
             grouping_cfg: GroupingConfig = GroupingConfig(), pcfg: PlannerConfig = PlannerConfig(),
             audit_substeps: int = 10) -> SimResult:
    """Observe, group, predict, plan and drive until goal, collision or step cap.

    Clearances are audited against the scripted (true) pedestrian positions
    at ``audit_substeps`` points per step; collision means a negative
    robot-to-pedestrian surface distance.
    """
    sc.validate()
    predictor = predictor or linear_predictor
    rng = np.random.default_rng(sc.seed)
    state = RobotState(sc.start[0], sc.start[1], sc.start[2], sc.robot)
    goal = np.asarray(sc.robot.goal, float)
    res = SimResult([state], [], [], [], [], False, False, [])
    horizon = PRED_LEN * sc.dt
    n_plan = pcfg.n_subsamples
    for k in range(sc.max_steps):
        step = sc.start_step + k
        if np.linalg.norm(state.position - goal) <= 2 * sc.robot.radius:
            res.reached = True
            res.events.append(f"step {k}: goal reached")
            break
        hist = _history_scene(sc, step, rng)
        grouping = _grouping(sc, hist, grouping_cfg, group_aware)
        windows = observed_windows(hist, grouping, 0, 1)
        horizons = predictor(windows) if windows else []
        forecast = ObstacleForecast.from_predictions(windows, horizons, sc.dt, sc.personal_radius)
        control = select_control(state, forecast, horizon, pcfg)
        # audit: true pedestrians along the executed segment
        sub = sc.dt * np.arange(1, audit_substeps + 1) / audit_substeps
        path = lattice_paths(state, np.array([control.u_s]), np.array([control.u_phi]), sub)[0]
        clear = math.inf
        for pid in sc.pedestrians:
            a, b = sc.position(pid, step), sc.position(pid, step + 1)
            if a is None and b is None:
                continue
            a = b if a is None else a
            b = a if b is None else b
            ped = a[None] + (sub / sc.dt)[:, None] * (b - a)[None]
            d = np.linalg.norm(path - ped, axis=1) - sc.robot.radius - sc.personal_radius
            clear = min(clear, float(d.min()))
        # audit: forecast group discs at the planner subsamples inside this step
        plan_t = horizon * np.arange(1, n_plan + 1) / n_plan
        plan_t = plan_t[plan_t <= sc.dt + 1e-12]
        margin = math.inf
        multi = [i for i, m in enumerate(forecast.members) if len(m) > 1]
        if multi and len(plan_t):
            rp = lattice_paths(state, np.array([control.u_s]), np.array([control.u_phi]), plan_t)[0]
            centres = forecast.at(plan_t)
            for i in multi:
                dd = np.linalg.norm(rp - centres[i], axis=1) - forecast.radii[i]
                margin = min(margin, float(dd.min()))
        state = advance(state, control, sc.dt)
        res.states.append(state)
        res.controls.append(control)
        res.clearances.append(clear)
        res.group_margins.append(margin)
        res.forecasts.append(forecast)
        if control.u_s == 0.0:
            res.events.append(f"step {k}: no free control, stopping")
        if clear < 0:
            res.collided = True
            res.events.append(f"step {k}: collision (clearance {clear:.3f} m)")
            break
    else:
        if np.linalg.norm(state.position - goal) <= 2 * sc.robot.radius:
            res.reached = True
            res.events.append("goal reached at step cap")
        else:
            res.events.append("step cap reached")
    return res


# ------------------------------------------------------ canonical scenarios

def _walker(start, velocity, n, dt):
    start = np.asarray(start, float)
    return start + np.arange(n)[:, None] * dt * np.asarray(velocity, float)


def empty_walkway(dt: float = 0.4) -> Scenario:
    return Scenario(RobotConfig(goal=(12.0, 0.0)), (0.0, 0.0, 0.0), {}, dt, name="empty walkway")


def crossing_pedestrian(dt: float = 0.4) -> Scenario:
    """One walker crossing the robot's straight line near its midpoint."""
    n = 80
    peds = {1: (0, _walker((6.0, -6.5), (0.0, 1.2), n, dt))}
    return Scenario(RobotConfig(goal=(12.0, 0.0)), (0.0, 0.0, 0.0), peds, dt, name="crossing pedestrian")


def crossing_group(dt: float = 0.4) -> Scenario:
    """Three walkers abreast crossing the robot's straight line."""
    n = 80
    peds = {}
    for k, dx in enumerate((-0.6, 0.0, 0.6)):
        peds[k + 1] = (0, _walker((6.0 + dx, -6.8), (0.0, 1.1), n, dt))
    return Scenario(RobotConfig(goal=(12.0, 0.0)), (0.0, 0.0, 0.0), peds, dt, groups=((1, 2, 3),),
                    name="crossing group")


CANONICAL = {"empty": empty_walkway, "crossing": crossing_pedestrian, "group": crossing_group}


# ---------------------------------------------------------------- output

def trace_rows(res: SimResult) -> List[Tuple]:
    rows = []
    for k, (s, c, cl) in enumerate(zip(res.states[1:], res.controls, res.clearances)):
        rows.append((k, s.x, s.y, s.phi, c.u_s, c.u_phi, cl))
    return rows


def trace_csv(res: SimResult, header: Optional[str] = None) -> str:
    lines = [f"# {header}"] if header else []
    lines.append("step,x_r,y_r,phi,u_s,u_phi,min_clearance")
    for k, x, y, phi, us, up, cl in trace_rows(res):
        cl_s = "inf" if math.isinf(cl) else f"{cl:.6f}"
        lines.append(f"{k},{x:.6f},{y:.6f},{phi:.6f},{us:.6f},{up:.6f},{cl_s}")
    return "\n".join(lines) + "\n"


def trace_svg(sc: Scenario, res: SimResult, scale: float = 40.0, header: Optional[str] = None) -> str:
    """Overhead plot: pedestrian tracks grey (groups coloured), robot path blue."""
    pts = [np.array([[s.x, s.y] for s in res.states])]
    for pid, (first, pos) in sc.pedestrians.items():
        pts.append(np.asarray(pos, float))
    pts.append(np.array([sc.robot.goal]))
    allp = np.concatenate([p for p in pts if len(p)])
    lo = allp.min(axis=0) - 1.0
    hi = allp.max(axis=0) + 1.0
    w, h = (hi - lo) * scale

    def tx(p):
        return f"{(p[0] - lo[0]) * scale:.2f},{(hi[1] - p[1]) * scale:.2f}"

    palette = ["#d95f02", "#7570b3", "#e7298a", "#66a61e", "#e6ab02"]
    colour = {}
    for gi, g in enumerate(sc.groups or ()):
        for pid in g:
            colour[pid] = palette[gi % len(palette)]
    out = ['<?xml version="1.0" encoding="UTF-8"?>']
    if header:
        out.append(f"<!-- {header.replace('--', '- -')} -->")
    out.append(f'<svg xmlns="http://www.w3.org/2000/svg" width="{w:.0f}" height="{h:.0f}" '
               f'viewBox="0 0 {w:.2f} {h:.2f}">')
    out.append('<rect width="100%" height="100%" fill="white"/>')
    for pid, (first, pos) in sorted(sc.pedestrians.items()):
        pos = np.asarray(pos, float)
        if len(pos):
            c = colour.get(pid, "#999999")
            out.append(f'<polyline fill="none" stroke="{c}" stroke-width="1.5" points="{" ".join(tx(p) for p in pos)}"/>')
    robot = pts[0]
    out.append(f'<polyline fill="none" stroke="#1f78b4" stroke-width="2.5" points="{" ".join(tx(p) for p in robot)}"/>')
    for s in res.states:
        out.append(f'<circle cx="{tx((s.x, s.y)).split(",")[0]}" cy="{tx((s.x, s.y)).split(",")[1]}" '
                   f'r="{sc.robot.radius * scale:.2f}" fill="none" stroke="#1f78b4" stroke-opacity="0.3"/>')
    gx, gy = tx(sc.robot.goal).split(",")
    out.append(f'<circle cx="{gx}" cy="{gy}" r="{2 * sc.robot.radius * scale:.2f}" fill="none" stroke="#33a02c" '
               f'stroke-dasharray="4 3"/>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


# ------------------------------------------------------------ scenario json

def scenario_from_dict(d: dict) -> Scenario:
    """Parse the scenario JSON layout; raises ValueError on malformed input."""
    try:
        r = d["robot"]
        robot = RobotConfig(radius=float(r.get("radius", 0.4)), goal=tuple(float(v) for v in r["goal"]),
                            max_speed=float(r.get("max_speed", 1.2)), max_steering=float(r.get("max_steering", 0.5)),
                            wheelbase=float(r.get("wheelbase", 1.0)))
        start = tuple(float(v) for v in r.get("start", (0.0, 0.0, 0.0)))
        if len(start) == 2:
            start = start + (float(r.get("heading", 0.0)),)
        peds = {int(p["id"]): (int(p.get("start_step", 0)), np.asarray(p["positions"], float).reshape(-1, 2))
                for p in d.get("pedestrians", [])}
        groups = d.get("groups")
        sc = Scenario(robot, start, peds, float(d.get("dt", 0.4)),
                      None if groups is None else tuple(tuple(int(m) for m in g) for g in groups),
                      int(d.get("max_steps", 100)), float(d.get("personal_radius", 0.3)),
                      int(d.get("start_step", OBS_LEN - 1)), float(d.get("noise", 0.0)), int(d.get("seed", 0)),
                      str(d.get("name", "")))
    except (KeyError, TypeError) as e:
        raise ValueError(f"malformed scenario: {e!r}") from None
    if len(sc.start) != 3 or len(robot.goal) != 2:
        raise ValueError("robot start must be (x, y, heading) and goal (x, y)")
    sc.validate()
    return sc


def scenario_to_dict(sc: Scenario) -> dict:
    r = sc.robot
    d = {"name": sc.name, "dt": sc.dt, "max_steps": sc.max_steps, "personal_radius": sc.personal_radius,
         "start_step": sc.start_step, "noise": sc.noise, "seed": sc.seed,
         "robot": {"start": list(sc.start), "goal": list(r.goal), "radius": r.radius, "max_speed": r.max_speed,
                   "max_steering": r.max_steering, "wheelbase": r.wheelbase},
         "pedestrians": [{"id": pid, "start_step": first, "positions": np.asarray(pos).tolist()}
                         for pid, (first, pos) in sorted(sc.pedestrians.items())]}
    if sc.groups is not None:
        d["groups"] = [list(g) for g in sc.groups]
    return d
