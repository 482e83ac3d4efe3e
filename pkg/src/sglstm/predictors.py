"""The five trajectory predictors behind one interface, and training."""
from __future__ import annotations

import enum
import math
from dataclasses import asdict, dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from . import backend
from . import nn
from .core import (OBS_LEN, PRED_LEN, DEFAULT_STRIDE, EntityWindow, Grouping, PredictionHorizon, Scene,
                   build_windows, per_person_predictions)
from .pooling import NeighborhoodGrid, occupancy_scene, scene_pairs

MODE_NONE, MODE_SOCIAL, MODE_OCCUPANCY = 0, 1, 2


class PredictorKind(str, enum.Enum):
    LINEAR = "Linear"
    VANILLA = "VanillaLSTM"
    OCCUPANCY = "OccupancyLSTM"
    SOCIAL = "SocialLSTM"
    SOCIAL_GROUP = "SocialGroupLSTM"

    @classmethod
    def parse(cls, name: str) -> "PredictorKind":
        aliases = {"linear": cls.LINEAR, "lin": cls.LINEAR, "lstm": cls.VANILLA, "vanilla": cls.VANILLA,
                   "vanilla-lstm": cls.VANILLA, "o-lstm": cls.OCCUPANCY, "olstm": cls.OCCUPANCY,
                   "occupancy": cls.OCCUPANCY, "s-lstm": cls.SOCIAL, "slstm": cls.SOCIAL, "social": cls.SOCIAL,
                   "sg-lstm": cls.SOCIAL_GROUP, "sglstm": cls.SOCIAL_GROUP, "social-group": cls.SOCIAL_GROUP,
                   "v": cls.VANILLA, "o": cls.OCCUPANCY, "s": cls.SOCIAL, "sg": cls.SOCIAL_GROUP}
        for k in cls:
            if name == k.value or name.lower() == k.value.lower():
                return k
        try:
            return aliases[name.lower()]
        except KeyError:
            raise ValueError(f"unknown predictor kind {name!r}") from None

    @property
    def label(self) -> str:
        return {"Linear": "Linear", "VanillaLSTM": "Vanilla-LSTM", "OccupancyLSTM": "O-LSTM",
                "SocialLSTM": "S-LSTM", "SocialGroupLSTM": "SG-LSTM"}[self.value]

    @property
    def mode(self) -> int:
        return {PredictorKind.VANILLA: MODE_NONE, PredictorKind.OCCUPANCY: MODE_OCCUPANCY,
                PredictorKind.SOCIAL: MODE_SOCIAL, PredictorKind.SOCIAL_GROUP: MODE_SOCIAL}.get(self, -1)

    @property
    def grouped(self) -> bool:
        return self is PredictorKind.SOCIAL_GROUP


@dataclass(frozen=True)
class ModelConfig:
    hidden: int = 64
    embed: int = 32
    extent: float = 4.0
    cells: int = 4

    @property
    def grid(self) -> NeighborhoodGrid:
        return NeighborhoodGrid(self.extent, self.cells)


def init_params(kind: PredictorKind, cfg: ModelConfig = ModelConfig(), seed: int = 0) -> nn.ParameterSet:
    """Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) weights, zero biases, forget bias 1."""
    kind = PredictorKind.parse(kind) if isinstance(kind, str) else kind
    if kind is PredictorKind.LINEAR:
        raise ValueError("the linear predictor has no parameters")
    rng = np.random.default_rng(seed)
    d, e, c = cfg.hidden, cfg.embed, cfg.cells * cfg.cells

    def u(rows, cols):
        bound = 1.0 / math.sqrt(cols)
        return rng.uniform(-bound, bound, size=(rows, cols))

    t = {"coord.W": u(e, 2), "coord.b": np.zeros(e)}
    if kind.mode == MODE_SOCIAL:
        t["pool.W"], t["pool.b"] = u(e, c * d), np.zeros(e)
    elif kind.mode == MODE_OCCUPANCY:
        t["occ.W"], t["occ.b"] = u(e, c), np.zeros(e)
    t["lstm.Wx"] = u(4 * d, e)
    if kind.mode != MODE_NONE:
        t["lstm.Wp"] = u(4 * d, e)
    t["lstm.Wh"] = u(4 * d, d)
    b = np.zeros(4 * d)
    b[d:2 * d] = 1.0
    t["lstm.b"] = b
    t["head.W"], t["head.b"] = u(5, d), np.zeros(5)
    return nn.ParameterSet(t, seed, {"kind": kind.value, **asdict(cfg)})


def config_of(params: nn.ParameterSet) -> ModelConfig:
    c = params.config
    return ModelConfig(int(c.get("hidden", params["lstm.Wh"].shape[1])), int(c.get("embed", params["coord.W"].shape[0])),
                       float(c.get("extent", 4.0)), int(c.get("cells", 4)))


# ---------------------------------------------------------------- batches

@dataclass
class Batch:
    """Entity rows from one or more scene windows; rows pool only within their segment."""

    obs: np.ndarray
    truth: np.ndarray
    segment: np.ndarray

    @classmethod
    def from_scene_windows(cls, scene_windows: Sequence[Sequence[Tuple[EntityWindow, PredictionHorizon]]]):
        obs, truth, seg = [], [], []
        for s, pairs in enumerate(scene_windows):
            for w, hz in pairs:
                obs.append(w.observed)
                truth.append(hz.positions)
                seg.append(s)
        if not obs:
            return cls(np.zeros((0, OBS_LEN, 2)), np.zeros((0, PRED_LEN, 2)), np.zeros(0, np.int64))
        return cls(np.array(obs), np.array(truth), np.array(seg, np.int64))

    def __len__(self):
        return len(self.obs)


def forward_trace(params: Dict[str, nn.Var], batch: Batch, mode: int, grid: NeighborhoodGrid):
    """Recorded closed-loop forward pass. Returns ``(loss, per_step_nll)`` where
    ``loss`` is the mean over entity rows of the summed t6..t10 NLL."""
    n = len(batch)
    d = params["lstm.Wh"].shape[1]
    h = nn.const(np.zeros((n, d)))
    c = nn.const(np.zeros((n, d)))
    disp = nn.const(np.zeros((n, 2)))
    pos_var = None
    pos = batch.obs[:, 0]
    step_losses = []
    for t in range(OBS_LEN + PRED_LEN - 1):
        if t < OBS_LEN:
            pos = batch.obs[:, t]
            disp = nn.const(batch.obs[:, t] - batch.obs[:, t - 1] if t > 0 else np.zeros((n, 2)))
        ec = nn.relu(nn.linear(disp, params["coord.W"], params["coord.b"]))
        z = nn.linear(ec, params["lstm.Wx"])
        if mode == MODE_SOCIAL:
            dest, src = scene_pairs(pos, batch.segment, grid)
            pooled = nn.pool_sum(h, dest, src, n, grid.n_cells)
            ep = nn.relu(nn.linear(pooled, params["pool.W"], params["pool.b"]))
            z = z + nn.linear(ep, params["lstm.Wp"])
        elif mode == MODE_OCCUPANCY:
            occ = nn.const(occupancy_scene(pos, batch.segment, grid))
            ep = nn.relu(nn.linear(occ, params["occ.W"], params["occ.b"]))
            z = z + nn.linear(ep, params["lstm.Wp"])
        z = z + nn.linear(h, params["lstm.Wh"], params["lstm.b"])
        i = nn.sigmoid(nn.columns(z, 0, d))
        f = nn.sigmoid(nn.columns(z, d, 2 * d))
        g = nn.tanh(nn.columns(z, 2 * d, 3 * d))
        o = nn.sigmoid(nn.columns(z, 3 * d, 4 * d))
        c = f * c + i * g
        h = o * nn.tanh(c)
        if t >= OBS_LEN - 1:
            raw = nn.linear(h, params["head.W"], params["head.b"])
            m = nn.columns(raw, 0, 2)
            base = nn.const(pos) if pos_var is None else pos_var
            mu = base + m
            step_losses.append(nn.bivariate_nll(mu, nn.columns(raw, 2, 4), nn.columns(raw, 4, 5),
                                                batch.truth[:, t - (OBS_LEN - 1)]))
            disp = m
            pos_var = mu
            pos = mu.value
    per_row = step_losses[0]
    for s in step_losses[1:]:
        per_row = per_row + s
    loss = nn.scale(nn.total(per_row), 1.0 / max(n, 1))
    return loss, per_row


def loss_and_grads(params: nn.ParameterSet, batch: Batch, mode: int, grid: NeighborhoodGrid):
    pv = params.as_vars()
    loss, per_row = forward_trace(pv, batch, mode, grid)
    grads = nn.backward(loss, pv)
    return float(loss.value), grads, per_row.value


def batch_loss(params: nn.ParameterSet, batch: Batch, mode: int, grid: NeighborhoodGrid, backend_name=None) -> float:
    """Same loss as :func:`forward_trace`, evaluated through the inference rollout."""
    out = backend.rollout(params.tensors, batch.obs, batch.segment, mode, grid.extent, grid.cells, backend_name)
    total = 0.0
    for k in range(PRED_LEN):
        for r in range(len(batch)):
            g = out[r, k]
            total += nn.nll(batch.truth[r, k], g[0:2], g[2:4], g[4])
    return total / max(len(batch), 1)


# ------------------------------------------------------------- prediction

def predict_linear(window_or_obs) -> np.ndarray:
    """Least-squares constant-velocity fit over the 5 observations, 5 steps ahead.

    Accepts a window, one (5, 2) observation or a stack (N, 5, 2).
    """
    obs = window_or_obs.observed if isinstance(window_or_obs, EntityWindow) else np.asarray(window_or_obs, float)
    t = np.arange(OBS_LEN, dtype=float)
    tc = t - t.mean()
    mean = obs.mean(axis=-2, keepdims=True)
    vel = (tc[:, None] * (obs - mean)).sum(axis=-2, keepdims=True) / (tc * tc).sum()
    future = np.arange(OBS_LEN, OBS_LEN + PRED_LEN, dtype=float) - t.mean()
    return mean + future[:, None] * vel


@dataclass
class ScenePrediction:
    """Entity horizons aligned with ``windows``."""

    windows: List[EntityWindow]
    horizons: List[PredictionHorizon]

    def per_person(self) -> Dict[Tuple[int, int], np.ndarray]:
        out = {}
        for w, hz in zip(self.windows, self.horizons):
            for pid, p in per_person_predictions(w, hz).items():
                out[(w.start_frame, pid)] = p
        return out

    @property
    def n_entities(self) -> int:
        return len(self.windows)


def _segments(windows: Sequence[EntityWindow]) -> np.ndarray:
    starts = {}
    return np.array([starts.setdefault(w.start_frame, len(starts)) for w in windows], np.int64)


def predict_learned(kind, windows: Sequence[EntityWindow], params: nn.ParameterSet,
                    backend_name: Optional[str] = None) -> ScenePrediction:
    """Closed-loop prediction for every entity; entities sharing a start frame pool together."""
    kind = PredictorKind.parse(kind) if isinstance(kind, str) else kind
    windows = list(windows)
    if not windows:
        return ScenePrediction([], [])
    if kind is PredictorKind.LINEAR:
        fut = predict_linear(np.stack([w.observed for w in windows]))
        return ScenePrediction(windows, [PredictionHorizon(f) for f in fut])
    cfg = config_of(params)
    obs = np.stack([w.observed for w in windows])
    out = backend.rollout(params.tensors, obs, _segments(windows), kind.mode, cfg.extent, cfg.cells, backend_name)
    return ScenePrediction(windows, [PredictionHorizon(o[:, 0:2], o) for o in out])


def scene_windows(kind, scene: Scene, grouping: Optional[Grouping] = None, stride: int = DEFAULT_STRIDE):
    """Windows for a predictor: groups for SG-LSTM, individuals for everything else."""
    kind = PredictorKind.parse(kind) if isinstance(kind, str) else kind
    if kind.grouped and grouping is not None:
        g = grouping
    else:
        g = Grouping.singletons(scene.tracks)
    return build_windows(scene, g, stride)


def sample_trajectory(horizon: PredictionHorizon, seed: int = 0) -> np.ndarray:
    """One draw per step from each step's bivariate normal (Cholesky form)."""
    if horizon.gaussians is None:
        return horizon.positions.copy()
    g = horizon.gaussians
    rng = np.random.default_rng(seed)
    z = rng.standard_normal((PRED_LEN, 2))
    x = g[:, 0] + g[:, 2] * z[:, 0]
    y = g[:, 1] + g[:, 3] * (g[:, 4] * z[:, 0] + np.sqrt(1 - g[:, 4] ** 2) * z[:, 1])
    return np.stack([x, y], axis=1)


# --------------------------------------------------------------- training

@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 200
    batch_size: int = 16
    lr: float = 1e-3
    seed: int = 0
    clip_norm: float = 10.0
    model: ModelConfig = field(default_factory=ModelConfig)


class TrainingDiverged(RuntimeError):
    def __init__(self, epoch: int, batch_id: int, loss: float):
        super().__init__(f"non-finite loss {loss} at epoch {epoch}, batch {batch_id}")
        self.epoch, self.batch_id, self.loss = epoch, batch_id, loss


def train(kind, dataset: Sequence[Sequence[Tuple[EntityWindow, PredictionHorizon]]], cfg: TrainConfig = TrainConfig(),
          params: Optional[nn.ParameterSet] = None, progress=None):
    """Mini-batch Adam on the mean per-entity NLL.

    ``dataset`` is a list of scene windows (entity pairs sharing a start
    frame); a batch holds ``batch_size`` scene windows. Returns the trained
    parameters and the per-epoch mean NLL per entity.
    """
    kind = PredictorKind.parse(kind) if isinstance(kind, str) else kind
    if kind is PredictorKind.LINEAR:
        raise ValueError("the linear predictor is not trained")
    dataset = [sw for sw in dataset if len(sw)]
    if not dataset:
        raise ValueError("training needs a nonempty dataset")
    params = (params or init_params(kind, cfg.model, cfg.seed)).copy()
    mcfg = config_of(params)
    grid = mcfg.grid
    rng = np.random.default_rng(cfg.seed)
    opt = nn.Adam(cfg.lr)
    n_rows = sum(len(sw) for sw in dataset)
    log = []
    for epoch in range(cfg.epochs):
        order = rng.permutation(len(dataset))
        row_losses = [None] * len(dataset)
        for bid, start in enumerate(range(0, len(order), cfg.batch_size)):
            idx = tuple(int(i) for i in order[start:start + cfg.batch_size])
            batch = Batch.from_scene_windows([dataset[i] for i in idx])
            loss, grads, per_row = loss_and_grads(params, batch, kind.mode, grid)
            if not math.isfinite(loss):
                raise TrainingDiverged(epoch, bid, loss)
            offset = 0
            for i in idx:
                row_losses[i] = per_row[offset:offset + len(dataset[i])]
                offset += len(dataset[i])
            nn.clip_global_norm(grads, cfg.clip_norm)
            opt.step(params.tensors, grads)
        log.append(float(np.concatenate(row_losses).sum() / n_rows))
        if progress is not None:
            progress(epoch, log[-1])
    return params, log
