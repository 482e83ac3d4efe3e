"""Pure numpy closed-loop rollout, used when the compiled kernel is absent."""
from __future__ import annotations

import numpy as np

from .nn import LOG_SIGMA_MAX, LOG_SIGMA_MIN, RHO_RAW_MAX
from .pooling import NeighborhoodGrid, occupancy_scene, pool_scene

MODE_NONE, MODE_SOCIAL, MODE_OCCUPANCY = 0, 1, 2
N_STEPS = 9
OBS = 5


def _sig(x):
    return 1.0 / (1.0 + np.exp(-x))


def rollout(params, obs, segment, mode, extent, cells):
    """Observe 5 steps then feed back predicted mean displacements.

    ``obs`` is (N, 5, 2); returns (N, 5, 5) rows of
    ``mu_x, mu_y, sigma_x, sigma_y, rho`` for steps t6..t10.
    """
    obs = np.asarray(obs, np.float64)
    n = obs.shape[0]
    d = params["lstm.Wh"].shape[1]
    out = np.zeros((n, 5, 5))
    if n == 0:
        return out
    grid = NeighborhoodGrid(extent, cells)
    segment = np.asarray(segment)
    h = np.zeros((n, d))
    c = np.zeros((n, d))
    disp = np.zeros((n, 2))
    pos = obs[:, 0]
    for t in range(N_STEPS):
        if t < OBS:
            pos = obs[:, t]
            disp = obs[:, t] - obs[:, t - 1] if t > 0 else np.zeros((n, 2))
        ec = np.maximum(disp @ params["coord.W"].T + params["coord.b"], 0.0)
        z = ec @ params["lstm.Wx"].T
        if mode == MODE_SOCIAL:
            pooled = pool_scene(pos, h, segment, grid)
            ep = np.maximum(pooled @ params["pool.W"].T + params["pool.b"], 0.0)
            z = z + ep @ params["lstm.Wp"].T
        elif mode == MODE_OCCUPANCY:
            occ = occupancy_scene(pos, segment, grid)
            ep = np.maximum(occ @ params["occ.W"].T + params["occ.b"], 0.0)
            z = z + ep @ params["lstm.Wp"].T
        z = z + (h @ params["lstm.Wh"].T + params["lstm.b"])
        i = _sig(z[:, :d])
        f = _sig(z[:, d:2 * d])
        g = np.tanh(z[:, 2 * d:3 * d])
        o = _sig(z[:, 3 * d:])
        c = f * c + i * g
        h = o * np.tanh(c)
        if t >= OBS - 1:
            raw = h @ params["head.W"].T + params["head.b"]
            m = raw[:, 0:2]
            mu = pos + m
            k = t - (OBS - 1)
            out[:, k, 0:2] = mu
            out[:, k, 2:4] = np.exp(np.clip(raw[:, 2:4], LOG_SIGMA_MIN, LOG_SIGMA_MAX))
            out[:, k, 4] = np.tanh(np.clip(raw[:, 4], -RHO_RAW_MAX, RHO_RAW_MAX))
            disp = m
            pos = mu
    return out
