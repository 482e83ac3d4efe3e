"""Differentiable building blocks: a tiny reverse-mode tape, LSTM cell,
bivariate Gaussian head and loss, Adam, and parameter persistence.

Only the operators the trajectory models need are provided. Every op takes
and returns :class:`Var`; gradients are accumulated by :func:`backward`.
"""
from __future__ import annotations

import base64
import math
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Mapping, Optional, Sequence

import numpy as np

LOG_2PI = math.log(2 * math.pi)
#: Guards on the raw head outputs; gradients vanish outside these bounds.
LOG_SIGMA_MIN, LOG_SIGMA_MAX = -6.0, 6.0
RHO_RAW_MAX = 5.0

FORMAT_VERSION = 1


class Var:
    """A node in the computation trace."""

    __slots__ = ("value", "grad", "parents", "backward_fn", "name")

    def __init__(self, value, parents: Sequence["Var"] = (), backward_fn: Optional[Callable] = None,
                 name: Optional[str] = None):
        self.value = np.asarray(value, dtype=np.float64)
        self.grad: Optional[np.ndarray] = None
        self.parents = tuple(parents)
        self.backward_fn = backward_fn
        self.name = name

    @property
    def shape(self):
        return self.value.shape

    def _accum(self, g):
        if self.grad is None:
            self.grad = np.array(g, dtype=np.float64, copy=True)
        else:
            self.grad += g

    def __add__(self, other):
        return add(self, other)

    def __mul__(self, other):
        return mul(self, other)

    def __repr__(self):
        return f"Var(shape={self.value.shape}, name={self.name})"


def const(value) -> Var:
    return Var(value)


def _unbroadcast(g: np.ndarray, shape) -> np.ndarray:
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for axis, n in enumerate(shape):
        if n == 1 and g.shape[axis] != 1:
            g = g.sum(axis=axis, keepdims=True)
    return g


def add(a: Var, b: Var) -> Var:
    def bw(g):
        a._accum(_unbroadcast(g, a.shape))
        b._accum(_unbroadcast(g, b.shape))
    return Var(a.value + b.value, (a, b), bw)


def mul(a: Var, b: Var) -> Var:
    def bw(g):
        a._accum(_unbroadcast(g * b.value, a.shape))
        b._accum(_unbroadcast(g * a.value, b.shape))
    return Var(a.value * b.value, (a, b), bw)


def square(a: Var) -> Var:
    return Var(a.value ** 2, (a,), lambda g: a._accum(2 * a.value * g))


def total(a: Var) -> Var:
    return Var(a.value.sum(), (a,), lambda g: a._accum(np.broadcast_to(g, a.shape)))


def scale(a: Var, c: float) -> Var:
    return Var(a.value * c, (a,), lambda g: a._accum(g * c))


def linear(x: Var, w: Var, b: Optional[Var] = None) -> Var:
    """``x @ w.T + b`` for a row-batch ``x`` of shape (N, in)."""
    out = x.value @ w.value.T
    if b is not None:
        out = out + b.value

    def bw(g):
        x._accum(g @ w.value)
        w._accum(g.T @ x.value)
        if b is not None:
            b._accum(g.sum(axis=0))
    return Var(out, (x, w) + ((b,) if b is not None else ()), bw)


def relu(a: Var) -> Var:
    mask = a.value > 0
    return Var(np.where(mask, a.value, 0.0), (a,), lambda g: a._accum(g * mask))


def sigmoid(a: Var) -> Var:
    s = 1.0 / (1.0 + np.exp(-a.value))
    return Var(s, (a,), lambda g: a._accum(g * s * (1 - s)))


def tanh(a: Var) -> Var:
    t = np.tanh(a.value)
    return Var(t, (a,), lambda g: a._accum(g * (1 - t * t)))


def columns(a: Var, start: int, stop: int) -> Var:
    def bw(g):
        full = np.zeros(a.shape)
        full[:, start:stop] = g
        a._accum(full)
    return Var(a.value[:, start:stop], (a,), bw)


def clip(a: Var, lo: float, hi: float) -> Var:
    inside = (a.value >= lo) & (a.value <= hi)
    return Var(np.clip(a.value, lo, hi), (a,), lambda g: a._accum(g * inside))


def pool_sum(h: Var, dest: np.ndarray, src: np.ndarray, n_rows: int, n_cells: int) -> Var:
    """Scatter-add ``h[src[k]]`` into row ``dest[k]`` of an (n_rows * n_cells, D)
    buffer, returned flattened to (n_rows, n_cells * D). Accumulation runs in
    the given pair order."""
    d = h.shape[1]
    buf = np.zeros((n_rows * n_cells, d))
    if len(dest):
        np.add.at(buf, dest, h.value[src])

    def bw(g):
        gg = g.reshape(n_rows * n_cells, d)
        dh = np.zeros(h.shape)
        if len(dest):
            np.add.at(dh, src, gg[dest])
        h._accum(dh)
    return Var(buf.reshape(n_rows, n_cells * d), (h,), bw)


def bivariate_nll(mu: Var, log_sigma: Var, rho_raw: Var, target: np.ndarray) -> Var:
    """Per-row negative log density of ``target`` (N, 2) under a bivariate normal
    with mean ``mu``, ``sigma = exp(log_sigma)``, ``rho = tanh(rho_raw)``.

    The log-space form avoids density underflow. Raw inputs are clipped to
    the module guards; returns shape (N,).
    """
    ls_raw, r_raw = log_sigma.value, rho_raw.value[:, 0]
    ls = np.clip(ls_raw, LOG_SIGMA_MIN, LOG_SIGMA_MAX)
    r = np.clip(r_raw, -RHO_RAW_MAX, RHO_RAW_MAX)
    sig = np.exp(ls)
    rho = np.tanh(r)
    one_m = 1 - rho * rho
    z = (target - mu.value) / sig
    zx, zy = z[:, 0], z[:, 1]
    q = zx * zx + zy * zy - 2 * rho * zx * zy
    out = LOG_2PI + ls[:, 0] + ls[:, 1] + 0.5 * np.log(one_m) + q / (2 * one_m)

    def bw(g):
        # d/d residual, d/d log sigma, d/d raw rho
        dex = (zx - rho * zy) / (sig[:, 0] * one_m)
        dey = (zy - rho * zx) / (sig[:, 1] * one_m)
        mu._accum(-np.stack([dex, dey], axis=1) * g[:, None])
        dls = np.stack([1 - (zx * zx - rho * zx * zy) / one_m,
                        1 - (zy * zy - rho * zx * zy) / one_m], axis=1)
        dls = dls * ((ls_raw >= LOG_SIGMA_MIN) & (ls_raw <= LOG_SIGMA_MAX))
        log_sigma._accum(dls * g[:, None])
        dr = -rho - zx * zy + q * rho / one_m
        dr = dr * ((r_raw >= -RHO_RAW_MAX) & (r_raw <= RHO_RAW_MAX))
        rho_raw._accum((dr * g)[:, None])
    return Var(out, (mu, log_sigma, rho_raw), bw)


def backward(loss: Var, params: Optional[Mapping[str, Var]] = None) -> Dict[str, np.ndarray]:
    """Reverse-mode sweep from scalar ``loss``. Returns gradients for ``params``
    (zeros for parameters the loss does not depend on)."""
    order: List[Var] = []
    seen = set()
    stack = [(loss, False)]
    while stack:
        node, done = stack.pop()
        if done:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in node.parents:
            if id(p) not in seen:
                stack.append((p, False))
    for node in order:
        node.grad = None
    loss.grad = np.ones_like(loss.value)
    for node in reversed(order):
        if node.backward_fn is not None and node.grad is not None:
            node.backward_fn(node.grad)
    if params is None:
        return {}
    return {k: (v.grad.copy() if v.grad is not None else np.zeros_like(v.value)) for k, v in params.items()}


# Plain-numpy single-step reference forms, used by the ops and by tests.

def embed(x: np.ndarray, w: np.ndarray, b: np.ndarray) -> np.ndarray:
    """``relu(W x + b)``; works for a single vector or a row batch."""
    x = np.asarray(x, float)
    w = np.asarray(w, float)
    if x.shape[-1] != w.shape[1] or np.shape(b) != (w.shape[0],):
        raise ValueError(f"embed shape mismatch: input {x.shape}, weight {w.shape}, bias {np.shape(b)}")
    return np.maximum(x @ w.T + b, 0.0)


@dataclass(frozen=True)
class HiddenState:
    h: np.ndarray
    c: np.ndarray

    @classmethod
    def zeros(cls, dim: int, batch: Optional[int] = None) -> "HiddenState":
        shape = (dim,) if batch is None else (batch, dim)
        return cls(np.zeros(shape), np.zeros(shape))


def _sig(x):
    return 1.0 / (1.0 + np.exp(-x))


def lstm_step(state: HiddenState, e: np.ndarray, wx: np.ndarray, wh: np.ndarray, b: np.ndarray) -> HiddenState:
    """Standard LSTM cell, gates stacked in order input, forget, cell, output."""
    d = state.h.shape[-1]
    if wx.shape != (4 * d, np.shape(e)[-1]) or wh.shape != (4 * d, d) or b.shape != (4 * d,):
        raise ValueError("lstm_step shape mismatch")
    z = e @ wx.T + state.h @ wh.T + b
    i, f, g, o = _sig(z[..., :d]), _sig(z[..., d:2 * d]), np.tanh(z[..., 2 * d:3 * d]), _sig(z[..., 3 * d:])
    c = f * state.c + i * g
    return HiddenState(o * np.tanh(c), c)


def gaussian_head(h: np.ndarray, w: np.ndarray, b: np.ndarray):
    """Raw head outputs -> ``(mu (..,2), sigma (..,2), rho (..))`` with
    ``sigma = exp(raw)`` and ``rho = tanh(raw)``."""
    raw = np.asarray(h) @ w.T + b
    return transform_raw(raw)


def transform_raw(raw: np.ndarray):
    raw = np.asarray(raw, float)
    mu = raw[..., 0:2]
    sigma = np.exp(np.clip(raw[..., 2:4], LOG_SIGMA_MIN, LOG_SIGMA_MAX))
    rho = np.tanh(np.clip(raw[..., 4], -RHO_RAW_MAX, RHO_RAW_MAX))
    return mu, sigma, rho


def nll(target, mu, sigma, rho) -> float:
    """Negative log density of a bivariate normal at ``target``."""
    ex = (target[0] - mu[0]) / sigma[0]
    ey = (target[1] - mu[1]) / sigma[1]
    one_m = 1.0 - rho * rho
    q = ex * ex + ey * ey - 2.0 * rho * ex * ey
    return LOG_2PI + math.log(sigma[0]) + math.log(sigma[1]) + 0.5 * math.log(one_m) + q / (2.0 * one_m)


class Adam:
    def __init__(self, lr: float = 1e-3, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.m: Dict[str, np.ndarray] = {}
        self.v: Dict[str, np.ndarray] = {}
        self.t = 0
        self.rejected = 0

    def step(self, params: Dict[str, np.ndarray], grads: Mapping[str, np.ndarray]) -> bool:
        """Update ``params`` in place. A step with any non-finite gradient is
        rejected (returns False, counted in ``rejected``)."""
        if not all(np.all(np.isfinite(g)) for g in grads.values()):
            self.rejected += 1
            return False
        self.t += 1
        c1 = 1 - self.beta1 ** self.t
        c2 = 1 - self.beta2 ** self.t
        for k, g in grads.items():
            m = self.m.get(k)
            if m is None:
                m = self.m[k] = np.zeros_like(g)
                self.v[k] = np.zeros_like(g)
            v = self.v[k]
            m *= self.beta1
            m += (1 - self.beta1) * g
            v *= self.beta2
            v += (1 - self.beta2) * g * g
            params[k] -= self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)
        return True


def clip_global_norm(grads: Dict[str, np.ndarray], max_norm: float) -> float:
    norm = math.sqrt(sum(float(np.sum(g * g)) for g in grads.values()))
    if norm > max_norm:
        for g in grads.values():
            g *= max_norm / norm
    return norm


@dataclass
class ParameterSet:
    """Named float64 tensors with fixed shapes."""

    tensors: Dict[str, np.ndarray]
    rng_seed: int = 0
    config: dict = field(default_factory=dict)

    def __post_init__(self):
        for k, v in self.tensors.items():
            if not np.all(np.isfinite(v)):
                raise ValueError(f"parameter {k} has non-finite values")

    def __getitem__(self, key):
        return self.tensors[key]

    def copy(self) -> "ParameterSet":
        return ParameterSet({k: v.copy() for k, v in self.tensors.items()}, self.rng_seed, dict(self.config))

    def as_vars(self) -> Dict[str, Var]:
        return {k: Var(v, name=k) for k, v in self.tensors.items()}

    def to_json(self, meta: Optional[dict] = None) -> dict:
        doc = {"format_version": FORMAT_VERSION, "rng_seed": self.rng_seed, "config": self.config, "tensors": {}}
        for k, v in self.tensors.items():
            raw = np.ascontiguousarray(v, dtype="<f4").tobytes()
            doc["tensors"][k] = {"shape": list(v.shape), "data": base64.b64encode(raw).decode("ascii")}
        if meta is not None:
            doc["meta"] = meta
        return doc

    @classmethod
    def from_json(cls, doc: dict) -> "ParameterSet":
        version = doc.get("format_version")
        if version != FORMAT_VERSION:
            raise ValueError(f"unsupported parameter format_version {version!r}")
        tensors = {}
        for k, t in doc["tensors"].items():
            arr = np.frombuffer(base64.b64decode(t["data"]), dtype="<f4").astype(np.float64)
            tensors[k] = arr.reshape(t["shape"])
        return cls(tensors, int(doc.get("rng_seed", 0)), dict(doc.get("config", {})))
