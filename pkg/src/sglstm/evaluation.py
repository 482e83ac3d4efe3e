"""Displacement metrics and the scene-prediction runtime benchmark."""
from __future__ import annotations

import statistics
import time
from dataclasses import dataclass, field
from typing import Callable, Dict, Hashable, List, Mapping, Sequence, Tuple

import numpy as np

TABLE_ORDER = ("Linear", "Vanilla-LSTM", "O-LSTM", "S-LSTM", "SG-LSTM")
RUNTIME_ORDER = ("Linear", "S-LSTM", "O-LSTM", "Vanilla-LSTM", "SG-LSTM")


@dataclass
class MetricReport:
    ade: float
    fde: float
    count: int
    per_entity: Dict[Hashable, Tuple[float, float]] = field(default_factory=dict)
    excluded: List[Hashable] = field(default_factory=list)
    squared: bool = False


def _aligned(pred: Mapping, truth: Mapping):
    keys, excluded = [], []
    for k in pred:
        t = truth.get(k)
        if t is None or np.shape(t) != np.shape(pred[k]) or not np.all(np.isfinite(t)):
            excluded.append(k)
        else:
            keys.append(k)
    return keys, excluded


def ade(pred: Mapping, truth: Mapping, squared: bool = False) -> float:
    """Mean displacement over every person and predicted step.

    With ``squared`` the mean squared distance is reported instead.
    """
    keys, _ = _aligned(pred, truth)
    if not keys:
        return float("nan")
    d = np.concatenate([np.linalg.norm(np.asarray(pred[k]) - np.asarray(truth[k]), axis=-1) for k in keys])
    return float(np.mean(d * d if squared else d))


def fde(pred: Mapping, truth: Mapping) -> float:
    """Mean over persons of the endpoint distance."""
    keys, _ = _aligned(pred, truth)
    if not keys:
        return float("nan")
    return float(np.mean([np.linalg.norm(np.asarray(pred[k])[-1] - np.asarray(truth[k])[-1]) for k in keys]))


def metric_report(pred: Mapping, truth: Mapping, squared: bool = False) -> MetricReport:
    keys, excluded = _aligned(pred, truth)
    per = {}
    for k in keys:
        d = np.linalg.norm(np.asarray(pred[k]) - np.asarray(truth[k]), axis=-1)
        per[k] = (float(np.mean(d * d if squared else d)), float(d[-1]))
    sub_p = {k: pred[k] for k in keys}
    return MetricReport(ade(sub_p, truth, squared), fde(sub_p, truth), len(keys), per, excluded, squared)


@dataclass
class BenchRow:
    method: str
    median_ms: float
    n_entities: int


@dataclass
class BenchReport:
    rows: List[BenchRow]
    warmup: int
    repetitions: int
    n_pedestrians: int
    group_fraction: float
    n_groups: int

    def median(self, method: str) -> float:
        for r in self.rows:
            if r.method == method:
                return r.median_ms
        raise KeyError(method)

    def to_csv(self) -> str:
        lines = ["method,median_ms,entities,pedestrians,group_fraction,warmup,repetitions"]
        for r in self.rows:
            lines.append(f"{r.method},{r.median_ms:.4f},{r.n_entities},{self.n_pedestrians},"
                         f"{self.group_fraction:.4f},{self.warmup},{self.repetitions}")
        return "\n".join(lines) + "\n"


def timer_resolution() -> float:
    return time.get_clock_info("perf_counter").resolution


def bench(methods: Mapping[str, Callable[[], int]], n_pedestrians: int, group_fraction: float, n_groups: int,
          repetitions: int = 11, warmup: int = 3) -> BenchReport:
    """Median wall-clock of each zero-argument ``methods[name]()``, which runs a
    full scene prediction and returns the number of entities it modelled."""
    if repetitions < 5:
        raise ValueError("bench needs at least 5 repetitions")
    if timer_resolution() > 1e-6:
        raise RuntimeError(f"timer resolution {timer_resolution()} s is coarser than 1 us")
    rows = []
    if n_pedestrians == 0:
        return BenchReport(rows, warmup, repetitions, 0, 0.0, 0)
    for name, fn in methods.items():
        for _ in range(warmup):
            fn()
        times = []
        entities = 0
        for _ in range(repetitions):
            t0 = time.perf_counter()
            entities = fn()
            times.append(time.perf_counter() - t0)
        rows.append(BenchRow(name, statistics.median(times) * 1e3, int(entities)))
    return BenchReport(rows, warmup, repetitions, n_pedestrians, group_fraction, n_groups)


def format_table(results: Mapping[str, Mapping[str, Tuple[float, float]]], datasets: Sequence[str]) -> str:
    """Methods x datasets, ADE block then FDE block."""
    methods = [m for m in TABLE_ORDER if m in results] + [m for m in results if m not in TABLE_ORDER]
    w = max([len(m) for m in methods] + [len("Final Displacement Error")]) + 2
    lines = []
    for title, idx in (("Avg. Displacement Error", 0), ("Final Displacement Error", 1)):
        lines.append(title.ljust(w) + "".join(d.rjust(10) for d in datasets))
        for m in methods:
            vals = [results[m].get(d, (float("nan"), float("nan")))[idx] for d in datasets]
            lines.append(m.ljust(w) + "".join(f"{v:10.3f}" for v in vals))
    return "\n".join(lines) + "\n"


@dataclass
class RecoveryReport:
    frames: int
    exact: int
    pair_precision: float
    pair_recall: float

    @property
    def exact_rate(self) -> float:
        return self.exact / self.frames if self.frames else float("nan")

    def to_csv(self) -> str:
        return ("frames,exact,exact_rate,pair_precision,pair_recall\n"
                f"{self.frames},{self.exact},{self.exact_rate:.6f},{self.pair_precision:.6f},{self.pair_recall:.6f}\n")


def _pair_set(groups) -> set:
    out = set()
    for g in groups:
        g = sorted(g)
        out.update((a, b) for i, a in enumerate(g) for b in g[i + 1:])
    return out


def grouping_recovery(pred: Mapping[int, Sequence[Sequence[int]]], truth: Mapping[int, Sequence[Sequence[int]]]
                      ) -> RecoveryReport:
    """Compare per-frame partitions on the pedestrians both sides cover.

    ``exact`` counts frames whose partitions agree; pair scores are
    micro-averaged over same-group pedestrian pairs.
    """
    frames = exact = tp = n_pred = n_true = 0
    for f in sorted(set(pred) & set(truth)):
        ids = set().union(*map(set, pred[f])) & set().union(*map(set, truth[f])) if pred[f] and truth[f] else set()
        if not ids:
            continue
        p = [sorted(set(g) & ids) for g in pred[f] if set(g) & ids]
        t = [sorted(set(g) & ids) for g in truth[f] if set(g) & ids]
        frames += 1
        exact += sorted(p) == sorted(t)
        pp, tt = _pair_set(p), _pair_set(t)
        tp += len(pp & tt)
        n_pred += len(pp)
        n_true += len(tt)
    return RecoveryReport(frames, exact, tp / n_pred if n_pred else 1.0, tp / n_true if n_true else 1.0)
