import time

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from sglstm import evaluation as ev


def brute_ade(pred, truth, squared=False):
    tot = n = 0
    for k in pred:
        for a, b in zip(pred[k], truth[k]):
            d = ((a[0] - b[0]) ** 2 + (a[1] - b[1]) ** 2)
            tot += d if squared else d ** 0.5
            n += 1
    return tot / n


def brute_fde(pred, truth):
    return sum(((pred[k][-1][0] - truth[k][-1][0]) ** 2 + (pred[k][-1][1] - truth[k][-1][1]) ** 2) ** 0.5
               for k in pred) / len(pred)


def rand_case(seed, n=4):
    rng = np.random.default_rng(seed)
    return ({k: rng.normal(size=(5, 2)) for k in range(n)}, {k: rng.normal(size=(5, 2)) for k in range(n)})


def test_metric_fixtures():
    truth = {1: np.zeros((5, 2)), 2: np.ones((5, 2))}
    assert ev.ade(truth, truth) == 0 and ev.fde(truth, truth) == 0
    shifted = {k: v + [3, 4] for k, v in truth.items()}
    assert ev.ade(shifted, truth) == pytest.approx(5.0, abs=1e-12)
    assert ev.ade(shifted, truth, squared=True) == pytest.approx(25.0, abs=1e-12)
    end = {k: v + [0, 2] for k, v in truth.items()}
    assert ev.fde(end, truth) == pytest.approx(2.0)


@settings(max_examples=50)
@given(st.integers(0, 100_000), st.integers(1, 6))
def test_metrics_match_brute(seed, n):
    p, t = rand_case(seed, n)
    assert ev.ade(p, t) == pytest.approx(brute_ade(p, t), rel=1e-12)
    assert ev.ade(p, t, squared=True) == pytest.approx(brute_ade(p, t, True), rel=1e-12)
    assert ev.fde(p, t) == pytest.approx(brute_fde(p, t), rel=1e-12)
    assert ev.ade(p, t) == pytest.approx(ev.ade(t, p), rel=1e-12)
    moved_p = {k: v + [7, -3] for k, v in p.items()}
    moved_t = {k: v + [7, -3] for k, v in t.items()}
    assert ev.ade(moved_p, moved_t) == pytest.approx(ev.ade(p, t), rel=1e-9)


def test_missing_truth_excluded():
    p = {1: np.zeros((5, 2)), 2: np.zeros((5, 2))}
    t = {1: np.ones((5, 2)), 2: None}
    rep = ev.metric_report(p, t)
    assert rep.count == 1 and rep.excluded == [2]
    assert rep.ade == pytest.approx(2 ** 0.5)
    assert rep.per_entity[1][1] == pytest.approx(2 ** 0.5)


def test_bench_harness():
    calls = []

    def fast():
        calls.append(1)
        return 3

    def slow():
        time.sleep(0.002)
        return 3
    rep = ev.bench({"Linear": fast, "S-LSTM": slow}, 3, 0.0, 3, repetitions=5, warmup=2)
    assert len(calls) == 7
    assert rep.median("Linear") < rep.median("S-LSTM")
    assert rep.to_csv().splitlines()[0].startswith("method,median_ms")
    with pytest.raises(ValueError):
        ev.bench({"a": fast}, 1, 0, 1, repetitions=4)
    empty = ev.bench({"a": fast}, 0, 0, 0)
    assert empty.rows == [] and empty.n_pedestrians == 0


def test_table_layout():
    text = ev.format_table({"SG-LSTM": {"eth": (0.5, 1.0)}, "Linear": {"eth": (0.8, 1.6)}}, ["eth"])
    lines = text.splitlines()
    assert lines[0].startswith("Avg. Displacement Error")
    assert lines[1].startswith("Linear") and lines[2].startswith("SG-LSTM")
    assert lines[3].startswith("Final Displacement Error")


def test_grouping_recovery():
    truth = {0: [(1, 2), (3,)], 1: [(1, 2), (3,)]}
    pred = {0: [(1, 2), (3,)], 1: [(1,), (2,), (3,)]}
    rep = ev.grouping_recovery(pred, truth)
    assert rep.frames == 2 and rep.exact == 1
    assert rep.pair_precision == 1.0 and rep.pair_recall == 0.5
