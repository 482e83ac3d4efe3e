import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from sglstm.core import (EntityWindow, GaussianStep, Grouping, PredictionHorizon, Scene, Track, build_windows,
                         observed_windows, per_person_predictions, person_truth, split_by_start)
from sglstm.evaluation import ade

from conftest import line_scene


def test_track_rejects_duplicate_frames():
    with pytest.raises(ValueError):
        Track(1, [0, 0], [[0, 0], [1, 1]])


def test_track_sorted_from_samples():
    tr = Track.from_samples(3, [(5, 1.0, 1.0), (2, 0.0, 0.0)])
    assert tr.frames.tolist() == [2, 5]
    assert tr.positions_at([2, 5])[1].tolist() == [1.0, 1.0]
    assert tr.positions_at([2, 3]) is None


def test_scene_invariants():
    with pytest.raises(ValueError):
        Scene(np.array([0, 1]), 0.0, {})
    with pytest.raises(ValueError):
        Scene(np.array([0, 1]), 0.1, {1: Track(1, [0, 7], [[0, 0], [1, 1]])})


def test_grouping_partition_enforced():
    with pytest.raises(ValueError):
        Grouping.from_groups([[1, 2], [2, 3]])
    with pytest.raises(ValueError):
        Grouping(0, {0: frozenset()})
    g = Grouping.from_groups([[5, 4], [1]])
    assert g.canonical() == ((1,), (4, 5))
    assert g.group_of(4) == g.group_of(5) != g.group_of(1)


def test_restricted_adds_singletons():
    g = Grouping.from_groups([[1, 2]]).restricted([1, 2, 9])
    assert g.canonical() == ((1, 2), (9,))


def test_single_window_from_ten_frames():
    sc = line_scene(10)
    pairs = build_windows(sc, Grouping.singletons(sc.tracks), stride=1)
    assert len(pairs) == 1
    w, truth = pairs[0]
    np.testing.assert_array_equal(w.observed, sc.tracks[0].xy[:5])
    np.testing.assert_array_equal(truth.positions, sc.tracks[0].xy[5:])


def test_nine_frames_give_no_windows():
    sc = line_scene(9)
    assert build_windows(sc, Grouping.singletons(sc.tracks), stride=1) == []


@given(st.integers(1, 30))
def test_window_count_sliding(n):
    sc = line_scene(n)
    assert len(build_windows(sc, Grouping.singletons(sc.tracks), stride=1)) == max(0, n - 9)


def test_stride_maps_frames_to_steps():
    sc = line_scene(30, stride=1)
    pairs = build_windows(sc, Grouping.singletons(sc.tracks), stride=3)
    assert len(pairs) == 30 - 27
    np.testing.assert_array_equal(pairs[0][0].observed, sc.tracks[0].xy[0:15:3])


def test_group_centroid_path():
    t = np.arange(10)
    path = np.stack([t * 0.3, np.sin(t)], axis=1)
    offsets = [(1, 0), (-1, 0), (0, 1)]
    tracks = {k: Track(k, t, path + np.array(o, float)) for k, o in enumerate(offsets)}
    sc = Scene(t, 0.4, tracks)
    (w, truth), = build_windows(sc, Grouping.from_groups([[0, 1, 2]]), stride=1)
    brute = np.array([[np.mean([tracks[k].xy[f, j] for k in range(3)]) for j in range(2)] for f in range(10)])
    np.testing.assert_allclose(w.observed, brute[:5], atol=1e-12)
    np.testing.assert_allclose(truth.positions, brute[5:], atol=1e-12)
    assert w.members == (0, 1, 2)


def test_entity_window_invariants():
    with pytest.raises(ValueError):
        EntityWindow(0, 0, np.zeros((4, 2)), (1,), np.zeros((1, 2)))
    with pytest.raises(ValueError):
        EntityWindow(0, 0, np.zeros((5, 2)), (), np.zeros((0, 2)))


def test_horizon_and_gaussian_invariants():
    with pytest.raises(ValueError):
        PredictionHorizon(np.zeros((4, 2)))
    with pytest.raises(ValueError):
        GaussianStep((0, 0), (1, 0), 0.0)
    with pytest.raises(ValueError):
        GaussianStep((0, 0), (1, 1), 1.0)
    assert len(PredictionHorizon(np.zeros((5, 2))).steps) == 5


def test_per_person_singleton_and_offset():
    w = EntityWindow(0, 0, np.zeros((5, 2)), (7,), np.zeros((1, 2)))
    hz = PredictionHorizon(np.arange(10.0).reshape(5, 2))
    np.testing.assert_array_equal(per_person_predictions(w, hz)[7], hz.positions)
    w2 = EntityWindow(0, 0, np.zeros((5, 2)), (1, 2), np.array([[1.0, 0.0], [-1.0, 0.0]]))
    hz2 = PredictionHorizon(np.full((5, 2), 5.0))
    assert per_person_predictions(w2, hz2)[1][0].tolist() == [6.0, 5.0]


@given(st.floats(-100, 100), st.floats(-100, 100))
def test_per_person_translation_equivariant(a, b):
    rng = np.random.default_rng(0)
    w = EntityWindow(0, 0, rng.normal(size=(5, 2)), (1, 2, 3), rng.normal(size=(3, 2)))
    hz = PredictionHorizon(rng.normal(size=(5, 2)))
    base = per_person_predictions(w, hz)
    moved = per_person_predictions(w, PredictionHorizon(hz.positions + [a, b]))
    for pid in base:
        np.testing.assert_allclose(moved[pid], base[pid] + [a, b], atol=1e-9)


def test_rigid_formation_per_person_ade_equals_centroid_ade(rng):
    t = np.arange(10)
    path = np.cumsum(rng.normal(size=(10, 2)), axis=0)
    offs = rng.normal(size=(3, 2))
    tracks = {k: Track(k, t, path + offs[k]) for k in range(3)}
    sc = Scene(t, 0.4, tracks)
    (w, truth), = build_windows(sc, Grouping.from_groups([[0, 1, 2]]), 1)
    guess = PredictionHorizon(truth.positions + rng.normal(size=(5, 2)))
    per = per_person_predictions(w, guess)
    tr = person_truth(sc, w, 1)
    group_ade = np.mean(np.linalg.norm(guess.positions - truth.positions, axis=1))
    assert ade(per, tr) == pytest.approx(group_ade, abs=1e-12)


def test_observed_windows_need_only_five_steps():
    sc = line_scene(5)
    ws = observed_windows(sc, Grouping.singletons(sc.tracks), 0, 1)
    assert len(ws) == 1 and ws[0].observed.shape == (5, 2)


def test_split_by_start_orders():
    sc = line_scene(12, n_peds=3)
    parts = split_by_start(build_windows(sc, Grouping.singletons(sc.tracks), 1))
    assert [p[0][0].start_frame for p in parts] == [0, 1, 2]
    assert [min(w.members) for w, _ in parts[0]] == [0, 1, 2]


@settings(max_examples=50)
@given(st.lists(st.integers(0, 20), min_size=1, max_size=15, unique=True), st.randoms())
def test_grouping_from_random_partition_is_partition(ids, r):
    ids = list(ids)
    r.shuffle(ids)
    cuts = sorted(r.sample(range(1, len(ids)), k=min(len(ids) - 1, r.randint(0, 3)))) if len(ids) > 1 else []
    groups = [ids[a:b] for a, b in zip([0] + cuts, cuts + [len(ids)])]
    g = Grouping.from_groups(groups)
    seen = [p for m in g.assignments.values() for p in m]
    assert sorted(seen) == sorted(ids)
