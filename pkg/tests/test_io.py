import json
import math

import numpy as np
import pytest
from PIL import Image

from sglstm import io
from sglstm.core import Grouping
from sglstm.geometry import CameraModel, DepthBoundedBox, localize
from sglstm.synth import SynthConfig, synthesize


def write(tmp_path, name, text):
    p = tmp_path / name
    p.write_text(text)
    return str(p)


def test_ethucy_two_lines(tmp_path):
    sc = io.load_trajectories(write(tmp_path, "a.txt", "0 1 1.5 2.5\n10.0 1 2.0 3.0\n"), "ethucy")
    assert list(sc.tracks) == [1] and len(sc.tracks[1]) == 2
    assert sc.tracks[1].xy[1].tolist() == [2.0, 3.0]


def test_ethucy_errors_carry_line(tmp_path):
    with pytest.raises(io.FormatError) as e:
        io.read_ethucy(write(tmp_path, "b.txt", "0 1 1 1\n1 1 x 2\n"))
    assert e.value.line == 2
    with pytest.raises(io.FormatError) as e:
        io.read_ethucy(write(tmp_path, "c.txt", "0 1 1 1\n\n1 1 2\n"))
    assert e.value.line == 3
    with pytest.raises(io.FormatError):
        io.read_ethucy(write(tmp_path, "d.txt", "0.5 1 1 1\n"))


def test_out_of_order_resorted_with_warning(tmp_path):
    path = write(tmp_path, "e.txt", "5 1 1 1\n0 1 0 0\n")
    with pytest.warns(io.OrderWarning):
        sc = io.read_ethucy(path)
    assert sc.tracks[1].frames.tolist() == [0, 5]


MOT_ROWS = [
    (1, 1, 100, 50, 20, 60, 1, 3.5, 4.25, -1),
    (1, 2, 300, 80, 30, 90, 0.9, 2.0, 1.0, -1),
    (2, 1, 102, 50, 20, 60, 1, 3.6, 4.3, -1),
    (2, 2, 305, 80, 30, 90, 0.9, 2.1, 1.05, -1),
    (3, 1, 104, 51, 20, 60, 1, 3.7, 4.35, -1),
    (3, 2, 310, 80, 30, 90, 0.9, 2.2, 1.1, -1),
    (4, 1, 106, 51, 20, 60, 1, 3.8, 4.4, -1),
    (4, 3, 500, 20, 10, 40, 0.5, -0.5, 0.5, -1),
    (5, 1, 108, 52, 20, 60, 1, 3.9, 4.45, -1),
    (5, 3, 505, 20, 10, 40, 0.5, 0.1, 0.55, -1),
]


def test_mot15_world_rows(tmp_path):
    text = "\n".join(",".join(str(v) for v in r) for r in MOT_ROWS) + "\n"
    sc = io.load_trajectories(write(tmp_path, "m.txt", text), "mot15")
    by_hand = {}
    for line in text.splitlines():
        f = line.split(",")
        by_hand[(int(f[0]), int(f[1]))] = (float(f[7]), float(f[8]))
    for (frame, pid), xy in by_hand.items():
        np.testing.assert_array_equal(sc.positions_in_frame(frame)[pid], xy)


def test_mot15_bbox_fallback(tmp_path):
    depth = np.full((48, 64), 2500, np.uint16)
    Image.fromarray(depth).save(tmp_path / "depth.png")
    (tmp_path / "cam.json").write_text(json.dumps({"fov": math.pi / 2, "image_width": 64, "image_height": 48,
                                                   "depth_map": "depth.png"}))
    path = write(tmp_path, "m.txt", "1,7,22,10,20,20,1,-1,-1,-1\n")
    with pytest.raises(io.FormatError):
        io.read_mot15(path)
    cam = io.load_camera(str(tmp_path / "cam.json"))
    sc = io.read_mot15(path, cam)
    ref = localize(DepthBoundedBox((32.0, 20.0), 2.5), CameraModel(math.pi / 2, 64, 48))
    np.testing.assert_allclose(sc.tracks[7].xy[0], [ref.x_g, ref.y_g], atol=1e-12)


def test_depth_csv(tmp_path):
    p = write(tmp_path, "d.csv", "1.0,2.0\n3.0,4.5\n")
    np.testing.assert_array_equal(io.load_depth_map(p), [[1, 2], [3, 4.5]])


def test_jsonl_roundtrip_bytes(tmp_path):
    scene, _ = synthesize(SynthConfig(n_pedestrians=5, seed=3, duration_steps=6))
    a = tmp_path / "a.jsonl"
    io.save_jsonl(scene, str(a), {"provenance": io.provenance(["x"])})
    b = tmp_path / "b.jsonl"
    io.save_jsonl(io.read_jsonl(str(a)), str(b))
    assert a.read_bytes() == b.read_bytes()


def test_jsonl_errors(tmp_path):
    with pytest.raises(io.FormatError) as e:
        io.read_jsonl(write(tmp_path, "j.jsonl", '{"frame":0,"id":1,"x":0,"y":0}\n{"frame":1,"id":1,"x":0}\n'))
    assert e.value.line == 2
    with pytest.raises(io.FormatError):
        io.read_jsonl(write(tmp_path, "k.jsonl", '{"frame":0,"id":1,"x":0,"y":0}\n{"meta":{}}\n'))
    with pytest.raises(ValueError):
        io.load_trajectories(write(tmp_path, "l.txt", ""), "csv")
    with pytest.raises(FileNotFoundError):
        io.load_trajectories(str(tmp_path / "nope"), "jsonl")


def test_convert_fixed_point(tmp_path):
    sc = io.read_ethucy(write(tmp_path, "e.txt", "0 1 0.1 0.2\n1 1 0.3 0.4\n1 2 5 5\n"))
    once = io.dumps_jsonl(sc)
    p = write(tmp_path, "once.jsonl", once)
    assert io.dumps_jsonl(io.read_jsonl(p)) == once


def test_annotation_roundtrip_and_validation():
    ann = io.GroupAnnotation.from_groupings([(0, Grouping.from_groups([[1, 2], [3]])),
                                             (12, Grouping.from_groups([[1], [2, 3]]))], {"k": 1})
    back = io.GroupAnnotation.from_json(ann.to_json())
    assert back.to_json() == ann.to_json()
    assert back.grouping(12).canonical() == ((1,), (2, 3))
    doc = json.loads(ann.to_json())
    assert doc["format_version"] == io.ANNOTATION_VERSION
    assert doc["frames"][0]["groups"][0] == {"group_id": 0, "member_ids": [1, 2], "bbox": None}
    with pytest.raises(ValueError):
        io.AnnotatedGroup(0, ())
    with pytest.raises(ValueError):
        io.AnnotatedGroup(0, (1,), (0, 0, 0, 5))
    with pytest.raises(ValueError):
        io.GroupAnnotation({0: [io.AnnotatedGroup(0, (1, 2)), io.AnnotatedGroup(1, (2,))]})
    with pytest.raises(io.FormatError):
        io.GroupAnnotation.from_json('{"format_version": 2, "frames": []}')


def test_provenance_header():
    assert io.header_line(["sglstm", "synth"]).endswith("sglstm synth")
    assert io.provenance(["a"])["tool"].startswith("sglstm ")
