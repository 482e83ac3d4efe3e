import math

import pytest
from hypothesis import given, strategies as st

from sglstm.geometry import CameraModel, DepthBoundedBox, angular_displacement, group_box, localize

CAM = CameraModel(math.pi / 2, 640, 480)


def box(x, d=1.0):
    return DepthBoundedBox((x, 240.0), d)


def test_edges_of_image():
    assert angular_displacement(box(0), CAM) == 0.0
    assert angular_displacement(box(640), CAM) == pytest.approx(math.pi / 2)


def test_centre_hand_value():
    cam = CameraModel(1.5708, 640)
    assert angular_displacement(box(320), cam) == pytest.approx(0.7854, abs=1e-4)


def test_centered_flag_shifts_by_half_fov():
    assert angular_displacement(box(320), CAM, centered=True) == pytest.approx(0.0, abs=1e-15)


def test_out_of_range_and_bad_depth():
    with pytest.raises(ValueError):
        angular_displacement(box(641), CAM)
    with pytest.raises(ValueError):
        angular_displacement(box(-0.1), CAM)
    with pytest.raises(ValueError):
        localize(box(10, 0.0), CAM)
    with pytest.raises(ValueError):
        CameraModel(math.pi, 640)


def test_localize_fixtures():
    p = localize(box(0, 5.0), CAM)
    assert (p.x_g, p.y_g) == (5.0, 0.0)
    p = localize(box(640, 2.0), CAM)
    assert abs(p.x_g) < 1e-12 and p.y_g == pytest.approx(2.0, abs=1e-12)
    p = localize(box(320, 4.0), CAM)
    assert p.x_g == pytest.approx(2.8284, abs=1e-4) and p.y_g == pytest.approx(2.8284, abs=1e-4)


@given(st.floats(0, 640), st.floats(1e-3, 100), st.floats(0.01, 3.1))
def test_norm_preserved(x, d, fov):
    p = localize(box(x, d), CameraModel(fov, 640))
    assert math.hypot(*p) == pytest.approx(d, rel=1e-12)


@given(st.floats(0, 639), st.floats(1e-3, 1))
def test_bearing_monotone(x, dx):
    assert angular_displacement(box(x + dx), CAM) > angular_displacement(box(x), CAM)


def test_group_box_means():
    g = group_box([DepthBoundedBox((0, 0), 2.0), DepthBoundedBox((10, 4), 4.0)])
    assert g.centroid == (5.0, 2.0) and g.depth == 3.0
    with pytest.raises(ValueError):
        group_box([])
