import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from rivernav.angles import angle_diff, wrap_angle
from rivernav.guidance import (
    GuidanceConfig,
    Path,
    PathError,
    along_track,
    continuous_heading,
    course_error,
    cross_track,
    desired_course,
    locate_segment,
    path_fix,
    path_heading,
)

finite = st.floats(-1e4, 1e4, allow_nan=False)
angles = st.floats(-50.0, 50.0, allow_nan=False)


def signed_distance(a, p, q):
    """Brute force: 2D cross product of the unit direction with the offset."""
    d = np.subtract(q, p) / np.linalg.norm(np.subtract(q, p))
    w = np.subtract(a, p)
    return d[0] * w[1] - d[1] * w[0]


@given(angles)
def test_wrap_range(a):
    w = wrap_angle(a)
    assert -math.pi < w <= math.pi
    assert math.isclose(math.cos(w), math.cos(a), abs_tol=1e-9)
    assert math.isclose(math.sin(w), math.sin(a), abs_tol=1e-9)


def test_wrap_boundaries():
    assert wrap_angle(math.pi) == math.pi
    assert wrap_angle(-math.pi) == math.pi
    assert wrap_angle(0.0) == 0.0
    assert angle_diff(0.1, 2 * math.pi) == pytest.approx(0.1)


def test_path_heading_quadrants():
    assert path_heading((0, 0), (1, 0)) == 0.0
    assert path_heading((0, 0), (0, 1)) == pytest.approx(math.pi / 2)
    assert path_heading((0, 0), (-1, 0)) == pytest.approx(math.pi)
    with pytest.raises(PathError):
        path_heading((1, 1), (1, 1))


@given(finite, finite, finite, finite, finite, finite)
def test_cross_track_matches_line_distance(px, py, qx, qy, ax, ay):
    if math.hypot(qx - px, qy - py) < 1e-3:
        return
    chi = path_heading((px, py), (qx, qy))
    expected = signed_distance((ax, ay), (px, py), (qx, qy))
    assert cross_track((ax, ay), (px, py), chi) == pytest.approx(expected, abs=1e-9 * (1 + abs(expected)) + 1e-8)


def test_left_of_path_is_positive():
    assert cross_track((5.0, 3.0), (0.0, 0.0), 0.0) == pytest.approx(3.0)
    assert cross_track((5.0, -3.0), (0.0, 0.0), 0.0) == pytest.approx(-3.0)
    assert along_track((5.0, 3.0), (0.0, 0.0), 0.0) == pytest.approx(5.0)


@given(angles, angles, st.floats(1.0, 500.0))
def test_continuous_heading_endpoints(chi_k, chi_n, length):
    assert continuous_heading(0.0, length, chi_k, chi_n) == wrap_angle(chi_k)
    assert continuous_heading(length, length, chi_k, chi_n) == wrap_angle(chi_n)
    mid = continuous_heading(length / 2, length, chi_k, chi_n)
    # the blend takes the short way round
    assert abs(angle_diff(mid, chi_k)) <= math.pi / 2 + 1e-9


@given(st.floats(-1e5, 1e5, allow_nan=False), angles, st.floats(1e-4, 1.0))
def test_desired_course_within_quarter_turn(y_e, chi_p, c):
    chi_d = desired_course(y_e, chi_p, GuidanceConfig(c=c))
    assert abs(angle_diff(chi_d, chi_p)) < math.pi / 2


def test_desired_course_turns_back_toward_path():
    cfg = GuidanceConfig(c=0.01)
    # left of an eastbound path: steer right (negative course)
    assert desired_course(100.0, 0.0, cfg) == pytest.approx(-math.pi / 4)
    assert desired_course(-100.0, 0.0, cfg) == pytest.approx(math.pi / 4)
    assert desired_course(0.0, 0.3, cfg) == pytest.approx(0.3)


def test_course_error_definition():
    assert course_error(0.5, 0.2, 0.1) == pytest.approx(0.2)
    assert course_error(math.pi - 0.1, -math.pi + 0.1, 0.0) == pytest.approx(-0.2)


def test_guidance_gain_must_be_positive():
    with pytest.raises(ValueError):
        GuidanceConfig(c=0.0)


def test_path_validation_and_io(tmp_path):
    with pytest.raises(PathError):
        Path([(0, 0)])
    with pytest.raises(PathError):
        Path([(0, 0), (0, 0), (1, 1)])
    p = Path([(0.0, 0.0), (100.0, 0.1), (200.0, 50.0 / 3)])
    p.save(tmp_path / "p.txt")
    q = Path.load(tmp_path / "p.txt")
    assert np.array_equal(p.waypoints, q.waypoints)
    (tmp_path / "bad.txt").write_text("1 2\n3\n")
    with pytest.raises(PathError, match="line 2"):
        Path.load(tmp_path / "bad.txt")


def test_locate_segment_advances_monotonically():
    p = Path([(0, 0), (100, 0), (200, 0), (300, 0)])
    assert locate_segment(p, (50, 0), 0) == 0
    assert locate_segment(p, (150, 0), 0) == 1
    assert locate_segment(p, (250, 0), 0) == 2
    # never moves backwards
    assert locate_segment(p, (10, 0), 2) == 2
    # clamps at the last segment
    assert locate_segment(p, (1000, 0), 0) == 2


def test_path_fix_on_corner_path():
    p = Path([(0, 0), (100, 0), (100, 100)])
    cfg = GuidanceConfig(c=0.01)
    fix = path_fix(p, (50.0, 10.0), 0.0, 0.0, 0, cfg)
    assert fix.segment_index == 0
    assert fix.y_e == pytest.approx(10.0)
    assert fix.x_e == pytest.approx(50.0)
    assert fix.chi_C == pytest.approx(math.pi / 4)
    assert fix.chi_d == pytest.approx(math.pi / 4 - math.atan(0.1))
    assert fix.advance == pytest.approx(50.0)
    fix2 = path_fix(p, (110.0, 50.0), math.pi / 2, 0.0, fix.segment_index, cfg)
    assert fix2.segment_index == 1
    assert fix2.y_e == pytest.approx(-10.0)
    assert fix2.advance == pytest.approx(150.0)


@settings(max_examples=50)
@given(st.lists(st.tuples(st.floats(-1e3, 1e3), st.floats(-1e3, 1e3)), min_size=3, max_size=8),
       st.floats(0.0, 1.0), st.floats(1e-3, 0.1))
def test_on_path_points_have_zero_cross_track(pts, frac, c):
    pts = np.array(pts)
    if np.min(np.hypot(*np.diff(pts, axis=0).T)) < 1.0:
        return
    p = Path(pts)
    for k in range(p.n_segments):
        a = pts[k] + frac * (pts[k + 1] - pts[k])
        y = cross_track(a, pts[k], p.headings[k])
        assert abs(y) < 1e-9
