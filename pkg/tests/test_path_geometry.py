import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import arc_polyline
from oie.errors import DegeneratePolyline, IndexOutOfStencil, PathTooShort, ZeroVelocity
from oie.path_geometry import (
    DISTANCE_UNIT_M,
    CanTrace,
    IrProfile,
    PlannedPath,
    ir_profile_from_can,
    ir_profile_from_path,
    load_path,
    load_profile,
    load_trace,
    resample_by_arclength,
    save_path,
    save_profile,
    save_trace,
    signed_curvature,
)


def circle_profile(radius_du, turn="right", L=40):
    path = resample_by_arclength(arc_polyline(radius_du, turn, length_du=L + 10), L=L)
    return ir_profile_from_path(path, L).values


class TestResample:
    def test_straight_segment_point_count(self):
        path = resample_by_arclength([(0.0, 0.0), (0.0, 20.0)], L=40)
        assert len(path) == 73
        np.testing.assert_allclose(path.points[:, 0], 0.0, atol=1e-12)
        np.testing.assert_allclose(np.diff(path.points[:, 1]), DISTANCE_UNIT_M, rtol=1e-9)

    def test_first_point_is_origin(self):
        path = resample_by_arclength([(5.0, 3.0), (8.0, 7.0), (8.0, 30.0)], L=10)
        np.testing.assert_array_equal(path.points[0], [0.0, 0.0])

    def test_quarter_circle_points_stay_on_circle(self):
        R = 10.0
        th = np.linspace(0.0, np.pi / 2, 2001)
        # right turn from the origin heading +y, centre at (R, 0)
        pts = np.stack([R - R * np.cos(th), R * np.sin(th)], axis=1)
        path = resample_by_arclength(pts, L=40, heading=np.pi / 2)
        r = np.hypot(path.points[:, 0] - R, path.points[:, 1])
        assert np.max(np.abs(r - R)) < 1e-3

    def test_single_point_rejected(self):
        with pytest.raises(PathTooShort):
            resample_by_arclength([(0.0, 0.0)])

    def test_coincident_points_rejected(self):
        with pytest.raises(DegeneratePolyline):
            resample_by_arclength([(0.0, 0.0), (0.0, 0.0), (0.0, 20.0)])

    def test_short_path_rejected(self):
        with pytest.raises(PathTooShort):
            resample_by_arclength([(0.0, 0.0), (0.0, 5.0)], L=40)


class TestSignedCurvature:
    def test_collinear_is_zero(self):
        path = PlannedPath(points=np.array([[0.0, 0.0], [0.0, 1.0], [0.0, 2.0]]))
        assert signed_curvature(path, 1) == 0.0

    @pytest.mark.parametrize("turn,sign", [("right", 1.0), ("left", -1.0)])
    def test_circle_radius_100(self, turn, sign):
        path = resample_by_arclength(arc_polyline(100.0, turn), L=40)
        k = signed_curvature(path, 10)
        assert abs(k - sign * 0.01) < 0.01 * 0.01

    def test_stencil_bounds(self):
        path = PlannedPath(points=np.array([[0.0, 0.0], [0.0, 1.0], [0.0, 2.0]]))
        with pytest.raises(IndexOutOfStencil):
            signed_curvature(path, 0)
        with pytest.raises(IndexOutOfStencil):
            signed_curvature(path, 2)

    def test_vertical_tangent_handled(self):
        # path heading along +x in the vehicle frame: y(x) is fine in the chord frame
        R = 50.0
        th = np.linspace(0, 1.0, 50)
        P = np.stack([R * np.sin(th), R - R * np.cos(th)], axis=1) * DISTANCE_UNIT_M
        path = PlannedPath(points=P)
        assert abs(abs(signed_curvature(path, 25)) - 1 / R) < 0.01 / R


class TestIrProfileFromPath:
    def test_straight_exactly_zero(self):
        path = resample_by_arclength([(0.0, 0.0), (0.0, 30.0)], L=40)
        assert np.all(ir_profile_from_path(path, 40).values == 0.0)

    def test_constant_right_turn(self):
        vals = circle_profile(50.0)
        assert np.all(np.abs(vals - 0.02) < 0.02 * 0.01)

    def test_straight_then_arc_transition(self):
        R, start = 30.0, 15.0
        path = resample_by_arclength(arc_polyline(R, "right", length_du=40, straight_du=start), L=40)
        vals = ir_profile_from_path(path, 40).values
        l = np.arange(1, 41)
        assert np.all(np.abs(vals[l < start - 1]) < 1e-9)
        assert np.all(np.abs(vals[l > start + 1] - 1 / R) < 0.01 / R)

    def test_too_short(self):
        path = PlannedPath(points=np.stack([np.zeros(20), np.arange(20.0)], axis=1) * DISTANCE_UNIT_M)
        with pytest.raises(PathTooShort):
            ir_profile_from_path(path, 40)


class TestIrProfileFromCan:
    def test_zero_yaw(self):
        tr = CanTrace(yaw_rate=np.zeros(40), velocity=np.full(40, 20.0))
        assert np.all(ir_profile_from_can(tr).values == 0.0)

    def test_direct_substitution(self):
        tr = CanTrace(yaw_rate=np.full(40, 7.2), velocity=np.full(40, 3.6))
        np.testing.assert_allclose(ir_profile_from_can(tr, alpha=1.0).values, 2.0, rtol=0, atol=1e-15)

    def test_left_turn_nonpositive(self):
        tr = CanTrace(yaw_rate=-np.linspace(0, 20, 40), velocity=np.full(40, 15.0))
        assert np.all(ir_profile_from_can(tr).values <= 0.0)

    def test_zero_velocity_rejected(self):
        v = np.full(40, 10.0)
        v[7] = 0.0
        with pytest.raises(ZeroVelocity):
            ir_profile_from_can(CanTrace(yaw_rate=np.ones(40), velocity=v))

    def test_short_trace_rejected(self):
        with pytest.raises(PathTooShort):
            ir_profile_from_can(CanTrace(yaw_rate=np.ones(5), velocity=np.ones(5)))


class TestInvariants:
    @pytest.mark.parametrize("R", [10.0, 50.0, 100.0, 250.0, 500.0])
    def test_circle_oracle(self, R):
        for turn, sign in (("right", 1.0), ("left", -1.0)):
            vals = circle_profile(R, turn)
            assert np.all(np.abs(sign * vals - 1 / R) * R < 0.01)

    @settings(max_examples=40, deadline=None)
    @given(
        st.lists(st.floats(-0.3, 0.3), min_size=4, max_size=4),
        st.floats(0.8, 3.0),
    )
    def test_mirror_antisymmetry(self, bends, step):
        pts = _wiggly(bends, step)
        mirrored = pts * np.array([-1.0, 1.0])
        a = ir_profile_from_path(resample_by_arclength(pts, L=40), 40).values
        b = ir_profile_from_path(resample_by_arclength(mirrored, L=40), 40).values
        assert np.all(np.abs(a + b) < 1e-9)

    @settings(max_examples=40, deadline=None)
    @given(
        st.lists(st.floats(-0.3, 0.3), min_size=4, max_size=4),
        st.floats(-np.pi, np.pi),
        st.floats(-100, 100),
        st.floats(-100, 100),
    )
    def test_rigid_motion_invariance(self, bends, angle, tx, ty):
        pts = _wiggly(bends, 1.5)
        c, s = np.cos(angle), np.sin(angle)
        moved = pts @ np.array([[c, s], [-s, c]]) + np.array([tx, ty])
        a = ir_profile_from_path(resample_by_arclength(pts, L=40), 40).values
        b = ir_profile_from_path(resample_by_arclength(moved, L=40), 40).values
        assert np.max(np.abs(a - b)) < 1e-6

    @settings(max_examples=50, deadline=None)
    @given(
        st.lists(st.one_of(st.just(0.0), st.floats(1e-3, 30), st.floats(-30, -1e-3)), min_size=40, max_size=40),
        st.lists(st.floats(1, 80), min_size=40, max_size=40),
        st.floats(0.01, 100),
    )
    def test_can_alpha_linearity(self, yaw, vel, alpha):
        tr = CanTrace(yaw_rate=np.array(yaw), velocity=np.array(vel))
        one = ir_profile_from_can(tr, alpha=alpha).values
        two = ir_profile_from_can(tr, alpha=2 * alpha).values
        assert np.array_equal(two, 2 * one)

    def test_straight_lines_exactly_zero_any_direction(self, rng):
        for _ in range(20):
            d = rng.normal(size=2)
            d /= np.linalg.norm(d)
            o = rng.uniform(-50, 50, size=2)
            pts = o + np.outer(np.linspace(0, 25, 5), d)
            path = resample_by_arclength(pts, L=40)
            assert np.all(ir_profile_from_path(path, 40).values == 0.0)


def _wiggly(bends, step):
    """A smooth polyline from the origin with piecewise constant turning."""
    heading, pos, pts = np.pi / 2, np.zeros(2), [np.zeros(2)]
    for b in bends:
        for _ in range(40):
            heading += b * 0.05
            pos = pos + step * 0.1 * np.array([np.cos(heading), np.sin(heading)])
            pts.append(pos.copy())
    return np.array(pts)


class TestTextFormats:
    def test_round_trips(self, tmp_path):
        path = resample_by_arclength(arc_polyline(40.0), L=40)
        save_path(tmp_path / "p.csv", path)
        back = load_path(tmp_path / "p.csv")
        np.testing.assert_array_equal(back.points, path.points)
        assert back.spacing == path.spacing

        tr = CanTrace(yaw_rate=np.linspace(-3, 3, 40), velocity=np.linspace(10, 20, 40))
        save_trace(tmp_path / "t.csv", tr)
        tb = load_trace(tmp_path / "t.csv")
        np.testing.assert_array_equal(tb.yaw_rate, tr.yaw_rate)
        np.testing.assert_array_equal(tb.velocity, tr.velocity)

        prof = IrProfile(values=np.linspace(-0.1, 0.1, 40))
        save_profile(tmp_path / "i.csv", prof)
        np.testing.assert_array_equal(load_profile(tmp_path / "i.csv").values, prof.values)
        assert "#" in (tmp_path / "i.csv").read_text().splitlines()[0]
