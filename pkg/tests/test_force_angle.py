import math

import numpy as np
import pytest
from hypothesis import assume, given, settings
from hypothesis import strategies as st
from oracles import force_angle_alpha

from tipslide.core_model import DegenerateGeometryError, WheelLayout, quat_to_matrix
from tipslide.force_angle import (
    WrenchTrace,
    alpha_series,
    analyze_trace,
    axis_components,
    geometry_sweep,
    load_bundled_trace,
    net_tipover_wrench,
    read_wrench_trace,
    stability_measure,
    support_pattern,
    tipover_windows,
    write_analysis,
    write_wrench_trace,
)

comp = st.floats(-50, 50, allow_nan=False)
vec = st.tuples(comp, comp, comp).map(np.array)
layouts = st.builds(
    WheelLayout.three_wheel,
    r_d=st.floats(0.03, 0.3),
    h=st.floats(0.05, 0.6),
    phase=st.floats(0.0, 2 * math.pi),
)


def alpha_of(layout_or_points, f, m):
    return stability_measure(net_tipover_wrench(f, m), support_pattern(layout_or_points))


def conditioned(rep) -> bool:
    # the resultant direction is meaningless when f* nearly vanishes
    return min(np.linalg.norm(fs) for fs in rep.f_star) > 1e-6


class TestSupportPattern:
    def test_three_axes_and_normals(self):
        axes = support_pattern(WheelLayout.three_wheel())
        assert axes.count == 3
        for a, l in zip(axes.a, axes.l):
            assert abs(a @ l) < 1e-12
            # each axis normal reaches from the CoM to the axis: r_d cos 60 in-plane, h out of plane
            assert math.hypot(l[0], l[1]) == pytest.approx(0.042, abs=1e-12)
            assert l[2] == pytest.approx(0.3, abs=1e-12)

    def test_two_wheel_single_axis(self):
        assert support_pattern(WheelLayout.two_wheel()).count == 1

    def test_coincident_points_rejected(self):
        with pytest.raises(DegenerateGeometryError):
            support_pattern([[0, 0, 1], [0, 0, 1], [1, 0, 1]])

    def test_too_few_points(self):
        with pytest.raises(DegenerateGeometryError):
            support_pattern([[0, 0, 1]])


class TestMeasure:
    def test_symmetric_push_angles(self):
        rep = alpha_of(WheelLayout.three_wheel(), [0.0, 0.0, 15.0], [0.0, 0.0, 0.0])
        assert np.allclose(rep.theta, math.atan(0.042 / 0.3), atol=1e-12)
        assert set(rep.sigma) == {1}

    def test_two_wheel_alpha_is_single_product(self):
        rep = alpha_of(WheelLayout.two_wheel(), [0.0, 0.0, 10.0], [0.0, 0.5, 0.0])
        assert rep.alpha == rep.products[0] and rep.argmin_axis == 1

    def test_large_torque_tips(self):
        # a pure push is stable; a 10 N m torque along one of the axes tips it
        lay = WheelLayout.three_wheel()
        rep = alpha_of(lay, [0.0, 0.0, 10.0], [0.0, 0.0, 0.0])
        assert rep.alpha > 0
        signs = [alpha_of(lay, [0.0, 0.0, 10.0], 10.0 * a / np.linalg.norm(a)).alpha
                 for a in support_pattern(lay).a]
        assert min(signs) < 0

    def test_zero_resultant_is_degenerate(self):
        with pytest.raises(DegenerateGeometryError):
            alpha_of(WheelLayout.three_wheel(), [0.0, 0.0, 0.0], [0.0, 0.0, 0.0])

    @settings(max_examples=200)
    @given(layouts, vec, vec)
    def test_matches_oracle(self, lay, f, m):
        try:
            rep = alpha_of(lay, f, m)
        except DegenerateGeometryError:
            return
        assume(conditioned(rep))
        ref, thetas = force_angle_alpha(lay.wheel_positions, f, m)
        assert abs(rep.alpha - ref) <= 1e-9 * max(abs(ref), 1e-9)
        assert np.allclose(rep.theta, thetas, atol=1e-9)

    @settings(max_examples=200)
    @given(layouts, vec, vec, st.floats(0.01, 100.0))
    def test_positive_homogeneity(self, lay, f, m, c):
        try:
            a = alpha_of(lay, f, m)
        except DegenerateGeometryError:
            return
        assume(conditioned(a))
        b = alpha_of(lay, c * f, c * m)
        assert abs(b.alpha - c * a.alpha) <= 1e-12 * max(abs(c * a.alpha), 1e-12) + 1e-13
        if np.sort(a.products)[1] - a.products.min() > 1e-9 * abs(a.products).max():
            assert a.argmin_axis == b.argmin_axis

    @settings(max_examples=200)
    @given(layouts, vec, vec, st.tuples(*[st.floats(-1, 1)] * 4).filter(lambda q: np.linalg.norm(q) > 0.1))
    def test_common_rotation_invariance(self, lay, f, m, q):
        R = quat_to_matrix(np.array(q) / np.linalg.norm(q))
        try:
            a = alpha_of(lay, f, m)
        except DegenerateGeometryError:
            return
        assume(conditioned(a))
        b = alpha_of([R @ p for p in lay.wheel_positions], R @ f, R @ m)
        assert np.allclose(a.theta, b.theta, atol=1e-10)
        assert abs(a.alpha - b.alpha) < 1e-10 * max(1.0, abs(a.alpha))

    @given(layouts, vec, vec)
    def test_projector_identities(self, lay, f, m):
        axes = support_pattern(lay)
        w = net_tipover_wrench(f, m)
        for i in range(3):
            f_i, m_i = axis_components(w, axes, i)
            ah = axes.a[i] / np.linalg.norm(axes.a[i])
            P = np.outer(ah, ah)
            assert np.allclose(f_i + P @ f, f, atol=1e-10)
            assert np.allclose(m_i + (np.eye(3) - P) @ m, m, atol=1e-10)

    @given(layouts, vec, vec)
    def test_d_orthogonal_to_resultant(self, lay, f, m):
        try:
            rep = alpha_of(lay, f, m)
        except DegenerateGeometryError:
            return
        assume(conditioned(rep))
        for d, fs in zip(rep.d, rep.f_star):
            assert abs(d @ (fs / np.linalg.norm(fs))) < 1e-10

    @given(layouts, st.tuples(*[st.floats(0.05, 1.0)] * 3))
    def test_inside_cone_all_positive(self, lay, weights):
        f = sum(w * p for w, p in zip(weights, lay.wheel_positions))
        rep = alpha_of(lay, f, np.zeros(3))
        assert set(rep.sigma) == {1}
        assert rep.alpha > 0

    def test_gravity_is_subtracted(self):
        w = net_tipover_wrench([0, 0, 10], [0, 0, 0], g_body=[0, 0, 4])
        assert np.allclose(w.f_r, [0, 0, 6])


class TestTrace:
    def test_windows(self):
        t = np.arange(8) * 0.1
        a = np.array([1, -1, -2, 1, np.nan, -1, -1, -1.0])
        assert tipover_windows(t, a) == [pytest.approx((0.1, 0.2)), pytest.approx((0.5, 0.7))]

    def test_degenerate_samples_flagged(self):
        tr = WrenchTrace([0.0, 0.1, 0.2], [[0, 0, 10], [0, 0, 0], [0, 0, 10]], np.zeros((3, 3)))
        res = analyze_trace(tr, WheelLayout.three_wheel())
        assert res.gaps == [1]
        assert np.isnan(res.alpha[1]) and np.isfinite(res.alpha[[0, 2]]).all()
        assert np.isnan(alpha_series(tr, WheelLayout.three_wheel())[1])

    def test_vectorized_matches_pipeline(self):
        tr = load_bundled_trace()
        for lay in (WheelLayout.three_wheel(), WheelLayout.two_wheel(), WheelLayout.three_wheel().scaled(5, 0.2)):
            a = analyze_trace(tr, lay).alpha
            b = alpha_series(tr, lay)
            assert np.allclose(a, b, atol=1e-12, rtol=0)

    def test_non_monotone_time_rejected(self):
        with pytest.raises(ValueError):
            WrenchTrace([0.0, 0.0], np.zeros((2, 3)), np.zeros((2, 3)))

    def test_csv_roundtrip(self, tmp_path):
        rng = np.random.default_rng(0)
        tr = WrenchTrace(np.arange(5) * 0.01, rng.normal(size=(5, 3)), rng.normal(size=(5, 3)), rng.normal(size=(5, 3)))
        write_wrench_trace(tr, tmp_path / "t.csv", with_gravity=True)
        back = read_wrench_trace(tmp_path / "t.csv")
        assert np.array_equal(back.f_a, tr.f_a) and np.array_equal(back.gravity_body, tr.gravity_body)

    def test_bad_header(self, tmp_path):
        (tmp_path / "bad.csv").write_text("a,b\n1,2\n")
        with pytest.raises(ValueError):
            read_wrench_trace(tmp_path / "bad.csv")

    def test_write_analysis(self, tmp_path):
        res = analyze_trace(load_bundled_trace(), WheelLayout.three_wheel())
        write_analysis(res, 3, tmp_path / "a.csv", tmp_path / "w.csv")
        lines = (tmp_path / "a.csv").read_text().splitlines()
        assert len(lines) == len(res.alpha) + 1
        assert len((tmp_path / "w.csv").read_text().splitlines()) == len(res.windows) + 1


class TestSweep:
    def test_bundled_trace_trend(self):
        res = geometry_sweep(load_bundled_trace(), WheelLayout.three_wheel(), [1, 2, 5], [1, 0.5, 0.2])
        for h in (1, 0.5, 0.2):
            vals = [res.min_alpha(r, h) for r in (1, 2, 5)]
            assert vals == sorted(vals)
        for r in (1, 2, 5):
            vals = [res.min_alpha(r, h) for h in (1, 0.5, 0.2)]
            assert vals == sorted(vals)
        # the nominal geometry tips on this trace, the widest and lowest does not
        assert res.min_alpha(1, 1) < 0 < res.min_alpha(5, 0.2)
