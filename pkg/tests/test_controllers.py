import itertools

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from tipslide.core_model import PlanarState, SpatialState, WheelLayout
from tipslide.controllers import (
    FREE_FLIGHT,
    FULL_CONTACT,
    BaselineGains,
    Controller,
    Gains,
    Measurement,
    PoseReference,
    References,
    baseline_fullpose_wrench,
    classify_contact,
    gate_references,
    is_tipover,
    motion_force_wrench,
    normal_force_torque_3w,
    normal_force_torque_planar,
    plane_errors_3w,
    saturate,
)

DELTA = 0.5
real = st.floats(-100, 100, allow_nan=False)
force = st.floats(0, 50, allow_nan=False)
codes = st.sampled_from([-2, -1, 0, 1, 1, 2, 3, 4, 5, 6])

# contact-conditions table: (f_n1 >= delta, f_n2 >= delta) -> code
TABLE = {(False, False): -2, (True, False): -1, (False, True): 1, (True, True): 0}


class TestClassifier:
    def test_exhaustive_grid(self):
        levels = [0.0, DELTA / 2, DELTA, 2 * DELTA]
        for f1, f2 in itertools.product(levels, repeat=2):
            assert classify_contact([f1, f2], DELTA) == TABLE[(f1 >= DELTA, f2 >= DELTA)]

    def test_three_wheel_bitmask(self):
        for mask in itertools.product([False, True], repeat=3):
            f = [2.0 if m else 0.1 for m in mask]
            code = classify_contact(f, DELTA)
            if all(mask):
                assert code == FULL_CONTACT
            elif not any(mask):
                assert code == FREE_FLIGHT
            else:
                assert code == sum(1 << i for i, m in enumerate(mask) if m)
                assert is_tipover(code)

    @given(st.lists(force, min_size=2, max_size=3))
    def test_total(self, f):
        code = classify_contact(f, DELTA)
        assert isinstance(code, int)
        assert is_tipover(code) != (code in (FULL_CONTACT, FREE_FLIGHT))

    def test_negative_force_rejected(self):
        with pytest.raises(ValueError):
            classify_contact([-0.1, 1.0], DELTA)


class TestLaws:
    @given(real, real, real, real, real, st.floats(0.5, 10), real)
    def test_motion_force_formula(self, e_p, e_d, e_f, ie, xdd, m, f_d):
        g = Gains()
        f_x, f_z = motion_force_wrench(e_p, e_d, e_f, ie, xdd, m, g, f_d)
        assert f_x == pytest.approx(m * xdd - g.k_p * e_p - g.k_d * e_d, abs=1e-12 * (1 + abs(f_x)))
        assert f_z == pytest.approx(f_d - g.k_f * e_f - g.k_I * ie, abs=1e-12 * (1 + abs(f_z)))

    @given(real, real, real, real, real, real, st.floats(-3, 3), st.floats(-3, 3))
    def test_motion_force_linear_in_errors(self, a1, b1, c1, a2, b2, c2, s, t):
        g = Gains()

        def errs_only(e_p, e_d, e_f):
            fx, fz = motion_force_wrench(e_p, e_d, e_f, 0.0, 0.0, 4.0, g, 0.0)
            return np.array([fx, fz])

        lhs = errs_only(s * a1 + t * a2, s * b1 + t * b2, s * c1 + t * c2)
        rhs = s * errs_only(a1, b1, c1) + t * errs_only(a2, b2, c2)
        assert np.allclose(lhs, rhs, atol=1e-9)

    def test_zero_at_nominal(self):
        fx, fz = motion_force_wrench(0.0, 0.0, 0.0, 0.0, 0.25, 4.0, Gains(), 15.0)
        assert (fx, fz) == (1.0, 15.0)
        assert normal_force_torque_planar(7.5, 7.5, 0.5) == 0.0

    @given(force, force, st.floats(0.01, 5))
    def test_tau1_antisymmetric(self, a, b, k):
        assert normal_force_torque_planar(a, b, k) == -normal_force_torque_planar(b, a, k)
        assert normal_force_torque_planar(a, b, k) == pytest.approx(k * (a - b), abs=1e-12)

    @given(force, force, force)
    def test_three_wheel_identity(self, a, b, c):
        e = plane_errors_3w(a, b, c)
        assert abs(sum(e)) <= 1e-12 * (1 + a + b + c)

    @given(force, force, force)
    def test_tau2_zero_iff_equal(self, a, b, c):
        normals = WheelLayout.three_wheel().plane_normals()
        tau = normal_force_torque_3w(plane_errors_3w(a, b, c), normals, (0.5, 0.5, 0.5))
        spread = max(a, b, c) - min(a, b, c)
        if spread == 0:
            assert np.allclose(tau, 0.0, atol=1e-12)
        elif spread > 1e-6:
            assert np.linalg.norm(tau) > 0.0
        assert abs(tau[2]) < 1e-12

    @given(st.tuples(real, real, real), st.tuples(real, real, real), st.floats(-3, 3))
    def test_tau2_linear(self, e1, e2, s):
        normals = WheelLayout.three_wheel().plane_normals()
        k = (0.5, 0.7, 0.9)
        lhs = normal_force_torque_3w([s * a + b for a, b in zip(e1, e2)], normals, k)
        rhs = s * normal_force_torque_3w(e1, normals, k) + normal_force_torque_3w(e2, normals, k)
        assert np.allclose(lhs, rhs, atol=1e-9)

    def test_tau2_pushes_unloaded_wheel_down(self):
        # with wheel 1 unloaded, the torque must tilt the tip towards wheel 1
        lay = WheelLayout.three_wheel()
        tau = normal_force_torque_3w(plane_errors_3w(0.0, 5.0, 5.0), lay.plane_normals(), (0.5,) * 3)
        p1 = lay.wheel_positions[0]
        # the body-z velocity of wheel 1 under rotation tau: (tau x p1)_z > 0 moves it towards the surface
        assert np.cross(tau, p1)[2] > 0

    def test_tau2_rejects_bad_normals(self):
        with pytest.raises(ValueError):
            normal_force_torque_3w([1, 1, 1], [np.array([0, 0, 1.0])] * 3, (1, 1, 1))

    @given(codes, st.floats(-1, 1), st.floats(-1, 1), st.floats(-1, 1))
    def test_gate_idempotent(self, code, x, v, a):
        r = References(x_d=x, xd_dot=v, xd_ddot=a, y_d=x, yd_dot=v, yd_ddot=a)
        once = gate_references(code, r)
        assert gate_references(code, once) == once
        if is_tipover(code):
            assert once.xd_dot == once.xd_ddot == once.yd_dot == once.yd_ddot == 0.0
        else:
            assert once == r

    def test_gate_hold(self):
        r = gate_references(1, References(x_d=0.4, xd_dot=0.2), hold=(0.1, 0.0))
        assert r.x_d == 0.1 and r.xd_dot == 0.0

    def test_saturate(self):
        out, flags = saturate([1.0, -8.0, 6.0], [5.0, 5.0, 5.0])
        assert list(out) == [1.0, -5.0, 5.0] and list(flags) == [False, True, True]
        with pytest.raises(ValueError):
            saturate([1.0], [0.0])

    def test_baseline_pd(self):
        w = baseline_fullpose_wrench([0.1, -0.2], [0.0, 1.0], [10.0, 20.0], [1.0, 2.0])
        assert np.allclose(w, [-1.0, 2.0])
        with pytest.raises(ValueError):
            baseline_fullpose_wrench([0.1], [0.0], [-1.0], [1.0])


def planar_meas(f1, f2, beta=0.0, f_est=15.0, **kw):
    return Measurement(PlanarState(0.0, -0.3, beta, **kw), [f1, f2], f_est)


POSE = PoseReference(np.array([0.0, 0.0, -0.29]), np.array([0.0]))


class TestController:
    def test_free_flight_uses_full_pose(self):
        c = Controller("normal_force", "planar", 4.0)
        w = c.step(planar_meas(0.0, 0.0, beta=0.1), References(), POSE)
        assert c.state.log["code"] == FREE_FLIGHT
        assert w[2] == pytest.approx(-BaselineGains().K_rot[1] * 0.1)

    def test_full_contact_planar_wrench(self):
        g = Gains()
        c = Controller("normal_force", "planar", 4.0, g)
        w = c.step(planar_meas(8.0, 7.0, f_est=14.0), References(x_d=0.1, xd_ddot=0.5, f_d=15.0), POSE)
        e_f = -1.0
        assert w[0] == pytest.approx(4.0 * 0.5 - g.k_p * (-0.1))
        assert w[1] == pytest.approx(15.0 - g.k_f * e_f - g.k_I * e_f * 0.01)
        assert w[2] == pytest.approx(g.k_n * 1.0)
        assert c.state.log["e_n"] == 1.0

    def test_torque_saturates(self):
        c = Controller("normal_force", "planar", 4.0)
        w = c.step(planar_meas(30.0, 0.6), References(), POSE)
        assert w[2] == 5.0 and c.state.log["saturated"][2]

    def test_tipover_gates_sliding(self):
        c = Controller("normal_force", "planar", 4.0)
        w = c.step(planar_meas(6.0, 0.0), References(x_d=0.5, xd_dot=0.4, xd_ddot=2.0), POSE)
        # references parked at the current x: no feed-forward, no position pull
        assert c.state.gated and w[0] == pytest.approx(0.0)

    def test_integral_clamped(self):
        g = Gains(k_I=2.0, integral_limit=20.0)
        c = Controller("normal_force", "planar", 4.0, g)
        for _ in range(5000):
            c.step(planar_meas(5.0, 5.0, f_est=0.0), References(f_d=15.0), POSE)
        assert abs(g.k_I * c.state.integral_e_f) == pytest.approx(20.0)

    def test_baseline_mode_ignores_contact(self):
        c = Controller("baseline", "planar", 4.0)
        w = c.step(planar_meas(8.0, 0.0, beta=0.0), References(), POSE)
        assert w[2] == 0.0

    def test_spatial_full_contact(self):
        lay = WheelLayout.three_wheel()
        c = Controller("normal_force", "spatial", 4.0, normals=lay.plane_normals())
        meas = Measurement(SpatialState(np.array([0.0, 0.0, -0.3])), [5.0, 5.0, 5.0], 15.0)
        w = c.step(meas, References(f_d=15.0), PoseReference(np.zeros(3), np.eye(3)))
        assert np.allclose(w, [0, 0, 15.0, 0, 0, 0], atol=1e-12)
        assert sum(c.state.log[k] for k in ("e_n1", "e_n2", "e_n3")) == 0.0

    def test_invalid_modes(self):
        with pytest.raises(ValueError):
            Controller("impedance", "planar", 4.0)
        with pytest.raises(ValueError):
            Controller("normal_force", "spatial", 4.0)
        with pytest.raises(ValueError):
            Gains(k_n=0.0)
