"""Contact classification and the normal-force hybrid motion/force controller.

Contact codes:

* planar: ``-2`` free flight, ``-1`` only wheel 1 in contact, ``+1`` only
  wheel 2 in contact, ``0`` full contact;
* three wheels: ``-2`` free flight, ``0`` full contact, otherwise the bitmask
  of the wheels still in contact (wheel ``i`` sets bit ``i-1``), i.e. 1..6.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from .core_model import cross3, planar_rotation, rotation_log

FREE_FLIGHT = -2
FULL_CONTACT = 0


def classify_contact(f_n: Sequence[float], delta_F: float) -> int:
    if any(f < 0.0 for f in f_n):
        raise ValueError(f"normal forces must be non-negative, got {list(f_n)}")
    touching = [f >= delta_F for f in f_n]
    if all(touching):
        return FULL_CONTACT
    if not any(touching):
        return FREE_FLIGHT
    if len(f_n) == 2:
        return -1 if touching[0] else 1
    return sum(1 << i for i, t in enumerate(touching) if t)


def is_tipover(code: int) -> bool:
    return code not in (FULL_CONTACT, FREE_FLIGHT)


@dataclass(frozen=True)
class Gains:
    """Controller gains. Only ``k_n = 0.5`` comes from the validated setup; the rest are tuned defaults."""

    k_p: float = 25.0
    k_d: float = 10.0
    k_f: float = 1.0
    k_I: float = 2.0
    k_n: float | tuple[float, float, float] = 0.5
    K_att: float = 2.0
    D_att: float = 0.3
    integral_limit: float = 10.0  # bound on k_I * integral(e_f), N
    torque_limit: float = 5.0
    force_limit: float = 60.0

    def __post_init__(self):
        kn = self.k_n if isinstance(self.k_n, tuple) else (self.k_n,)
        if min(self.k_p, self.k_d, self.k_f, self.K_att, *kn) <= 0 or self.k_I < 0:
            raise ValueError("gains must be positive (k_I may be zero)")

    @property
    def k_n3(self) -> tuple[float, float, float]:
        return self.k_n if isinstance(self.k_n, tuple) else (self.k_n,) * 3


@dataclass(frozen=True)
class BaselineGains:
    """PD full-pose law standing in for the vehicle's 6-DoF impedance controller."""

    K_pos: tuple[float, float, float] = (25.0, 25.0, 50.0)
    D_pos: tuple[float, float, float] = (10.0, 10.0, 15.0)
    K_rot: tuple[float, float, float] = (10.0, 10.0, 10.0)
    D_rot: tuple[float, float, float] = (1.3, 1.3, 1.6)


@dataclass(frozen=True)
class References:
    x_d: float = 0.0
    xd_dot: float = 0.0
    xd_ddot: float = 0.0
    f_d: float = 15.0
    y_d: float = 0.0
    yd_dot: float = 0.0
    yd_ddot: float = 0.0
    yaw_d: float = 0.0


@dataclass
class ControllerState:
    integral_e_f: float = 0.0
    last_code: int = FREE_FLIGHT
    gated: bool = False
    hold: tuple[float, float] = (0.0, 0.0)
    log: dict = field(default_factory=dict)


def gate_references(beta_code: int, refs: References, hold: tuple[float, float] | None = None) -> References:
    """Zero the sliding references while a tip-over is in progress.

    ``hold`` is the tangential position to park the position reference at;
    without it the current ``x_d``/``y_d`` are kept.
    """
    if not is_tipover(beta_code):
        return refs
    hx, hy = (refs.x_d, refs.y_d) if hold is None else hold
    return replace(refs, x_d=hx, xd_dot=0.0, xd_ddot=0.0, y_d=hy, yd_dot=0.0, yd_ddot=0.0)


def motion_force_wrench(e_p: float, e_d: float, e_f: float, int_e_f: float, xd_ddot: float,
                        m_B: float, gains: Gains, f_d: float) -> tuple[float, float]:
    f_x = m_B * xd_ddot - gains.k_p * e_p - gains.k_d * e_d
    f_z = f_d - gains.k_f * e_f - gains.k_I * int_e_f
    return f_x, f_z


def normal_force_torque_planar(f_n1: float, f_n2: float, k_n: float) -> float:
    return k_n * (f_n1 - f_n2)


def plane_errors_3w(f_n1: float, f_n2: float, f_n3: float) -> tuple[float, float, float]:
    return f_n3 - f_n2, f_n1 - f_n3, f_n2 - f_n1


def normal_force_torque_3w(errors: Sequence[float], normals: Sequence[np.ndarray],
                           gains: Sequence[float]) -> np.ndarray:
    out = np.zeros(3)
    for e, n, k in zip(errors, normals, gains):
        n = np.asarray(n, dtype=float)
        if abs(np.linalg.norm(n) - 1.0) > 1e-9:
            raise ValueError("plane normals must be unit vectors")
        if abs(n[2]) > 1e-9:
            raise ValueError("plane normals must lie in the (x_B, y_B) plane")
        out += k * e * n
    return out


def baseline_fullpose_wrench(pose_error, twist_error, stiffness, damping) -> np.ndarray:
    """``-K e - D de`` with diagonal (or full) gain matrices."""
    K = np.asarray(stiffness, dtype=float)
    D = np.asarray(damping, dtype=float)
    e = np.asarray(pose_error, dtype=float)
    de = np.asarray(twist_error, dtype=float)
    for G in (K, D):
        if np.any(np.linalg.eigvalsh(np.diag(G) if G.ndim == 1 else 0.5 * (G + G.T)) <= 0):
            raise ValueError("stiffness and damping must be positive definite")
    Ke = K @ e if K.ndim == 2 else K * e
    Dd = D @ de if D.ndim == 2 else D * de
    return -Ke - Dd


def saturate(wrench, limits) -> tuple[np.ndarray, np.ndarray]:
    """Componentwise clamp to ``[-limit, limit]`` plus per-component saturation flags."""
    w = np.asarray(wrench, dtype=float)
    lim = np.broadcast_to(np.asarray(limits, dtype=float), w.shape)
    if np.any(lim <= 0):
        raise ValueError("saturation limits must be positive")
    out = np.clip(w, -lim, lim)
    return out, np.abs(w) > lim


# ---------------------------------------------------------------------------
# Composed control steps
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class PoseReference:
    """Full-pose reference for the PD law (work frame position, attitude)."""

    position: np.ndarray
    attitude: np.ndarray  # planar: array([beta]); spatial: 3x3 rotation
    velocity: np.ndarray = field(default_factory=lambda: np.zeros(3))


def planar_baseline_wrench(state, pose_ref: PoseReference, bg: BaselineGains) -> np.ndarray:
    """Body-frame ``(f_x, f_z, tau)`` of the PD full-pose law for the planar plant."""
    e = [state.x - pose_ref.position[0], state.z - pose_ref.position[2], state.beta - float(pose_ref.attitude[0])]
    de = [state.vx - pose_ref.velocity[0], state.vz - pose_ref.velocity[2], state.beta_dot]
    w = baseline_fullpose_wrench(e, de, [bg.K_pos[0], bg.K_pos[2], bg.K_rot[1]],
                                 [bg.D_pos[0], bg.D_pos[2], bg.D_rot[1]])
    R = planar_rotation(state.beta)
    f_b = R.T @ np.array([w[0], 0.0, w[1]])
    return np.array([f_b[0], f_b[2], w[2]])


def spatial_baseline_wrench(state, pose_ref: PoseReference, bg: BaselineGains) -> np.ndarray:
    R = state.rotation()
    f_w = baseline_fullpose_wrench(state.position - pose_ref.position, state.velocity - pose_ref.velocity,
                                   bg.K_pos, bg.D_pos)
    phi = rotation_log(pose_ref.attitude.T @ R)
    tau = baseline_fullpose_wrench(phi, state.omega, bg.K_rot, bg.D_rot)
    return np.concatenate([R.T @ f_w, tau])


def yaw_of(R: np.ndarray) -> float:
    return math.atan2(R[1, 0], R[0, 0])


@dataclass(frozen=True)
class Measurement:
    """Controller inputs sampled from the plant at the control rate."""

    state: object
    f_n: Sequence[float]  # sensor readings (may be noisy)
    f_est: float  # estimated push force along z_B


class Controller:
    """Mode-dispatching controller owning a :class:`ControllerState`.

    ``mode='normal_force'`` runs classify, gate, motion/force laws, the
    normal-force torque, Coriolis compensation and saturation, falling back
    to the full-pose law in free flight. ``mode='baseline'`` always runs the
    full-pose law.
    """

    def __init__(self, mode: str, plant: str, mass: float, gains: Gains | None = None,
                 baseline: BaselineGains | None = None, delta_F: float = 0.5,
                 inertia: np.ndarray | None = None, normals: Sequence[np.ndarray] | None = None,
                 control_dt: float = 0.01):
        if mode not in ("baseline", "normal_force"):
            raise ValueError(f"unknown controller mode {mode!r}")
        if plant not in ("planar", "spatial"):
            raise ValueError(f"unknown plant {plant!r}")
        if plant == "spatial" and mode == "normal_force" and normals is None:
            raise ValueError("spatial normal-force control needs the layout plane normals")
        self.mode = mode
        self.plant = plant
        self.mass = mass
        self.gains = gains or Gains()
        self.baseline = baseline or BaselineGains()
        self.delta_F = delta_F
        self.inertia = np.diag([0.1, 0.1, 0.15]) if inertia is None else np.asarray(inertia, dtype=float)
        self.normals = normals
        self.dt = control_dt
        self.state = ControllerState()

    # -- helpers ---------------------------------------------------------
    def _limits(self) -> np.ndarray:
        g = self.gains
        if self.plant == "planar":
            return np.array([g.force_limit, g.force_limit, g.torque_limit])
        return np.array([g.force_limit] * 3 + [g.torque_limit] * 3)

    def _finish(self, w: np.ndarray) -> np.ndarray:
        out, flags = saturate(w, self._limits())
        self.state.log["saturated"] = flags
        return out

    def _integrate(self, e_f: float) -> float:
        g = self.gains
        bound = g.integral_limit / g.k_I if g.k_I > 0 else math.inf
        self.state.integral_e_f = min(bound, max(-bound, self.state.integral_e_f + e_f * self.dt))
        return self.state.integral_e_f

    # -- main entry ------------------------------------------------------
    def step(self, meas: Measurement, refs: References, pose_ref: PoseReference) -> np.ndarray:
        """Actuation wrench (body frame) as an array: planar ``(f_x, f_z, tau)``, spatial 6-vector."""
        code = classify_contact(meas.f_n, self.delta_F)
        st = self.state
        st.log = {"code": code}
        if self.mode == "baseline" or code == FREE_FLIGHT:
            st.last_code = code
            st.gated = False
            if self.plant == "planar":
                return self._finish(planar_baseline_wrench(meas.state, pose_ref, self.baseline))
            return self._finish(spatial_baseline_wrench(meas.state, pose_ref, self.baseline))

        s = meas.state
        tipping = is_tipover(code)
        if tipping and not st.gated:
            st.hold = (s.x, 0.0) if self.plant == "planar" else (float(s.position[0]), float(s.position[1]))
        st.gated = tipping
        st.last_code = code
        r = gate_references(code, refs, st.hold if tipping else None)

        e_f = meas.f_est - r.f_d
        int_e_f = self._integrate(e_f)
        g = self.gains
        if self.plant == "planar":
            e_p, e_d = s.x - r.x_d, s.vx - r.xd_dot
            f_x, f_z = motion_force_wrench(e_p, e_d, e_f, int_e_f, r.xd_ddot, self.mass, g, r.f_d)
            tau = normal_force_torque_planar(meas.f_n[0], meas.f_n[1], g.k_n3[0])
            vbx, vbz = s.body_velocity()
            coriolis = np.array([-self.mass * s.beta_dot * vbz, self.mass * s.beta_dot * vbx, 0.0])
            st.log.update(e_p=e_p, e_d=e_d, e_f=e_f, e_n=meas.f_n[0] - meas.f_n[1])
            return self._finish(np.array([f_x, f_z, tau]) + coriolis)

        R = s.rotation()
        e_px, e_dx = s.position[0] - r.x_d, s.velocity[0] - r.xd_dot
        e_py, e_dy = s.position[1] - r.y_d, s.velocity[1] - r.yd_dot
        f_x, f_z = motion_force_wrench(e_px, e_dx, e_f, int_e_f, r.xd_ddot, self.mass, g, r.f_d)
        f_y, _ = motion_force_wrench(e_py, e_dy, 0.0, 0.0, r.yd_ddot, self.mass, g, r.f_d)
        # tangential forces are computed in the work frame, push along z_B
        f_t = R.T @ np.array([f_x, f_y, 0.0])
        errors = plane_errors_3w(*meas.f_n)
        tau2 = normal_force_torque_3w(errors, self.normals, g.k_n3)
        yaw_err = math.remainder(yaw_of(R) - r.yaw_d, 2.0 * math.pi)
        tau_z = -g.K_att * yaw_err - g.D_att * s.omega[2]
        v_b = R.T @ s.velocity
        om = s.omega
        coriolis = np.concatenate([self.mass * cross3(om, v_b), cross3(om, self.inertia @ om)])
        st.log.update(e_px=e_px, e_py=e_py, e_f=e_f, e_n1=errors[0], e_n2=errors[1], e_n3=errors[2])
        w = np.array([f_t[0], f_t[1], f_z, tau2[0], tau2[1], tau_z]) + coriolis
        return self._finish(w)
