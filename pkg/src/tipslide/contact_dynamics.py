"""Fixed-step rigid-body plants with penalty wheel contact.

Gravity is off by default: the vehicle's low-level loop compensates it and
residuals enter through injected uncertainties instead.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .core_model import (
    InertiaParams,
    PlanarState,
    PlanarWrench,
    SpatialState,
    SpatialWrench,
    WheelLayout,
    cross3,
    planar_rotation,
    quat_integrate,
)
from .controllers import classify_contact


class SimulationDiverged(RuntimeError):
    """Non-finite or runaway state during integration."""


@dataclass(frozen=True)
class SurfaceModel:
    point_on_plane: np.ndarray = field(default_factory=lambda: np.zeros(3))
    normal: np.ndarray = field(default_factory=lambda: np.array([0.0, 0.0, -1.0]))
    contact_angle_offset: float = 0.0

    def __post_init__(self):
        n = np.asarray(self.normal, dtype=float)
        if abs(np.linalg.norm(n) - 1.0) > 1e-9:
            raise ValueError("surface normal must be a unit vector")

    @property
    def inward(self) -> np.ndarray:
        return -np.asarray(self.normal, dtype=float)


@dataclass(frozen=True)
class ContactParams:
    stiffness: float = 8.0e3
    damping: float = 120.0
    rolling_resistance: float = 0.5
    contact_margin: float = 0.5

    def __post_init__(self):
        if self.stiffness <= 0 or self.damping < 0 or self.rolling_resistance < 0 or self.contact_margin <= 0:
            raise ValueError("invalid contact parameters")


@dataclass(frozen=True)
class ContactReport:
    f_n: list[float]
    beta_code: int
    wrench: PlanarWrench | SpatialWrench  # body frame, about the CoM
    wheel_forces: list[np.ndarray]  # work frame, applied to the body
    contact_points: list[np.ndarray]  # work frame

    @property
    def penetrating(self) -> list[bool]:
        return [f > 0.0 for f in self.f_n]


@dataclass(frozen=True)
class SimConfig:
    physics_dt: float = 0.001
    control_dt: float = 0.01
    duration: float = 10.0
    inertia: InertiaParams = field(default_factory=InertiaParams)
    layout: WheelLayout = field(default_factory=WheelLayout.two_wheel)
    surface: SurfaceModel = field(default_factory=SurfaceModel)
    contact: ContactParams = field(default_factory=ContactParams)
    rng_seed: int = 0
    gravity: np.ndarray | None = None  # work-frame acceleration, None disables

    def __post_init__(self):
        if self.duration <= 0 or self.physics_dt <= 0:
            raise ValueError("duration and physics_dt must be positive")
        ratio = self.control_dt / self.physics_dt
        if abs(ratio - round(ratio)) > 1e-9 or round(ratio) < 1:
            raise ValueError("control_dt must be an integer multiple of physics_dt")

    @property
    def substeps(self) -> int:
        return int(round(self.control_dt / self.physics_dt))


# ---------------------------------------------------------------------------
# Contact
# ---------------------------------------------------------------------------


def _wheel_force(r, v_pt, n_in, p_rel, params: ContactParams):
    """Penalty force at one wheel. ``p_rel`` is the contact point relative to the plane point."""
    depth = float(p_rel @ n_in)
    if depth <= 0.0:
        return 0.0, np.zeros(3)
    rate = float(v_pt @ n_in)
    f_n = max(0.0, params.stiffness * depth + params.damping * rate)
    v_t = v_pt - rate * n_in
    return f_n, -f_n * n_in - params.rolling_resistance * v_t


def contact_forces(state, layout: WheelLayout, surface: SurfaceModel, params: ContactParams) -> ContactReport:
    n_in = surface.inward
    p0 = np.asarray(surface.point_on_plane, dtype=float)
    planar = isinstance(state, PlanarState)
    if planar:
        R = planar_rotation(state.beta)
        origin = np.array([state.x, 0.0, state.z])
        v = np.array([state.vx, 0.0, state.vz])
        omega_w = np.array([0.0, -state.beta_dot, 0.0])
    else:
        R = state.rotation()
        origin = np.asarray(state.position, dtype=float)
        v = np.asarray(state.velocity, dtype=float)
        omega_w = R @ state.omega

    f_n, forces, points = [], [], []
    F_tot = np.zeros(3)
    T_tot = np.zeros(3)
    for c in layout.wheel_centers:
        r = R @ c + layout.wheel_radius * n_in
        p = origin + r
        fn, F = _wheel_force(r, v + cross3(omega_w, r), n_in, p - p0, params)
        f_n.append(fn)
        forces.append(F)
        points.append(p)
        F_tot += F
        T_tot += cross3(r, F)

    code = classify_contact(f_n, params.contact_margin)
    F_b = R.T @ F_tot
    T_b = R.T @ T_tot
    if planar:
        wrench = PlanarWrench(float(F_b[0]), float(F_b[2]), float(-T_b[1]))
    else:
        wrench = SpatialWrench(F_b, T_b)
    return ContactReport(f_n, code, wrench, forces, points)


# ---------------------------------------------------------------------------
# Integration
# ---------------------------------------------------------------------------


def _check(values, what: str):
    for v in values:
        # NaN fails the comparison, so this also catches non-finite values
        if not abs(v) <= 1e6:
            raise SimulationDiverged(f"{what} became non-finite or unbounded: {list(values)}")


def planar_accelerations(state: PlanarState, w: PlanarWrench, cfg: SimConfig,
                         contact: ContactReport | None = None):
    """World-frame ``(ax, az, beta_ddot)`` and the contact report used."""
    if contact is None:
        contact = contact_forces(state, cfg.layout, cfg.surface, cfg.contact)
    m = cfg.inertia.mass
    c, s = math.cos(state.beta), math.sin(state.beta)
    cw = contact.wrench
    fx_b = w.f_x + cw.f_x
    fz_b = w.f_z + cw.f_z
    ax = (c * fx_b - s * fz_b) / m
    az = (s * fx_b + c * fz_b) / m
    if cfg.gravity is not None:
        ax += cfg.gravity[0]
        az += cfg.gravity[2]
    bdd = (w.tau + cw.tau) / cfg.inertia.planar_inertia
    _check([ax, az, bdd], "planar acceleration")
    return ax, az, bdd, contact


def step_planar(state: PlanarState, w_applied: PlanarWrench, cfg: SimConfig,
                contact: ContactReport | None = None) -> PlanarState:
    """One semi-implicit Euler step of the planar two-wheel plant."""
    _check([w_applied.f_x, w_applied.f_z, w_applied.tau], "applied wrench")
    ax, az, bdd, _ = planar_accelerations(state, w_applied, cfg, contact)
    dt = cfg.physics_dt
    vx = state.vx + ax * dt
    vz = state.vz + az * dt
    bd = state.beta_dot + bdd * dt
    new = PlanarState(state.x + vx * dt, state.z + vz * dt, state.beta + bd * dt, vx, vz, bd)
    _check(new.as_array(), "planar state")
    return new


def spatial_accelerations(state: SpatialState, w: SpatialWrench, cfg: SimConfig,
                          contact: ContactReport | None = None):
    """Work-frame linear acceleration, body-frame angular acceleration, contact report."""
    if contact is None:
        contact = contact_forces(state, cfg.layout, cfg.surface, cfg.contact)
    R = state.rotation()
    J = cfg.inertia.inertia
    f_b = np.asarray(w.force) + contact.wrench.force
    t_b = np.asarray(w.torque) + contact.wrench.torque
    a = R @ f_b / cfg.inertia.mass
    if cfg.gravity is not None:
        a = a + np.asarray(cfg.gravity, dtype=float)
    om = state.omega
    dom = np.linalg.solve(J, t_b - cross3(om, J @ om))
    _check(np.concatenate([a, dom]), "spatial acceleration")
    return a, dom, contact


def step_spatial(state: SpatialState, w_applied: SpatialWrench, cfg: SimConfig,
                 contact: ContactReport | None = None) -> SpatialState:
    """One semi-implicit Euler step with exponential-map attitude update."""
    _check(np.concatenate([w_applied.force, w_applied.torque]), "applied wrench")
    a, dom, _ = spatial_accelerations(state, w_applied, cfg, contact)
    dt = cfg.physics_dt
    v = state.velocity + a * dt
    om = state.omega + dom * dt
    new = SpatialState(state.position + v * dt, quat_integrate(state.quat, om, dt), v, om)
    _check(new.as_array(), "spatial state")
    return new


def planar_energy(state: PlanarState, inertia: InertiaParams) -> float:
    return 0.5 * inertia.mass * (state.vx ** 2 + state.vz ** 2) + 0.5 * inertia.planar_inertia * state.beta_dot ** 2


def spatial_energy(state: SpatialState, inertia: InertiaParams) -> float:
    v, om = state.velocity, state.omega
    return 0.5 * inertia.mass * float(v @ v) + 0.5 * float(om @ inertia.inertia @ om)


# ---------------------------------------------------------------------------
# External wrench estimation
# ---------------------------------------------------------------------------


class MomentumObserver:
    """First-order generalized-momentum residual observer.

    ``r = K (p - p0 - integral(known + r))``; the residual tracks the unknown
    external generalized force with time constant ``1/K``.
    """

    def __init__(self, gain: float, initial_momentum):
        if gain <= 0:
            raise ValueError("observer gain must be positive")
        self.gain = gain
        self.p0 = np.asarray(initial_momentum, dtype=float).copy()
        self.integral = np.zeros_like(self.p0)
        self.residual = np.zeros_like(self.p0)

    def update(self, momentum, known_force, dt: float) -> np.ndarray:
        self.integral += (np.asarray(known_force, dtype=float) + self.residual) * dt
        self.residual = self.gain * (np.asarray(momentum, dtype=float) - self.p0 - self.integral)
        return self.residual.copy()


def momentum_wrench_estimate(states: list[SpatialState], applied: list[SpatialWrench], dt: float,
                             gain: float, inertia: InertiaParams,
                             gravity: np.ndarray | None = None) -> list[SpatialWrench]:
    """Run the observer over a uniformly sampled history.

    ``applied[k]`` is the body-frame actuation wrench held over
    ``[t_k, t_k+1)``. Returns one body-frame external-wrench estimate per
    state; the first is zero.
    """
    m, J = inertia.mass, inertia.inertia

    def momentum(s):
        return np.concatenate([m * s.velocity, J @ s.omega])

    obs = MomentumObserver(gain, momentum(states[0]))
    out = [SpatialWrench()]
    for k in range(1, len(states)):
        prev = states[k - 1]
        R = prev.rotation()
        f_known = R @ applied[k - 1].force
        if gravity is not None:
            f_known = f_known + m * np.asarray(gravity, dtype=float)
        t_known = applied[k - 1].torque - np.cross(prev.omega, J @ prev.omega)
        r = obs.update(momentum(states[k]), np.concatenate([f_known, t_known]), dt)
        Rk = states[k].rotation()
        out.append(SpatialWrench(Rk.T @ r[:3], r[3:].copy()))
    return out


def planar_momentum_observer(gain: float, state: PlanarState, inertia: InertiaParams) -> MomentumObserver:
    """Observer over ``(m vx, m vz, I beta_dot)`` for the planar plant."""
    return MomentumObserver(gain, [inertia.mass * state.vx, inertia.mass * state.vz,
                                   inertia.planar_inertia * state.beta_dot])
