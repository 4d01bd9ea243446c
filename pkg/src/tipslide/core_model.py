"""Shared geometry, frames and wrench algebra.

Frame conventions used across the package:

* The body frame sits at the CoM. ``z_B`` is the interaction axis and points
  from the CoM towards the end-effector tip, i.e. towards the work surface.
  Wheel contact points therefore have body z-coordinate ``+h``.
* The work (world) frame has its ``z`` axis pointing into the surface; the
  surface is the plane ``z = 0`` by default and the vehicle lives at ``z < 0``.
* Planar systems move in the ``(x, z)`` plane. The body angle ``beta`` is a
  rotation about ``-y`` (clockwise when viewed from ``+y``). A positive
  ``beta`` lowers wheel 2 (at ``+x_B``) towards the surface. Planar torques use
  the same clockwise-positive sign.
* Quaternions are scalar-first ``(w, x, y, z)`` and rotate body vectors into
  the work frame.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

H_FT = 0.12
R_D = 0.084
H_TIP = 0.3
WHEEL_RADIUS = 0.015

DEFAULT_P_FT = np.array([0.0, 0.0, -H_FT])


class DegenerateGeometryError(ValueError):
    """Raised when a normalization or projection has no defined direction."""


def vec3(x: float, y: float, z: float) -> np.ndarray:
    return np.array([x, y, z], dtype=float)


def hat(v: Sequence[float]) -> np.ndarray:
    """Unit vector of ``v``. Zero vectors raise :class:`DegenerateGeometryError`."""
    v = np.asarray(v, dtype=float)
    n = float(np.linalg.norm(v))
    if n == 0.0 or not math.isfinite(n):
        raise DegenerateGeometryError(f"cannot normalize vector {v!r}")
    return v / n


def cross3(a, b) -> np.ndarray:
    """Cross product of two 3-vectors; much cheaper than ``np.cross`` for single vectors."""
    a0, a1, a2 = float(a[0]), float(a[1]), float(a[2])
    b0, b1, b2 = float(b[0]), float(b[1]), float(b[2])
    return np.array([a1 * b2 - a2 * b1, a2 * b0 - a0 * b2, a0 * b1 - a1 * b0])


def skew(v: Sequence[float]) -> np.ndarray:
    x, y, z = v
    return np.array([[0.0, -z, y], [z, 0.0, -x], [-y, x, 0.0]])


def ft_to_com_torque(F_meas, tau_meas, p_ft=DEFAULT_P_FT) -> np.ndarray:
    """Move a torque measured at the FT sensor to the CoM.

    ``p_ft`` points from the sensor mounting point to the CoM (body frame).
    """
    F_meas = np.asarray(F_meas, dtype=float)
    return np.asarray(tau_meas, dtype=float) + np.cross(F_meas, np.asarray(p_ft, dtype=float))


# ---------------------------------------------------------------------------
# Wrenches and states
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class PlanarWrench:
    f_x: float = 0.0
    f_z: float = 0.0
    tau: float = 0.0  # clockwise positive

    def as_array(self) -> np.ndarray:
        return np.array([self.f_x, self.f_z, self.tau])

    @classmethod
    def from_array(cls, a) -> "PlanarWrench":
        return cls(float(a[0]), float(a[1]), float(a[2]))

    def __add__(self, other: "PlanarWrench") -> "PlanarWrench":
        return PlanarWrench(self.f_x + other.f_x, self.f_z + other.f_z, self.tau + other.tau)

    def __neg__(self) -> "PlanarWrench":
        return PlanarWrench(-self.f_x, -self.f_z, -self.tau)


@dataclass(frozen=True)
class SpatialWrench:
    force: np.ndarray = field(default_factory=lambda: np.zeros(3))
    torque: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def as_array(self) -> np.ndarray:
        return np.concatenate([self.force, self.torque])

    @classmethod
    def from_array(cls, a) -> "SpatialWrench":
        a = np.asarray(a, dtype=float)
        return cls(a[:3].copy(), a[3:6].copy())

    def __add__(self, other: "SpatialWrench") -> "SpatialWrench":
        return SpatialWrench(self.force + other.force, self.torque + other.torque)

    def __neg__(self) -> "SpatialWrench":
        return SpatialWrench(-self.force, -self.torque)


@dataclass(frozen=True)
class PlanarState:
    """CoM position ``(x, z)`` in the work frame, body angle ``beta`` and rates."""

    x: float = 0.0
    z: float = 0.0
    beta: float = 0.0
    vx: float = 0.0
    vz: float = 0.0
    beta_dot: float = 0.0

    def rotation(self) -> np.ndarray:
        return planar_rotation(self.beta)

    def body_velocity(self) -> tuple[float, float]:
        """Linear velocity expressed along ``(x_B, z_B)``."""
        c, s = math.cos(self.beta), math.sin(self.beta)
        return c * self.vx + s * self.vz, -s * self.vx + c * self.vz

    def as_array(self) -> np.ndarray:
        return np.array([self.x, self.z, self.beta, self.vx, self.vz, self.beta_dot])


@dataclass(frozen=True)
class SpatialState:
    """Pose and twist. ``velocity`` is in the work frame, ``omega`` in the body frame."""

    position: np.ndarray = field(default_factory=lambda: np.zeros(3))
    quat: np.ndarray = field(default_factory=lambda: np.array([1.0, 0.0, 0.0, 0.0]))
    velocity: np.ndarray = field(default_factory=lambda: np.zeros(3))
    omega: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def rotation(self) -> np.ndarray:
        return quat_to_matrix(self.quat)

    def body_velocity(self) -> np.ndarray:
        return self.rotation().T @ self.velocity

    def as_array(self) -> np.ndarray:
        return np.concatenate([self.position, self.quat, self.velocity, self.omega])


def planar_rotation(beta: float) -> np.ndarray:
    """3x3 rotation of the planar body by ``beta`` about ``-y``."""
    c, s = math.cos(beta), math.sin(beta)
    return np.array([[c, 0.0, -s], [0.0, 1.0, 0.0], [s, 0.0, c]])


# ---------------------------------------------------------------------------
# Quaternions
# ---------------------------------------------------------------------------


def quat_multiply(q: np.ndarray, r: np.ndarray) -> np.ndarray:
    w0, x0, y0, z0 = q
    w1, x1, y1, z1 = r
    return np.array([
        w0 * w1 - x0 * x1 - y0 * y1 - z0 * z1,
        w0 * x1 + x0 * w1 + y0 * z1 - z0 * y1,
        w0 * y1 - x0 * z1 + y0 * w1 + z0 * x1,
        w0 * z1 + x0 * y1 - y0 * x1 + z0 * w1,
    ])


def quat_from_axis_angle(axis, angle: float) -> np.ndarray:
    axis = hat(axis)
    s = math.sin(0.5 * angle)
    return np.array([math.cos(0.5 * angle), *(s * axis)])


def quat_to_matrix(q: np.ndarray) -> np.ndarray:
    w, x, y, z = q
    return np.array([
        [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
        [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
        [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
    ])


def quat_normalize(q: np.ndarray) -> np.ndarray:
    q = q / np.linalg.norm(q)
    # keep a canonical hemisphere so identical rotations compare equal
    return q if q[0] >= 0.0 else -q


def quat_integrate(q: np.ndarray, omega_body: np.ndarray, dt: float) -> np.ndarray:
    """Exponential-map update ``q <- q * exp(omega dt / 2)``, renormalized."""
    angle = float(np.linalg.norm(omega_body)) * dt
    if angle < 1e-12:
        dq = np.array([1.0, *(0.5 * dt * omega_body)])
    else:
        axis = omega_body / np.linalg.norm(omega_body)
        dq = np.array([math.cos(0.5 * angle), *(math.sin(0.5 * angle) * axis)])
    return quat_normalize(quat_multiply(q, dq))


def rotation_log(R: np.ndarray) -> np.ndarray:
    """Rotation vector ``phi`` with ``exp([phi]x) = R``."""
    cos_t = max(-1.0, min(1.0, 0.5 * (np.trace(R) - 1.0)))
    theta = math.acos(cos_t)
    w = np.array([R[2, 1] - R[1, 2], R[0, 2] - R[2, 0], R[1, 0] - R[0, 1]])
    if theta < 1e-9:
        return 0.5 * w
    if math.pi - theta < 1e-6:
        # near pi: recover the axis from the symmetric part
        axis = np.sqrt(np.maximum(0.0, (np.diag(R) + 1.0) / 2.0))
        k = int(np.argmax(axis))
        axis[k] = math.copysign(axis[k], 1.0)
        for j in range(3):
            if j != k:
                axis[j] = math.copysign(axis[j], R[k, j] + R[j, k])
        return theta * hat(axis)
    return theta / (2.0 * math.sin(theta)) * w


# ---------------------------------------------------------------------------
# Layout and inertia
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class WheelLayout:
    """End-effector wheel geometry.

    ``wheel_positions`` are the contact points (body frame) when the tip is
    flush with the surface; they all lie at body height ``z = h``. For a
    two-wheel layout ``r_d`` is the half-spacing, wheel 1 at ``-x_B`` and
    wheel 2 at ``+x_B``. Three-wheel layouts are numbered counter-clockwise
    about ``z_B`` starting on ``+x_B``.
    """

    mode: str
    r_d: float = R_D
    h: float = H_TIP
    wheel_radius: float = WHEEL_RADIUS
    phase: float = 0.0

    def __post_init__(self):
        if self.mode not in ("two_wheel", "three_wheel"):
            raise ValueError(f"unknown layout mode {self.mode!r}")
        if not (self.r_d > 0 and self.h > 0):
            raise ValueError("r_d and h must be positive")
        if self.wheel_radius < 0 or self.wheel_radius >= self.h:
            raise ValueError("wheel_radius must lie in [0, h)")

    @classmethod
    def two_wheel(cls, r_w: float = R_D, h: float = H_TIP, **kw) -> "WheelLayout":
        return cls("two_wheel", r_w, h, **kw)

    @classmethod
    def three_wheel(cls, r_d: float = R_D, h: float = H_TIP, **kw) -> "WheelLayout":
        return cls("three_wheel", r_d, h, **kw)

    @property
    def n_wheels(self) -> int:
        return 2 if self.mode == "two_wheel" else 3

    @property
    def wheel_angles(self) -> list[float]:
        if self.mode == "two_wheel":
            return [math.pi, 0.0]
        return [self.phase + k * 2.0 * math.pi / 3.0 for k in range(3)]

    @property
    def wheel_positions(self) -> list[np.ndarray]:
        return [vec3(self.r_d * math.cos(a), self.r_d * math.sin(a), self.h) for a in self.wheel_angles]

    @property
    def wheel_centers(self) -> list[np.ndarray]:
        return [p - vec3(0.0, 0.0, self.wheel_radius) for p in self.wheel_positions]

    def scaled(self, r_scale: float = 1.0, h_scale: float = 1.0) -> "WheelLayout":
        if r_scale <= 0 or h_scale <= 0:
            raise ValueError("scale factors must be positive")
        h = self.h * h_scale
        return replace(self, r_d=self.r_d * r_scale, h=h, wheel_radius=min(self.wheel_radius, 0.5 * h))

    def plane_normals(self) -> list[np.ndarray]:
        """Unit torque directions ``n_i`` for planes S23, S31, S12 (three wheels)."""
        if self.mode != "three_wheel":
            raise ValueError("plane normals are defined for three-wheel layouts")
        ez = vec3(0.0, 0.0, 1.0)
        t = [np.cross(ez, hat([p[0], p[1], 0.0])) for p in self.wheel_positions]
        # pressing wheel j harder needs a torque along -t_j
        return [hat(t[(i - 1) % 3] - t[(i + 1) % 3]) for i in range(3)]


@dataclass(frozen=True)
class InertiaParams:
    """Mass properties. Defaults are placeholders, not measured values."""

    mass: float = 4.0
    planar_inertia: float = 0.1
    inertia: np.ndarray = field(default_factory=lambda: np.diag([0.1, 0.1, 0.15]))

    def __post_init__(self):
        if self.mass <= 0 or self.planar_inertia <= 0:
            raise ValueError("mass and inertia must be positive")
        J = np.asarray(self.inertia, dtype=float)
        if J.shape != (3, 3) or not np.allclose(J, J.T) or np.any(np.linalg.eigvalsh(J) <= 0):
            raise ValueError("inertia must be a symmetric positive definite 3x3 matrix")


def wheel_contact_points(layout: WheelLayout, state, surface_normal=(0.0, 0.0, -1.0)) -> list[np.ndarray]:
    """Work-frame position of the point of each wheel closest to the surface.

    ``surface_normal`` is the outward normal of the surface (pointing at the
    vehicle); the contact point is the wheel centre shifted by one wheel
    radius against it.
    """
    n_in = -hat(surface_normal)
    if isinstance(state, PlanarState):
        R = planar_rotation(state.beta)
        origin = vec3(state.x, 0.0, state.z)
    else:
        R = state.rotation()
        origin = np.asarray(state.position, dtype=float)
    return [origin + R @ c + layout.wheel_radius * n_in for c in layout.wheel_centers]
