"""Systematic force/torque uncertainties and wheel pressure-sensor noise."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .core_model import DEFAULT_P_FT, PlanarWrench, SpatialWrench, ft_to_com_torque

UNC_COLUMNS = ["t", "fux", "fuy", "fuz", "tux", "tuy", "tuz"]
MEASURED_COLUMNS = ["t", "fmx", "fmy", "fmz", "tmx", "tmy", "tmz", "fex", "fey", "fez", "tex", "tey", "tez"]

BUNDLED_UNCERTAINTY = Path(__file__).parent / "data" / "synthetic_uncertainty.csv"


@dataclass(frozen=True)
class UncertaintyTrace:
    time: np.ndarray
    F_unc: np.ndarray  # (N, 3)
    tau_unc: np.ndarray  # (N, 3)
    provenance: str = "synthetic"

    def __post_init__(self):
        t = np.asarray(self.time, dtype=float)
        F = np.asarray(self.F_unc, dtype=float).reshape(len(t), 3)
        T = np.asarray(self.tau_unc, dtype=float).reshape(len(t), 3)
        if len(t) > 1 and np.any(np.diff(t) <= 0):
            raise ValueError("uncertainty trace time must be strictly increasing")
        if not (np.all(np.isfinite(F)) and np.all(np.isfinite(T))):
            raise ValueError("uncertainty trace contains non-finite values")
        if self.provenance not in ("measured", "synthetic"):
            raise ValueError("provenance must be 'measured' or 'synthetic'")
        object.__setattr__(self, "time", t)
        object.__setattr__(self, "F_unc", F)
        object.__setattr__(self, "tau_unc", T)

    def __len__(self) -> int:
        return len(self.time)

    def sample(self, t: float) -> tuple[np.ndarray, np.ndarray]:
        """Zero-order hold lookup; clamps to the first/last sample outside the span."""
        k = int(np.searchsorted(self.time, t, side="right")) - 1
        k = min(max(k, 0), len(self.time) - 1)
        return self.F_unc[k], self.tau_unc[k]


@dataclass(frozen=True)
class NoiseModel:
    relative_sigma: float = 0.10
    rng_seed: int = 0

    def __post_init__(self):
        if self.relative_sigma < 0:
            raise ValueError("relative_sigma must be non-negative")


def identify(F_meas, tau_meas, F_est, tau_est, p_ft=DEFAULT_P_FT) -> tuple[np.ndarray, np.ndarray]:
    """Force and CoM-torque generation errors from one FT/estimator sample pair."""
    tau_com = ft_to_com_torque(F_meas, tau_meas, p_ft)
    return (np.asarray(F_meas, dtype=float) - np.asarray(F_est, dtype=float),
            tau_com - np.asarray(tau_est, dtype=float))


def identify_trace(time, F_meas, tau_meas, F_est, tau_est, p_ft=DEFAULT_P_FT) -> UncertaintyTrace:
    F_meas, tau_meas = np.asarray(F_meas, dtype=float), np.asarray(tau_meas, dtype=float)
    F_est, tau_est = np.asarray(F_est, dtype=float), np.asarray(tau_est, dtype=float)
    tau_com = tau_meas + np.cross(F_meas, np.asarray(p_ft, dtype=float))
    return UncertaintyTrace(time, F_meas - F_est, tau_com - tau_est, provenance="measured")


def synthesize(duration: float, dt: float, std: Sequence[float], rng_seed: int,
               correlation_time: float | Sequence[float] = 1.0,
               bias: Sequence[float] = (0.0,) * 6) -> UncertaintyTrace:
    """First-order low-pass filtered white noise per axis (stationary std ``std``).

    Axis order is ``(Fx, Fy, Fz, Tx, Ty, Tz)``; ``bias`` adds a constant offset.
    """
    if duration <= 0 or dt <= 0:
        raise ValueError("duration and dt must be positive")
    std = np.asarray(std, dtype=float).reshape(6)
    tc = np.broadcast_to(np.asarray(correlation_time, dtype=float), (6,))
    if np.any(tc <= 0):
        raise ValueError("correlation_time must be positive")
    n = int(math.floor(duration / dt + 1e-9)) + 1
    t = np.arange(n) * dt
    rng = np.random.default_rng(rng_seed)
    xi = rng.standard_normal((n, 6))
    a = np.exp(-dt / tc)
    b = std * np.sqrt(1.0 - a * a)
    x = np.empty((n, 6))
    x[0] = std * xi[0]
    for k in range(1, n):
        x[k] = a * x[k - 1] + b * xi[k]
    x += np.asarray(bias, dtype=float)
    return UncertaintyTrace(t, x[:, :3], x[:, 3:], provenance="synthetic")


def resample(trace: UncertaintyTrace, dt_target: float) -> UncertaintyTrace:
    """Zero-order hold onto a uniform grid.

    The grid covers ``[t_0, t_last + dt_last)`` where ``dt_last`` is the final
    source spacing, so every source sample keeps its full hold interval. When
    the target is coarser than that, the grid is extended to reach ``t_last``
    so the last value survives.
    """
    if len(trace) == 0:
        raise ValueError("cannot resample an empty trace")
    if dt_target <= 0:
        raise ValueError("dt_target must be positive")
    t0 = trace.time[0]
    dt_last = trace.time[-1] - trace.time[-2] if len(trace) > 1 else dt_target
    span = trace.time[-1] + dt_last - t0
    n = max(1, int(round(span / dt_target)))
    # coarse targets still need one grid point at or after the last stamp
    n = max(n, int(math.ceil((trace.time[-1] - t0) / dt_target - 1e-9)) + 1)
    grid = t0 + np.arange(n) * dt_target
    # tolerate float jitter when grid points coincide with source stamps
    idx = np.searchsorted(trace.time, grid + 1e-9 * dt_target, side="right") - 1
    idx = np.clip(idx, 0, len(trace) - 1)
    return UncertaintyTrace(grid, trace.F_unc[idx], trace.tau_unc[idx], trace.provenance)


def inject(w_cmd, F_unc, tau_unc, mask: str = "planar"):
    """Subtract the uncertainty sample from a commanded wrench.

    ``planar`` uses the x/z force selectors and the x torque selector;
    ``spatial`` subtracts all six components.
    """
    F_unc = np.asarray(F_unc, dtype=float)
    tau_unc = np.asarray(tau_unc, dtype=float)
    if mask == "planar":
        if not isinstance(w_cmd, PlanarWrench):
            raise TypeError("planar mask needs a PlanarWrench")
        return PlanarWrench(w_cmd.f_x - F_unc[0], w_cmd.f_z - F_unc[2], w_cmd.tau - tau_unc[0])
    if mask == "spatial":
        if not isinstance(w_cmd, SpatialWrench):
            raise TypeError("spatial mask needs a SpatialWrench")
        return SpatialWrench(np.asarray(w_cmd.force) - F_unc, np.asarray(w_cmd.torque) - tau_unc)
    raise ValueError(f"unknown injection mask {mask!r}")


def sensor_noise(f_n: Sequence[float], model: NoiseModel, step: int = 0) -> list[float]:
    """Magnitude-proportional Gaussian noise, a pure function of ``(seed, step, f_n)``."""
    if any(f < 0 for f in f_n):
        raise ValueError("normal forces must be non-negative")
    if model.relative_sigma == 0.0:
        return [float(f) for f in f_n]
    xi = np.random.default_rng([model.rng_seed, step]).standard_normal(len(f_n))
    return [max(0.0, float(f + model.relative_sigma * f * x)) for f, x in zip(f_n, xi)]


# ---------------------------------------------------------------------------
# Bundled synthetic trace and CSV I/O
# ---------------------------------------------------------------------------

# Per-axis (Fx, Fy, Fz, Tx, Ty, Tz) shaping of the bundled trace.
SYNTHETIC_CALIBRATION = {
    "duration": 60.0,
    "dt": 0.02,
    "seed": 2024,
    "bias": (1.0, -0.5, 7.0, -0.6, -0.05, 0.02),
    "std": (1.5, 1.5, 1.0, 0.08, 0.10, 0.05),
    "correlation_time": (1.0, 1.0, 5.0, 1.5, 1.5, 1.5),
}


def bundled_synthetic_trace() -> UncertaintyTrace:
    c = SYNTHETIC_CALIBRATION
    return synthesize(c["duration"], c["dt"], c["std"], c["seed"], c["correlation_time"], c["bias"])


def load_default_trace() -> UncertaintyTrace:
    return read_uncertainty_csv(BUNDLED_UNCERTAINTY, provenance="synthetic")


def read_uncertainty_csv(path, provenance: str = "measured") -> UncertaintyTrace:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = [c.strip() for c in next(reader)]
        if header != UNC_COLUMNS:
            raise ValueError(f"{path}: expected header {','.join(UNC_COLUMNS)}")
        rows = np.array([[float(x) for x in r] for r in reader if r], dtype=float).reshape(-1, 7)
    return UncertaintyTrace(rows[:, 0], rows[:, 1:4], rows[:, 4:7], provenance)


def write_uncertainty_csv(trace: UncertaintyTrace, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(UNC_COLUMNS)
        for k in range(len(trace)):
            w.writerow([repr(float(v)) for v in (trace.time[k], *trace.F_unc[k], *trace.tau_unc[k])])


def identify_from_csv(path, p_ft=DEFAULT_P_FT) -> UncertaintyTrace:
    """Identify uncertainties from a measured-input CSV (FT readings plus estimator output)."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = [c.strip() for c in next(reader)]
        if header != MEASURED_COLUMNS:
            raise ValueError(f"{path}: expected header {','.join(MEASURED_COLUMNS)}")
        rows = np.array([[float(x) for x in r] for r in reader if r], dtype=float).reshape(-1, 13)
    return identify_trace(rows[:, 0], rows[:, 1:4], rows[:, 4:7], rows[:, 7:10], rows[:, 10:13], p_ft)
