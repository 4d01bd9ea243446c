"""Force-angle tip-over stability measure.

All vectors are body-frame. Axes are numbered from 1 in public outputs, so
``argmin_axis == 2`` means the axis from wheel 2 to wheel 3.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .core_model import DegenerateGeometryError, WheelLayout, hat

_I3 = np.eye(3)


@dataclass(frozen=True)
class TipoverAxes:
    a: list[np.ndarray]
    l: list[np.ndarray]

    @property
    def count(self) -> int:
        return len(self.a)


@dataclass(frozen=True)
class NetTipoverWrench:
    f_r: np.ndarray
    m_r: np.ndarray

    def scaled(self, c: float) -> "NetTipoverWrench":
        return NetTipoverWrench(c * self.f_r, c * self.m_r)


@dataclass(frozen=True)
class StabilityReport:
    theta: np.ndarray
    sigma: np.ndarray
    f_star: list[np.ndarray]
    d: list[np.ndarray]
    products: np.ndarray
    alpha: float
    argmin_axis: int  # 1-based


@dataclass(frozen=True)
class WrenchTrace:
    time: np.ndarray
    f_a: np.ndarray  # (N, 3)
    tau_a: np.ndarray  # (N, 3)
    gravity_body: np.ndarray = None  # (N, 3), zeros when absent

    def __post_init__(self):
        t = np.asarray(self.time, dtype=float)
        n = len(t)
        f_a = np.asarray(self.f_a, dtype=float).reshape(n, 3)
        tau_a = np.asarray(self.tau_a, dtype=float).reshape(n, 3)
        g = np.zeros((n, 3)) if self.gravity_body is None else np.asarray(self.gravity_body, dtype=float).reshape(n, 3)
        if n > 1 and np.any(np.diff(t) <= 0):
            raise ValueError("trace timestamps must be strictly increasing")
        object.__setattr__(self, "time", t)
        object.__setattr__(self, "f_a", f_a)
        object.__setattr__(self, "tau_a", tau_a)
        object.__setattr__(self, "gravity_body", g)

    def __len__(self) -> int:
        return len(self.time)


@dataclass
class TraceAnalysis:
    time: np.ndarray
    reports: list  # StabilityReport or None for indeterminate samples
    alpha: np.ndarray  # NaN where indeterminate
    windows: list[tuple[float, float]] = field(default_factory=list)

    @property
    def gaps(self) -> list[int]:
        return [k for k, r in enumerate(self.reports) if r is None]

    @property
    def min_alpha(self) -> float:
        finite = self.alpha[np.isfinite(self.alpha)]
        return float(finite.min()) if finite.size else math.nan


# ---------------------------------------------------------------------------
# Per-sample pipeline
# ---------------------------------------------------------------------------


def support_pattern(layout: WheelLayout | Sequence[Sequence[float]]) -> TipoverAxes:
    """Tip-over axes ``a_i`` and their CoM normals ``l_i``.

    Accepts a layout or a raw list of contact points. Two contact points give
    a single axis from wheel 1 to wheel 2.
    """
    pts = layout.wheel_positions if isinstance(layout, WheelLayout) else [np.asarray(p, dtype=float) for p in layout]
    n = len(pts)
    if n < 2:
        raise DegenerateGeometryError("a support pattern needs at least two contact points")
    n_axes = 1 if n == 2 else n
    a_list, l_list = [], []
    for i in range(n_axes):
        p_next = pts[(i + 1) % n]
        a = p_next - pts[i]
        if np.linalg.norm(a) < 1e-12:
            raise DegenerateGeometryError(f"contact points {i + 1} and {(i + 1) % n + 1} coincide")
        ah = a / np.linalg.norm(a)
        a_list.append(a)
        l_list.append((_I3 - np.outer(ah, ah)) @ p_next)
    return TipoverAxes(a_list, l_list)


def net_tipover_wrench(f_a, tau_a, g_body=(0.0, 0.0, 0.0)) -> NetTipoverWrench:
    return NetTipoverWrench(np.asarray(f_a, dtype=float) - np.asarray(g_body, dtype=float),
                            np.asarray(tau_a, dtype=float).copy())


def axis_components(w: NetTipoverWrench, axes: TipoverAxes, i: int) -> tuple[np.ndarray, np.ndarray]:
    """Force component normal to axis ``i`` (0-based) and moment component along it."""
    ah = hat(axes.a[i])
    P = np.outer(ah, ah)
    return (_I3 - P) @ w.f_r, P @ w.m_r


def force_couple_member(m_i, l_i) -> np.ndarray:
    l_i = np.asarray(l_i, dtype=float)
    nl = np.linalg.norm(l_i)
    if nl == 0.0:
        raise DegenerateGeometryError("axis normal has zero length")
    return np.cross(l_i / nl, np.asarray(m_i, dtype=float)) / nl


def candidate_angle(f_star, l_i, a_i) -> tuple[float, int]:
    """Signed angle between the resultant and the axis normal, and its sign."""
    fh = hat(f_star)
    lh = hat(l_i)
    ah = hat(a_i)
    c = max(-1.0, min(1.0, float(fh @ lh)))
    sigma = 1 if float(np.cross(fh, lh) @ ah) > 0.0 else -1
    return sigma * math.acos(c), sigma


def stability_measure(w: NetTipoverWrench, axes: TipoverAxes) -> StabilityReport:
    thetas, sigmas, f_stars, ds, prods = [], [], [], [], []
    for i in range(axes.count):
        f_i, m_i = axis_components(w, axes, i)
        f_star = f_i + force_couple_member(m_i, axes.l[i])
        theta, sigma = candidate_angle(f_star, axes.l[i], axes.a[i])
        fh = f_star / np.linalg.norm(f_star)
        l_i = axes.l[i]
        d = -l_i + (l_i @ fh) * fh
        thetas.append(theta)
        sigmas.append(sigma)
        f_stars.append(f_star)
        ds.append(d)
        prods.append(theta * np.linalg.norm(d) * np.linalg.norm(f_star))
    prods = np.array(prods)
    k = int(np.argmin(prods))
    return StabilityReport(np.array(thetas), np.array(sigmas), f_stars, ds, prods, float(prods[k]), k + 1)


# ---------------------------------------------------------------------------
# Traces
# ---------------------------------------------------------------------------


def tipover_windows(time: np.ndarray, alpha: np.ndarray) -> list[tuple[float, float]]:
    """Merge contiguous ``alpha < 0`` samples into ``(t_start, t_end)`` windows."""
    windows = []
    start = None
    for k, a in enumerate(alpha):
        neg = bool(a < 0.0)  # NaN compares False and closes a window
        if neg and start is None:
            start = k
        elif not neg and start is not None:
            windows.append((float(time[start]), float(time[k - 1])))
            start = None
    if start is not None:
        windows.append((float(time[start]), float(time[len(alpha) - 1])))
    return windows


def analyze_trace(trace: WrenchTrace, layout: WheelLayout) -> TraceAnalysis:
    axes = support_pattern(layout)
    reports = []
    alpha = np.full(len(trace), np.nan)
    for k in range(len(trace)):
        w = net_tipover_wrench(trace.f_a[k], trace.tau_a[k], trace.gravity_body[k])
        try:
            rep = stability_measure(w, axes)
        except DegenerateGeometryError:
            rep = None
        else:
            alpha[k] = rep.alpha
        reports.append(rep)
    return TraceAnalysis(trace.time.copy(), reports, alpha, tipover_windows(trace.time, alpha))


def alpha_series(trace: WrenchTrace, layout: WheelLayout) -> np.ndarray:
    """Vectorized alpha for a whole trace; NaN where the resultant vanishes.

    Same arithmetic as :func:`stability_measure`, batched over samples.
    """
    axes = support_pattern(layout)
    f_r = trace.f_a - trace.gravity_body
    m_r = trace.tau_a
    prods = np.empty((len(trace), axes.count))
    for i in range(axes.count):
        ah = hat(axes.a[i])
        l_i = axes.l[i]
        nl = np.linalg.norm(l_i)
        if nl == 0.0:
            raise DegenerateGeometryError("axis normal has zero length")
        lh = l_i / nl
        f_i = f_r - np.outer(f_r @ ah, ah)
        m_i = np.outer(m_r @ ah, ah)
        f_star = f_i + np.cross(lh, m_i) / nl
        fn = np.linalg.norm(f_star, axis=1)
        bad = fn == 0.0
        fh = f_star / np.where(bad, 1.0, fn)[:, None]
        c = np.clip(fh @ lh, -1.0, 1.0)
        sigma = np.where(np.cross(fh, lh) @ ah > 0.0, 1.0, -1.0)
        theta = sigma * np.arccos(c)
        d = -l_i + (fh @ l_i)[:, None] * fh
        p = theta * np.linalg.norm(d, axis=1) * fn
        p[bad] = np.nan
        prods[:, i] = p
    out = np.full(len(trace), np.nan)
    ok = ~np.isnan(prods).any(axis=1)
    out[ok] = prods[ok].min(axis=1)
    return out


@dataclass
class SweepResult:
    r_scales: list[float]
    h_scales: list[float]
    alpha: dict  # (r_scale, h_scale) -> alpha series
    time: np.ndarray

    def min_alpha(self, r_scale: float, h_scale: float) -> float:
        a = self.alpha[(r_scale, h_scale)]
        a = a[np.isfinite(a)]
        return float(a.min()) if a.size else math.nan

    def summary(self) -> list[dict]:
        return [{"r_scale": r, "h_scale": h, "min_alpha": self.min_alpha(r, h)}
                for r in self.r_scales for h in self.h_scales]


def geometry_sweep(trace: WrenchTrace, layout: WheelLayout, r_scales: Iterable[float],
                   h_scales: Iterable[float]) -> SweepResult:
    """Re-evaluate the measure on one trace for every ``(r_d, h)`` scale pair."""
    r_scales, h_scales = list(r_scales), list(h_scales)
    out = {}
    for r in r_scales:
        for h in h_scales:
            lay = layout if (r == 1.0 and h == 1.0) else layout.scaled(r, h)
            out[(r, h)] = alpha_series(trace, lay)
    return SweepResult(r_scales, h_scales, out, trace.time.copy())


# ---------------------------------------------------------------------------
# CSV I/O
# ---------------------------------------------------------------------------

TRACE_COLUMNS = ["t", "fax", "fay", "faz", "tax", "tay", "taz"]
GRAVITY_COLUMNS = ["gx", "gy", "gz"]


def read_wrench_trace(path) -> WrenchTrace:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = [c.strip() for c in next(reader)]
        if header[:7] != TRACE_COLUMNS:
            raise ValueError(f"{path}: expected header starting with {','.join(TRACE_COLUMNS)}")
        has_g = header[7:10] == GRAVITY_COLUMNS
        rows = np.array([[float(x) for x in row] for row in reader if row], dtype=float).reshape(-1, len(header))
    return WrenchTrace(rows[:, 0], rows[:, 1:4], rows[:, 4:7], rows[:, 7:10] if has_g else None)


def write_wrench_trace(trace: WrenchTrace, path, with_gravity: bool = False) -> None:
    cols = TRACE_COLUMNS + (GRAVITY_COLUMNS if with_gravity else [])
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(cols)
        for k in range(len(trace)):
            row = [trace.time[k], *trace.f_a[k], *trace.tau_a[k]]
            if with_gravity:
                row += list(trace.gravity_body[k])
            w.writerow([repr(float(v)) for v in row])


def write_analysis(analysis: TraceAnalysis, n_axes: int, report_path, windows_path) -> None:
    with open(report_path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["t", *[f"theta{i + 1}" for i in range(n_axes)], "alpha", "argmin_axis"])
        for t, rep in zip(analysis.time, analysis.reports):
            if rep is None:
                w.writerow([repr(float(t)), *(["nan"] * n_axes), "nan", ""])
            else:
                w.writerow([repr(float(t)), *[repr(float(x)) for x in rep.theta], repr(rep.alpha), rep.argmin_axis])
    with open(windows_path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["t_start", "t_end"])
        for a, b in analysis.windows:
            w.writerow([repr(a), repr(b)])


# ---------------------------------------------------------------------------
# Bundled synthetic sliding trace
# ---------------------------------------------------------------------------

BUNDLED_TRACE = Path(__file__).parent / "data" / "synthetic_sliding_wrench.csv"


def synthetic_sliding_trace(seed: int = 7, duration: float = 40.0, dt: float = 0.01,
                            mass: float = 4.0, push: float = 12.0) -> WrenchTrace:
    """Push-and-slide actuation wrench trace with sliding-acceleration bursts.

    Stands in for flight logs: a push of roughly 10-15 N along ``z_B``, lateral
    forces ``mass * a`` from back-and-forth sliding with occasional hard
    accelerations, and small torques. It is synthetic and not a recording.
    """
    rng = np.random.default_rng(seed)
    t = np.arange(0.0, duration, dt)
    n = len(t)

    def smooth_noise(sigma: float, tau: float) -> np.ndarray:
        a = math.exp(-dt / tau)
        x = np.zeros(n)
        xi = rng.standard_normal(n) * sigma * math.sqrt(1 - a * a)
        for k in range(1, n):
            x[k] = a * x[k - 1] + xi[k]
        return x

    acc = np.zeros((n, 2))
    t0 = 1.0
    while t0 < duration - 2.0:
        width = rng.uniform(0.4, 1.2)
        amp = rng.uniform(0.2, 0.6) if rng.random() > 0.3 else rng.uniform(0.9, 1.6)
        direction = rng.uniform(0.0, 2.0 * math.pi)
        mask = (t >= t0) & (t < t0 + width)
        shape = np.sin(math.pi * (t[mask] - t0) / width)
        acc[mask, 0] += amp * math.cos(direction) * shape
        acc[mask, 1] += amp * math.sin(direction) * shape
        t0 += width + rng.uniform(0.5, 2.0)
    f_a = np.column_stack([
        mass * acc[:, 0] + smooth_noise(0.3, 0.3),
        mass * acc[:, 1] + smooth_noise(0.3, 0.3),
        push + smooth_noise(1.2, 2.0),
    ])
    tau_a = np.column_stack([smooth_noise(0.04, 0.5), smooth_noise(0.04, 0.5), smooth_noise(0.02, 0.5)])
    return WrenchTrace(t, f_a, tau_a)


def load_bundled_trace() -> WrenchTrace:
    return read_wrench_trace(BUNDLED_TRACE)
