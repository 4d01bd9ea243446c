"""Scenario definition, execution and metrics for the validation runs.

A run has three phases: approach under the full-pose law, contact (and
recovery when the tip lands misaligned), then a trapezoidal sliding stroke
along the work-frame ``x`` axis. Series are logged at the control rate;
every metric is a function of the logged series only.
"""

from __future__ import annotations

import copy
import math
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path
from typing import Any

import numpy as np
import yaml

from .contact_dynamics import (
    ContactParams,
    SimConfig,
    SimulationDiverged,
    SurfaceModel,
    contact_forces,
    planar_momentum_observer,
    step_planar,
    step_spatial,
)
from .controllers import (
    FREE_FLIGHT,
    FULL_CONTACT,
    BaselineGains,
    Controller,
    Gains,
    Measurement,
    PoseReference,
    References,
    classify_contact,
    is_tipover,
    plane_errors_3w,
)
from .core_model import (
    InertiaParams,
    PlanarState,
    PlanarWrench,
    SpatialState,
    SpatialWrench,
    WheelLayout,
    quat_from_axis_angle,
    quat_multiply,
    quat_to_matrix,
    wheel_contact_points,
)
from .force_angle import net_tipover_wrench, stability_measure, support_pattern
from .uncertainty import (
    SYNTHETIC_CALIBRATION,
    NoiseModel,
    UncertaintyTrace,
    inject,
    load_default_trace,
    read_uncertainty_csv,
    resample,
    sensor_noise,
    synthesize,
)

A_MAX = 0.5
F_PUSH = 15.0

SCENARIOS = {
    "a": (1.0, 1.0),
    "b": (5.0, 1.0),
    "c": (1.0, 0.5),
    "d": (5.0, 0.5),
}
APPROACHES = ("baseline", "enlarged", "normal_force")


@dataclass
class ScenarioConfig:
    name: str = "run"
    plant: str = "planar"
    controller: str = "normal_force"
    # geometry and mass properties
    r_d: float = 0.084
    h: float = 0.3
    wheel_radius: float = 0.015
    r_scale: float = 1.0
    h_scale: float = 1.0
    mass: float = 4.0
    planar_inertia: float = 0.1
    inertia_diag: tuple = (0.1, 0.1, 0.15)
    # timing
    physics_dt: float = 0.001
    control_dt: float = 0.01
    duration: float | None = None
    # contact
    stiffness: float = 8.0e3
    damping: float = 120.0
    rolling_resistance: float = 0.5
    delta_F: float = 0.5
    gravity: bool = False
    # task
    a_max: float = A_MAX
    f_d: float = F_PUSH
    stroke: float = 1.0
    v_max: float = 0.5
    settle_time: float = 1.0
    hold_time: float = 1.5
    approach_speed: float = 0.1
    standoff: float = 0.2
    contact_angle_deg: float = 0.0
    roll_deg: float = 0.0
    pitch_deg: float = 0.0
    # control
    gains: dict = field(default_factory=dict)
    baseline_gains: dict = field(default_factory=dict)
    force_estimate: str = "contact"
    observer_gain: float = 50.0
    # uncertainty and noise
    uncertainty: str = "bundled"  # bundled | synthetic | none | path to CSV
    uncertainty_seed: int = 0
    noise_sigma: float = 0.10
    rng_seed: int = 0
    compute_alpha: bool = False
    output_dir: str | None = None

    def __post_init__(self):
        if self.plant not in ("planar", "spatial"):
            raise ValueError(f"plant must be planar or spatial, got {self.plant!r}")
        if self.controller not in ("baseline", "normal_force"):
            raise ValueError(f"controller must be baseline or normal_force, got {self.controller!r}")
        if self.r_scale <= 0 or self.h_scale <= 0:
            raise ValueError("layout multipliers must be positive")
        if self.force_estimate not in ("contact", "momentum"):
            raise ValueError("force_estimate must be contact or momentum")
        if self.uncertainty not in ("bundled", "synthetic", "none") and not Path(self.uncertainty).is_file():
            raise FileNotFoundError(f"uncertainty trace {self.uncertainty!r} does not exist")
        if abs(self.contact_angle_deg) >= 45.0:
            raise ValueError("contact angle must stay below 45 deg")
        self.inertia_diag = tuple(float(v) for v in self.inertia_diag)

    # -- derived objects ---------------------------------------------------
    @property
    def layout(self) -> WheelLayout:
        mode = "two_wheel" if self.plant == "planar" else "three_wheel"
        return WheelLayout(mode, self.r_d, self.h, self.wheel_radius).scaled(self.r_scale, self.h_scale)

    @property
    def slide_time(self) -> float:
        return trapezoid_duration(self.stroke, self.a_max, self.v_max)

    @property
    def run_duration(self) -> float:
        if self.duration is not None:
            return self.duration
        return self.standoff / self.approach_speed + 1.0 + self.settle_time + self.slide_time + self.hold_time

    def sim_config(self) -> SimConfig:
        return SimConfig(
            physics_dt=self.physics_dt,
            control_dt=self.control_dt,
            duration=self.run_duration,
            inertia=InertiaParams(self.mass, self.planar_inertia, np.diag(self.inertia_diag)),
            layout=self.layout,
            surface=SurfaceModel(contact_angle_offset=math.radians(self.contact_angle_deg)),
            contact=ContactParams(self.stiffness, self.damping, self.rolling_resistance, self.delta_F),
            rng_seed=self.rng_seed,
            gravity=np.array([0.0, 0.0, 9.81]) if self.gravity else None,
        )

    # -- (de)serialization -------------------------------------------------
    def to_dict(self) -> dict:
        d = asdict(self)
        d["inertia_diag"] = list(self.inertia_diag)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ScenarioConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown scenario keys: {sorted(unknown)}")
        return cls(**d)

    @classmethod
    def load(cls, path) -> "ScenarioConfig":
        with open(path) as fh:
            data = yaml.safe_load(fh) or {}
        if not isinstance(data, dict):
            raise ValueError(f"{path}: scenario file must hold a mapping")
        return cls.from_dict(data)

    def save(self, path) -> None:
        with open(path, "w") as fh:
            yaml.safe_dump(self.to_dict(), fh, sort_keys=True)


def scenario_config(case: str, approach: str, **overrides) -> ScenarioConfig:
    """Config for one cell of the robustness matrix."""
    acc_scale, force_scale = SCENARIOS[case]
    base = dict(
        name=f"{case}_{approach}",
        a_max=A_MAX * acc_scale,
        f_d=F_PUSH * force_scale,
        controller="normal_force" if approach == "normal_force" else "baseline",
        r_scale=2.0 if approach == "enlarged" else 1.0,
    )
    base.update(overrides)
    return ScenarioConfig(**base)


# ---------------------------------------------------------------------------
# Trajectory
# ---------------------------------------------------------------------------


def trapezoid_duration(stroke: float, a_max: float, v_max: float) -> float:
    if stroke <= 0:
        return 0.0
    t_acc = v_max / a_max
    if a_max * t_acc ** 2 >= stroke:  # triangular profile
        return 2.0 * math.sqrt(stroke / a_max)
    return 2.0 * t_acc + (stroke - a_max * t_acc ** 2) / v_max


def trapezoid(s: float, stroke: float, a_max: float, v_max: float) -> tuple[float, float, float]:
    """Position, velocity, acceleration of the stroke at trajectory time ``s``."""
    T = trapezoid_duration(stroke, a_max, v_max)
    if stroke <= 0 or s <= 0:
        return 0.0, 0.0, 0.0
    if s >= T:
        return stroke, 0.0, 0.0
    v_peak = min(v_max, math.sqrt(a_max * stroke))
    t_acc = v_peak / a_max
    if s < t_acc:
        return 0.5 * a_max * s * s, a_max * s, a_max
    x_acc = 0.5 * a_max * t_acc * t_acc
    t_cruise = T - 2.0 * t_acc
    if s < t_acc + t_cruise:
        return x_acc + v_peak * (s - t_acc), v_peak, 0.0
    r = T - s
    return stroke - 0.5 * a_max * r * r, a_max * r, -a_max


# ---------------------------------------------------------------------------
# Results
# ---------------------------------------------------------------------------


@dataclass
class SummaryMetrics:
    """Run summary. Tip-over counts, durations and ``max_abs_e_n`` cover the
    sliding phase (stroke start to end of run); contact timings are absolute
    times; recovery and convergence are measured from first contact."""

    tipover_events: int
    tipover_duration: float
    max_abs_e_n: float
    recovery_time: float
    instability: bool
    min_alpha: float
    contact_lost: bool
    first_contact_time: float
    first_full_contact_time: float
    peak_impact_e_n: float
    convergence_time: float
    convergence_threshold: float

    def to_dict(self) -> dict:
        return {k: (None if isinstance(v, float) and math.isnan(v) else v) for k, v in asdict(self).items()}


@dataclass
class RunResult:
    config: ScenarioConfig
    series: dict[str, np.ndarray]
    metrics: SummaryMetrics
    diverged: bool = False
    error: str | None = None


def _runs(mask: np.ndarray) -> list[tuple[int, int]]:
    """Maximal ``True`` runs as ``(start, stop)`` index pairs (stop exclusive)."""
    out, start = [], None
    for k, m in enumerate(mask):
        if m and start is None:
            start = k
        elif not m and start is not None:
            out.append((start, k))
            start = None
    if start is not None:
        out.append((start, len(mask)))
    return out


def _nan_max(a: np.ndarray) -> float:
    return float(np.max(a)) if a.size else math.nan


def _abs_e_n(series: dict[str, np.ndarray], n_wheels: int) -> np.ndarray:
    if n_wheels == 2:
        return np.abs(series["e_n"])
    if len(series["t"]) == 0:
        return np.zeros(0)
    return np.max(np.abs(np.column_stack([series["e_n1"], series["e_n2"], series["e_n3"]])), axis=1)


def compute_metrics(series: dict[str, np.ndarray], control_dt: float, f_d: float, n_wheels: int,
                    diverged: bool = False, impact_window: float = 0.5, hold: float = 1.0) -> SummaryMetrics:
    """Summary metrics from logged series (true plant contact codes and pre-noise errors)."""
    t = series["t"]
    code = series["beta_code"].astype(int)
    abs_en = _abs_e_n(series, n_wheels)
    threshold = 0.05 * f_d / n_wheels

    touching = np.nonzero(code != FREE_FLIGHT)[0]
    full = np.nonzero(code == FULL_CONTACT)[0]
    first_contact = float(t[touching[0]]) if touching.size else math.nan
    first_full = float(t[full[0]]) if full.size else math.nan

    sliding = series["phase"] >= 1 if "phase" in series else np.zeros(len(t), dtype=bool)
    s_code = code[sliding]
    tip_runs = _runs(np.array([is_tipover(c) for c in s_code], dtype=bool))
    events = len(tip_runs)
    duration = sum(b - a for a, b in tip_runs) * control_dt
    max_en = _nan_max(abs_en[sliding])
    contact_lost = bool(np.any(s_code == FREE_FLIGHT))

    recovery = math.nan
    peak = math.nan
    convergence = math.nan
    if touching.size:
        k0 = touching[0]
        need = int(round(hold / control_dt))
        for a, b in _runs(code == FULL_CONTACT):
            if b - a >= need and a >= k0:
                recovery = float(t[a]) - first_contact
                break
        k1 = min(len(t), k0 + int(round(impact_window / control_dt)) + 1)
        peak = _nan_max(abs_en[k0:k1])
        ok = (abs_en < threshold) & (code == FULL_CONTACT)
        bad = np.nonzero(~ok[k0:])[0]
        if bad.size == 0:
            convergence = 0.0
        elif bad[-1] + k0 + 1 < len(t):
            convergence = float(t[bad[-1] + k0 + 1]) - first_contact

    min_alpha = math.nan
    alpha = series.get("alpha")
    if alpha is not None:
        a = alpha[sliding]
        a = a[np.isfinite(a)]
        min_alpha = float(a.min()) if a.size else math.nan
    return SummaryMetrics(events, duration, max_en, recovery, bool(diverged), min_alpha, contact_lost,
                          first_contact, first_full, peak, convergence, threshold)


# ---------------------------------------------------------------------------
# Running
# ---------------------------------------------------------------------------


def _uncertainty_for(cfg: ScenarioConfig) -> UncertaintyTrace | None:
    if cfg.uncertainty == "none":
        return None
    if cfg.uncertainty == "bundled":
        trace = load_default_trace()
    elif cfg.uncertainty == "synthetic":
        c = SYNTHETIC_CALIBRATION
        trace = synthesize(max(c["duration"], cfg.run_duration + 1.0), c["dt"], c["std"], cfg.uncertainty_seed,
                           c["correlation_time"], c["bias"])
    else:
        trace = read_uncertainty_csv(cfg.uncertainty)
    return resample(trace, cfg.control_dt)


def _initial_orientation(cfg: ScenarioConfig) -> np.ndarray:
    q_roll = quat_from_axis_angle([1.0, 0.0, 0.0], math.radians(cfg.roll_deg))
    q_pitch = quat_from_axis_angle([0.0, 1.0, 0.0], math.radians(cfg.pitch_deg))
    return quat_multiply(q_roll, q_pitch)


class _Logger:
    def __init__(self):
        self.cols: dict[str, list] = {}

    def add(self, **kw):
        for k, v in kw.items():
            self.cols.setdefault(k, []).append(v)

    def arrays(self) -> dict[str, np.ndarray]:
        return {k: np.asarray(v, dtype=float) for k, v in self.cols.items()}


def run_scenario(cfg: ScenarioConfig) -> RunResult:
    """Simulate one scenario. Deterministic for a fixed config."""
    sim = cfg.sim_config()
    layout = sim.layout
    unc = _uncertainty_for(cfg)
    noise = NoiseModel(cfg.noise_sigma, cfg.rng_seed)
    gains = Gains(**{k: (tuple(v) if isinstance(v, list) else v) for k, v in cfg.gains.items()})
    bgains = BaselineGains(**{k: tuple(v) for k, v in cfg.baseline_gains.items()})
    planar = cfg.plant == "planar"
    ctrl = Controller(cfg.controller, cfg.plant, cfg.mass, gains, bgains, cfg.delta_F,
                      inertia=sim.inertia.inertia,
                      normals=None if planar else layout.plane_normals(), control_dt=cfg.control_dt)

    surface_z = float(sim.surface.point_on_plane[2])
    z_touch = surface_z - layout.h  # CoM height with the tip flush on the surface
    K_z = bgains.K_pos[2]
    push_depth = cfg.f_d / K_z  # impedance setpoint offset giving f_d at rest
    baseline = cfg.controller == "baseline"

    # initial pose: lowest wheel one standoff away from the surface
    if planar:
        beta0 = math.radians(cfg.contact_angle_deg)
        probe = PlanarState(0.0, 0.0, beta0)
        R0 = None
    else:
        q0 = _initial_orientation(cfg)
        R0 = quat_to_matrix(q0)
        probe = SpatialState(np.zeros(3), q0)
    lowest = max(p[2] for p in wheel_contact_points(layout, probe))
    z0 = surface_z - cfg.standoff - lowest
    if planar:
        state = PlanarState(0.0, z0, beta0)
    else:
        state = SpatialState(np.array([0.0, 0.0, z0]), q0)

    observer = planar_momentum_observer(cfg.observer_gain, state, sim.inertia) if (planar and cfg.force_estimate == "momentum") else None

    log = _Logger()
    n_ctrl = int(round(cfg.run_duration / cfg.control_dt))
    sub = sim.substeps
    slide_clock = 0.0
    slide_start: float | None = None
    t_touch = (z_touch - z0) / cfg.approach_speed
    diverged = False
    error = None
    axes = support_pattern(layout) if (cfg.compute_alpha and not planar) else None
    T_slide = cfg.slide_time

    try:
        for k in range(n_ctrl):
            t = k * cfg.control_dt
            report = contact_forces(state, layout, sim.surface, sim.contact)
            f_meas = sensor_noise(report.f_n, noise, k)
            if observer is not None:
                f_est = -_observer_push(observer, state)
            elif planar:
                f_est = -report.wrench.f_z
            else:
                f_est = -float(report.wrench.force[2])

            code_meas = classify_contact(f_meas, cfg.delta_F)
            if baseline:
                # no contact sensing: the stroke is scheduled after the nominal touchdown
                if slide_start is None and t >= t_touch:
                    slide_start = t_touch + cfg.settle_time
            elif slide_start is None and code_meas == FULL_CONTACT:
                slide_start = t + cfg.settle_time
            # the gated controller advances the stroke only in full contact
            if slide_start is not None and t >= slide_start and (baseline or code_meas == FULL_CONTACT):
                slide_clock += cfg.control_dt
            x_d, xd, xdd = trapezoid(slide_clock, cfg.stroke, cfg.a_max, cfg.v_max)
            if slide_start is None or t < slide_start:
                phase = 0
            else:
                phase = 1 if slide_clock <= 0.0 else (2 if slide_clock < T_slide else 3)

            if baseline:
                z_ref = z0 + cfg.approach_speed * t if t < t_touch else z_touch + push_depth
                vz_ref = cfg.approach_speed if t < t_touch else 0.0
            else:
                z_ref = min(z0 + cfg.approach_speed * t, z_touch + 2.0 * push_depth)
                vz_ref = cfg.approach_speed if z_ref < z_touch + 2.0 * push_depth else 0.0
            refs = References(x_d=x_d, xd_dot=xd, xd_ddot=xdd, f_d=cfg.f_d)
            attitude = np.array([beta0]) if planar else R0
            pose_ref = PoseReference(np.array([x_d, 0.0, z_ref]), attitude, np.array([xd, 0.0, vz_ref]))
            meas = Measurement(state, f_meas, f_est)

            w = ctrl.step(meas, refs, pose_ref)
            sat = ctrl.state.log.get("saturated")
            F_u, T_u = unc.sample(t) if unc is not None else (np.zeros(3), np.zeros(3))
            if planar:
                w_cmd = PlanarWrench.from_array(w)
                w_sim = inject(w_cmd, F_u, T_u, "planar")
            else:
                w_cmd = SpatialWrench.from_array(w)
                w_sim = inject(w_cmd, F_u, T_u, "spatial")

            # log the sample at the control instant
            row: dict[str, Any] = {"t": t, "beta_code": report.beta_code, "beta_code_meas": code_meas, "phase": phase}
            if planar:
                row.update(x=state.x, z=state.z, beta=state.beta, fn1=report.f_n[0], fn2=report.f_n[1],
                           e_n=report.f_n[0] - report.f_n[1], e_n_meas=f_meas[0] - f_meas[1],
                           f_x=w[0], f_z=w[1], tau=w[2], f_x_sim=w_sim.f_x, f_z_sim=w_sim.f_z, tau_sim=w_sim.tau,
                           f_est=f_est, x_d=x_d)
            else:
                e1, e2, e3 = plane_errors_3w(*report.f_n)
                row.update(x=state.position[0], y=state.position[1], z=state.position[2],
                           qw=state.quat[0], qx=state.quat[1], qy=state.quat[2], qz=state.quat[3],
                           fn1=report.f_n[0], fn2=report.f_n[1], fn3=report.f_n[2],
                           e_n1=e1, e_n2=e2, e_n3=e3, f_est=f_est, x_d=x_d,
                           f_x=w[0], f_y=w[1], f_z=w[2], tau_x=w[3], tau_y=w[4], tau_z=w[5])
                if axes is not None:
                    try:
                        row["alpha"] = stability_measure(net_tipover_wrench(w_sim.force, w_sim.torque), axes).alpha
                    except Exception:
                        row["alpha"] = math.nan
            lg = ctrl.state.log
            for key in ("e_p", "e_d", "e_f"):
                row[key] = lg.get(key, math.nan)
            row["saturated"] = int(sat.any()) if sat is not None else 0
            log.add(**row)

            for _ in range(sub):
                if planar:
                    state = step_planar(state, w_sim, sim)
                else:
                    state = step_spatial(state, w_sim, sim)
                if observer is not None:
                    _observer_update(observer, state, w_cmd, sim)
    except SimulationDiverged as exc:
        diverged = True
        error = str(exc)

    series = log.arrays()
    metrics = compute_metrics(series, cfg.control_dt, cfg.f_d, layout.n_wheels, diverged)
    return RunResult(cfg, series, metrics, diverged, error)


def _observer_push(observer, state: PlanarState) -> float:
    """Body z-component of the estimated external force."""
    r = observer.residual
    c, s = math.cos(state.beta), math.sin(state.beta)
    return -s * r[0] + c * r[1]


def _observer_update(observer, state: PlanarState, w: PlanarWrench, sim: SimConfig) -> None:
    c, s = math.cos(state.beta), math.sin(state.beta)
    m = sim.inertia.mass
    known = [c * w.f_x - s * w.f_z, s * w.f_x + c * w.f_z, w.tau]
    observer.update([m * state.vx, m * state.vz, sim.inertia.planar_inertia * state.beta_dot], known, sim.physics_dt)


# ---------------------------------------------------------------------------
# Batches
# ---------------------------------------------------------------------------


def run_matrix(workers: int = 1, **overrides) -> dict[tuple[str, str], RunResult]:
    """All four scenarios crossed with the three approaches."""
    cells = [(case, app) for case in SCENARIOS for app in APPROACHES]
    cfgs = [scenario_config(case, app, **overrides) for case, app in cells]
    if workers > 1:
        from concurrent.futures import ProcessPoolExecutor
        with ProcessPoolExecutor(workers) as ex:
            results = list(ex.map(_safe_run, cfgs))
    else:
        results = [_safe_run(c) for c in cfgs]
    return dict(zip(cells, results))


def _safe_run(cfg: ScenarioConfig) -> RunResult:
    try:
        return run_scenario(cfg)
    except Exception as exc:  # a failed cell must not abort the grid
        empty = {"t": np.zeros(0), "beta_code": np.zeros(0), "phase": np.zeros(0), "e_n": np.zeros(0)}
        n = cfg.layout.n_wheels
        if n == 3:
            empty.update(e_n1=np.zeros(0), e_n2=np.zeros(0), e_n3=np.zeros(0))
        m = compute_metrics(empty, cfg.control_dt, cfg.f_d, n, diverged=True)
        return RunResult(cfg, empty, m, True, f"{type(exc).__name__}: {exc}")


def run_recovery(angles_deg=(0.0, 10.0, 20.0), base: ScenarioConfig | None = None) -> dict[float, RunResult]:
    """Scenario (d) normal-force runs approaching with each contact angle."""
    base = base or scenario_config("d", "normal_force")
    out = {}
    for a in angles_deg:
        cfg = replace(copy.deepcopy(base), contact_angle_deg=float(a), name=f"recovery_{a:g}deg")
        out[float(a)] = run_scenario(cfg)
    return out


def run_three_wheel(roll_deg: float = 15.0, pitch_deg: float = -5.0, **overrides) -> RunResult:
    """Spatial three-wheel run under scenario (d) with the given approach attitude."""
    cfg = scenario_config("d", "normal_force", plant="spatial", roll_deg=roll_deg, pitch_deg=pitch_deg,
                          name=f"three_wheel_r{roll_deg:g}_p{pitch_deg:g}", **overrides)
    return run_scenario(cfg)
