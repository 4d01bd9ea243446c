"""Run artifacts: per-run series CSV, JSON summary, stored config, optional SVG plots.

Floats are written with ``repr`` so a series read back from disk is bit-identical
to the one in memory, which keeps the emitted summary recomputable.
"""

from __future__ import annotations

import csv
import json
import math
from pathlib import Path

import numpy as np

from .scenarios import RunResult, SummaryMetrics, compute_metrics

INT_COLUMNS = {"beta_code", "beta_code_meas", "phase", "saturated"}


class OutputError(OSError):
    """Raised when an artifact cannot be written or read; the message names the path."""


def _fmt(name: str, v: float) -> str:
    if name in INT_COLUMNS:
        return str(int(v))
    return repr(float(v))


def write_series_csv(series: dict[str, np.ndarray], path) -> None:
    cols = list(series)
    n = len(series[cols[0]]) if cols else 0
    try:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(cols)
            for k in range(n):
                w.writerow([_fmt(c, series[c][k]) for c in cols])
    except OSError as exc:
        raise OutputError(f"cannot write series {path}: {exc.strerror or exc}") from exc


def read_series_csv(path) -> dict[str, np.ndarray]:
    try:
        with open(path, newline="") as fh:
            reader = csv.reader(fh)
            header = next(reader)
            rows = [[float(x) for x in row] for row in reader if row]
    except OSError as exc:
        raise OutputError(f"cannot read series {path}: {exc.strerror or exc}") from exc
    data = np.array(rows, dtype=float).reshape(-1, len(header))
    return {c: data[:, i].copy() for i, c in enumerate(header)}


def summary_dict(result: RunResult) -> dict:
    cfg = result.config
    return {
        "name": cfg.name,
        "metrics": result.metrics.to_dict(),
        "diverged": result.diverged,
        "error": result.error,
        "samples": int(len(result.series.get("t", ()))),
        "control_dt": cfg.control_dt,
        "f_d": cfg.f_d,
        "n_wheels": cfg.layout.n_wheels,
        "convergence_threshold_rule": "0.05 * f_d / n_wheels",
    }


def metrics_from_dict(d: dict) -> SummaryMetrics:
    vals = {k: (math.nan if v is None else v) for k, v in d.items()}
    return SummaryMetrics(**vals)


def recompute_summary(run_dir) -> SummaryMetrics:
    """Recompute a run's metrics from its emitted CSV and summary header."""
    run_dir = Path(run_dir)
    summary = _read_json(run_dir / "summary.json")
    series = read_series_csv(run_dir / "series.csv")
    return compute_metrics(series, summary["control_dt"], summary["f_d"], summary["n_wheels"], summary["diverged"])


def _read_json(path: Path) -> dict:
    try:
        return json.loads(path.read_text())
    except OSError as exc:
        raise OutputError(f"cannot read {path}: {exc.strerror or exc}") from exc


def _write_text(path: Path, text: str) -> None:
    try:
        path.write_text(text)
    except OSError as exc:
        raise OutputError(f"cannot write {path}: {exc.strerror or exc}") from exc


def dump_json(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True, allow_nan=False) + "\n"


def emit_outputs(result: RunResult, out_dir, plots: bool = False) -> Path:
    """Write ``series.csv``, ``summary.json``, ``config.yaml`` (and plots) under ``out_dir/<name>``."""
    run_dir = Path(out_dir) / result.config.name
    try:
        run_dir.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise OutputError(f"cannot create output directory {run_dir}: {exc.strerror or exc}") from exc
    write_series_csv(result.series, run_dir / "series.csv")
    _write_text(run_dir / "summary.json", dump_json(summary_dict(result)))
    try:
        result.config.save(run_dir / "config.yaml")
    except OSError as exc:
        raise OutputError(f"cannot write {run_dir / 'config.yaml'}: {exc.strerror or exc}") from exc
    if plots:
        plot_run(result, run_dir / "plots.svg")
    return run_dir


MATRIX_COLUMNS = ["case", "approach", "tipover_events", "tipover_duration", "max_abs_e_n", "recovery_time",
                  "instability", "contact_lost"]


def emit_matrix(results: dict, out_dir, plots: bool = False) -> Path:
    """Per-cell artifacts plus ``matrix.csv`` and ``matrix.json`` comparison tables."""
    out = Path(out_dir)
    rows = []
    for (case, app), res in results.items():
        emit_outputs(res, out, plots=plots)
        m = res.metrics.to_dict()
        rows.append({"case": case, "approach": app, **{k: m[k] for k in MATRIX_COLUMNS[2:]}})
    try:
        with open(out / "matrix.csv", "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(MATRIX_COLUMNS)
            for r in rows:
                w.writerow(["" if r[c] is None else (repr(r[c]) if isinstance(r[c], float) else r[c])
                            for c in MATRIX_COLUMNS])
    except OSError as exc:
        raise OutputError(f"cannot write {out / 'matrix.csv'}: {exc.strerror or exc}") from exc
    _write_text(out / "matrix.json", dump_json(rows))
    return out


def format_table(rows: list[dict], columns: list[str]) -> str:
    def cell(v):
        if v is None:
            return "-"
        if isinstance(v, float):
            return f"{v:.3f}"
        return str(v)

    body = [[cell(r.get(c)) for c in columns] for r in rows]
    widths = [max(len(c), *(len(b[i]) for b in body)) if body else len(c) for i, c in enumerate(columns)]
    lines = ["  ".join(c.ljust(w) for c, w in zip(columns, widths))]
    lines += ["  ".join(v.ljust(w) for v, w in zip(b, widths)) for b in body]
    return "\n".join(lines)


def plot_run(result: RunResult, path) -> None:
    """e_n(t), beta_code(t) and, when logged, alpha(t) as one SVG."""
    try:
        import matplotlib
    except ImportError as exc:
        raise OutputError("plotting needs matplotlib; install the 'plots' extra") from exc
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    matplotlib.rcParams["svg.hashsalt"] = "tipslide"
    s = result.series
    t = s["t"]
    has_alpha = "alpha" in s
    fig, axs = plt.subplots(3 if has_alpha else 2, 1, sharex=True, figsize=(7, 6))
    if "e_n" in s:
        axs[0].plot(t, s["e_n"], lw=0.8, label="e_n")
    else:
        for i in (1, 2, 3):
            axs[0].plot(t, s[f"e_n{i}"], lw=0.8, label=f"e_n{i}")
    axs[0].set_ylabel("e_n [N]")
    axs[0].legend(loc="upper right")
    axs[1].step(t, s["beta_code"], where="post", lw=0.8)
    axs[1].set_ylabel("beta_code")
    if has_alpha:
        axs[2].plot(t, s["alpha"], lw=0.8)
        axs[2].axhline(0.0, color="k", lw=0.5)
        axs[2].set_ylabel("alpha")
    axs[-1].set_xlabel("t [s]")
    fig.suptitle(result.config.name)
    try:
        fig.savefig(path, format="svg", metadata={"Date": None})
    except OSError as exc:
        raise OutputError(f"cannot write plot {path}: {exc.strerror or exc}") from exc
    finally:
        plt.close(fig)

