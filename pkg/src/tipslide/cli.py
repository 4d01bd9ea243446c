"""Command-line entry point: ``tipslide <subcommand>``.

Exit codes: 0 ok, 2 configuration error, 3 I/O error, 4 simulation diverged.
"""

from __future__ import annotations

import argparse
import csv
import logging
import os
import sys
from pathlib import Path

import yaml

from .core_model import WheelLayout
from .force_angle import analyze_trace, geometry_sweep, read_wrench_trace, support_pattern, write_analysis
from .outputs import MATRIX_COLUMNS, OutputError, emit_matrix, emit_outputs, format_table
from .scenarios import ScenarioConfig, run_matrix, run_recovery, run_scenario

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_IO = 3
EXIT_DIVERGED = 4

OUT_ENV = "TIPSLIDE_OUT"
log = logging.getLogger("tipslide")


class ConfigError(ValueError):
    pass


def _default_out() -> str:
    return os.environ.get(OUT_ENV, "tipslide_out")


def _float_list(text: str) -> list[float]:
    try:
        vals = [float(v) for v in text.split(",") if v.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from exc
    if not vals:
        raise argparse.ArgumentTypeError("empty list")
    return vals


def _load_config(path: str) -> ScenarioConfig:
    if not Path(path).is_file():
        raise OutputError(f"config file not found: {path}")
    try:
        return ScenarioConfig.load(path)
    except (ValueError, TypeError, yaml.YAMLError, FileNotFoundError) as exc:
        raise ConfigError(f"{path}: {exc}") from exc


def _out_dir(args, cfg: ScenarioConfig | None = None) -> Path:
    if args.out:
        return Path(args.out)
    if cfg is not None and cfg.output_dir:
        return Path(cfg.output_dir)
    return Path(_default_out())


def _metrics_row(name: str, res) -> dict:
    return {"run": name, **res.metrics.to_dict()}


# ---------------------------------------------------------------------------
# Subcommands
# ---------------------------------------------------------------------------


def cmd_simulate(args) -> int:
    cfg = _load_config(args.config)
    res = run_scenario(cfg)
    run_dir = emit_outputs(res, _out_dir(args, cfg), plots=args.plots)
    print(format_table([_metrics_row(cfg.name, res)],
                       ["run", "tipover_events", "tipover_duration", "max_abs_e_n", "recovery_time", "instability"]))
    print(f"wrote {run_dir}")
    if res.diverged:
        log.error("simulation diverged: %s", res.error)
        return EXIT_DIVERGED
    return EXIT_OK


def cmd_matrix(args) -> int:
    results = run_matrix(workers=args.workers)
    out = _out_dir(args)
    emit_matrix(results, out, plots=args.plots)
    rows = [{"case": c, "approach": a, **r.metrics.to_dict()} for (c, a), r in results.items()]
    print(format_table(rows, MATRIX_COLUMNS))
    print(f"wrote {out}")
    return EXIT_OK  # failed cells are recorded in the table, the grid itself completed


def cmd_recover(args) -> int:
    cfg = _load_config(args.config)
    if any(abs(a) >= 45.0 for a in args.angles):
        raise ConfigError("recovery angles must stay below 45 deg")
    results = run_recovery(args.angles, base=cfg)
    out = _out_dir(args, cfg)
    rows = []
    for a, res in results.items():
        emit_outputs(res, out, plots=args.plots)
        rows.append({"angle_deg": a, **res.metrics.to_dict()})
    print(format_table(rows, ["angle_deg", "recovery_time", "peak_impact_e_n", "tipover_events", "instability"]))
    print(f"wrote {out}")
    return EXIT_DIVERGED if any(r.diverged for r in results.values()) else EXIT_OK


def _layout_from(path: str | None) -> WheelLayout:
    if path is None:
        return WheelLayout.three_wheel()
    return _load_config(path).layout


def cmd_analyze(args) -> int:
    layout = _layout_from(args.layout)
    trace = _read_trace(args.trace)
    analysis = analyze_trace(trace, layout)
    out = _out_dir(args)
    _mkdir(out)
    stem = Path(args.trace).stem
    write_analysis(analysis, support_pattern(layout).count, out / f"{stem}_alpha.csv", out / f"{stem}_windows.csv")
    print(f"min alpha {analysis.min_alpha:.6g}, tip-over windows {len(analysis.windows)}, "
          f"indeterminate samples {len(analysis.gaps)}")
    print(f"wrote {out}")
    return EXIT_OK


def cmd_sweep(args) -> int:
    layout = _layout_from(args.layout)
    trace = _read_trace(args.trace)
    try:
        res = geometry_sweep(trace, layout, args.rd, args.h)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    rows = res.summary()
    out = _out_dir(args)
    _mkdir(out)
    path = out / f"{Path(args.trace).stem}_sweep.csv"
    try:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["r_scale", "h_scale", "min_alpha"])
            for r in rows:
                w.writerow([repr(float(r["r_scale"])), repr(float(r["h_scale"])), repr(r["min_alpha"])])
    except OSError as exc:
        raise OutputError(f"cannot write {path}: {exc.strerror or exc}") from exc
    print(format_table(rows, ["r_scale", "h_scale", "min_alpha"]))
    print(f"wrote {path}")
    return EXIT_OK


def _read_trace(path: str):
    try:
        return read_wrench_trace(path)
    except OSError as exc:
        raise OutputError(f"cannot read trace {path}: {exc.strerror or exc}") from exc
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def _mkdir(path: Path) -> None:
    try:
        path.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise OutputError(f"cannot create {path}: {exc.strerror or exc}") from exc


# ---------------------------------------------------------------------------
# Parser
# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="tipslide", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def out_arg(sp):
        sp.add_argument("--out", help=f"output directory (default ${OUT_ENV} or ./tipslide_out)")

    sp = sub.add_parser("simulate", help="run one scenario from a YAML config")
    sp.add_argument("config")
    out_arg(sp)
    sp.add_argument("--plots", action="store_true", help="also write an SVG of e_n, beta_code and alpha")
    sp.set_defaults(func=cmd_simulate)

    sp = sub.add_parser("matrix", help="scenarios (a)-(d) for baseline, enlarged and normal-force control")
    out_arg(sp)
    sp.add_argument("--workers", type=int, default=1)
    sp.add_argument("--plots", action="store_true")
    sp.set_defaults(func=cmd_matrix)

    sp = sub.add_parser("recover", help="recovery runs from several contact angles")
    sp.add_argument("config")
    sp.add_argument("--angles", type=_float_list, default=[0.0, 10.0, 20.0], help="degrees, e.g. 0,10,20")
    out_arg(sp)
    sp.add_argument("--plots", action="store_true")
    sp.set_defaults(func=cmd_recover)

    sp = sub.add_parser("analyze", help="force-angle analysis of a wrench trace")
    sp.add_argument("trace")
    sp.add_argument("--layout", help="scenario config whose wheel layout is used (default: three-wheel)")
    out_arg(sp)
    sp.set_defaults(func=cmd_analyze)

    sp = sub.add_parser("sweep", help="min alpha over r_d and h scalings of a layout")
    sp.add_argument("trace")
    sp.add_argument("--rd", type=_float_list, default=[1.0, 2.0, 5.0])
    sp.add_argument("--h", type=_float_list, default=[1.0, 0.5, 0.2])
    sp.add_argument("--layout")
    out_arg(sp)
    sp.set_defaults(func=cmd_sweep)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s: %(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        log.error("config error: %s", exc)
        return EXIT_CONFIG
    except OutputError as exc:
        log.error("I/O error: %s", exc)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
