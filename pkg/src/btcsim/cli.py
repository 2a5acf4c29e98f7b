"""Command-line entry point.

Every subcommand resolves a single RunConfig (flags > config file >
defaults), computes, and emits plain CSV/JSON.  Each output file is
accompanied by a ``<name>.meta.json`` carrying the exact resolved
configuration, so any output can be reproduced byte-for-byte from its
own metadata.

Exit codes: 0 success, 1 usage error, 2 numerical failure.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import sys
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from . import __version__
from .analysis import (
    AnalysisThresholds,
    classify_phase,
    nm_measure,
    order_parameter,
    power_spectrum,
)
from .integrator import IntegratorConfig, StepSizeUnderflow, integrate
from .metrology import qfi_per_spin
from .model import BathParams, ClampMode, ModelParams, constant_kappa_mode, kappa, kappa_raw
from .sweep import (
    SweepGrid,
    fig4_scan,
    run_sweep,
    write_cells_csv,
)

USAGE_ERROR = 1
NUMERICAL_ERROR = 2

FIG_NAMES = ("fig1a", "fig1b", "fig2", "fig3", "fig4", "fig5", "figB5", "figC6")


class _Parser(argparse.ArgumentParser):
    """argparse variant with exit code 1 on usage errors."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(USAGE_ERROR, f"{self.prog}: error: {message}\n")


@dataclasses.dataclass(frozen=True)
class RunConfig:
    """Fully resolved parameters for one invocation."""

    omega0: float = 0.3
    omega_x: float = 0.0
    omega_z: float = 0.0
    kappa0: float = 1.0
    m: float = 0.25
    kappa_max: float = 10.0
    clamp_mode: str = "sign-preserving"
    constant_kappa: bool = False
    horizon: float = 500.0
    dt_out: float = 0.05
    rel_tol: float = 1e-9
    abs_tol: float = 1e-11
    h_max: float = 0.01
    init: tuple = (0.0, 0.0, 1.0)
    renormalize: bool = False
    thresholds: dict = dataclasses.field(default_factory=dict)
    delta_omega: float = 1e-4
    nm_step: float = 1e-3
    jobs: int = 1

    def model(self) -> ModelParams:
        return ModelParams(self.omega0, self.omega_x, self.omega_z)

    def bath(self) -> BathParams:
        b = BathParams(
            kappa0=self.kappa0,
            spectral_width_m=self.m,
            kappa_max=self.kappa_max,
            clamp_mode=ClampMode(self.clamp_mode),
        )
        return constant_kappa_mode(b) if self.constant_kappa else b

    def integrator_config(self) -> IntegratorConfig:
        return IntegratorConfig(
            horizon_T=self.horizon,
            dt_out=self.dt_out,
            rel_tol=self.rel_tol,
            abs_tol=self.abs_tol,
            h_max=self.h_max,
            initial_state=self.init,
            renormalize=self.renormalize,
        )

    def analysis_thresholds(self) -> AnalysisThresholds:
        return AnalysisThresholds(**self.thresholds)

    def as_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["init"] = list(self.init)
        return d


def _add_common_flags(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("physics (frequencies in kappa0, times in 1/kappa0)")
    g.add_argument("--omega0", type=float, help="drive frequency omega0 [kappa0]")
    g.add_argument("--omega-x", type=float, dest="omega_x",
                   help="collective x interaction omega_x [kappa0]")
    g.add_argument("--omega-z", type=float, dest="omega_z",
                   help="collective z interaction omega_z [kappa0]")
    g.add_argument("--kappa0", type=float, help="base dissipation rate kappa0")
    g.add_argument("-m", "--spectral-width", type=float, dest="m",
                   help="bath spectral width m [kappa0]")
    g.add_argument("--kappa-max", type=float, dest="kappa_max",
                   help="cap on |kappa(t)| [kappa0]")
    g.add_argument("--clamp-mode", choices=[c.value for c in ClampMode],
                   dest="clamp_mode", help="how the cap is applied")
    g.add_argument("--constant-kappa", action="store_true", default=None,
                   dest="constant_kappa",
                   help="pin kappa(t) = kappa0 (memoryless reference bath)")
    gi = p.add_argument_group("integration")
    gi.add_argument("--horizon", type=float, help="horizon T [1/kappa0]")
    gi.add_argument("--dt-out", type=float, dest="dt_out",
                    help="output sample spacing [1/kappa0]")
    gi.add_argument("--rel-tol", type=float, dest="rel_tol", help="relative tolerance")
    gi.add_argument("--abs-tol", type=float, dest="abs_tol", help="absolute tolerance")
    gi.add_argument("--h-max", type=float, dest="h_max",
                    help="step ceiling [1/kappa0]")
    gi.add_argument("--init", type=str,
                    help="initial state 'm_x,m_y,m_z' on the unit sphere")
    gi.add_argument("--renormalize", action="store_true", default=None,
                    help="project onto the unit sphere after each step")
    p.add_argument("--thresholds", type=str,
                   help="classifier thresholds as 'key=value,...' "
                        "(eps_tiss, eps_lc, r_btc, loop_area_min, ...)")
    p.add_argument("--config", type=str,
                   help="JSON config file; precedence: flags > file > defaults")


def _parse_thresholds(text: str) -> dict:
    out = {}
    valid = {f.name for f in dataclasses.fields(AnalysisThresholds)}
    for item in text.split(","):
        if not item.strip():
            continue
        key, sep, value = item.partition("=")
        key = key.strip()
        if not sep or key not in valid:
            raise ValueError(f"unknown threshold {key!r}")
        out[key] = int(value) if key == "max_multiplicity" else float(value)
    return out


def _resolve_config(args: argparse.Namespace) -> RunConfig:
    """Merge defaults, config file, and explicit flags (flags win)."""
    merged = {}
    cfg_path = getattr(args, "config", None)
    if cfg_path:
        with open(cfg_path) as f:
            file_cfg = json.load(f)
        if not isinstance(file_cfg, dict):
            raise ValueError("config file must hold a JSON object")
        unknown = set(file_cfg) - {f.name for f in dataclasses.fields(RunConfig)}
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        merged.update(file_cfg)
    for f in dataclasses.fields(RunConfig):
        v = getattr(args, f.name, None)
        if v is not None:
            merged[f.name] = v
    if isinstance(merged.get("init"), str):
        parts = [float(x) for x in merged["init"].split(",")]
        if len(parts) != 3:
            raise ValueError("--init needs exactly 3 comma-separated components")
        merged["init"] = tuple(parts)
    elif isinstance(merged.get("init"), list):
        merged["init"] = tuple(merged["init"])
    if isinstance(merged.get("thresholds"), str):
        merged["thresholds"] = _parse_thresholds(merged["thresholds"])
    return RunConfig(**merged)


def _write_meta(out_path: Path, cfg: RunConfig, extra: Optional[dict] = None) -> None:
    meta = {
        "tool": "btcsim",
        "version": __version__,
        "run_config": cfg.as_dict(),
        "thresholds_resolved": dataclasses.asdict(cfg.analysis_thresholds()),
    }
    if extra:
        meta.update(extra)
    meta_path = out_path.with_suffix(out_path.suffix + ".meta.json")
    meta_path.write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")


def _report_json(report, cfg: RunConfig) -> str:
    payload = report.as_dict()
    payload["run_config"] = cfg.as_dict()
    return json.dumps(payload, indent=2, sort_keys=True)


# --- subcommand implementations --------------------------------------------


def _cmd_simulate(args) -> int:
    cfg = _resolve_config(args)
    traj = integrate(cfg.model(), cfg.bath(), cfg.integrator_config())
    out = Path(args.out)
    traj.to_csv(str(out))
    _write_meta(out, cfg, {"norm_drift_max": traj.norm_drift_max,
                           "cp_violated": traj.cp_violated})
    return 0


def _cmd_kappa(args) -> int:
    cfg = _resolve_config(args)
    bath = cfg.bath()
    n = int(round(cfg.horizon / args.step))
    t = np.arange(n + 1) * args.step
    raw = np.asarray(kappa_raw(bath, t))
    capped = np.asarray(kappa(bath, t))
    out = Path(args.out)
    with open(out, "w", newline="") as f:
        f.write("t,kappa_raw,kappa\n")
        for i in range(len(t)):
            f.write(f"{t[i]:.17g},{raw[i]:.17g},{capped[i]:.17g}\n")
    _write_meta(out, cfg, {"step": args.step})
    return 0


def _window(args, cfg: RunConfig):
    if args.window:
        a, _, b = args.window.partition(":")
        return (float(a), float(b))
    return (cfg.horizon / 2.0, cfg.horizon)


def _cmd_spectrum(args) -> int:
    cfg = _resolve_config(args)
    traj = integrate(cfg.model(), cfg.bath(), cfg.integrator_config())
    spec = power_spectrum(traj, _window(args, cfg), cfg.analysis_thresholds())
    out = Path(args.out)
    with open(out, "w", newline="") as f:
        f.write("omega,amplitude\n")
        for i in range(len(spec.freqs)):
            f.write(f"{spec.freqs[i]:.17g},{spec.amps[i]:.17g}\n")
    _write_meta(out, cfg, {"window": list(spec.window),
                           "peaks": [list(p) for p in spec.peaks]})
    return 0


def _cmd_classify(args) -> int:
    cfg = _resolve_config(args)
    traj = integrate(cfg.model(), cfg.bath(), cfg.integrator_config())
    thresholds = cfg.analysis_thresholds()
    spec = power_spectrum(traj, _window(args, cfg), thresholds)
    nm = nm_measure(cfg.bath(), horizon=cfg.horizon, quadrature_step=cfg.nm_step)
    report = classify_phase(traj, spec, thresholds, nm=nm)
    text = _report_json(report, cfg)
    if args.out:
        Path(args.out).write_text(text + "\n")
    else:
        print(text)
    return 0


def _cmd_orderparam(args) -> int:
    cfg = _resolve_config(args)
    traj = integrate(cfg.model(), cfg.bath(), cfg.integrator_config())
    window = (float(args.from_t), traj.horizon) if args.from_t else None
    print(f"{order_parameter(traj, window):.17g}")
    return 0


def _cmd_nm(args) -> int:
    cfg = _resolve_config(args)
    print(f"{nm_measure(cfg.bath(), cfg.horizon, cfg.nm_step):.17g}")
    return 0


def _qfi_scan_rows(cfg: RunConfig, omega0_values) -> list:
    rows = []
    for omega0 in omega0_values:
        model = ModelParams(float(omega0), cfg.omega_x, cfg.omega_z)
        result = qfi_per_spin(
            model, cfg.bath(), cfg.integrator_config(), cfg.delta_omega,
            check_delta=False,
        )
        rows.append(
            (float(omega0), result.scalar_late_avg, result.scalar_late_max,
             cfg.delta_omega)
        )
    return rows


def _cmd_qfi(args) -> int:
    cfg = _resolve_config(args)
    if args.omega0_max is None:
        omega0_values = [cfg.omega0]
    else:
        lo = args.omega0_min if args.omega0_min is not None else cfg.omega0
        n = int(round((args.omega0_max - lo) / args.omega0_step))
        omega0_values = np.round(lo + np.arange(n + 1) * args.omega0_step, 12)
    rows = _qfi_scan_rows(cfg, omega0_values)
    out = Path(args.out)
    with open(out, "w", newline="") as f:
        f.write("omega0,qfi_per_spin_late_avg,qfi_per_spin_max,delta_omega\n")
        for r in rows:
            f.write(",".join(f"{v:.17g}" for v in r) + "\n")
    _write_meta(out, cfg)
    return 0


def _sweep_grid(cfg: RunConfig, omega0_values=None, m_values=None) -> SweepGrid:
    kwargs = dict(
        omega_x=cfg.omega_x,
        omega_z=cfg.omega_z,
        kappa0=cfg.kappa0,
        kappa_max=cfg.kappa_max,
        clamp_mode=ClampMode(cfg.clamp_mode),
        constant_rate=cfg.constant_kappa,
        config=cfg.integrator_config(),
        thresholds=cfg.analysis_thresholds(),
        nm_quadrature_step=cfg.nm_step,
    )
    if omega0_values is not None:
        kwargs["omega0_values"] = omega0_values
    if m_values is not None:
        kwargs["m_values"] = m_values
    return SweepGrid(**kwargs)


def _parse_grid_axis(text: str) -> np.ndarray:
    lo, _, rest = text.partition(":")
    hi, _, step = rest.partition(":")
    lo, hi, step = float(lo), float(hi), float(step)
    n = int(round((hi - lo) / step))
    return np.round(lo + np.arange(n + 1) * step, 12)


def _cmd_sweep(args) -> int:
    cfg = _resolve_config(args)
    omega0_values = _parse_grid_axis(args.omega0_grid) if args.omega0_grid else None
    m_values = _parse_grid_axis(args.m_grid) if args.m_grid else None
    grid = _sweep_grid(cfg, omega0_values, m_values)
    cells = run_sweep(grid, parallelism=cfg.jobs)
    out = Path(args.out)
    write_cells_csv(cells, str(out))
    errors = [c for c in cells if c.error]
    _write_meta(out, cfg, {
        "grid": {
            "omega0_values": [float(v) for v in grid.omega0_values],
            "m_values": [float(v) for v in grid.m_values],
        },
        "n_cells": len(cells),
        "n_errors": len(errors),
    })
    if errors:
        for c in errors:
            print(f"cell (omega0={c.omega0:g}, m={c.m:g}) failed: {c.error}",
                  file=sys.stderr)
    return 0


# --- figure presets ---------------------------------------------------------


def _preset_config(cfg: RunConfig, **overrides) -> RunConfig:
    return dataclasses.replace(cfg, **overrides)


def _emit_trajectory(cfg: RunConfig, outdir: Path, stem: str) -> None:
    traj = integrate(cfg.model(), cfg.bath(), cfg.integrator_config())
    out = outdir / f"{stem}.csv"
    traj.to_csv(str(out))
    _write_meta(out, cfg, {"norm_drift_max": traj.norm_drift_max,
                           "cp_violated": traj.cp_violated})


def _emit_panel(cfg: RunConfig, outdir: Path, stem: str) -> None:
    """Trajectory + spectrum + phase report for one parameter point."""
    traj = integrate(cfg.model(), cfg.bath(), cfg.integrator_config())
    thresholds = cfg.analysis_thresholds()
    spec = power_spectrum(traj, thresholds=thresholds)
    nm = nm_measure(cfg.bath(), cfg.horizon, cfg.nm_step)
    report = classify_phase(traj, spec, thresholds, nm=nm)
    out = outdir / f"{stem}.csv"
    traj.to_csv(str(out))
    _write_meta(out, cfg, {"norm_drift_max": traj.norm_drift_max})
    spec_out = outdir / f"{stem}_spectrum.csv"
    with open(spec_out, "w", newline="") as f:
        f.write("omega,amplitude\n")
        for i in range(len(spec.freqs)):
            f.write(f"{spec.freqs[i]:.17g},{spec.amps[i]:.17g}\n")
    _write_meta(spec_out, cfg, {"window": list(spec.window)})
    (outdir / f"{stem}_phase.json").write_text(_report_json(report, cfg) + "\n")


FIG2_OMEGA0 = (0.08, 0.3, 1.5)  # irregular / limit-cycle / multi-frequency panels
FIG3_OMEGA0_RANGE = (0.02, 0.5, 0.01)
FIGB5_PARAMS = dict(omega0=0.2, omega_x=1.0, omega_z=0.6)


def _cmd_fig(args) -> int:
    cfg = _resolve_config(args)
    outdir = Path(args.outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    name = args.name

    if name == "fig1a":
        _emit_trajectory(
            _preset_config(cfg, omega0=0.3, constant_kappa=True), outdir, "fig1a"
        )
    elif name == "fig1b":
        _emit_trajectory(
            _preset_config(cfg, omega0=0.3, m=0.25, constant_kappa=False),
            outdir,
            "fig1b",
        )
    elif name == "fig2":
        for panel, omega0 in zip("abc", FIG2_OMEGA0):
            _emit_panel(
                _preset_config(cfg, omega0=omega0, m=0.25, constant_kappa=False),
                outdir,
                f"fig2{panel}",
            )
    elif name == "fig3":
        lo, hi, step = FIG3_OMEGA0_RANGE
        scan_cfg = _preset_config(cfg, m=0.25, constant_kappa=False)
        n = int(round((hi - lo) / step))
        omega0_values = np.round(lo + np.arange(n + 1) * step, 12)
        qfi_rows = _qfi_scan_rows(scan_cfg, omega0_values)
        mu_rows = []
        for omega0 in omega0_values:
            model = ModelParams(float(omega0), scan_cfg.omega_x, scan_cfg.omega_z)
            traj = integrate(model, scan_cfg.bath(), scan_cfg.integrator_config())
            mu_rows.append(order_parameter(traj))
        out = outdir / "fig3.csv"
        with open(out, "w", newline="") as f:
            f.write("omega0,qfi_per_spin_late_avg,qfi_per_spin_max,mu,delta_omega\n")
            for (o, avg, mx, d), mu in zip(qfi_rows, mu_rows):
                f.write(
                    f"{o:.17g},{avg:.17g},{mx:.17g},{mu:.17g},{d:.17g}\n"
                )
        _write_meta(out, scan_cfg)
    elif name == "fig4":
        scan_cfg = _preset_config(cfg, constant_kappa=False)
        cells = fig4_scan(
            omega0_over_kappa0=0.5,
            grid=_sweep_grid(scan_cfg),
            parallelism=scan_cfg.jobs,
        )
        out = outdir / "fig4.csv"
        with open(out, "w", newline="") as f:
            f.write("m,nm_measure,peak_ratio,label\n")
            for c in cells:
                f.write(
                    f"{c.m:.17g},{c.nm_measure:.17g},{c.peak_ratio:.17g},{c.label}\n"
                )
        _write_meta(out, scan_cfg)
    elif name == "fig5":
        scan_cfg = _preset_config(cfg, constant_kappa=False)
        grid = _sweep_grid(scan_cfg)
        cells = run_sweep(grid, parallelism=scan_cfg.jobs)
        out = outdir / "fig5.csv"
        write_cells_csv(cells, str(out))
        _write_meta(out, scan_cfg, {
            "markovian_boundary_m": 2.0 * scan_cfg.kappa0,
            "n_cells": len(cells),
        })
    elif name == "figB5":
        _emit_panel(
            _preset_config(cfg, constant_kappa=True, **FIGB5_PARAMS),
            outdir,
            "figB5_constant",
        )
        _emit_panel(
            _preset_config(cfg, m=0.25, constant_kappa=False, **FIGB5_PARAMS),
            outdir,
            "figB5_nonmarkovian",
        )
    elif name == "figC6":
        _emit_panel(
            _preset_config(cfg, omega0=0.02, m=0.25, constant_kappa=False),
            outdir,
            "figC6",
        )
    else:  # unreachable: argparse restricts choices
        raise ValueError(f"unknown preset {name}")
    return 0


# --- parser -----------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(
        prog="btcsim",
        description="Mean-field simulator for dissipative collective-spin "
        "dynamics with a time-dependent decay rate.  Frequencies are in "
        "units of kappa0, times in 1/kappa0.",
    )
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="integrate and write the trajectory CSV")
    _add_common_flags(p)
    p.add_argument("--out", required=True, help="output CSV path")
    p.set_defaults(func=_cmd_simulate)

    p = sub.add_parser("kappa", help="dump t, kappa_raw(t), kappa(t) as CSV")
    _add_common_flags(p)
    p.add_argument("--step", type=float, default=0.01,
                   help="sample spacing [1/kappa0] (default 0.01)")
    p.add_argument("--out", required=True, help="output CSV path")
    p.set_defaults(func=_cmd_kappa)

    p = sub.add_parser("spectrum", help="power spectrum of m_z over a window")
    _add_common_flags(p)
    p.add_argument("--window", type=str,
                   help="analysis window 't_a:t_b' (default [T/2, T])")
    p.add_argument("--out", required=True, help="output CSV path")
    p.set_defaults(func=_cmd_spectrum)

    p = sub.add_parser("classify", help="dynamical-phase report as JSON")
    _add_common_flags(p)
    p.add_argument("--window", type=str,
                   help="analysis window 't_a:t_b' (default [T/2, T])")
    p.add_argument("--out", help="output JSON path (default: stdout)")
    p.set_defaults(func=_cmd_classify)

    p = sub.add_parser("orderparam",
                       help="time-averaged m_z (order parameter) to stdout")
    _add_common_flags(p)
    p.add_argument("--from-t", type=float, dest="from_t",
                   help="average from this time instead of 0 [1/kappa0]")
    p.set_defaults(func=_cmd_orderparam)

    p = sub.add_parser("nm", help="backflow (non-Markovianity) measure to stdout")
    _add_common_flags(p)
    p.set_defaults(func=_cmd_nm)

    p = sub.add_parser("qfi", help="drive-frequency QFI scan as CSV")
    _add_common_flags(p)
    p.add_argument("--delta-omega", type=float, dest="delta_omega",
                   help="finite-difference step [kappa0] (default 1e-4)")
    p.add_argument("--omega0-min", type=float, help="scan start [kappa0]")
    p.add_argument("--omega0-max", type=float, help="scan end [kappa0]")
    p.add_argument("--omega0-step", type=float, default=0.01,
                   help="scan step [kappa0] (default 0.01)")
    p.add_argument("--out", required=True, help="output CSV path")
    p.set_defaults(func=_cmd_qfi)

    p = sub.add_parser("sweep", help="phase-diagram sweep as CSV + metadata JSON")
    _add_common_flags(p)
    p.add_argument("--jobs", type=int, help="worker processes (default 1)")
    p.add_argument("--omega0-grid", type=str,
                   help="omega0 axis 'lo:hi:step' [kappa0] "
                        "(default 0.02:2.0:0.02)")
    p.add_argument("--m-grid", type=str,
                   help="m axis 'lo:hi:step' [kappa0] (default 0.05:4.0:0.05)")
    p.add_argument("--out", required=True, help="output CSV path")
    p.set_defaults(func=_cmd_sweep)

    p = sub.add_parser("fig", help="named presets emitting plot-ready data")
    p.add_argument("name", choices=FIG_NAMES, help="preset name")
    _add_common_flags(p)
    p.add_argument("--jobs", type=int, help="worker processes for scans")
    p.add_argument("--outdir", default=".", help="output directory")
    p.set_defaults(func=_cmd_fig)

    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except StepSizeUnderflow as exc:
        print(f"btcsim: numerical failure: {exc}", file=sys.stderr)
        return NUMERICAL_ERROR
    except (ValueError, OSError, json.JSONDecodeError) as exc:
        print(f"btcsim: error: {exc}", file=sys.stderr)
        return USAGE_ERROR


if __name__ == "__main__":
    sys.exit(main())
