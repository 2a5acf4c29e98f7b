"""Parameter grids: phase diagram over (omega0, m) and the fixed-drive
backflow scan.

Cells are independent pure computations distributed over a process
pool; results are buffered and emitted in deterministic row-major
(m, omega0) order, so output is identical at any parallelism level.
Failed cells carry an error sentinel instead of aborting the sweep.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import List, Optional, Sequence

import numpy as np

from .analysis import (
    AnalysisThresholds,
    DEFAULT_THRESHOLDS,
    classify_phase,
    nm_measure,
    power_spectrum,
)
from .integrator import IntegratorConfig, integrate
from .model import BathParams, ClampMode, ModelParams

__all__ = [
    "SweepGrid",
    "CellResult",
    "run_sweep",
    "fig4_scan",
    "write_cells_csv",
    "CELL_CSV_HEADER",
]

ERROR_LABEL = "ERROR"

CELL_CSV_HEADER = (
    "omega0,m,label,peak_ratio,mu,nm_measure,amplitude,closure_error,"
    "multiplicity,norm_drift_max,cp_violated"
)


def default_omega0_values() -> np.ndarray:
    """omega0/kappa0 in {0.02, 0.04, ..., 2.0}."""
    return np.round(np.arange(1, 101) * 0.02, 10)


def default_m_values() -> np.ndarray:
    """m/kappa0 in {0.05, 0.10, ..., 4.0}."""
    return np.round(np.arange(1, 81) * 0.05, 10)


@dataclass(frozen=True)
class SweepGrid:
    """2-D grid (omega0 x m) with the shared physics and analysis config."""

    omega0_values: Sequence[float] = field(default_factory=default_omega0_values)
    m_values: Sequence[float] = field(default_factory=default_m_values)
    omega_x: float = 0.0
    omega_z: float = 0.0
    kappa0: float = 1.0
    kappa_max: float = 10.0
    clamp_mode: ClampMode = ClampMode.SIGN_PRESERVING
    constant_rate: bool = False
    config: IntegratorConfig = field(default_factory=IntegratorConfig)
    thresholds: AnalysisThresholds = DEFAULT_THRESHOLDS
    nm_quadrature_step: float = 1e-3

    def __post_init__(self):
        if len(self.omega0_values) == 0 or len(self.m_values) == 0:
            raise ValueError("grids must be non-empty")
        for name, vals in (("omega0_values", self.omega0_values),
                           ("m_values", self.m_values)):
            arr = np.asarray(vals, dtype=float)
            if np.any(np.diff(arr) <= 0):
                raise ValueError(f"{name} must be strictly ascending")
        if np.asarray(self.m_values, dtype=float).min() <= 0:
            raise ValueError("m_values must be positive")
        if np.asarray(self.omega0_values, dtype=float).min() < 0:
            raise ValueError("omega0_values must be non-negative")

    def bath_for(self, m: float) -> BathParams:
        return BathParams(
            kappa0=self.kappa0,
            spectral_width_m=m,
            kappa_max=self.kappa_max,
            clamp_mode=self.clamp_mode,
            constant_rate=self.constant_rate,
        )

    def model_for(self, omega0: float) -> ModelParams:
        return ModelParams(omega0=omega0, omega_x=self.omega_x, omega_z=self.omega_z)


@dataclass(frozen=True)
class CellResult:
    """Per-cell analysis outputs for phase-diagram emission."""

    omega0: float
    m: float
    label: str
    peak_ratio: float
    mu: float
    nm_measure: float
    amplitude: float
    closure_error: float
    multiplicity: Optional[int]
    norm_drift_max: float
    cp_violated: bool
    error: Optional[str] = None

    def csv_row(self) -> str:
        mult = "" if self.multiplicity is None else str(self.multiplicity)
        return (
            f"{self.omega0:.17g},{self.m:.17g},{self.label},{self.peak_ratio:.17g},"
            f"{self.mu:.17g},{self.nm_measure:.17g},{self.amplitude:.17g},"
            f"{self.closure_error:.17g},{mult},{self.norm_drift_max:.17g},"
            f"{int(self.cp_violated)}"
        )


def _evaluate_cell(args) -> CellResult:
    grid, omega0, m, nm = args
    try:
        traj = integrate(grid.model_for(omega0), grid.bath_for(m), grid.config)
        spec = power_spectrum(traj, thresholds=grid.thresholds)
        report = classify_phase(traj, spec, thresholds=grid.thresholds, nm=nm)
        return CellResult(
            omega0=omega0,
            m=m,
            label=report.label.value,
            peak_ratio=report.peak_ratio,
            mu=report.mu,
            nm_measure=nm,
            amplitude=report.amplitude,
            closure_error=report.closure_error,
            multiplicity=report.multiplicity,
            norm_drift_max=traj.norm_drift_max,
            cp_violated=traj.cp_violated,
        )
    except Exception as exc:  # failed cells must not poison the sweep
        return CellResult(
            omega0=omega0,
            m=m,
            label=ERROR_LABEL,
            peak_ratio=math.nan,
            mu=math.nan,
            nm_measure=nm,
            amplitude=math.nan,
            closure_error=math.nan,
            multiplicity=None,
            norm_drift_max=math.nan,
            cp_violated=False,
            error=f"{type(exc).__name__}: {exc}",
        )


def run_sweep(grid: SweepGrid, parallelism: int = 1) -> List[CellResult]:
    """Evaluate every (omega0, m) cell: integrate, analyze, classify.

    Returns one CellResult per cell, row-major by (m, omega0),
    bit-identical regardless of ``parallelism``.  The backflow measure
    depends only on the bath, so it is computed once per m column.
    """
    if not (isinstance(parallelism, int) and parallelism >= 1):
        raise ValueError("parallelism must be a positive integer")
    nm_by_m = {
        float(m): nm_measure(
            grid.bath_for(float(m)),
            horizon=grid.config.horizon_T,
            quadrature_step=grid.nm_quadrature_step,
        )
        for m in grid.m_values
    }
    tasks = [
        (grid, float(omega0), float(m), nm_by_m[float(m)])
        for m in grid.m_values
        for omega0 in grid.omega0_values
    ]
    if parallelism == 1:
        return [_evaluate_cell(t) for t in tasks]
    with ProcessPoolExecutor(max_workers=parallelism) as pool:
        chunk = max(1, len(tasks) // (8 * parallelism))
        return list(pool.map(_evaluate_cell, tasks, chunksize=chunk))


def default_fig4_m_values() -> np.ndarray:
    """Descending m grid for the fixed-drive scan: dense near the
    regime boundary at m = 2 kappa0 and at the deep-backflow end."""
    coarse = np.arange(1.90, 0.149, -0.05)
    fine_top = np.arange(1.995, 1.904, -0.005)
    fine_bottom = np.array([0.12, 0.10, 0.09, 0.08, 0.07, 0.06, 0.05, 0.04, 0.03, 0.02])
    return np.round(np.concatenate([fine_top, coarse, fine_bottom]), 10)


def fig4_scan(
    omega0_over_kappa0: float = 0.5,
    m_values: Optional[Sequence[float]] = None,
    grid: Optional[SweepGrid] = None,
    parallelism: int = 1,
) -> List[CellResult]:
    """Fixed-drive scan over descending m: backflow measure, peak ratio
    and label per point (the raw material of the ratio-vs-backflow trend).
    """
    if m_values is None:
        m_values = default_fig4_m_values()
    m_arr = np.asarray(m_values, dtype=float)
    if np.any(m_arr <= 0):
        raise ValueError("m_values must be positive")
    if np.any(np.diff(m_arr) >= 0):
        raise ValueError("m_values must be strictly descending")
    base = grid if grid is not None else SweepGrid()
    nm_by_m = {
        float(m): nm_measure(
            base.bath_for(float(m)),
            horizon=base.config.horizon_T,
            quadrature_step=base.nm_quadrature_step,
        )
        for m in m_arr
    }
    omega0 = omega0_over_kappa0 * base.kappa0
    tasks = [(base, omega0, float(m), nm_by_m[float(m)]) for m in m_arr]
    if parallelism == 1:
        return [_evaluate_cell(t) for t in tasks]
    with ProcessPoolExecutor(max_workers=parallelism) as pool:
        return list(pool.map(_evaluate_cell, tasks, chunksize=4))


def write_cells_csv(cells: Sequence[CellResult], path_or_buf) -> None:
    """Emit the sweep table with the pinned column schema."""
    own = isinstance(path_or_buf, (str, bytes))
    f = open(path_or_buf, "w", newline="") if own else path_or_buf
    try:
        f.write(CELL_CSV_HEADER + "\n")
        for c in cells:
            f.write(c.csv_row() + "\n")
    finally:
        if own:
            f.close()
