"""Simulator and analysis toolkit for dissipative collective-spin
dynamics under a time-dependent (memory-bearing) decay rate: mean-field
trajectories, dynamical-phase classification, drive-frequency
sensitivity, and phase-diagram sweeps.
"""

__version__ = "0.1.0"

from .analysis import (
    AnalysisThresholds,
    PhaseLabel,
    PhaseReport,
    Spectrum,
    WindowTooShort,
    classify_phase,
    nm_measure,
    order_parameter,
    peak_ratio,
    power_spectrum,
)
from .integrator import (
    IntegratorConfig,
    StepSizeUnderflow,
    Trajectory,
    constant_kappa_mode,
    integrate,
)
from .metrology import (
    QfiResult,
    fidelity_qubit,
    qfi_from_trajectories,
    qfi_per_spin,
    qfi_total,
)
from .model import (
    BathParams,
    BlochState,
    ClampMode,
    ModelParams,
    kappa,
    kappa_raw,
    markovian_fixed_point,
    mean_field_rhs,
)
from .sweep import CellResult, SweepGrid, fig4_scan, run_sweep

__all__ = [
    "__version__",
    "AnalysisThresholds",
    "BathParams",
    "BlochState",
    "CellResult",
    "ClampMode",
    "IntegratorConfig",
    "ModelParams",
    "PhaseLabel",
    "PhaseReport",
    "QfiResult",
    "Spectrum",
    "StepSizeUnderflow",
    "SweepGrid",
    "Trajectory",
    "WindowTooShort",
    "classify_phase",
    "constant_kappa_mode",
    "fidelity_qubit",
    "fig4_scan",
    "integrate",
    "kappa",
    "kappa_raw",
    "markovian_fixed_point",
    "mean_field_rhs",
    "nm_measure",
    "order_parameter",
    "peak_ratio",
    "power_spectrum",
    "qfi_from_trajectories",
    "qfi_per_spin",
    "qfi_total",
    "run_sweep",
]
