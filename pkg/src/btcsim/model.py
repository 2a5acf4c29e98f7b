"""Physical parameters and the time-dependent collective decay rate.

All quantities are expressed in units of the base dissipation rate
``kappa0`` (frequencies in kappa0, times in 1/kappa0).  The decay rate
kappa(t) interpolates between a memoryless environment (spectral width
m > 2*kappa0, kappa(t) >= 0 for all t) and a memory-bearing one
(m < 2*kappa0), where kappa(t) periodically turns negative and
information flows back into the system.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from enum import Enum
from typing import Optional, Union

import numpy as np

__all__ = [
    "ClampMode",
    "ModelParams",
    "BathParams",
    "BlochState",
    "constant_kappa_mode",
    "kappa_raw",
    "kappa",
    "mean_field_rhs",
    "markovian_fixed_point",
]

ArrayLike = Union[float, np.ndarray]


class ClampMode(Enum):
    """How the cap kappa_max is applied to large |kappa| excursions.

    SIGN_PRESERVING maps them to +/-kappa_max, keeping the sign of the
    excursion (and hence the backflow intervals).  LITERAL_POSITIVE maps
    every excursion to +kappa_max, the literal reading of the printed
    case split.
    """

    SIGN_PRESERVING = "sign-preserving"
    LITERAL_POSITIVE = "literal-positive"


@dataclass(frozen=True)
class ModelParams:
    """Coherent drive and interaction frequencies, in units of kappa0.

    omega0 is the two-level drive frequency; omega_x and omega_z are the
    collective interaction strengths, both zero in the baseline regime.
    """

    omega0: float
    omega_x: float = 0.0
    omega_z: float = 0.0

    def __post_init__(self):
        if not (self.omega0 >= 0.0):
            raise ValueError(f"omega0 must be >= 0, got {self.omega0}")
        for name in ("omega_x", "omega_z"):
            v = getattr(self, name)
            if not math.isfinite(v):
                raise ValueError(f"{name} must be finite, got {v}")

    def with_omega0(self, omega0: float) -> "ModelParams":
        return replace(self, omega0=omega0)


@dataclass(frozen=True)
class BathParams:
    """Dissipation parameters of the structured environment.

    kappa0 sets the overall dissipation scale, spectral_width_m the bath
    spectral width, kappa_max the cap on |kappa(t)|.  With
    ``constant_rate`` set, kappa(t) == kappa0 identically (the memoryless
    reference limit m >> kappa0); see :func:`constant_kappa_mode`.
    """

    kappa0: float = 1.0
    spectral_width_m: float = 4.0
    kappa_max: float = 10.0
    clamp_mode: ClampMode = ClampMode.SIGN_PRESERVING
    constant_rate: bool = False

    def __post_init__(self):
        if not (self.kappa0 > 0.0):
            raise ValueError(f"kappa0 must be > 0, got {self.kappa0}")
        if not (self.spectral_width_m > 0.0):
            raise ValueError(
                f"spectral_width_m must be > 0, got {self.spectral_width_m}"
            )
        if not (self.kappa_max > self.kappa0):
            raise ValueError(
                f"kappa_max must exceed kappa0, got {self.kappa_max} <= {self.kappa0}"
            )

    def markovian(self) -> bool:
        """True iff m > 2*kappa0 (equality is the non-Markovian boundary)."""
        return self.spectral_width_m > 2.0 * self.kappa0

    @property
    def d(self) -> float:
        """sqrt(m^2 - 2 m kappa0), real only in the Markovian branch."""
        if not self.markovian():
            raise ValueError("d is defined only for m > 2*kappa0")
        m = self.spectral_width_m
        return math.sqrt(m * m - 2.0 * m * self.kappa0)

    @property
    def d_hat(self) -> float:
        """sqrt(2 m kappa0 - m^2), real only in the non-Markovian branch."""
        if self.markovian():
            raise ValueError("d_hat is defined only for m <= 2*kappa0")
        m = self.spectral_width_m
        return math.sqrt(2.0 * m * self.kappa0 - m * m)

    @property
    def omega_d(self) -> float:
        """Oscillation frequency of the decay rate, d/2 (or d_hat/2)."""
        return (self.d if self.markovian() else self.d_hat) / 2.0

    def kappa_infty(self) -> float:
        """Late-time decay rate 2 kappa0 m / (d + m) of the Markovian branch."""
        if self.constant_rate:
            return self.kappa0
        if not self.markovian():
            raise ValueError("kappa_infty requires the Markovian branch")
        m = self.spectral_width_m
        return 2.0 * self.kappa0 * m / (self.d + m)


def constant_kappa_mode(bath: BathParams) -> BathParams:
    """Bath whose rate is pinned to kappa0 for all times.

    This is the memoryless reference setting (formally m >> kappa0) used
    as the baseline against which the structured bath is compared.
    """
    return replace(bath, constant_rate=True)


@dataclass(frozen=True)
class BlochState:
    """Normalized magnetization vector at one instant."""

    m_x: float
    m_y: float
    m_z: float
    t: float = 0.0

    @property
    def vector(self) -> np.ndarray:
        return np.array([self.m_x, self.m_y, self.m_z])

    def norm_sq(self) -> float:
        return self.m_x**2 + self.m_y**2 + self.m_z**2


def kappa_raw(bath: BathParams, t: ArrayLike) -> ArrayLike:
    """Uncapped decay rate kappa(t).

    Markovian branch (m > 2 kappa0):

        kappa = 2 m kappa0 sinh(t d/2) / (d cosh(t d/2) + m sinh(t d/2))

    evaluated in the overflow-safe tanh form.  Non-Markovian branch
    (m < 2 kappa0): sinh/cosh replaced by sin/cos with d -> d_hat; the
    denominator zeros are genuine poles and map to +/-inf.  At the branch
    boundary m == 2 kappa0 the common limit m kappa0 t / (1 + m t / 2)
    is used.  Constant-rate baths return kappa0 identically.

    Accepts scalar or ndarray ``t`` (t >= 0).
    """
    t_arr = np.asarray(t, dtype=float)
    if np.any(t_arr < 0):
        raise ValueError("t must be >= 0")
    scalar = t_arr.ndim == 0
    t_arr = np.atleast_1d(t_arr)

    k0 = bath.kappa0
    m = bath.spectral_width_m
    if bath.constant_rate:
        out = np.full_like(t_arr, k0)
    elif m > 2.0 * k0:
        d = math.sqrt(m * m - 2.0 * m * k0)
        th = np.tanh(0.5 * t_arr * d)
        out = 2.0 * m * k0 * th / (d + m * th)
    elif m < 2.0 * k0:
        dh = math.sqrt(2.0 * m * k0 - m * m)
        x = 0.5 * t_arr * dh
        s = np.sin(x)
        c = np.cos(x)
        with np.errstate(divide="ignore"):
            out = 2.0 * m * k0 * s / (dh * c + m * s)
    else:
        out = m * k0 * t_arr / (1.0 + 0.5 * m * t_arr)
    return float(out[0]) if scalar else out


def kappa(bath: BathParams, t: ArrayLike) -> ArrayLike:
    """Capped decay rate: kappa_raw where |kappa_raw| < kappa_max.

    Larger excursions are clamped to +/-kappa_max (sign-preserving,
    default) or to +kappa_max (literal-positive).  Always finite.
    """
    raw = kappa_raw(bath, t)
    kmax = bath.kappa_max
    if bath.clamp_mode is ClampMode.LITERAL_POSITIVE:
        return np.where(np.abs(raw) < kmax, raw, kmax) if isinstance(raw, np.ndarray) else (
            raw if abs(raw) < kmax else kmax
        )
    clipped = np.clip(raw, -kmax, kmax)
    # sign-preserving: kappa_raw == +/-inf lands on the matching cap
    if isinstance(clipped, np.ndarray):
        return np.nan_to_num(clipped, nan=kmax, posinf=kmax, neginf=-kmax)
    return float(np.nan_to_num(clipped, nan=kmax, posinf=kmax, neginf=-kmax))


def mean_field_rhs(model: ModelParams, kappa_t: float, s) -> np.ndarray:
    """Time derivative of the magnetization under drive and decay.

    Implements the closed nonlinear Bloch equations

        dm_x/dt = -2 w_z m_y m_z + k m_x m_z
        dm_y/dt =  2 (w_z - w_x) m_x m_z - w_0 m_z + k m_y m_z
        dm_z/dt =  w_0 m_y - k (m_x^2 + m_y^2) + 2 w_x m_x m_y

    which conserve the norm: s . f(s) == 0 identically.
    """
    v = s.vector if isinstance(s, BlochState) else np.asarray(s, dtype=float)
    mx, my, mz = v
    if not np.all(np.isfinite(v)):
        raise ValueError(f"state components must be finite, got {v}")
    w0, wx, wz = model.omega0, model.omega_x, model.omega_z
    k = kappa_t
    return np.array(
        [
            -2.0 * wz * my * mz + k * mx * mz,
            2.0 * (wz - wx) * mx * mz - w0 * mz + k * my * mz,
            w0 * my - k * (mx * mx + my * my) + 2.0 * wx * mx * my,
        ]
    )


def markovian_fixed_point(
    model: ModelParams, kappa_const: float
) -> Optional[BlochState]:
    """Stable stationary state under a constant rate, or None.

    Valid only for omega_x == omega_z == 0.  For omega0 <= kappa the
    magnetization relaxes to (0, omega0/kappa, -sqrt(1 - (omega0/kappa)^2));
    for omega0 > kappa no stable stationary point exists on the sphere
    (persistent-oscillation regime) and None is returned.
    """
    if model.omega_x != 0.0 or model.omega_z != 0.0:
        raise ValueError("fixed-point oracle requires omega_x == omega_z == 0")
    if not (kappa_const > 0.0):
        raise ValueError("kappa_const must be > 0")
    r = model.omega0 / kappa_const
    if r > 1.0:
        return None
    return BlochState(0.0, r, -math.sqrt(max(0.0, 1.0 - r * r)), t=math.inf)
