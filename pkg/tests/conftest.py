from __future__ import annotations

import numpy as np
import pytest

from btcsim import (
    BathParams,
    IntegratorConfig,
    ModelParams,
    constant_kappa_mode,
    integrate,
)


@pytest.fixture(scope="session")
def default_cfg():
    return IntegratorConfig()


@pytest.fixture(scope="session")
def btc_trajectory(default_cfg):
    """Flagship limit-cycle run: omega0 = 0.3, m = kappa0/4."""
    return integrate(ModelParams(0.3), BathParams(spectral_width_m=0.25), default_cfg)


@pytest.fixture(scope="session")
def tiss_trajectory(default_cfg):
    """Strong-dissipation constant-rate run: omega0 = 0.5, kappa = 1."""
    bath = constant_kappa_mode(BathParams())
    return integrate(ModelParams(0.5), bath, default_cfg)


@pytest.fixture(scope="session")
def libration_trajectory(default_cfg):
    """Very weak drive: omega0 = 0.02, m = kappa0/4 (closed arc, no loop)."""
    return integrate(ModelParams(0.02), BathParams(spectral_width_m=0.25), default_cfg)


@pytest.fixture(scope="session")
def rng():
    return np.random.default_rng(20260810)
