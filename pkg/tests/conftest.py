"""Shared fixtures: small scenarios sized for fast unit tests."""

import numpy as np
import pytest

from cfofdm import CoherenceGeometry, OfdmGrid, ScenarioConfig


def tiny_scenario(**overrides) -> ScenarioConfig:
    """Smallest useful scenario: 16 subcarriers, 4x4 blocks with 4 pilots,
    2 APs, 2 UEs, deterministic unit link gains."""
    defaults = dict(
        grid=OfdmGrid(n_subcarriers=16, n_cp=2, spacing=15e3, carrier_freq=2e9),
        coherence=CoherenceGeometry(block_subcarriers=4, block_symbols=4, n_pilots=4),
        n_aps=2,
        n_ues=2,
        gamma_ap=1e-17,
        gamma_ue=1e-17,
        tx_power=0.1,
        noise_power=1e-13,
        beta_model="uniform",
        beta_uniform_value=1e-9,
        shadowing_std_db=0.0,
        n_trials=4,
    )
    defaults.update(overrides)
    return ScenarioConfig(**defaults)


@pytest.fixture
def tiny():
    return tiny_scenario()


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
