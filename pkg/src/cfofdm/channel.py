"""AP/UE geometry, large-scale fading, and per-block Rayleigh channels.

Large-scale coefficients follow a log-distance model
beta_dB = -30.5 - 36.7*log10(d) + shadowing, with i.i.d. log-normal shadowing
(4 dB std by default) and a minimum-distance clamp; a uniform mode
(beta = const) is available for controlled experiments.

Small-scale fading is frequency-flat per coherence block: each (UE, AP,
block) triple gets an independent CN(0, beta) coefficient, constant over the
block's subcarriers and symbols and independent across blocks.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .config import ConfigError, ScenarioConfig

__all__ = ["LargeScale", "gen_large_scale", "gen_block_channels", "time_domain_taps"]


@dataclass
class LargeScale:
    """Network geometry and large-scale gains.

    ap_pos, ue_pos: (L, 2) and (K, 2) coordinates in meters.
    beta: (K, L) large-scale power gains (linear).
    """

    ap_pos: np.ndarray
    ue_pos: np.ndarray
    beta: np.ndarray


def _ap_positions(rng: np.random.Generator, scenario: ScenarioConfig) -> np.ndarray:
    side = scenario.ap_area_side
    if scenario.ap_layout == "uniform":
        return rng.uniform(0.0, side, size=(scenario.n_aps, 2))
    if scenario.ap_layout == "stripe":
        # evenly spaced along the perimeter of a side x side square
        perimeter = 4.0 * side
        s = (np.arange(scenario.n_aps) + 0.5) / scenario.n_aps * perimeter
        pos = np.zeros((scenario.n_aps, 2))
        for i, si in enumerate(s):
            edge, off = divmod(si, side)
            if edge == 0:
                pos[i] = (off, 0.0)
            elif edge == 1:
                pos[i] = (side, off)
            elif edge == 2:
                pos[i] = (side - off, side)
            else:
                pos[i] = (0.0, side - off)
        return pos
    raise ConfigError(f"unknown ap_layout {scenario.ap_layout!r}")


def gen_large_scale(rng: np.random.Generator, scenario: ScenarioConfig) -> LargeScale:
    """Draw AP/UE positions and large-scale gains for one network snapshot.

    UEs are dropped uniformly in a centered ue_area_side square (inside the AP
    area); distances are clamped below at min_distance before the path-loss
    law is applied.
    """
    ap_pos = _ap_positions(rng, scenario)
    margin = 0.5 * (scenario.ap_area_side - scenario.ue_area_side)
    ue_pos = margin + rng.uniform(0.0, scenario.ue_area_side, size=(scenario.n_ues, 2))
    if scenario.beta_model == "uniform":
        beta = np.full((scenario.n_ues, scenario.n_aps), scenario.beta_uniform_value)
        return LargeScale(ap_pos=ap_pos, ue_pos=ue_pos, beta=beta)
    if scenario.beta_model != "log-distance":
        raise ConfigError(f"unknown beta_model {scenario.beta_model!r}")
    d = np.linalg.norm(ue_pos[:, None, :] - ap_pos[None, :, :], axis=-1)
    d = np.maximum(d, scenario.min_distance)
    beta_db = -30.5 - 36.7 * np.log10(d)
    if scenario.shadowing_std_db > 0:
        beta_db = beta_db + scenario.shadowing_std_db * rng.standard_normal(d.shape)
    return LargeScale(ap_pos=ap_pos, ue_pos=ue_pos, beta=10.0 ** (beta_db / 10.0))


def gen_block_channels(rng: np.random.Generator, beta: np.ndarray, n_blocks: int) -> np.ndarray:
    """Frequency-flat per-block channels h ~ CN(0, beta), shape
    (K, L, n_blocks), independent across all three axes."""
    k, l = beta.shape
    scale = np.sqrt(beta / 2.0)[:, :, None]
    re = rng.standard_normal((k, l, n_blocks))
    im = rng.standard_normal((k, l, n_blocks))
    return scale * (re + 1j * im)


def time_domain_taps(h_blocks: np.ndarray, block_subcarriers: int, n_subcarriers: int) -> np.ndarray:
    """Impulse response implied by the piecewise-constant frequency response.

    Expands per-block gains (..., n_blocks) to a length-n_subcarriers
    frequency response (last block truncated) and returns its unitary-scaled
    IDFT: taps[m] = (1/N) sum_f H[f] e^{j*2*pi*f*m/N}. With frequency-flat
    blocks the energy concentrates in the first few taps, which is what makes
    the cyclic prefix assumption consistent.
    """
    n_blocks = h_blocks.shape[-1]
    reps = np.minimum(block_subcarriers, n_subcarriers - block_subcarriers * np.arange(n_blocks))
    freq = np.repeat(h_blocks, reps, axis=-1)
    return np.fft.ifft(freq, axis=-1)
