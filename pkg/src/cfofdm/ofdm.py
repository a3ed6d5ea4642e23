"""Uplink OFDM transmit grids and receive-signal synthesis.

The full band of N subcarriers splits into coherence blocks of N_c
subcarriers; every full block carries the same local pilot layout, and each
UE repeats its pilot sequence in every full block. All remaining cells (and
the whole truncated last block, if any) carry unit-power data.

Three receive models are provided:

* synthesize_time — the exact model: per-symbol IDFT, per-sample phase
  rotation by the link's oscillator path, DFT at the receiver. Phase noise
  shows up as a circular convolution of the subcarrier symbols with the
  drift-DFT coefficients (common phase error + inter-carrier interference).
* synthesize_freq — the same model assembled directly in the frequency
  domain; useful as a cross-check of the time-domain route.
* synthesize_mismatched — a per-subcarrier rotation model without
  inter-carrier interference (each subcarrier sees e^{j theta} at its own
  sample instant). This is the generative model under which single-carrier
  processing is exact.

Noise is drawn as i.i.d. CN(0, noise_power) time-domain samples and carried
through the receiver DFT (unitary pair), so subcarrier noise has the same
per-entry variance.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .config import PilotPlan, ScenarioConfig
from .phase_noise import PnBlock, phase_drift_dft

__all__ = [
    "TxGrid",
    "RxFrame",
    "gen_tx_grid",
    "synthesize_time",
    "synthesize_freq",
    "synthesize_mismatched",
    "stack_pilots",
    "representative_subcarriers",
]


@dataclass
class TxGrid:
    """Transmitted unit-power symbols for all UEs over one coherence block.

    symbols: (K, tau_c, N); pilot_mask: (tau_c, N) bool, True on pilot cells
    (shared by all UEs — UE separation is by sequence, not by cell).
    """

    symbols: np.ndarray
    pilot_mask: np.ndarray
    plan: PilotPlan


@dataclass
class RxFrame:
    """Received subcarrier observations y: (L, tau_c, N)."""

    y: np.ndarray


def gen_tx_grid(rng: np.random.Generator, scenario: ScenarioConfig, data: str = "gaussian") -> TxGrid:
    """Draw data symbols and stamp pilot sequences into every full block.

    data: 'gaussian' for CN(0,1) payloads, 'qpsk' for unit-power QPSK. The
    RNG consumption is independent of the pilot pattern (data is drawn for
    every cell, then pilot cells are overwritten).
    """
    grid, geom, plan = scenario.grid, scenario.coherence, scenario.pilot_plan()
    k, tau_c, n = scenario.n_ues, geom.block_symbols, grid.n_subcarriers
    if data == "gaussian":
        x = (rng.standard_normal((k, tau_c, n)) + 1j * rng.standard_normal((k, tau_c, n))) / np.sqrt(2.0)
    elif data == "qpsk":
        x = np.exp(1j * (np.pi / 2.0 * rng.integers(0, 4, size=(k, tau_c, n)) + np.pi / 4.0))
    else:
        raise ValueError(f"unknown data kind {data!r}")
    mask = np.zeros((tau_c, n), dtype=bool)
    seq_idx = plan.ue_pilot_indices(k)
    for block in range(geom.n_blocks(grid)):
        if not geom.is_full_block(block, grid):
            continue
        subs = plan.global_subcarriers(block, geom, grid)
        mask[plan.symbols, subs] = True
        x[:, plan.symbols, subs] = plan.book[seq_idx, :]
    return TxGrid(symbols=x, pilot_mask=mask, plan=plan)


def _expand_blocks(h_blocks: np.ndarray, block_subcarriers: int, n_subcarriers: int) -> np.ndarray:
    """Per-block gains (..., n_blocks) -> full frequency response (..., N)."""
    n_blocks = h_blocks.shape[-1]
    reps = np.minimum(block_subcarriers, n_subcarriers - block_subcarriers * np.arange(n_blocks))
    return np.repeat(h_blocks, reps, axis=-1)


def _draw_noise(rng: np.random.Generator, noise_power: float, shape) -> np.ndarray:
    scale = np.sqrt(noise_power / 2.0)
    return scale * (rng.standard_normal(shape) + 1j * rng.standard_normal(shape))


def _dft(v: np.ndarray, use_fft: bool, inverse: bool) -> np.ndarray:
    if use_fft:
        return np.fft.ifft(v, axis=-1) if inverse else np.fft.fft(v, axis=-1)
    n = v.shape[-1]
    w = np.exp((2j if inverse else -2j) * np.pi * np.outer(np.arange(n), np.arange(n)) / n)
    out = v @ w.T
    return out / n if inverse else out


def synthesize_time(
    rng: np.random.Generator,
    tx: TxGrid,
    h_blocks: np.ndarray,
    pn: PnBlock,
    scenario: ScenarioConfig,
    use_fft: bool = True,
) -> RxFrame:
    """Exact receive model via the time domain.

    Per UE/AP/symbol: x_time = sqrt(N)*IDFT(h .* X), rotate sample-wise by
    e^{j theta}, sum over UEs with amplitude sqrt(p), add time-domain noise,
    and DFT back with 1/sqrt(N). Without phase noise this returns
    y = h .* X + w exactly.
    """
    grid, geom = scenario.grid, scenario.coherence
    n, tau_c, l_aps = grid.n_subcarriers, geom.block_symbols, scenario.n_aps
    freq = _expand_blocks(h_blocks, geom.block_subcarriers, n)  # (K, L, N)
    amp = np.sqrt(scenario.tx_power)
    w_time = _draw_noise(rng, scenario.noise_power, (l_aps, tau_c, n))
    y = np.empty((l_aps, tau_c, n), dtype=complex)
    for l in range(l_aps):
        hx = freq[:, l, None, :] * tx.symbols  # (K, tau_c, N)
        x_time = np.sqrt(n) * _dft(hx, use_fft, inverse=True)
        theta = pn.ue + pn.ap[0 if pn.shared_lo else l][None]
        y_time = amp * np.sum(np.exp(1j * theta) * x_time, axis=0) + w_time[l]
        y[l] = _dft(y_time, use_fft, inverse=False) / np.sqrt(n)
    return RxFrame(y=y)


def synthesize_freq(
    rng: np.random.Generator,
    tx: TxGrid,
    h_blocks: np.ndarray,
    pn: PnBlock,
    scenario: ScenarioConfig,
    method: str = "fft",
) -> RxFrame:
    """Exact receive model assembled in the frequency domain:
    y = sum_k sqrt(p) * (J_{k,l} (x) (h_{k,l} .* X_k)) + w, with (x) the
    circular convolution over subcarriers and J the drift-DFT of the link
    phase path. method 'direct' uses the O(N^2) convolution sum.

    Draws the same time-domain noise as synthesize_time (then transforms it),
    so both routes consume identical randomness for identical inputs.
    """
    grid, geom = scenario.grid, scenario.coherence
    n, tau_c, l_aps = grid.n_subcarriers, geom.block_symbols, scenario.n_aps
    freq = _expand_blocks(h_blocks, geom.block_subcarriers, n)
    amp = np.sqrt(scenario.tx_power)
    w_time = _draw_noise(rng, scenario.noise_power, (l_aps, tau_c, n))
    y = np.empty((l_aps, tau_c, n), dtype=complex)
    for l in range(l_aps):
        acc = np.zeros((tau_c, n), dtype=complex)
        for k in range(scenario.n_ues):
            v = freq[k, l][None, :] * tx.symbols[k]  # (tau_c, N)
            j = phase_drift_dft(pn.ue[k] + pn.ap[0 if pn.shared_lo else l])
            if method == "fft":
                acc += np.fft.ifft(np.fft.fft(j, axis=-1) * np.fft.fft(v, axis=-1), axis=-1)
            elif method == "direct":
                idx = (np.arange(n)[:, None] - np.arange(n)[None, :]) % n
                for t in range(tau_c):
                    acc[t] += j[t][idx] @ v[t]
            else:
                raise ValueError(f"unknown method {method!r}")
        y[l] = amp * acc + np.fft.fft(w_time[l], axis=-1) / np.sqrt(n)
    return RxFrame(y=y)


def synthesize_mismatched(
    rng: np.random.Generator,
    tx: TxGrid,
    h_blocks: np.ndarray,
    pn: PnBlock,
    scenario: ScenarioConfig,
) -> RxFrame:
    """Interference-free rotation model: subcarrier n of symbol tau is
    rotated by the oscillator phase at its own sample instant,
    y[tau, n] = sum_k sqrt(p) e^{j theta_{k,l}[tau, n]} h X + w. No
    inter-carrier interference is generated; single-carrier processing is
    matched to this model.
    """
    grid, geom = scenario.grid, scenario.coherence
    n, tau_c, l_aps = grid.n_subcarriers, geom.block_symbols, scenario.n_aps
    freq = _expand_blocks(h_blocks, geom.block_subcarriers, n)
    amp = np.sqrt(scenario.tx_power)
    w = _draw_noise(rng, scenario.noise_power, (l_aps, tau_c, n))
    y = np.empty((l_aps, tau_c, n), dtype=complex)
    for l in range(l_aps):
        theta = pn.ue + pn.ap[0 if pn.shared_lo else l][None]  # (K, tau_c, N)
        y[l] = amp * np.sum(np.exp(1j * theta) * freq[:, l, None, :] * tx.symbols, axis=0) + w[l]
    return RxFrame(y=y)


def representative_subcarriers(scenario: ScenarioConfig) -> np.ndarray:
    """One representative data subcarrier of block 0 per symbol: the free
    subcarrier nearest that symbol's own pilot (ties toward the lower index),
    so the evaluation cell sits one sample from the freshest pilot. For the
    exact-model tracks the choice is immaterial (per-symbol estimates are
    block-constant); for the rotation-model track it avoids charging the
    evaluation cell a pilot-to-cell oscillator drift that a serial system
    would not incur. Falls back to subcarrier 0 when a symbol is fully
    pilots."""
    plan = scenario.pilot_plan()
    n_c = scenario.coherence.block_subcarriers
    out = np.zeros(scenario.coherence.block_symbols, dtype=int)
    for tau in range(len(out)):
        own = plan.subcarriers[plan.symbols == tau]
        taken = set(own.tolist())
        free = [n for n in range(n_c) if n not in taken]
        if not free:
            out[tau] = 0
        elif own.size == 0:
            out[tau] = free[0]
        else:
            anchor = int(own[0])
            out[tau] = min(free, key=lambda n: (abs(n - anchor), n))
    return out


def stack_pilots(y: np.ndarray, scenario: ScenarioConfig, block: int = 0) -> np.ndarray:
    """Extract the pilot observations of one coherence block.

    y: (L, tau_c, N) -> (L, tau_p) with column t the cell (symbol_t,
    subcarrier_t) of the block's pilot layout. Flattening C-order gives the
    AP-major stack used by centralized processing.
    """
    plan = scenario.pilot_plan()
    subs = plan.global_subcarriers(block, scenario.coherence, scenario.grid)
    return y[:, plan.symbols, subs]
