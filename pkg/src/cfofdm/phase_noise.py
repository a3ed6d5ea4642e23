"""Wiener phase-noise traces and their second-order statistics.

Each oscillator contributes a Wiener (random-walk) phase with per-sample
increment variance sigma2 = 4*pi^2*f_c^2*gamma*T_s. The phase seen on the link
(k,l) is the sum of the UE-k and AP-l contributions; with a shared AP
oscillator all APs reuse one path.

Conventions
-----------
* OFDM symbols are 0-based; the walk starts at exactly 0 at the first sample
  of the coherence block (symbol 0, sample 0).
* Materialized traces keep only the n_subcarriers useful samples per symbol;
  between consecutive symbols the walk silently advances across the cyclic
  prefix, i.e. sample (tau, n) sits at absolute index
  tau*(n_subcarriers+n_cp)+n.
* Closed-form statistics carry a ``cp_in_lag`` switch because the two lag
  families in circulation differ on whether the symbol stride includes the
  cyclic prefix. ``per-eq`` (default) keeps each formula's native family:
  same-process autocorrelations and separate-oscillator means stride by
  n_subcarriers+n_cp, while the mean drift-DFT table and the
  shared-oscillator cross-correlation stride by n_subcarriers. ``always`` /
  ``never`` force one family everywhere. The switch is exposed rather than
  harmonized away; note that Monte-Carlo traces always advance across the CP,
  so only the ``always`` family (and any lag where the families coincide)
  matches trace-based averages.

The drift-DFT coefficient of symbol tau is
J_i = (1/N) sum_n exp(j*theta_n) exp(-j*2*pi*n*i/N), stored in FFT order
(i = 0..N-1, circular). J_0 is the common phase error; i != 0 drives
inter-carrier interference. sum_i |J_i|^2 = 1 holds per realization.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass

import numpy as np

from .config import CoherenceGeometry, LO_SHARED, OfdmGrid, ScenarioConfig

__all__ = [
    "increment_variance",
    "gen_pn_trace",
    "gen_pn_block",
    "PnBlock",
    "phase_drift_dft",
    "pn_autocorr",
    "pn_mean",
    "pn_crosscorr",
    "mean_phase_drift",
    "drift_corr_same",
    "drift_corr_cross",
    "PnStatistics",
]


def increment_variance(gamma: float, carrier_freq: float, sample_time: float) -> float:
    """Per-sample Wiener increment variance [rad^2] for an oscillator of
    quality constant gamma [s] at the given carrier and sampling period."""
    return 4.0 * np.pi**2 * carrier_freq**2 * gamma * sample_time


def _with_cp(cp_in_lag: str, family: str) -> bool:
    """Whether the symbol stride includes the cyclic prefix for a given
    formula family under the requested switch."""
    if cp_in_lag == "always":
        return True
    if cp_in_lag == "never":
        return False
    if cp_in_lag != "per-eq":
        raise ValueError(f"unknown cp_in_lag mode {cp_in_lag!r}")
    # native families: the drift-mean table and the shared-oscillator
    # cross-correlation stride by N; everything else by N + N_cp
    return family in ("autocorr", "mean")


def _stride(grid: OfdmGrid, with_cp: bool) -> int:
    return grid.samples_per_symbol if with_cp else grid.n_subcarriers


def _abs_index(tau, n, grid: OfdmGrid, with_cp: bool):
    return np.asarray(tau) * _stride(grid, with_cp) + np.asarray(n)


# ---------------------------------------------------------------------------
# trace generation
# ---------------------------------------------------------------------------


def gen_pn_trace(rng: np.random.Generator, sigma2: float, grid: OfdmGrid, n_symbols: int, n_paths: int | None = None) -> np.ndarray:
    """Generate Wiener phase paths over a coherence block.

    Returns phases of shape (n_symbols, N) — or (n_paths, n_symbols, N) when
    n_paths is given — with theta[0, 0] == 0 and an extra variance of
    sigma2*(n_cp+1) between the last sample of one symbol and the first of the
    next (the walk advances across the cyclic prefix without materializing it).
    """
    n = grid.n_subcarriers
    total = n_symbols * n
    std = np.full(total, np.sqrt(sigma2))
    std[0] = 0.0
    if n_symbols > 1:
        std[n::n] = np.sqrt(sigma2 * (grid.n_cp + 1))
    shape = (total,) if n_paths is None else (n_paths, total)
    steps = rng.standard_normal(shape) * std
    theta = np.cumsum(steps, axis=-1)
    out_shape = (n_symbols, n) if n_paths is None else (n_paths, n_symbols, n)
    return theta.reshape(out_shape)


@dataclass
class PnBlock:
    """Per-trial phase paths for every oscillator in the network.

    ue has shape (K, n_symbols, N); ap has shape (L, n_symbols, N) or
    (1, n_symbols, N) when the APs share a single oscillator.
    """

    ue: np.ndarray
    ap: np.ndarray
    shared_lo: bool

    def theta(self, k: int, l: int) -> np.ndarray:
        """Combined phase path of link (UE k, AP l), shape (n_symbols, N)."""
        return self.ue[k] + self.ap[0 if self.shared_lo else l]


def gen_pn_block(rng: np.random.Generator, scenario: ScenarioConfig) -> PnBlock:
    """Draw all UE paths (k-major) then all AP paths (l-major) for one trial."""
    grid, tau_c = scenario.grid, scenario.coherence.block_symbols
    s2_ue = increment_variance(scenario.gamma_ue, grid.carrier_freq, grid.sample_time)
    s2_ap = increment_variance(scenario.gamma_ap, grid.carrier_freq, grid.sample_time)
    shared = scenario.lo_mode == LO_SHARED
    ue = gen_pn_trace(rng, s2_ue, grid, tau_c, n_paths=scenario.n_ues)
    ap = gen_pn_trace(rng, s2_ap, grid, tau_c, n_paths=1 if shared else scenario.n_aps)
    return PnBlock(ue=ue, ap=ap, shared_lo=shared)


def phase_drift_dft(theta: np.ndarray) -> np.ndarray:
    """Drift-DFT coefficients J_i (FFT order) of phase samples along the last
    axis: J = FFT(exp(j*theta)) / N."""
    n = theta.shape[-1]
    return np.fft.fft(np.exp(1j * theta), axis=-1) / n


# ---------------------------------------------------------------------------
# scalar closed forms
# ---------------------------------------------------------------------------


def pn_autocorr(sigma2_tot, tau1, n1, tau2, n2, grid: OfdmGrid, cp_in_lag: str = "per-eq"):
    """E{e^{j theta1} e^{-j theta2}} for one combined phase process:
    exp(-sigma2_tot/2 * |lag|)."""
    wc = _with_cp(cp_in_lag, "autocorr")
    lag = _abs_index(tau1, n1, grid, wc) - _abs_index(tau2, n2, grid, wc)
    return np.exp(-0.5 * sigma2_tot * np.abs(lag))


def pn_mean(sigma2_tot, tau, n, grid: OfdmGrid, cp_in_lag: str = "per-eq"):
    """E{e^{j theta}} at symbol tau, sample n: exp(-sigma2_tot/2 * index)."""
    wc = _with_cp(cp_in_lag, "mean")
    return np.exp(-0.5 * sigma2_tot * _abs_index(tau, n, grid, wc))


def pn_crosscorr(
    sigma2_ue,
    sigma2_ap,
    tau1,
    n1,
    tau2,
    n2,
    grid: OfdmGrid,
    same_ue: bool,
    same_ap: bool,
    shared_lo: bool = False,
    cp_in_lag: str = "per-eq",
):
    """E{e^{j theta_{k1,l1}} e^{-j theta_{k2,l2}}} for two (UE, AP) links.

    Correlated components (same oscillator) contribute exp(-s2/2*|g1-g2|);
    independent ones factor into the product of their means
    exp(-s2/2*(g1+g2)). With a shared AP oscillator the AP component is always
    correlated and — for different UEs — the lag family strides by N (no CP)
    under the default switch.
    """
    ap_corr = same_ap or shared_lo
    if same_ue and ap_corr:
        return pn_autocorr(sigma2_ue + sigma2_ap, tau1, n1, tau2, n2, grid, cp_in_lag)
    if shared_lo and not same_ue:
        wc = _with_cp(cp_in_lag, "shared-cross")
    else:
        wc = _with_cp(cp_in_lag, "autocorr")
    g1 = _abs_index(tau1, n1, grid, wc)
    g2 = _abs_index(tau2, n2, grid, wc)
    ue = np.exp(-0.5 * sigma2_ue * np.abs(g1 - g2)) if same_ue else np.exp(-0.5 * sigma2_ue * (g1 + g2))
    ap = np.exp(-0.5 * sigma2_ap * np.abs(g1 - g2)) if ap_corr else np.exp(-0.5 * sigma2_ap * (g1 + g2))
    return ue * ap


# ---------------------------------------------------------------------------
# drift-DFT moments
# ---------------------------------------------------------------------------


def _mean_profile(sigma2_tot, tau, grid: OfdmGrid, with_cp: bool) -> np.ndarray:
    """Per-sample means E{e^{j theta}} over one symbol, shape (N,)."""
    n = np.arange(grid.n_subcarriers)
    return np.exp(-0.5 * sigma2_tot * (tau * _stride(grid, with_cp) + n))


def _mean_drift_vec(sigma2_tot, tau, grid: OfdmGrid, with_cp: bool) -> np.ndarray:
    """E{J_i} for all i (FFT order): DFT of the per-sample means / N."""
    if sigma2_tot == 0.0:  # exact no-PN limit: J deterministic one-hot
        vec = np.zeros(grid.n_subcarriers, dtype=complex)
        vec[0] = 1.0
        return vec
    return np.fft.fft(_mean_profile(sigma2_tot, tau, grid, with_cp)) / grid.n_subcarriers


def mean_phase_drift(sigma2_tot, tau, grid: OfdmGrid, i=None, cp_in_lag: str = "per-eq"):
    """Mean drift-DFT coefficient E{J_i^{(tau)}}.

    (1/N) sum_n exp(-sigma2_tot/2*(tau*stride+n)) exp(-j*2*pi*n*i/N); the
    stride excludes the CP under the default switch ('drift-mean' family).
    Returns the full FFT-order vector when i is None, else the i-th entry.
    """
    vec = _mean_drift_vec(sigma2_tot, tau, grid, _with_cp(cp_in_lag, "drift-mean"))
    if i is None:
        return vec
    return vec[np.asarray(i) % grid.n_subcarriers]


def _overlap_sum(m: np.ndarray, di: int, n: int) -> np.ndarray:
    """G_m(di) = sum over the n2-range paired with offset m of e^{-j2pi n2 di/N}."""
    lo = np.maximum(0, -m)
    hi = np.minimum(n - 1, n - 1 - m)  # inclusive
    if di % n == 0:
        return (hi - lo + 1).astype(complex)
    w = np.exp(-2j * np.pi * di / n)
    return (w**lo - w ** (hi + 1)) / (1.0 - w)


def drift_corr_same(
    sigma2_tot,
    dtau: int,
    i1: int,
    i2: int,
    grid: OfdmGrid,
    cp_in_lag: str = "per-eq",
    method: str = "toeplitz",
):
    """Drift-DFT correlation E{J_{i1}^{(tau1)} J_{i2}^{(tau2)*}} of one
    combined phase process, as a function of dtau = tau1 - tau2.

    The kernel depends on n1 - n2 only, so the double sum collapses to O(N)
    per entry (method 'toeplitz'); method 'naive' keeps the O(N^2) double sum
    for cross-validation.
    """
    n = grid.n_subcarriers
    if sigma2_tot == 0.0:  # J one-hot: nonzero only when both indices are 0 mod N
        return 1.0 + 0.0j if (i1 % n == 0 and i2 % n == 0) else 0.0 + 0.0j
    stride = _stride(grid, _with_cp(cp_in_lag, "autocorr"))
    if method == "naive":
        n1 = np.arange(n)[:, None]
        n2 = np.arange(n)[None, :]
        rho = np.exp(-0.5 * sigma2_tot * np.abs(dtau * stride + n1 - n2))
        kern = np.exp(-2j * np.pi * (n1 * i1 - n2 * i2) / n)
        return np.sum(rho * kern) / n**2
    if method != "toeplitz":
        raise ValueError(f"unknown method {method!r}")
    m = np.arange(-(n - 1), n)
    rho = np.exp(-0.5 * sigma2_tot * np.abs(dtau * stride + m))
    phase = np.exp(-2j * np.pi * m * i1 / n)
    return np.sum(rho * phase * _overlap_sum(m, i1 - i2, n)) / n**2


def _fold_offsets(values: np.ndarray, n: int) -> np.ndarray:
    """Fold a length 2N-1 sequence indexed by m = -(N-1)..N-1 into N FFT bins
    (m and m+N share a bin)."""
    out = np.zeros(n, dtype=complex)
    m = np.arange(-(n - 1), n)
    np.add.at(out, m % n, values)
    return out


def _drift_corr_same_band(sigma2_tot, delta: int, grid: OfdmGrid, cp_in_lag: str = "per-eq") -> np.ndarray:
    """B_{i+delta, i}^{(0)} for all i (FFT order) of one combined process."""
    n = grid.n_subcarriers
    if sigma2_tot == 0.0:
        out = np.zeros(n, dtype=complex)
        if delta % n == 0:
            out[0] = 1.0
        return out
    m = np.arange(-(n - 1), n)
    rho = np.exp(-0.5 * sigma2_tot * np.abs(m))
    coeff = rho * _overlap_sum(m, delta, n) * np.exp(-2j * np.pi * m * delta / n)
    return np.fft.fft(_fold_offsets(coeff, n)) / n**2


def drift_corr_cross(
    sigma2_ue,
    sigma2_ap,
    tau1: int,
    tau2: int,
    i1: int,
    i2: int,
    grid: OfdmGrid,
    same_ue: bool,
    same_ap: bool,
    shared_lo: bool = False,
    cp_in_lag: str = "per-eq",
    centered: bool = False,
):
    """Drift-DFT cross-correlation E{J_{k1,l1,i1}^{(tau1)} J_{k2,l2,i2}^{(tau2)*}}
    across two (UE, AP) links, i.e. the (1/N^2) double transform of the
    sample-level cross-correlation.

    centered=True subtracts the product of the corresponding mean drift
    coefficients (taken in the same lag family), which is exactly zero for
    fully independent links.
    """
    n = grid.n_subcarriers
    if sigma2_ue == 0.0 and sigma2_ap == 0.0:  # exact no-PN limit
        if centered:
            return 0.0 + 0.0j
        return 1.0 + 0.0j if (i1 % n == 0 and i2 % n == 0) else 0.0 + 0.0j
    ap_corr = same_ap or shared_lo
    if same_ue and ap_corr:
        val = drift_corr_same(sigma2_ue + sigma2_ap, tau1 - tau2, i1, i2, grid, cp_in_lag)
        if centered:
            wc = _with_cp(cp_in_lag, "mean")
            val -= _mean_drift_vec(sigma2_ue + sigma2_ap, tau1, grid, wc)[i1 % n] * np.conj(
                _mean_drift_vec(sigma2_ue + sigma2_ap, tau2, grid, wc)[i2 % n]
            )
        return val
    if not same_ue and not ap_corr:
        if centered:
            return 0.0 + 0.0j
        wc = _with_cp(cp_in_lag, "mean")
        s2 = sigma2_ue + sigma2_ap
        return _mean_drift_vec(s2, tau1, grid, wc)[i1 % n] * np.conj(_mean_drift_vec(s2, tau2, grid, wc)[i2 % n])
    # mixed: one component correlated, the other independent
    if shared_lo and not same_ue:
        wc = _with_cp(cp_in_lag, "shared-cross")
        s2_corr, s2_ind = sigma2_ap, sigma2_ue
    else:  # same UE, different APs with separate oscillators (or same AP, different UEs)
        wc = _with_cp(cp_in_lag, "autocorr")
        s2_corr, s2_ind = (sigma2_ue, sigma2_ap) if same_ue else (sigma2_ap, sigma2_ue)
    g1 = _abs_index(tau1, np.arange(n)[:, None], grid, wc)
    g2 = _abs_index(tau2, np.arange(n)[None, :], grid, wc)
    kern = (
        np.exp(-0.5 * s2_corr * np.abs(g1 - g2))
        * np.exp(-0.5 * s2_ind * (g1 + g2))
        * np.exp(-2j * np.pi * (np.arange(n)[:, None] * i1 - np.arange(n)[None, :] * i2) / n)
    )
    val = kern.sum() / n**2
    if centered:
        s2 = sigma2_ue + sigma2_ap
        val -= _mean_drift_vec(s2, tau1, grid, wc)[i1 % n] * np.conj(_mean_drift_vec(s2, tau2, grid, wc)[i2 % n])
    return val


def _drift_corr_cross_diag(
    sigma2_corr, sigma2_ind, tau: int, grid: OfdmGrid, with_cp: bool
) -> np.ndarray:
    """Mixed-case cross-correlation diagonal E{J_{i}^{(tau)} J_{i}^{(tau)*}}
    for all i, when one oscillator component is common and one independent."""
    n = grid.n_subcarriers
    if sigma2_corr == 0.0 and sigma2_ind == 0.0:
        out = np.zeros(n)
        out[0] = 1.0
        return out
    g = _abs_index(tau, np.arange(n), grid, with_cp)
    u = np.exp(-0.5 * sigma2_ind * g)  # same profile on both links
    rho = np.exp(-0.5 * sigma2_corr * np.abs(np.arange(-(n - 1), n)))
    # c_m = sum_n2 u(n2+m) u(n2) rho(m); B_{i,i} = (1/N^2) sum_m c_m e^{-j2pi m i/N}
    full = np.correlate(u, u, mode="full")  # index m+N-1 holds sum_n u(n+m)u(n)
    coeff = rho * full
    return np.fft.fft(_fold_offsets(coeff, n)).real / n**2


# ---------------------------------------------------------------------------
# per-scenario statistics with caching
# ---------------------------------------------------------------------------

_CACHE_VERSION = 1


class PnStatistics:
    """Precomputed phase-noise second-order statistics for one scenario.

    Exposes the tables the estimators need: the mean drift (CPE) per symbol,
    same-process CPE correlations by symbol lag, centered CPE covariances
    across links, and the drift-DFT diagonals/pair sums that drive
    inter-carrier-interference covariances. All accessors are lazily cached.
    """

    def __init__(
        self,
        grid: OfdmGrid,
        coherence: CoherenceGeometry,
        sigma2_ue: float,
        sigma2_ap: float,
        shared_lo: bool,
        cp_in_lag: str = "per-eq",
    ):
        self.grid = grid
        self.coherence = coherence
        self.sigma2_ue = float(sigma2_ue)
        self.sigma2_ap = float(sigma2_ap)
        self.shared_lo = bool(shared_lo)
        self.cp_in_lag = cp_in_lag
        self.sigma2_tot = self.sigma2_ue + self.sigma2_ap
        self._cache: dict = {}

    @classmethod
    def from_scenario(cls, scenario: ScenarioConfig) -> "PnStatistics":
        grid = scenario.grid
        return cls(
            grid,
            scenario.coherence,
            increment_variance(scenario.gamma_ue, grid.carrier_freq, grid.sample_time),
            increment_variance(scenario.gamma_ap, grid.carrier_freq, grid.sample_time),
            scenario.lo_mode == LO_SHARED,
            scenario.cp_in_lag,
        )

    # -- scalar tables -------------------------------------------------

    def mean_cpe(self, tau: int) -> float:
        """Mean common phase error E{J_0^{(tau)}} (real, in (0, 1])."""
        return float(self.mean_cpe_table()[tau])

    def mean_cpe_table(self) -> np.ndarray:
        key = "mean_cpe"
        if key not in self._cache:
            wc = _with_cp(self.cp_in_lag, "drift-mean")
            tab = np.array(
                [_mean_drift_vec(self.sigma2_tot, t, self.grid, wc)[0].real for t in range(self.coherence.block_symbols)]
            )
            self._cache[key] = tab
        return self._cache[key]

    def cpe_corr(self, dtau: int) -> float:
        """Same-link CPE correlation E{J_0^{(tau1)} J_0^{(tau2)*}} at symbol
        lag dtau = tau1 - tau2 (real, symmetric in dtau)."""
        return float(self.cpe_corr_table()[abs(int(dtau))])

    def cpe_corr_table(self) -> np.ndarray:
        key = "cpe_corr"
        if key not in self._cache:
            tab = np.array(
                [
                    drift_corr_same(self.sigma2_tot, d, 0, 0, self.grid, self.cp_in_lag).real
                    for d in range(self.coherence.block_symbols)
                ]
            )
            self._cache[key] = tab
        return self._cache[key]

    def _mean_cpe_family(self, with_cp: bool) -> np.ndarray:
        key = ("mean_cpe_family", with_cp)
        if key not in self._cache:
            tab = np.array(
                [
                    _mean_drift_vec(self.sigma2_tot, t, self.grid, with_cp)[0].real
                    for t in range(self.coherence.block_symbols)
                ]
            )
            self._cache[key] = tab
        return self._cache[key]

    def cpe_cov(self, tau1: int, tau2: int) -> float:
        """Centered same-link CPE covariance."""
        wc = _with_cp(self.cp_in_lag, "mean")
        m = self._mean_cpe_family(wc)
        return self.cpe_corr(tau1 - tau2) - m[tau1] * m[tau2]

    def cpe_cross_corr(self, tau1: int, tau2: int, same_ue: bool, same_ap: bool) -> complex:
        """Cross-link CPE correlation E{J_0^{(tau1)} J_0^{(tau2)*}} (raw)."""
        key = ("ccorr", tau1, tau2, same_ue, same_ap)
        if key not in self._cache:
            self._cache[key] = complex(
                drift_corr_cross(
                    self.sigma2_ue,
                    self.sigma2_ap,
                    tau1,
                    tau2,
                    0,
                    0,
                    self.grid,
                    same_ue,
                    same_ap,
                    self.shared_lo,
                    self.cp_in_lag,
                )
            )
        return self._cache[key]

    def cpe_cross_cov(self, tau1: int, tau2: int, same_ue: bool, same_ap: bool) -> complex:
        """Centered cross-link CPE covariance (exactly zero for independent
        links)."""
        key = ("ccov", tau1, tau2, same_ue, same_ap)
        if key not in self._cache:
            self._cache[key] = complex(
                drift_corr_cross(
                    self.sigma2_ue,
                    self.sigma2_ap,
                    tau1,
                    tau2,
                    0,
                    0,
                    self.grid,
                    same_ue,
                    same_ap,
                    self.shared_lo,
                    self.cp_in_lag,
                    centered=True,
                )
            )
        return self._cache[key]

    # -- inter-carrier interference tables ------------------------------

    def ici_diag(self) -> np.ndarray:
        """E{|J_i|^2} for all i (FFT order, same-symbol). Sums to 1."""
        key = "ici_diag"
        if key not in self._cache:
            self._cache[key] = _drift_corr_same_band(self.sigma2_tot, 0, self.grid, self.cp_in_lag).real
        return self._cache[key]

    def ici_band(self, delta: int) -> np.ndarray:
        """E{J_{i+delta} J_i^*} for all i (same symbol), FFT order."""
        delta = int(delta) % self.grid.n_subcarriers
        key = ("band", delta)
        if key not in self._cache:
            self._cache[key] = _drift_corr_same_band(self.sigma2_tot, delta, self.grid, self.cp_in_lag)
        return self._cache[key]

    def ici_pair_sum(self, n1: int, n2: int) -> complex:
        """sum over j not in {n1, n2} of E{J_{n1-j} J_{n2-j}^*} (same symbol).
        Depends on n1, n2 through delta = n1 - n2 only."""
        n = self.grid.n_subcarriers
        delta = (n1 - n2) % n
        key = ("pair_sum", delta)
        if key not in self._cache:
            band = self.ici_band(delta)  # band[i] = E{J_{i+delta} J_i^*}
            total = band.sum()
            # j = n1 gives (i1, i2) = (0, -delta); j = n2 gives (delta, 0)
            excl = band[(-delta) % n] + band[0]
            self._cache[key] = complex(total - excl) if n1 != n2 else complex(total - band[0])
        return self._cache[key]

    def ici_cross_diag(self, tau: int, same_ap: bool) -> np.ndarray:
        """Same-UE cross-link E{J_{k,l1,i}^{(tau)} J_{k,l2,i}^{(tau)*}} for all
        i; reduces to ici_diag when the AP component is common."""
        if same_ap or self.shared_lo:
            return self.ici_diag()
        key = ("cross_diag", tau)
        if key not in self._cache:
            wc = _with_cp(self.cp_in_lag, "autocorr")
            self._cache[key] = _drift_corr_cross_diag(self.sigma2_ue, self.sigma2_ap, tau, self.grid, wc)
        return self._cache[key]

    def cpe_deficit(self) -> float:
        """1 - E{|J_0|^2}: fraction of per-link signal power leaked to
        inter-carrier interference."""
        return 1.0 - self.cpe_corr(0)

    # -- persistence ----------------------------------------------------

    def config_hash(self) -> str:
        payload = json.dumps(
            {
                "version": _CACHE_VERSION,
                "n": self.grid.n_subcarriers,
                "n_cp": self.grid.n_cp,
                "tau_c": self.coherence.block_symbols,
                "sigma2_ue": self.sigma2_ue,
                "sigma2_ap": self.sigma2_ap,
                "shared_lo": self.shared_lo,
                "cp_in_lag": self.cp_in_lag,
            },
            sort_keys=True,
        )
        return hashlib.sha256(payload.encode()).hexdigest()[:16]

    def precompute(self, plan=None) -> "PnStatistics":
        """Warm the main tables (and, given a pilot plan, the pair sums for
        its same-symbol pilot pairs)."""
        self.mean_cpe_table()
        self.cpe_corr_table()
        self.ici_diag()
        if plan is not None:
            for a in range(plan.n_pilots):
                for b in range(plan.n_pilots):
                    if a != b and plan.symbols[a] == plan.symbols[b]:
                        self.ici_pair_sum(int(plan.subcarriers[a]), int(plan.subcarriers[b]))
        return self

    def save(self, path) -> None:
        """Persist the warmed core tables keyed by the config hash."""
        self.precompute()
        np.savez(
            path,
            format_version=np.array([_CACHE_VERSION]),
            config_hash=np.array([self.config_hash()]),
            mean_cpe=self.mean_cpe_table(),
            cpe_corr=self.cpe_corr_table(),
            ici_diag=self.ici_diag(),
        )

    def load(self, path) -> bool:
        """Load cached tables if the stored config hash matches; returns
        whether the cache was usable."""
        with np.load(path, allow_pickle=False) as data:
            if str(data["config_hash"][0]) != self.config_hash():
                return False
            self._cache["mean_cpe"] = data["mean_cpe"]
            self._cache["cpe_corr"] = data["cpe_corr"]
            self._cache["ici_diag"] = data["ici_diag"]
        return True

    def dump_rows(self):
        """Iterate (table, index, value) rows for CSV export."""
        for t, v in enumerate(self.mean_cpe_table()):
            yield ("mean_cpe", t, v)
        for d, v in enumerate(self.cpe_corr_table()):
            yield ("cpe_corr", d, v)
        for i, v in enumerate(self.ici_diag()):
            yield ("ici_diag", i, v)
