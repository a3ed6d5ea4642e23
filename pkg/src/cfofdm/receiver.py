"""Uplink MMSE combining, use-and-then-forget SE evaluation, and the
complexity/fronthaul calculators.

The SE pipeline is Monte-Carlo: each trial contributes the inner products the
use-and-then-forget (UatF) bound needs (combiner vs. true effective channel,
ICI power through the combiner, combiner norm), an ExpectationBank collects
them across trials, and sinr_uatf / se_per_ue turn the bank's sample moments
into SINR and SE with jackknife confidence intervals.

Estimates are constant across the subcarriers of a coherence block, so the
SINR varies over symbols only; everything is evaluated at one representative
data subcarrier per block and the per-block SE is prelog * mean over symbols
of log2(1 + SINR). The noise term uses sigma^2 * E{||D_k v||^2} (the standard
UatF form).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .config import ConfigError, ScenarioConfig
from .estimators import ESTIMATOR_NAMES, NumericalError, hermitian_solve
from .phase_noise import PnBlock, PnStatistics

__all__ = [
    "DccAssignment",
    "CombinerWeights",
    "ExpectationBank",
    "SeReport",
    "mmse_combiner",
    "demodulate",
    "effective_true",
    "true_cpe",
    "ici_power_lambda",
    "trial_terms",
    "sinr_uatf",
    "se_per_ue",
    "complexity_report",
    "fronthaul_report",
    "ESTIMATOR_COMPLEXITY",
]

_Z95 = 1.959963984540054  # two-sided 95% normal quantile


# ---------------------------------------------------------------------------
# dynamic cooperation clustering
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class DccAssignment:
    """Serving matrix d[k, l] in {0, 1}: AP l serves UE k.

    M_k (APs serving UE k) and D_l (UEs served by AP l) are the row/column
    support sets. Default everywhere is all-serving.
    """

    d: np.ndarray

    def __post_init__(self):
        d = np.asarray(self.d)
        if d.ndim != 2 or not np.isin(d, (0, 1)).all():
            raise ConfigError("DCC matrix must be 2-D with entries in {0, 1}")
        object.__setattr__(self, "d", d.astype(bool))

    @classmethod
    def all_serving(cls, n_ues: int, n_aps: int) -> "DccAssignment":
        return cls(np.ones((n_ues, n_aps), dtype=bool))

    @classmethod
    def nearest(cls, beta: np.ndarray, n_serving: int) -> "DccAssignment":
        """Each UE served by its n_serving strongest APs."""
        beta = np.asarray(beta)
        if not 1 <= n_serving <= beta.shape[1]:
            raise ConfigError(f"n_serving must be in [1, {beta.shape[1]}]")
        d = np.zeros(beta.shape, dtype=bool)
        idx = np.argsort(beta, axis=1)[:, ::-1][:, :n_serving]
        np.put_along_axis(d, idx, True, axis=1)
        return cls(d)

    def serving_aps(self, k: int) -> np.ndarray:
        return np.flatnonzero(self.d[k])

    def served_ues(self, l: int) -> np.ndarray:
        return np.flatnonzero(self.d[:, l])

    @property
    def serving_counts(self) -> np.ndarray:
        """|M_k| per UE."""
        return self.d.sum(axis=1)

    @property
    def served_counts(self) -> np.ndarray:
        """|D_l| per AP."""
        return self.d.sum(axis=0)


@dataclass
class CombinerWeights:
    """Per-UE combining vectors v[k, tau, l], zero outside the UE's serving
    set."""

    v: np.ndarray


# ---------------------------------------------------------------------------
# combining and demodulation
# ---------------------------------------------------------------------------


def mmse_combiner(
    h_eff: np.ndarray,
    err_vars: np.ndarray,
    dcc: DccAssignment | None,
    scenario: ScenarioConfig,
) -> CombinerWeights:
    """MMSE combiner from effective-channel estimates and error variances.

    v_k = p (D A D)^+ D h_hat_k with A = sum_i p h_hat_i h_hat_i^H +
    diag_l(sum_i p c_{i,l}) + sigma^2 I, per symbol. With a serving mask the
    pseudo-inverse reduces to inverting the (PD) submatrix on M_k; empty
    serving sets yield zero weights.

    h_eff: (K, L, tau_c) estimates; err_vars broadcastable to the same shape.
    """
    h_eff = np.asarray(h_eff, dtype=complex)
    n_ues, n_aps, tau_c = h_eff.shape
    c = np.broadcast_to(err_vars, h_eff.shape)
    p, s2 = scenario.tx_power, scenario.noise_power
    v = np.zeros((n_ues, tau_c, n_aps), dtype=complex)
    full = dcc is None or bool(dcc.d.all())
    for tau in range(tau_c):
        h = h_eff[:, :, tau]  # (K, L)
        a = p * (h.T @ np.conj(h))
        a[np.diag_indices_from(a)] += s2 + p * c[:, :, tau].sum(axis=0)
        if full:
            v[:, tau, :] = p * hermitian_solve(a, h.T).T
            continue
        for k in range(n_ues):
            idx = dcc.serving_aps(k)
            if idx.size == 0:
                continue
            sub = a[np.ix_(idx, idx)]
            v[k, tau, idx] = p * hermitian_solve(sub, h[k, idx])
    return CombinerWeights(v=v)


def demodulate(rx, weights: CombinerWeights) -> np.ndarray:
    """Per-UE symbol estimates s_hat[k, tau, n] = v_k^H y[:, tau, n].

    Serving-set masking is already baked into the zero weights. rx may be an
    RxFrame or the raw (L, tau_c, N) array.
    """
    y = rx.y if hasattr(rx, "y") else np.asarray(rx)
    return np.einsum("ktl,ltn->ktn", np.conj(weights.v), y)


# ---------------------------------------------------------------------------
# UatF SINR from Monte-Carlo expectation banks
# ---------------------------------------------------------------------------


def true_cpe(pn: PnBlock, n_aps: int) -> np.ndarray:
    """Realized common phase error J_0[k, l, tau] = (1/N) sum_n e^{j theta}
    of every link in a trial."""
    n = pn.ue.shape[-1]
    eu = np.exp(1j * pn.ue)  # (K, tau_c, N)
    ea = np.broadcast_to(np.exp(1j * pn.ap), (n_aps,) + pn.ap.shape[1:])
    return np.einsum("ktn,ltn->klt", eu, ea) / n


def effective_true(h_blocks: np.ndarray, pn: PnBlock, block: int = 0) -> np.ndarray:
    """True per-symbol effective channel J_0 * h of one coherence block,
    shape (K, L, tau_c)."""
    h = h_blocks[:, :, block]
    return true_cpe(pn, h.shape[1]) * h[:, :, None]


def ici_power_lambda(beta: np.ndarray, scenario: ScenarioConfig, stats: PnStatistics) -> np.ndarray:
    """Per-link ICI power lambda[k, l] = p * beta * (1 - E{|J_0|^2}): the
    transmit power each link leaks off its own subcarrier. Zero without phase
    noise; subcarrier-independent by the unit-power drift identity."""
    return scenario.tx_power * np.asarray(beta) * stats.cpe_deficit()


def trial_terms(v: np.ndarray, h_eff_true: np.ndarray, lam: np.ndarray):
    """One trial's contributions to the UatF expectations.

    v: (K, tau_c, L) combiner (CombinerWeights accepted); h_eff_true:
    (K, L, tau_c) true effective channels; lam: (K, L) per-link ICI powers.
    Returns (cross, rho, noise): cross[k, tau, i] = v_k^H h_eff_i,
    rho[k, tau] = sum_l |v|^2 sum_i lam[i, l], noise[k, tau] = ||v_k||^2.
    """
    if isinstance(v, CombinerWeights):
        v = v.v
    av2 = np.abs(v) ** 2
    cross = np.einsum("ktl,ilt->kti", np.conj(v), h_eff_true)
    rho = av2 @ np.asarray(lam).sum(axis=0)
    noise = av2.sum(axis=-1)
    return cross, rho, noise


@dataclass
class ExpectationBank:
    """Per-trial UatF terms, mergeable across workers.

    cross: (T, K, tau_c, K); rho, noise: (T, K, tau_c). merge() concatenates
    along the trial axis — associative with the empty bank as identity — and
    keeping the per-trial rows (rather than running sums) is what makes the
    jackknife confidence intervals possible after the merge.
    """

    cross: np.ndarray
    rho: np.ndarray
    noise: np.ndarray

    @classmethod
    def from_trials(cls, terms) -> "ExpectationBank":
        cross, rho, noise = zip(*terms)
        return cls(np.stack(cross), np.stack(rho), np.stack(noise))

    @classmethod
    def empty(cls, n_ues: int, tau_c: int) -> "ExpectationBank":
        return cls(
            np.zeros((0, n_ues, tau_c, n_ues), dtype=complex),
            np.zeros((0, n_ues, tau_c)),
            np.zeros((0, n_ues, tau_c)),
        )

    def merge(self, other: "ExpectationBank") -> "ExpectationBank":
        return ExpectationBank(
            np.concatenate([self.cross, other.cross]),
            np.concatenate([self.rho, other.rho]),
            np.concatenate([self.noise, other.noise]),
        )

    @property
    def n_trials(self) -> int:
        return self.cross.shape[0]


def _sinr_from_moments(mc_diag, m2_sum, mrho, mnoise, p, s2):
    """UatF ratio from (leave-one-out or full) sample moments; arrays share
    leading shape (..., K, tau_c)."""
    desired = p * np.abs(mc_diag) ** 2
    den = p * m2_sum - desired + mrho + s2 * mnoise
    if np.any((den <= 0) & (desired > 0)):
        raise NumericalError("non-positive UatF denominator")
    return np.where(den > 0, desired / np.where(den > 0, den, 1.0), 0.0)


def sinr_uatf(bank: ExpectationBank, scenario: ScenarioConfig) -> np.ndarray:
    """UatF SINR per (UE, symbol) from the bank's sample moments:
    p |E{v^H h_k}|^2 over
    (sum_i p E{|v^H h_i|^2} - p |E{v^H h_k}|^2 + E{rho} + sigma^2 E{||v||^2}).
    """
    if bank.n_trials == 0:
        raise ValueError("empty expectation bank")
    mc = bank.cross.mean(axis=0)
    m2 = (np.abs(bank.cross) ** 2).mean(axis=0)
    return _sinr_from_moments(
        np.einsum("kuk->ku", mc),
        m2.sum(axis=-1),
        bank.rho.mean(axis=0),
        bank.noise.mean(axis=0),
        scenario.tx_power,
        scenario.noise_power,
    )


@dataclass
class SeReport:
    """Spectral-efficiency summary at the representative subcarrier.

    se[k] = prelog * (1/tau_c) sum_tau log2(1 + sinr[k, tau]); se_symbol is
    the per-symbol rate prelog * log2(1 + sinr). Confidence intervals are
    jackknife (leave-one-trial-out) at 95%, NaN when fewer than two trials.
    """

    se: np.ndarray  # (K,)
    ci_low: np.ndarray
    ci_high: np.ndarray
    sinr: np.ndarray  # (K, tau_c)
    se_symbol: np.ndarray  # (K, tau_c)
    symbol_ci_low: np.ndarray
    symbol_ci_high: np.ndarray
    ici_power: np.ndarray  # (K, tau_c) mean rho
    prelog: float
    n_trials: int


def se_per_ue(bank: ExpectationBank, scenario: ScenarioConfig) -> SeReport:
    """SE per UE with jackknife confidence intervals from a trial bank."""
    p, s2 = scenario.tx_power, scenario.noise_power
    prelog = scenario.coherence.prelog
    sinr = sinr_uatf(bank, scenario)
    se_symbol = prelog * np.log2(1.0 + sinr)
    se = se_symbol.mean(axis=-1)
    t = bank.n_trials
    if t < 2:
        nan_k = np.full(se.shape, np.nan)
        nan_kt = np.full(se_symbol.shape, np.nan)
        return SeReport(
            se, nan_k, nan_k.copy(), sinr, se_symbol, nan_kt, nan_kt.copy(), bank.rho.mean(axis=0), prelog, t
        )
    # vectorized leave-one-out moments
    loo_mc = (bank.cross.sum(axis=0)[None] - bank.cross) / (t - 1)
    a2 = np.abs(bank.cross) ** 2
    loo_m2 = (a2.sum(axis=0)[None] - a2) / (t - 1)
    loo_rho = (bank.rho.sum(axis=0)[None] - bank.rho) / (t - 1)
    loo_noise = (bank.noise.sum(axis=0)[None] - bank.noise) / (t - 1)
    sinr_t = _sinr_from_moments(
        np.einsum("tkuk->tku", loo_mc), loo_m2.sum(axis=-1), loo_rho, loo_noise, p, s2
    )
    se_sym_t = prelog * np.log2(1.0 + sinr_t)  # (T, K, tau_c)
    se_t = se_sym_t.mean(axis=-1)

    def jack_halfwidth(est_t):
        var = (t - 1) / t * ((est_t - est_t.mean(axis=0)) ** 2).sum(axis=0)
        return _Z95 * np.sqrt(var)

    hw = jack_halfwidth(se_t)
    hw_sym = jack_halfwidth(se_sym_t)
    return SeReport(
        se=se,
        ci_low=se - hw,
        ci_high=se + hw,
        sinr=sinr,
        se_symbol=se_symbol,
        symbol_ci_low=se_symbol - hw_sym,
        symbol_ci_high=se_symbol + hw_sym,
        ici_power=bank.rho.mean(axis=0),
        prelog=prelog,
        n_trials=t,
    )


# ---------------------------------------------------------------------------
# complexity / fronthaul calculators
# ---------------------------------------------------------------------------

# complex multiplications per coherence block, by processing stage.
# variables: tau_p, tau_c, N_c, K, L, M (= |M_k|, APs serving a UE),
# M1/M2 (hidden widths), N_it (iterations).
COMPLEXITY_ROWS = {
    "pn-unaware": "(tau_p + 3) * K * M",
    "single-carrier": "(tau_p**2 + 3*tau_p) * (tau_c*N_c - tau_p) * K * M",
    "joint-distributed": "(tau_p**2 + 3*tau_p) * tau_c * K * M",
    "learned-init": "((2*tau_p*M1 + M1*M2 + 2*M2*K) / 4) * M",
    "channel-given-cpe": "(tau_p**2 + 3*tau_p) * K * M * N_it",
    "centralized-cpe": "(L**2*tau_p**2 + L*tau_p + L*tau_p*K*tau_c*M) * N_it",
}

# fronthaul load per AP per coherence block, in complex scalars. Each stage
# ships either the raw pilot cells ("pilot") or its local estimates
# ("estimates"); data cells are common to every scheme. D = |D_l|, UEs served
# by the AP. The centralized CPE stage works on the raw pilots at the CPU, so
# it has no estimate-forwarding option.
FRONTHAUL_ROWS = {
    "pn-unaware": {"pilot": "tau_p", "estimates": "D", "data": "tau_c*N_c - tau_p"},
    "single-carrier": {"pilot": "tau_p", "estimates": "D * (tau_c*N_c - tau_p)", "data": "tau_c*N_c - tau_p"},
    "joint-distributed": {"pilot": "tau_p", "estimates": "D * tau_c", "data": "tau_c*N_c - tau_p"},
    "learned-init": {"pilot": "tau_p", "estimates": "D", "data": "tau_c*N_c - tau_p"},
    "channel-given-cpe": {"pilot": "tau_p", "estimates": "(D + D*tau_p) * N_it", "data": "tau_c*N_c - tau_p"},
    "centralized-cpe": {"pilot": "tau_p", "estimates": None, "data": "tau_c*N_c - tau_p"},
}

# processing stages run by each named estimator
ESTIMATOR_COMPLEXITY = {
    "unaware": ("pn-unaware",),
    "mismatched": ("single-carrier",),
    "single-carrier": ("single-carrier",),
    "proposed-distributed": ("joint-distributed",),
    "proposed-centralized-lmmse": ("channel-given-cpe", "centralized-cpe"),
    "proposed-centralized-dl": ("learned-init", "channel-given-cpe", "centralized-cpe"),
}


def _count_vars(scenario: ScenarioConfig, dcc: DccAssignment | None, m1: int, m2: int, n_iter: int) -> dict:
    n_ues, n_aps = scenario.n_ues, scenario.n_aps
    if dcc is None:
        m_k, d_l = float(n_aps), float(n_ues)
    else:
        m_k = float(dcc.serving_counts.mean())
        d_l = float(dcc.served_counts.mean())
    return {
        "tau_p": scenario.coherence.n_pilots,
        "tau_c": scenario.coherence.block_symbols,
        "N_c": scenario.coherence.block_subcarriers,
        "K": n_ues,
        "L": n_aps,
        "M": m_k,
        "D": d_l,
        "M1": m1,
        "M2": m2,
        "N_it": n_iter,
    }


def _eval_formula(formula: str, vars: dict) -> float:
    return float(eval(formula, {"__builtins__": {}}, vars))


def complexity_report(
    scenario: ScenarioConfig,
    dcc: DccAssignment | None = None,
    estimator: str | None = None,
    m1: int = 100,
    m2: int = 100,
    n_iter: int = 3,
) -> dict:
    """Complex-multiplication counts per coherence block.

    Returns {"rows": {stage: {"formula", "count"}}, "estimators": {name:
    total}} — rows are the closed-form stage counts (evaluated directly from
    their formula strings), estimator totals sum the stages each named
    estimator runs. With a DCC, |M_k| / |D_l| enter as network averages.
    """
    if estimator is not None and estimator not in ESTIMATOR_COMPLEXITY:
        raise ConfigError(f"unknown estimator {estimator!r} (choose from {ESTIMATOR_NAMES})")
    vars = _count_vars(scenario, dcc, m1, m2, n_iter)
    rows = {
        name: {"formula": formula, "count": _eval_formula(formula, vars)}
        for name, formula in COMPLEXITY_ROWS.items()
    }
    names = (estimator,) if estimator is not None else tuple(ESTIMATOR_COMPLEXITY)
    totals = {name: sum(rows[stage]["count"] for stage in ESTIMATOR_COMPLEXITY[name]) for name in names}
    return {"rows": rows, "estimators": totals, "vars": vars}


def fronthaul_report(scenario: ScenarioConfig, dcc: DccAssignment | None = None, n_iter: int = 3) -> dict:
    """Fronthaul load per AP per coherence block, in complex scalars:
    for each stage the pilot-forwarding and estimate-forwarding options plus
    the common data load, evaluated from the formula strings."""
    vars = _count_vars(scenario, dcc, m1=0, m2=0, n_iter=n_iter)
    rows = {}
    for name, parts in FRONTHAUL_ROWS.items():
        rows[name] = {
            key: {"formula": formula, "count": _eval_formula(formula, vars)}
            for key, formula in parts.items()
            if formula is not None
        }
    return {"rows": rows, "vars": vars}
