"""Linear channel and common-phase-error (CPE) estimators.

Estimand conventions
--------------------
* "Joint" / "effective" estimators target g^{(tau)} = J_0^{(tau)} * h, the
  per-symbol effective channel of a coherence block (CPE times block
  channel); error variance c = beta*B00 - eps.
* "Given-CPE" estimators target the block channel h itself with the CPE
  treated as known per pilot symbol; c = beta - eps.
* The centralized CPE estimator targets J_0^{(tau)} per (UE, AP, symbol) from
  the pooled pilot observations of all APs, with channel estimates treated as
  given. Its second-order model is *centered*: covariances of J and of y
  about their means are used, so fully independent links contribute exactly
  zero and the no-phase-noise limit collapses to the deterministic J = 1.

All estimators are pure functions of (observations, large-scale gains,
scenario, statistics). Filter matrices depend only on geometry and
statistics, so the per-AP estimators accept an optional prebuilt filter bank
to amortize the linear solves across Monte-Carlo trials.

Estimator registry (harness name strings):
unaware | mismatched | proposed-distributed | proposed-centralized-lmmse |
proposed-centralized-dl | single-carrier
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
from scipy.linalg import cho_factor, cho_solve

from .config import PilotPlan, ScenarioConfig
from .ofdm import representative_subcarriers
from .phase_noise import PnStatistics, pn_autocorr

__all__ = [
    "NumericalError",
    "ChannelEstimate",
    "CpeEstimate",
    "ESTIMATOR_NAMES",
    "hermitian_solve",
    "ici_cov_local",
    "build_joint_filters",
    "lmmse_joint_distributed",
    "build_single_carrier_filters",
    "lmmse_single_carrier",
    "mmse_pn_unaware",
    "cpe_cov_global",
    "cpe_centralized_constrained",
    "lmmse_channel_given_cpe",
    "alternating_centralized",
    "effective_estimate",
]

ESTIMATOR_NAMES = (
    "unaware",
    "mismatched",
    "proposed-distributed",
    "proposed-centralized-lmmse",
    "proposed-centralized-dl",
    "single-carrier",
)


class NumericalError(RuntimeError):
    """A solve or iteration produced non-finite values."""


def hermitian_solve(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Solve a x = b for Hermitian positive (semi)definite a.

    Cholesky first; on factorization failure fall back to a pseudo-inverse
    with cutoff 1e-10 relative to the largest singular value (a is PD by the
    +sigma^2 I loading in every caller, but extreme SNRs can defeat it).
    """
    try:
        x = cho_solve(cho_factor(a, lower=True, check_finite=False), b, check_finite=False)
    except np.linalg.LinAlgError:
        x = np.linalg.pinv(a, rcond=1e-10, hermitian=True) @ b
    if not np.all(np.isfinite(x)):
        raise NumericalError("non-finite solution in hermitian_solve")
    return x


@dataclass
class ChannelEstimate:
    """Channel (or effective-channel) estimates with LMMSE variances.

    h_hat: (K, L, tau_c) for per-symbol effective estimators or (K, L) for
    block-channel estimators; eps = E{|estimate|^2}; c = prior variance - eps
    (error variance), floored at 0.
    """

    h_hat: np.ndarray
    eps: np.ndarray
    c: np.ndarray


@dataclass
class CpeEstimate:
    """CPE estimates J_hat: (K, L, tau_c) with variances eps, c."""

    j_hat: np.ndarray
    eps: np.ndarray
    c: np.ndarray


@dataclass
class _FilterBank:
    """Per-AP LMMSE weights for effective-channel estimators.

    w: (L, tau_p, K*tau_c) — column (k*tau_c + tau) applied as w^H y.
    """

    w: np.ndarray
    eps: np.ndarray  # (K, L, tau_c)
    c: np.ndarray  # (K, L, tau_c)


def _seq_matrix(plan: PilotPlan, n_ues: int) -> np.ndarray:
    """Pilot sequences per UE, shape (K, tau_p)."""
    return plan.book[plan.ue_pilot_indices(n_ues)]


# ---------------------------------------------------------------------------
# ICI covariance on pilot cells (local, per AP)
# ---------------------------------------------------------------------------


def ici_cov_local(
    beta_l: np.ndarray,
    p: float,
    plan: PilotPlan,
    stats: PnStatistics,
    seqs: np.ndarray | None = None,
) -> np.ndarray:
    """Inter-carrier-interference covariance between pilot cells at one AP.

    Three cases: zero across different symbols; on the diagonal the full
    leaked power sum_{j != n} E{|J_{n-j}|^2} per UE; for same-symbol pilot
    pairs the pair sum plus the deterministic pilot cross term
    s_k[t2] s_k^*[t1] E{|J_{n1-n2}|^2}. Exact for one-pilot-per-symbol
    layouts; Hermitian by construction.
    """
    tau_p = plan.n_pilots
    ts, ns = plan.symbols, plan.subcarriers
    if seqs is None:
        seqs = _seq_matrix(plan, len(beta_l))
    n = stats.grid.n_subcarriers
    diag = stats.ici_diag()
    total = p * float(np.sum(beta_l))
    z = np.zeros((tau_p, tau_p), dtype=complex)
    for t1 in range(tau_p):
        z[t1, t1] = total * stats.ici_pair_sum(int(ns[t1]), int(ns[t1])).real
        for t2 in range(t1 + 1, tau_p):
            if ts[t1] != ts[t2]:
                continue
            pair = stats.ici_pair_sum(int(ns[t1]), int(ns[t2]))
            cross = p * np.sum(beta_l * seqs[:, t2] * np.conj(seqs[:, t1]))
            val = total * pair + cross * diag[(ns[t1] - ns[t2]) % n]
            z[t1, t2] = val
            z[t2, t1] = np.conj(val)
    return z


# ---------------------------------------------------------------------------
# distributed joint effective-channel LMMSE
# ---------------------------------------------------------------------------


def _solve_bank(psi: np.ndarray, r: np.ndarray, prior: np.ndarray):
    """Shared tail of the per-AP LMMSE builders: weights w = psi^{-1} r,
    eps = Re diag(r^H w), c = prior - eps floored at 0."""
    w = hermitian_solve(psi, r)
    eps = np.einsum("tj,tj->j", np.conj(r), w).real
    return w, eps, np.maximum(prior - eps, 0.0)


def build_joint_filters(beta: np.ndarray, scenario: ScenarioConfig, stats: PnStatistics) -> _FilterBank:
    """Precompute the per-AP filters of the distributed joint estimator."""
    plan = scenario.pilot_plan()
    n_ues, n_aps = beta.shape
    tau_c, tau_p = scenario.coherence.block_symbols, plan.n_pilots
    p, s2 = scenario.tx_power, scenario.noise_power
    seqs = _seq_matrix(plan, n_ues)
    ts = plan.symbols
    bt = stats.cpe_corr_table()
    bmat = bt[np.abs(ts[:, None] - ts[None, :])]  # (tau_p, tau_p)
    btarget = bt[np.abs(np.arange(tau_c)[:, None] - ts[None, :])]  # (tau_c, tau_p)
    outer = np.einsum("kt,ku->ktu", seqs, np.conj(seqs))  # (K, tau_p, tau_p)
    w = np.empty((n_aps, tau_p, n_ues * tau_c), dtype=complex)
    eps = np.empty((n_ues, n_aps, tau_c))
    c = np.empty((n_ues, n_aps, tau_c))
    for l in range(n_aps):
        z = ici_cov_local(beta[:, l], p, plan, stats, seqs=seqs)
        psi = p * np.einsum("k,ktu->tu", beta[:, l], outer) * bmat + z + s2 * np.eye(tau_p)
        # column (k*tau_c + tau): E{y g*} = sqrt(p) beta_k B^{(tau_t - tau)} s_k
        r = ((np.sqrt(p) * beta[:, l])[:, None, None] * seqs[:, None, :] * btarget[None, :, :]).reshape(
            n_ues * tau_c, tau_p
        ).T
        w[l], e, cl = _solve_bank(psi, r, np.repeat(beta[:, l] * bt[0], tau_c))
        eps[:, l, :] = e.reshape(n_ues, tau_c)
        c[:, l, :] = cl.reshape(n_ues, tau_c)
    return _FilterBank(w=w, eps=eps, c=c)


def lmmse_joint_distributed(
    y_pilots: np.ndarray,
    beta: np.ndarray,
    scenario: ScenarioConfig,
    stats: PnStatistics,
    filters: _FilterBank | None = None,
) -> ChannelEstimate:
    """Distributed LMMSE of the per-symbol effective channel J_0^{(tau)} h.

    One linear filter per (UE, AP, symbol) applied to the AP's local pilot
    vector; statistics enter through the CPE correlation table and the ICI
    covariance. Identical across subcarriers of the block.
    """
    if filters is None:
        filters = build_joint_filters(beta, scenario, stats)
    n_ues, n_aps = beta.shape
    tau_c = scenario.coherence.block_symbols
    est = np.einsum("ltj,lt->lj", np.conj(filters.w), y_pilots)
    h_hat = est.reshape(n_aps, n_ues, tau_c).transpose(1, 0, 2)
    return ChannelEstimate(h_hat=h_hat, eps=filters.eps, c=filters.c)


# ---------------------------------------------------------------------------
# mismatched single-carrier LMMSE
# ---------------------------------------------------------------------------


def build_single_carrier_filters(
    beta: np.ndarray,
    scenario: ScenarioConfig,
    stats: PnStatistics,
    subcarriers: np.ndarray | None = None,
) -> _FilterBank:
    """Filters of the single-carrier (per-sample) LMMSE baseline.

    Correlations between cells use the plain time-domain phase
    autocorrelation e^{-(sigma^2/2)|dg|} at the cells' own sample instants
    and no ICI term — the model under which each subcarrier is only rotated.
    Targets are evaluated at one representative data subcarrier per symbol.
    """
    plan = scenario.pilot_plan()
    grid = scenario.grid
    n_ues, n_aps = beta.shape
    tau_c, tau_p = scenario.coherence.block_symbols, plan.n_pilots
    p, s2 = scenario.tx_power, scenario.noise_power
    seqs = _seq_matrix(plan, n_ues)
    ts, ns = plan.symbols, plan.subcarriers
    if subcarriers is None:
        subcarriers = representative_subcarriers(scenario)
    s2_tot = stats.sigma2_tot
    bmat = pn_autocorr(s2_tot, ts[:, None], ns[:, None], ts[None, :], ns[None, :], grid, stats.cp_in_lag)
    taus = np.arange(tau_c)
    btarget = pn_autocorr(
        s2_tot, taus[:, None], subcarriers[:, None], ts[None, :], ns[None, :], grid, stats.cp_in_lag
    )  # (tau_c, tau_p)
    outer = np.einsum("kt,ku->ktu", seqs, np.conj(seqs))
    w = np.empty((n_aps, tau_p, n_ues * tau_c), dtype=complex)
    eps = np.empty((n_ues, n_aps, tau_c))
    c = np.empty((n_ues, n_aps, tau_c))
    for l in range(n_aps):
        psi = p * np.einsum("k,ktu->tu", beta[:, l], outer) * bmat + s2 * np.eye(tau_p)
        r = ((np.sqrt(p) * beta[:, l])[:, None, None] * seqs[:, None, :] * btarget[None, :, :]).reshape(
            n_ues * tau_c, tau_p
        ).T
        w[l], e, cl = _solve_bank(psi, r, np.repeat(beta[:, l], tau_c))
        eps[:, l, :] = e.reshape(n_ues, tau_c)
        c[:, l, :] = cl.reshape(n_ues, tau_c)
    return _FilterBank(w=w, eps=eps, c=c)


def lmmse_single_carrier(
    y_pilots: np.ndarray,
    beta: np.ndarray,
    scenario: ScenarioConfig,
    stats: PnStatistics,
    subcarriers: np.ndarray | None = None,
    filters: _FilterBank | None = None,
) -> ChannelEstimate:
    """Single-carrier-model LMMSE of the rotated channel e^{j theta} h.

    Serves two experiment curves: applied to exact-model observations it is
    the "mismatched" baseline; applied to observations generated by the
    interference-free rotation model it is the "single-carrier" reference.
    At N=1 it coincides with the joint distributed estimator.
    """
    if filters is None:
        filters = build_single_carrier_filters(beta, scenario, stats, subcarriers)
    n_ues, n_aps = beta.shape
    tau_c = scenario.coherence.block_symbols
    est = np.einsum("ltj,lt->lj", np.conj(filters.w), y_pilots)
    h_hat = est.reshape(n_aps, n_ues, tau_c).transpose(1, 0, 2)
    return ChannelEstimate(h_hat=h_hat, eps=filters.eps, c=filters.c)


# ---------------------------------------------------------------------------
# PN-unaware MMSE
# ---------------------------------------------------------------------------


def mmse_pn_unaware(y_pilots: np.ndarray, beta: np.ndarray, scenario: ScenarioConfig) -> ChannelEstimate:
    """Classical pilot-despreading MMSE, no phase-noise statistics.

    One block-channel estimate per (UE, AP); with orthogonal sequences this
    is sqrt(p) beta tau_p / (p beta tau_p + sigma^2) times the despread
    observation s^H y / (sqrt(p) tau_p ... folded into the filter).
    """
    plan = scenario.pilot_plan()
    n_ues, n_aps = beta.shape
    tau_p = plan.n_pilots
    p, s2 = scenario.tx_power, scenario.noise_power
    seqs = _seq_matrix(plan, n_ues)
    outer = np.einsum("kt,ku->ktu", seqs, np.conj(seqs))
    h_hat = np.empty((n_ues, n_aps), dtype=complex)
    eps = np.empty((n_ues, n_aps))
    for l in range(n_aps):
        psi = p * np.einsum("k,ktu->tu", beta[:, l], outer) + s2 * np.eye(tau_p)
        r = ((np.sqrt(p) * beta[:, l])[:, None] * seqs).T  # (tau_p, K)
        w = hermitian_solve(psi, r)
        h_hat[:, l] = np.conj(w).T @ y_pilots[l]
        eps[:, l] = np.einsum("tk,tk->k", np.conj(r), w).real
    return ChannelEstimate(h_hat=h_hat, eps=eps, c=np.maximum(beta - eps, 0.0))


# ---------------------------------------------------------------------------
# centralized CPE LMMSE (given channel estimates)
# ---------------------------------------------------------------------------


def _cpe_cov_tables(stats: PnStatistics, ts: np.ndarray, tau_c: int) -> np.ndarray:
    """Centered CPE covariance lookup: tab[same_ue, same_ap, tau, t] =
    Cov(J^{(tau)}_{k,l}, J^{(tau_t)}_{k',l'})."""
    tab = np.zeros((2, 2, tau_c, len(ts)), dtype=complex)
    for su in (0, 1):
        for sa in (0, 1):
            for tau in range(tau_c):
                for j, t_sym in enumerate(ts):
                    tab[su, sa, tau, j] = stats.cpe_cross_cov(tau, int(t_sym), bool(su), bool(sa))
    return tab


def cpe_cov_global(
    h_hat: np.ndarray,
    beta: np.ndarray,
    scenario: ScenarioConfig,
    stats: PnStatistics,
):
    """Covariance of the pooled pilot stack given channel estimates, and its
    mean.

    Returns (psi, ybar): psi is the (L tau_p) x (L tau_p) Hermitian
    covariance — per-UE signal terms with centered CPE cross-covariances,
    ICI/channel-error blocks on the cell diagonal, and sigma^2 I — and ybar
    is the stacked mean sum_k sqrt(p) s_k[t] Jbar^{(tau_t)} h_hat[k,l].
    """
    plan = scenario.pilot_plan()
    n_ues, n_aps = beta.shape
    tau_p = plan.n_pilots
    n, n_c = scenario.grid.n_subcarriers, scenario.coherence.block_subcarriers
    p, s2 = scenario.tx_power, scenario.noise_power
    seqs = _seq_matrix(plan, n_ues)
    ts, ns = plan.symbols, plan.subcarriers
    # signal part: per (l1, l2) block,
    #   sum_{k,k'} p h[k,l1] h*[k',l2] s_k[t1] s*_k'[t2] .* C(k==k', l1==l2)
    stab = np.empty((2, 2, tau_p, tau_p), dtype=complex)
    for su in (0, 1):
        for sa in (0, 1):
            for t1 in range(tau_p):
                for t2 in range(tau_p):
                    stab[su, sa, t1, t2] = stats.cpe_cross_cov(
                        int(ts[t1]), int(ts[t2]), bool(su), bool(sa)
                    )
    outer = np.einsum("kt,ku->ktu", seqs, np.conj(seqs))  # (K, tau_p, tau_p)
    hh = np.einsum("kl,km->klm", h_hat, np.conj(h_hat))  # (K, L, L)
    same = p * np.einsum("klm,ktu->lmtu", hh, outer)  # same-UE part
    u = np.einsum("kl,kt->lt", h_hat, seqs)  # (L, tau_p)
    full = p * np.einsum("lt,mu->lmtu", u, np.conj(u))  # all UE pairs
    off = ~np.eye(n_aps, dtype=bool)
    psi = same * stab[1, 1][None, None] + (full - same) * stab[0, 1][None, None]
    psi[off] = same[off] * stab[1, 0][None] + (full - same)[off] * stab[0, 0][None]
    # ICI + channel-error blocks: nonzero only on the cell diagonal (t1 == t2)
    diag = stats.ici_diag()
    s_in = np.empty(tau_p)
    for t in range(tau_p):
        idx = (int(ns[t]) - np.arange(n_c)) % n
        s_in[t] = diag[idx].sum() - diag[0]
    s_out = (1.0 - diag[0]) - s_in
    pilot_subs = np.unique(ns)
    for t in range(tau_p):
        own = p * np.sum(np.abs(h_hat) ** 2 * s_in[t] + beta * s_out[t], axis=0)  # (L,)
        psi[np.arange(n_aps), np.arange(n_aps), t, t] += own
        dx = stats.ici_cross_diag(int(ts[t]), same_ap=False)
        sp = sum(dx[(int(ns[t]) - j) % n] for j in pilot_subs if j != ns[t])
        cross = p * np.einsum("kl,km->lm", h_hat, np.conj(h_hat)) * sp
        psi[:, :, t, t] += np.where(off, cross, 0.0)
    psi = psi.transpose(0, 2, 1, 3).reshape(n_aps * tau_p, n_aps * tau_p)
    psi[np.diag_indices_from(psi)] += s2
    jbar = stats.mean_cpe_table()
    ybar = np.sqrt(p) * np.einsum("kt,kl->lt", seqs * jbar[ts][None, :], h_hat)
    return psi, ybar.reshape(-1)


def _clamp_cpe(x: np.ndarray, kappa_min: float, kappa_max: float) -> np.ndarray:
    """Amplitude clamp g(x) = (x/|x|) * max(kappa_min, min(|x|, kappa_max));
    zero inputs map to kappa_min with a degenerate-input warning."""
    mag = np.abs(x)
    zero = mag == 0
    if np.any(zero):
        warnings.warn("zero-amplitude CPE estimate; clamped to kappa_min", RuntimeWarning)
    unit = np.where(zero, 1.0, x / np.where(zero, 1.0, mag))
    return unit * np.clip(mag, kappa_min, kappa_max)


def cpe_centralized_constrained(
    y_pilots: np.ndarray,
    h_hat: np.ndarray,
    beta: np.ndarray,
    scenario: ScenarioConfig,
    stats: PnStatistics,
    kappa_min: float | None = 0.98,
    kappa_max: float = 1.0,
) -> CpeEstimate:
    """Centralized LMMSE of the CPE J_0^{(tau)} per (UE, AP, symbol), with an
    amplitude constraint.

    J_hat = g( Jbar + b^H psi^{-1} (y - ybar) ) with centered covariances b
    and psi built from the given channel estimates; kappa_min=None skips the
    constraint g. All tau_c symbols are estimated from the one pooled solve.
    Cost is dominated by the (L tau_p)^3 factorization.
    """
    plan = scenario.pilot_plan()
    n_ues, n_aps = beta.shape
    tau_p, tau_c = plan.n_pilots, scenario.coherence.block_symbols
    p = scenario.tx_power
    seqs = _seq_matrix(plan, n_ues)
    ts = plan.symbols
    psi, ybar = cpe_cov_global(h_hat, beta, scenario, stats)
    ctab = _cpe_cov_tables(stats, ts, tau_c)
    # E{(y - ybar)(J_target - Jbar)*} for target (k, l, tau), stacked over
    # observations (l2, t): sum_k' sqrt(p) s_k'[t] h_hat[k',l2] C[k==k', l==l2][tau, t]
    w1 = np.sqrt(p) * seqs[:, None, :] * h_hat[:, :, None]  # (K, L2, t)
    wsum = w1.sum(axis=0)  # (L2, t)
    b = np.empty((n_ues, n_aps, tau_c, n_aps, tau_p), dtype=complex)
    for k in range(n_ues):
        rest = wsum - w1[k]
        for l in range(n_aps):
            same_l = np.zeros((n_aps, 1))
            same_l[l] = 1.0
            for su, wpart in ((1, w1[k]), (0, rest)):
                contrib = wpart[None, :, :] * (
                    same_l[None] * ctab[su, 1][:, None, :] + (1.0 - same_l[None]) * ctab[su, 0][:, None, :]
                )
                if su == 1:
                    b[k, l] = contrib
                else:
                    b[k, l] += contrib
    bmat = b.reshape(n_ues * n_aps * tau_c, n_aps * tau_p).T  # (Ltau_p, targets)
    resid = (y_pilots.reshape(-1) - ybar)[:, None]
    sol = hermitian_solve(psi, np.concatenate([resid, bmat], axis=1))
    jbar = stats.mean_cpe_table()
    raw = jbar[None, None, :] + np.einsum("ij,i->j", np.conj(bmat), sol[:, 0]).reshape(n_ues, n_aps, tau_c)
    eps = np.einsum("ij,ij->j", np.conj(bmat), sol[:, 1:]).real.reshape(n_ues, n_aps, tau_c)
    prior = np.array([stats.cpe_cov(t, t) for t in range(tau_c)])
    c = np.maximum(prior[None, None, :] - eps, 0.0)
    j_hat = raw if kappa_min is None else _clamp_cpe(raw, kappa_min, kappa_max)
    return CpeEstimate(j_hat=j_hat, eps=eps, c=c)


# ---------------------------------------------------------------------------
# distributed channel LMMSE given CPEs
# ---------------------------------------------------------------------------


def lmmse_channel_given_cpe(
    y_pilots: np.ndarray,
    j_hat: np.ndarray,
    beta: np.ndarray,
    scenario: ScenarioConfig,
    stats: PnStatistics,
) -> ChannelEstimate:
    """Distributed LMMSE of the block channel with CPEs treated as known.

    Effective pilots a_k[t] = s_k[t] * J_hat[k,l,tau_t]; covariance uses the
    rank-K effective-pilot outer products plus the same ICI matrix and noise.
    One estimate per coherence block.
    """
    plan = scenario.pilot_plan()
    n_ues, n_aps = beta.shape
    tau_p = plan.n_pilots
    p, s2 = scenario.tx_power, scenario.noise_power
    seqs = _seq_matrix(plan, n_ues)
    ts = plan.symbols
    h_hat = np.empty((n_ues, n_aps), dtype=complex)
    eps = np.empty((n_ues, n_aps))
    for l in range(n_aps):
        a = seqs * j_hat[:, l, :][:, ts]  # (K, tau_p)
        z = ici_cov_local(beta[:, l], p, plan, stats, seqs=seqs)
        psi = p * np.einsum("k,kt,ku->tu", beta[:, l], a, np.conj(a)) + z + s2 * np.eye(tau_p)
        r = ((np.sqrt(p) * beta[:, l])[:, None] * a).T  # (tau_p, K)
        w = hermitian_solve(psi, r)
        h_hat[:, l] = np.conj(w).T @ y_pilots[l]
        eps[:, l] = np.einsum("tk,tk->k", np.conj(r), w).real
    return ChannelEstimate(h_hat=h_hat, eps=eps, c=np.maximum(beta - eps, 0.0))


# ---------------------------------------------------------------------------
# alternating centralized estimation
# ---------------------------------------------------------------------------


def _model_residual(y_pilots, ch: ChannelEstimate, cpe: CpeEstimate, scenario, seqs, ts) -> float:
    """Pilot-domain data-fit ||y - sum_k sqrt(p) s_k J_hat h_hat||^2."""
    recon = np.sqrt(scenario.tx_power) * np.einsum(
        "kt,klt,kl->lt", seqs, cpe.j_hat[:, :, ts], ch.h_hat
    )
    return float(np.sum(np.abs(y_pilots - recon) ** 2))


def alternating_centralized(
    y_pilots: np.ndarray,
    beta: np.ndarray,
    scenario: ScenarioConfig,
    stats: PnStatistics,
    init: str = "lmmse",
    n_iter: int = 3,
    kappa_min: float | None = 0.98,
    kappa_max: float = 1.0,
    h0: np.ndarray | None = None,
    return_history: bool = False,
):
    """Alternate centralized CPE estimation and distributed channel
    estimation.

    Initialization: the phase trajectories are taken as zero (J_hat^0 = 1);
    h_hat^0 comes from the given-CPE LMMSE with those unit CPEs
    (init='lmmse') or from a provided forward pass h0 (init='dl' — the
    learned initializer has no analytic error variance, so the returned init
    estimate carries c = beta). Each iteration refreshes the CPE given the
    channel, then the channel given the CPE. Returns (ChannelEstimate,
    CpeEstimate); with return_history also a list of per-iteration dicts
    including the pilot-domain residual.
    """
    plan = scenario.pilot_plan()
    tau_c = scenario.coherence.block_symbols
    seqs = _seq_matrix(plan, beta.shape[0])
    ts = plan.symbols
    prior_c = np.array([stats.cpe_cov(t, t) for t in range(tau_c)])
    j0 = np.ones((beta.shape[0], beta.shape[1], tau_c), dtype=complex)
    cpe = CpeEstimate(j_hat=j0, eps=np.zeros_like(j0, dtype=float), c=np.broadcast_to(prior_c, j0.shape).copy())
    if init == "lmmse":
        ch = lmmse_channel_given_cpe(y_pilots, cpe.j_hat, beta, scenario, stats)
    elif init == "dl":
        if h0 is None:
            raise ValueError("init='dl' requires h0 (forward-pass channel estimates)")
        ch = ChannelEstimate(h_hat=np.asarray(h0, dtype=complex), eps=np.zeros_like(beta), c=beta.copy())
    else:
        raise ValueError(f"unknown init {init!r}")
    history = [
        {"iteration": 0, "channel": ch, "cpe": cpe, "residual": _model_residual(y_pilots, ch, cpe, scenario, seqs, ts)}
    ]
    for i in range(1, n_iter + 1):
        cpe = cpe_centralized_constrained(y_pilots, ch.h_hat, beta, scenario, stats, kappa_min, kappa_max)
        ch = lmmse_channel_given_cpe(y_pilots, cpe.j_hat, beta, scenario, stats)
        if not (np.all(np.isfinite(ch.h_hat)) and np.all(np.isfinite(cpe.j_hat))):
            raise NumericalError(f"non-finite iterate at iteration {i}")
        history.append(
            {"iteration": i, "channel": ch, "cpe": cpe, "residual": _model_residual(y_pilots, ch, cpe, scenario, seqs, ts)}
        )
    if return_history:
        return ch, cpe, history
    return ch, cpe


def effective_estimate(ch: ChannelEstimate, cpe: CpeEstimate, beta: np.ndarray) -> ChannelEstimate:
    """Combine a block-channel estimate and a CPE estimate into the
    per-symbol effective channel J_hat * h_hat with error variance
    |J_hat|^2 c_h + c_J beta (independence plumbing, floored at 0)."""
    eff = cpe.j_hat * ch.h_hat[:, :, None]
    err = np.abs(cpe.j_hat) ** 2 * ch.c[:, :, None] + cpe.c * beta[:, :, None]
    return ChannelEstimate(h_hat=eff, eps=np.abs(eff) ** 2, c=np.maximum(err, 0.0))
