"""Channel/CPE estimators: hand-computed closed forms, structural
invariants, and no-phase-noise reductions."""

import numpy as np
import pytest

from cfofdm import (
    ChannelEstimate,
    CpeEstimate,
    NumericalError,
    PnStatistics,
    alternating_centralized,
    build_joint_filters,
    build_single_carrier_filters,
    cpe_centralized_constrained,
    cpe_cov_global,
    effective_estimate,
    gen_block_channels,
    gen_pn_block,
    gen_tx_grid,
    hermitian_solve,
    ici_cov_local,
    lmmse_channel_given_cpe,
    lmmse_joint_distributed,
    lmmse_single_carrier,
    mmse_pn_unaware,
    stack_pilots,
    synthesize_time,
)
from cfofdm.config import CoherenceGeometry, OfdmGrid
from cfofdm.estimators import _clamp_cpe

from conftest import tiny_scenario


def _observe(scenario, seed=0):
    """One trial's pilot observations plus ground truth."""
    rng = np.random.default_rng(seed)
    beta = np.full((scenario.n_ues, scenario.n_aps), scenario.beta_uniform_value)
    h = gen_block_channels(rng, beta, scenario.coherence.n_blocks(scenario.grid))
    pn = gen_pn_block(rng, scenario)
    tx = gen_tx_grid(rng, scenario)
    y = synthesize_time(rng, tx, h, pn, scenario).y
    return stack_pilots(y, scenario), beta, h, pn


# ---------------------------------------------------------------------------
# linear algebra utility
# ---------------------------------------------------------------------------


def test_hermitian_solve_matches_direct_solve(rng):
    m = rng.standard_normal((5, 5)) + 1j * rng.standard_normal((5, 5))
    a = m @ np.conj(m).T + 5.0 * np.eye(5)
    b = rng.standard_normal((5, 3)) + 1j * rng.standard_normal((5, 3))
    np.testing.assert_allclose(hermitian_solve(a, b), np.linalg.solve(a, b), atol=1e-10)


def test_hermitian_solve_falls_back_on_singular_input():
    a = np.array([[1.0, 1.0], [1.0, 1.0]])  # exactly singular
    x = hermitian_solve(a, np.array([2.0, 2.0]))
    np.testing.assert_allclose(x, [1.0, 1.0], atol=1e-12)  # least-norm solution


def test_hermitian_solve_rejects_non_finite_results():
    with pytest.raises(NumericalError):
        hermitian_solve(np.eye(2), np.array([np.nan, 1.0]))


# ---------------------------------------------------------------------------
# PN-unaware MMSE closed form
# ---------------------------------------------------------------------------


def test_unaware_single_ue_closed_form(rng):
    sc = tiny_scenario(n_ues=1)
    y_pilots, beta, _, _ = _observe(sc, seed=3)
    plan = sc.pilot_plan()
    s = plan.book[0]
    p, s2, b = sc.tx_power, sc.noise_power, beta[0, 0]
    tau_p = plan.n_pilots
    est = mmse_pn_unaware(y_pilots, beta, sc)
    gain = np.sqrt(p) * b / (p * b * tau_p + s2)
    for l in range(sc.n_aps):
        want = gain * np.vdot(s, y_pilots[l])
        assert est.h_hat[0, l] == pytest.approx(want, rel=1e-10)
    eps = p * b**2 * tau_p / (p * b * tau_p + s2)
    np.testing.assert_allclose(est.eps, eps, rtol=1e-12)
    np.testing.assert_allclose(est.c, b - eps, rtol=1e-12)


# ---------------------------------------------------------------------------
# ICI covariance structure
# ---------------------------------------------------------------------------


def test_ici_cov_is_hermitian_psd_and_symbol_block_diagonal():
    sc = tiny_scenario(pilot_pattern="packed", gamma_ue=4e-17)
    stats = PnStatistics.from_scenario(sc)
    plan = sc.pilot_plan()
    beta_l = np.array([1e-9, 3e-9])
    z = ici_cov_local(beta_l, sc.tx_power, plan, stats)
    np.testing.assert_allclose(z, np.conj(z).T, atol=1e-20)
    assert np.linalg.eigvalsh(z).min() > -1e-12 * np.abs(z).max()
    for t1 in range(plan.n_pilots):
        for t2 in range(plan.n_pilots):
            if plan.symbols[t1] != plan.symbols[t2]:
                assert z[t1, t2] == 0.0


def test_ici_cov_diagonal_counts_all_leaked_power():
    """Diagonal = p * sum(beta) * (1 - E{|J_0|^2}) for single-pilot symbols
    (total leaked power, nothing excluded but the CPE term)."""
    sc = tiny_scenario(gamma_ue=4e-17)  # staircase: one pilot per symbol
    stats = PnStatistics.from_scenario(sc)
    plan = sc.pilot_plan()
    beta_l = np.array([1e-9, 3e-9])
    z = ici_cov_local(beta_l, sc.tx_power, plan, stats)
    want = sc.tx_power * beta_l.sum() * stats.cpe_deficit()
    np.testing.assert_allclose(np.diag(z).real, want, rtol=1e-10)


def test_ici_cov_exactly_zero_without_phase_noise():
    sc = tiny_scenario(gamma_ap=0.0, gamma_ue=0.0, pilot_pattern="packed")
    stats = PnStatistics.from_scenario(sc)
    z = ici_cov_local(np.array([1e-9, 3e-9]), sc.tx_power, sc.pilot_plan(), stats)
    assert np.all(z == 0.0)


# ---------------------------------------------------------------------------
# no-phase-noise reductions
# ---------------------------------------------------------------------------


def test_all_estimators_agree_without_phase_noise():
    sc = tiny_scenario(gamma_ap=0.0, gamma_ue=0.0)
    y_pilots, beta, _, _ = _observe(sc, seed=5)
    stats = PnStatistics.from_scenario(sc)
    tau_c = sc.coherence.block_symbols
    base = mmse_pn_unaware(y_pilots, beta, sc)
    joint = lmmse_joint_distributed(y_pilots, beta, sc, stats)
    single = lmmse_single_carrier(y_pilots, beta, sc, stats)
    ch, cpe = alternating_centralized(y_pilots, beta, sc, stats)
    eff = effective_estimate(ch, cpe, beta)
    ref = base.h_hat[:, :, None]
    for est in (joint, single, eff):
        np.testing.assert_allclose(est.h_hat, np.broadcast_to(ref, (2, 2, tau_c)), atol=1e-10 * np.abs(ref).max())
    np.testing.assert_allclose(cpe.j_hat, 1.0, atol=1e-12)
    np.testing.assert_allclose(joint.eps, np.broadcast_to(base.eps[:, :, None], (2, 2, tau_c)), rtol=1e-10)
    np.testing.assert_allclose(single.c, np.broadcast_to(base.c[:, :, None], (2, 2, tau_c)), atol=1e-24)


def test_single_subcarrier_joint_and_single_carrier_coincide():
    sc = tiny_scenario(
        grid=OfdmGrid(n_subcarriers=1, n_cp=0, spacing=15e3, carrier_freq=2e9),
        coherence=CoherenceGeometry(block_subcarriers=1, block_symbols=4, n_pilots=2),
        gamma_ue=4e-17,
    )
    y_pilots, beta, _, _ = _observe(sc, seed=7)
    stats = PnStatistics.from_scenario(sc)
    joint = lmmse_joint_distributed(y_pilots, beta, sc, stats)
    single = lmmse_single_carrier(y_pilots, beta, sc, stats)
    np.testing.assert_allclose(joint.h_hat, single.h_hat, rtol=1e-9)
    np.testing.assert_allclose(joint.eps, single.eps, rtol=1e-9)
    np.testing.assert_allclose(joint.c, single.c, atol=1e-9 * beta.max())


# ---------------------------------------------------------------------------
# filter banks
# ---------------------------------------------------------------------------


def test_prebuilt_filter_banks_reproduce_direct_calls():
    sc = tiny_scenario(gamma_ue=4e-17)
    y_pilots, beta, _, _ = _observe(sc, seed=11)
    stats = PnStatistics.from_scenario(sc)
    bank = build_joint_filters(beta, sc, stats)
    a = lmmse_joint_distributed(y_pilots, beta, sc, stats)
    b = lmmse_joint_distributed(y_pilots, beta, sc, stats, filters=bank)
    np.testing.assert_array_equal(a.h_hat, b.h_hat)
    sbank = build_single_carrier_filters(beta, sc, stats)
    a = lmmse_single_carrier(y_pilots, beta, sc, stats)
    b = lmmse_single_carrier(y_pilots, beta, sc, stats, filters=sbank)
    np.testing.assert_array_equal(a.h_hat, b.h_hat)


def test_single_carrier_evaluation_cells_are_configurable():
    sc = tiny_scenario(gamma_ue=8e-17)
    y_pilots, beta, _, _ = _observe(sc, seed=13)
    stats = PnStatistics.from_scenario(sc)
    default = lmmse_single_carrier(y_pilots, beta, sc, stats)
    pinned = lmmse_single_carrier(y_pilots, beta, sc, stats, subcarriers=np.zeros(4, dtype=int))
    assert not np.allclose(default.h_hat, pinned.h_hat)  # different target cells


def test_estimates_have_consistent_shapes_and_variances():
    sc = tiny_scenario(gamma_ue=4e-17)
    y_pilots, beta, _, _ = _observe(sc, seed=17)
    stats = PnStatistics.from_scenario(sc)
    est = lmmse_joint_distributed(y_pilots, beta, sc, stats)
    assert est.h_hat.shape == est.eps.shape == est.c.shape == (2, 2, 4)
    assert np.all(est.eps >= 0) and np.all(est.c >= 0)
    # error variance never exceeds the prior
    prior = beta[:, :, None] * stats.cpe_corr(0)
    assert np.all(est.c <= prior + 1e-20)


# ---------------------------------------------------------------------------
# centralized CPE machinery
# ---------------------------------------------------------------------------


def test_cpe_covariance_is_hermitian_pd_and_mean_matches():
    sc = tiny_scenario(gamma_ue=4e-17)
    y_pilots, beta, _, _ = _observe(sc, seed=19)
    stats = PnStatistics.from_scenario(sc)
    h_hat = mmse_pn_unaware(y_pilots, beta, sc).h_hat
    psi, ybar = cpe_cov_global(h_hat, beta, sc, stats)
    tau_p = sc.pilot_plan().n_pilots
    assert psi.shape == (2 * tau_p, 2 * tau_p)
    np.testing.assert_allclose(psi, np.conj(psi).T, atol=1e-18)
    assert np.linalg.eigvalsh(psi).min() > 0
    plan = sc.pilot_plan()
    seqs = plan.book[plan.ue_pilot_indices(2)]
    jbar = stats.mean_cpe_table()[plan.symbols]
    want = np.sqrt(sc.tx_power) * np.einsum("kt,t,kl->lt", seqs, jbar, h_hat)
    np.testing.assert_allclose(ybar.reshape(2, tau_p), want, atol=1e-18)


def test_amplitude_clamp_behaviour():
    x = np.array([0.5 * np.exp(1j * 0.3), 0.99 * np.exp(-1j * 1.2), 1.7j])
    out = _clamp_cpe(x, 0.98, 1.0)
    np.testing.assert_allclose(np.abs(out), [0.98, 0.99, 1.0], rtol=1e-12)
    np.testing.assert_allclose(np.angle(out), np.angle(x), rtol=1e-12)
    with pytest.warns(RuntimeWarning):
        out = _clamp_cpe(np.array([0.0 + 0.0j]), 0.9, 1.0)
    np.testing.assert_allclose(out, [0.9], atol=1e-15)


def test_constrained_cpe_is_clamp_of_unconstrained():
    sc = tiny_scenario(gamma_ue=8e-17)
    y_pilots, beta, _, _ = _observe(sc, seed=23)
    stats = PnStatistics.from_scenario(sc)
    h_hat = mmse_pn_unaware(y_pilots, beta, sc).h_hat
    free = cpe_centralized_constrained(y_pilots, h_hat, beta, sc, stats, kappa_min=None)
    tied = cpe_centralized_constrained(y_pilots, h_hat, beta, sc, stats, kappa_min=0.98, kappa_max=1.0)
    np.testing.assert_allclose(tied.j_hat, _clamp_cpe(free.j_hat, 0.98, 1.0), atol=1e-14)
    assert np.all((np.abs(tied.j_hat) >= 0.98 - 1e-12) & (np.abs(tied.j_hat) <= 1.0 + 1e-12))
    np.testing.assert_array_equal(tied.eps, free.eps)  # variances unaffected by the clamp
    assert tied.j_hat.shape == (2, 2, 4)
    assert np.all(tied.c >= 0)


def test_channel_given_unit_cpe_matches_unaware_when_noise_free_of_ici():
    sc = tiny_scenario(gamma_ap=0.0, gamma_ue=0.0)
    y_pilots, beta, _, _ = _observe(sc, seed=29)
    stats = PnStatistics.from_scenario(sc)
    j1 = np.ones((2, 2, 4), dtype=complex)
    given = lmmse_channel_given_cpe(y_pilots, j1, beta, sc, stats)
    base = mmse_pn_unaware(y_pilots, beta, sc)
    np.testing.assert_allclose(given.h_hat, base.h_hat, atol=1e-12 * np.abs(base.h_hat).max())
    np.testing.assert_allclose(given.eps, base.eps, rtol=1e-10)


# ---------------------------------------------------------------------------
# alternating estimation
# ---------------------------------------------------------------------------


def test_alternating_argument_validation():
    sc = tiny_scenario()
    y_pilots, beta, _, _ = _observe(sc, seed=31)
    stats = PnStatistics.from_scenario(sc)
    with pytest.raises(ValueError):
        alternating_centralized(y_pilots, beta, sc, stats, init="dl")
    with pytest.raises(ValueError):
        alternating_centralized(y_pilots, beta, sc, stats, init="genie")


def test_alternating_history_structure_and_dl_init_passthrough():
    sc = tiny_scenario(gamma_ue=4e-17)
    y_pilots, beta, _, _ = _observe(sc, seed=37)
    stats = PnStatistics.from_scenario(sc)
    h0 = np.full((2, 2), 1e-5 + 1e-5j)
    ch, cpe, hist = alternating_centralized(
        y_pilots, beta, sc, stats, init="dl", h0=h0, n_iter=2, return_history=True
    )
    assert [h["iteration"] for h in hist] == [0, 1, 2]
    np.testing.assert_array_equal(hist[0]["channel"].h_hat, h0)
    np.testing.assert_array_equal(hist[0]["channel"].c, beta)
    np.testing.assert_array_equal(hist[0]["cpe"].j_hat, 1.0)
    assert all(np.isfinite(h["residual"]) and h["residual"] >= 0 for h in hist)
    assert hist[-1]["channel"] is ch and hist[-1]["cpe"] is cpe


def test_alternating_residual_is_the_pilot_data_fit():
    sc = tiny_scenario(gamma_ue=4e-17)
    y_pilots, beta, _, _ = _observe(sc, seed=41)
    stats = PnStatistics.from_scenario(sc)
    plan = sc.pilot_plan()
    seqs = plan.book[plan.ue_pilot_indices(2)]
    ch, cpe, hist = alternating_centralized(y_pilots, beta, sc, stats, n_iter=1, return_history=True)
    recon = np.sqrt(sc.tx_power) * np.einsum(
        "kt,klt,kl->lt", seqs, cpe.j_hat[:, :, plan.symbols], ch.h_hat
    )
    want = float(np.sum(np.abs(y_pilots - recon) ** 2))
    assert hist[-1]["residual"] == pytest.approx(want, rel=1e-12)


def test_effective_estimate_combines_variances():
    ch = ChannelEstimate(
        h_hat=np.array([[1.0 + 1.0j]]), eps=np.array([[2.0]]), c=np.array([[0.5]])
    )
    cpe = CpeEstimate(
        j_hat=np.array([[[0.9, 0.5j]]]), eps=np.array([[[0.8, 0.2]]]), c=np.array([[[0.1, 0.3]]])
    )
    beta = np.array([[4.0]])
    eff = effective_estimate(ch, cpe, beta)
    np.testing.assert_allclose(eff.h_hat, np.array([[[0.9 + 0.9j, -0.5 + 0.5j]]]))
    np.testing.assert_allclose(eff.eps, np.abs(eff.h_hat) ** 2)
    np.testing.assert_allclose(eff.c, [[[0.81 * 0.5 + 0.1 * 4.0, 0.25 * 0.5 + 0.3 * 4.0]]])
