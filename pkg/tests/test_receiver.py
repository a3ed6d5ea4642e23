"""Combining, use-and-then-forget SE accounting, and the complexity and
fronthaul calculators (checked against independent hand-written formulas)."""

import numpy as np
import pytest

from cfofdm import (
    CombinerWeights,
    ConfigError,
    DccAssignment,
    ExpectationBank,
    NumericalError,
    PnStatistics,
    RxFrame,
    complexity_report,
    demodulate,
    effective_true,
    fronthaul_report,
    gen_pn_block,
    ici_power_lambda,
    mmse_combiner,
    scenario1,
    se_per_ue,
    sinr_uatf,
    trial_terms,
    true_cpe,
)
from cfofdm.receiver import ESTIMATOR_COMPLEXITY, _Z95

from conftest import tiny_scenario


# ---------------------------------------------------------------------------
# serving sets
# ---------------------------------------------------------------------------


def test_dcc_validation_and_counts():
    with pytest.raises(ConfigError):
        DccAssignment(np.array([0, 1]))  # 1-D
    with pytest.raises(ConfigError):
        DccAssignment(np.array([[0, 2], [1, 1]]))  # non-binary
    dcc = DccAssignment(np.array([[1, 0, 1], [0, 1, 1]]))
    np.testing.assert_array_equal(dcc.serving_aps(0), [0, 2])
    np.testing.assert_array_equal(dcc.served_ues(2), [0, 1])
    np.testing.assert_array_equal(dcc.serving_counts, [2, 2])
    np.testing.assert_array_equal(dcc.served_counts, [1, 1, 2])
    full = DccAssignment.all_serving(2, 3)
    assert full.d.all() and full.d.shape == (2, 3)


def test_dcc_nearest_picks_strongest_aps():
    beta = np.array([[1.0, 5.0, 3.0], [9.0, 2.0, 4.0]])
    dcc = DccAssignment.nearest(beta, 2)
    np.testing.assert_array_equal(dcc.d, [[False, True, True], [True, False, True]])
    with pytest.raises(ConfigError):
        DccAssignment.nearest(beta, 0)
    with pytest.raises(ConfigError):
        DccAssignment.nearest(beta, 4)


# ---------------------------------------------------------------------------
# combining
# ---------------------------------------------------------------------------


def test_combiner_scalar_closed_form():
    sc = tiny_scenario(n_aps=1, n_ues=1)
    h = np.array([[[2.0 + 1.0j]]])
    c = np.array([[[0.3]]])
    p, s2 = sc.tx_power, sc.noise_power
    v = mmse_combiner(h, c, None, sc).v
    want = p * h[0, 0, 0] / (p * np.abs(h[0, 0, 0]) ** 2 + p * 0.3 + s2)
    assert v[0, 0, 0] == pytest.approx(want, rel=1e-12)


def test_combiner_serving_mask_matches_manual_submatrix(rng):
    sc = tiny_scenario(n_aps=3, n_ues=2)
    h = rng.standard_normal((2, 3, 4)) + 1j * rng.standard_normal((2, 3, 4))
    c = rng.uniform(0.1, 0.5, size=(2, 3, 4))
    dcc = DccAssignment(np.array([[1, 0, 1], [0, 1, 1]]))
    v = mmse_combiner(h, c, dcc, sc).v
    p, s2 = sc.tx_power, sc.noise_power
    assert np.all(v[0, :, 1] == 0) and np.all(v[1, :, 0] == 0)
    for tau in range(4):
        ht = h[:, :, tau]
        a = p * (ht.T @ np.conj(ht)) + np.diag(s2 + p * c[:, :, tau].sum(axis=0))
        idx = [0, 2]
        want = p * np.linalg.solve(a[np.ix_(idx, idx)], ht[0, idx])
        np.testing.assert_allclose(v[0, tau, idx], want, rtol=1e-9)


def test_combiner_full_mask_equals_no_mask(rng):
    sc = tiny_scenario(n_aps=3, n_ues=2)
    h = rng.standard_normal((2, 3, 4)) + 1j * rng.standard_normal((2, 3, 4))
    a = mmse_combiner(h, 0.1, None, sc).v
    b = mmse_combiner(h, 0.1, DccAssignment.all_serving(2, 3), sc).v
    np.testing.assert_array_equal(a, b)


def test_combiner_empty_serving_set_gives_zero_weights(rng):
    sc = tiny_scenario(n_aps=2, n_ues=2)
    h = rng.standard_normal((2, 2, 4)) + 0j
    dcc = DccAssignment(np.array([[0, 0], [1, 1]]))
    v = mmse_combiner(h, 0.1, dcc, sc).v
    assert np.all(v[0] == 0)
    assert np.any(v[1] != 0)


def test_demodulate_hand_case_and_input_forms():
    v = np.zeros((1, 2, 2), dtype=complex)
    v[0, 0] = [1.0, 1.0j]
    v[0, 1] = [2.0, 0.0]
    y = np.arange(12, dtype=complex).reshape(2, 2, 3)  # (L, tau_c, N)
    weights = CombinerWeights(v=v)
    got = demodulate(RxFrame(y=y), weights)
    want0 = y[0, 0] - 1j * y[1, 0]  # conj(v)^T y at tau = 0
    want1 = 2.0 * y[0, 1]
    np.testing.assert_allclose(got[0, 0], want0)
    np.testing.assert_allclose(got[0, 1], want1)
    np.testing.assert_array_equal(demodulate(y, weights), got)


# ---------------------------------------------------------------------------
# trial terms and the expectation bank
# ---------------------------------------------------------------------------


def test_true_cpe_recomputes_the_sample_mean(rng):
    sc = tiny_scenario(gamma_ue=4e-17)
    pn = gen_pn_block(rng, sc)
    j = true_cpe(pn, sc.n_aps)
    assert j.shape == (2, 2, 4)
    for k in (0, 1):
        for l in (0, 1):
            want = np.exp(1j * pn.theta(k, l)).mean(axis=-1)
            np.testing.assert_allclose(j[k, l], want, atol=1e-14)
    np.testing.assert_array_less(np.abs(j), 1.0 + 1e-12)


def test_true_cpe_is_one_without_phase_noise(rng):
    pn = gen_pn_block(rng, tiny_scenario(gamma_ap=0.0, gamma_ue=0.0))
    np.testing.assert_allclose(true_cpe(pn, 2), 1.0, atol=1e-15)


def test_effective_true_combines_cpe_and_block_channel(rng):
    sc = tiny_scenario(gamma_ue=4e-17)
    pn = gen_pn_block(rng, sc)
    h_blocks = rng.standard_normal((2, 2, 4)) + 1j * rng.standard_normal((2, 2, 4))
    eff = effective_true(h_blocks, pn, block=1)
    want = true_cpe(pn, 2) * h_blocks[:, :, 1][:, :, None]
    np.testing.assert_allclose(eff, want, atol=1e-15)


def test_ici_power_scales_with_the_cpe_deficit():
    sc = tiny_scenario(gamma_ue=4e-17)
    stats = PnStatistics.from_scenario(sc)
    beta = np.array([[1e-9, 2e-9]])
    lam = ici_power_lambda(beta, sc, stats)
    np.testing.assert_allclose(lam, sc.tx_power * beta * (1.0 - stats.cpe_corr(0)), rtol=1e-12)
    stats0 = PnStatistics.from_scenario(tiny_scenario(gamma_ap=0.0, gamma_ue=0.0))
    np.testing.assert_array_equal(ici_power_lambda(beta, sc, stats0), 0.0)


def test_trial_terms_hand_check(rng):
    k_ues, l_aps, tau_c = 2, 3, 2
    v = rng.standard_normal((k_ues, tau_c, l_aps)) + 1j * rng.standard_normal((k_ues, tau_c, l_aps))
    h = rng.standard_normal((k_ues, l_aps, tau_c)) + 1j * rng.standard_normal((k_ues, l_aps, tau_c))
    lam = rng.uniform(0.0, 1.0, size=(k_ues, l_aps))
    cross, rho, noise = trial_terms(CombinerWeights(v=v), h, lam)
    assert cross.shape == (k_ues, tau_c, k_ues)
    for k in range(k_ues):
        for tau in range(tau_c):
            for i in range(k_ues):
                want = np.vdot(v[k, tau], h[i, :, tau])
                assert cross[k, tau, i] == pytest.approx(want, rel=1e-12)
            want_rho = np.sum(np.abs(v[k, tau]) ** 2 * lam.sum(axis=0))
            assert rho[k, tau] == pytest.approx(want_rho, rel=1e-12)
            assert noise[k, tau] == pytest.approx(np.sum(np.abs(v[k, tau]) ** 2), rel=1e-12)


def test_expectation_bank_merge_monoid(rng):
    terms = [
        (
            rng.standard_normal((2, 3, 2)) + 0j,
            rng.uniform(size=(2, 3)),
            rng.uniform(size=(2, 3)),
        )
        for _ in range(4)
    ]
    bank = ExpectationBank.from_trials(terms)
    assert bank.n_trials == 4 and bank.cross.shape == (4, 2, 3, 2)
    empty = ExpectationBank.empty(2, 3)
    assert empty.n_trials == 0
    merged = empty.merge(bank).merge(empty)
    np.testing.assert_array_equal(merged.cross, bank.cross)
    a = ExpectationBank.from_trials(terms[:1])
    b = ExpectationBank.from_trials(terms[1:])
    np.testing.assert_array_equal(a.merge(b).rho, bank.rho)


# ---------------------------------------------------------------------------
# UatF SINR and SE
# ---------------------------------------------------------------------------


def test_sinr_hand_case_single_trial(tiny):
    cross = np.array([[[[2.0 + 0.0j]]]])  # (T=1, K=1, tau_c=1, K=1)
    rho = np.array([[[0.5]]])
    noise = np.array([[[3.0]]])
    bank = ExpectationBank(cross, rho, noise)
    p, s2 = tiny.tx_power, tiny.noise_power
    want = p * 4.0 / (p * 4.0 - p * 4.0 + 0.5 + s2 * 3.0)
    assert sinr_uatf(bank, tiny)[0, 0] == pytest.approx(want, rel=1e-12)


def test_sinr_empty_bank_raises(tiny):
    with pytest.raises(ValueError):
        sinr_uatf(ExpectationBank.empty(1, 1), tiny)


def test_sinr_zero_denominator_raises(tiny):
    bank = ExpectationBank(
        np.array([[[[2.0 + 0.0j]]]]), np.zeros((1, 1, 1)), np.zeros((1, 1, 1))
    )
    with pytest.raises(NumericalError):
        sinr_uatf(bank, tiny)


def test_se_single_trial_has_nan_cis(tiny, rng):
    bank = ExpectationBank(
        rng.standard_normal((1, 2, 4, 2)) + 0j,
        rng.uniform(size=(1, 2, 4)),
        rng.uniform(size=(1, 2, 4)),
    )
    rep = se_per_ue(bank, tiny)
    assert np.all(np.isfinite(rep.se))
    assert np.all(np.isnan(rep.ci_low)) and np.all(np.isnan(rep.ci_high))
    assert np.all(np.isnan(rep.symbol_ci_low))
    assert rep.n_trials == 1


def _random_bank(rng, t=6, k=2, tau_c=3):
    return ExpectationBank(
        rng.standard_normal((t, k, tau_c, k)) + 1j * rng.standard_normal((t, k, tau_c, k)),
        rng.uniform(0.1, 1.0, size=(t, k, tau_c)),
        rng.uniform(0.1, 1.0, size=(t, k, tau_c)),
    )


def test_se_report_recomputes_from_sinr(tiny, rng):
    bank = _random_bank(rng)
    rep = se_per_ue(bank, tiny)
    prelog = tiny.coherence.prelog
    np.testing.assert_allclose(rep.se_symbol, prelog * np.log2(1.0 + rep.sinr), rtol=1e-12)
    np.testing.assert_allclose(rep.se, rep.se_symbol.mean(axis=-1), rtol=1e-12)
    np.testing.assert_allclose(rep.sinr, sinr_uatf(bank, tiny), rtol=1e-12)
    np.testing.assert_allclose(rep.ici_power, bank.rho.mean(axis=0), rtol=1e-12)
    assert rep.prelog == prelog and rep.n_trials == 6
    assert np.all(rep.ci_low <= rep.se) and np.all(rep.se <= rep.ci_high)


def test_jackknife_cis_match_brute_force(tiny, rng):
    bank = _random_bank(rng)
    rep = se_per_ue(bank, tiny)
    t = bank.n_trials
    prelog = tiny.coherence.prelog
    se_t = np.empty((t,) + rep.se.shape)
    se_sym_t = np.empty((t,) + rep.se_symbol.shape)
    for drop in range(t):
        sub = ExpectationBank(
            np.delete(bank.cross, drop, axis=0),
            np.delete(bank.rho, drop, axis=0),
            np.delete(bank.noise, drop, axis=0),
        )
        sinr = sinr_uatf(sub, tiny)
        se_sym_t[drop] = prelog * np.log2(1.0 + sinr)
        se_t[drop] = se_sym_t[drop].mean(axis=-1)
    var = (t - 1) / t * ((se_t - se_t.mean(axis=0)) ** 2).sum(axis=0)
    np.testing.assert_allclose(rep.ci_high - rep.se, _Z95 * np.sqrt(var), rtol=1e-9)
    var_sym = (t - 1) / t * ((se_sym_t - se_sym_t.mean(axis=0)) ** 2).sum(axis=0)
    np.testing.assert_allclose(rep.se_symbol - rep.symbol_ci_low, _Z95 * np.sqrt(var_sym), rtol=1e-9)


# ---------------------------------------------------------------------------
# complexity / fronthaul calculators
# ---------------------------------------------------------------------------

# independent re-derivations of the per-stage multiplication counts
_COMPLEXITY_ORACLES = {
    "pn-unaware": lambda v: (v["tau_p"] + 3) * v["K"] * v["M"],
    "single-carrier": lambda v: (v["tau_p"] ** 2 + 3 * v["tau_p"])
    * (v["tau_c"] * v["N_c"] - v["tau_p"])
    * v["K"]
    * v["M"],
    "joint-distributed": lambda v: (v["tau_p"] ** 2 + 3 * v["tau_p"]) * v["tau_c"] * v["K"] * v["M"],
    "learned-init": lambda v: (2 * v["tau_p"] * v["M1"] + v["M1"] * v["M2"] + 2 * v["M2"] * v["K"])
    / 4
    * v["M"],
    "channel-given-cpe": lambda v: (v["tau_p"] ** 2 + 3 * v["tau_p"]) * v["K"] * v["M"] * v["N_it"],
    "centralized-cpe": lambda v: (
        v["L"] ** 2 * v["tau_p"] ** 2 + v["L"] * v["tau_p"] + v["L"] * v["tau_p"] * v["K"] * v["tau_c"] * v["M"]
    )
    * v["N_it"],
}

_FRONTHAUL_ORACLES = {
    "pn-unaware": {"pilot": lambda v: v["tau_p"], "estimates": lambda v: v["D"]},
    "single-carrier": {"estimates": lambda v: v["D"] * (v["tau_c"] * v["N_c"] - v["tau_p"])},
    "joint-distributed": {"estimates": lambda v: v["D"] * v["tau_c"]},
    "learned-init": {"estimates": lambda v: v["D"]},
    "channel-given-cpe": {"estimates": lambda v: (v["D"] + v["D"] * v["tau_p"]) * v["N_it"]},
}


def test_complexity_rows_match_independent_oracles():
    sc = tiny_scenario(n_aps=3, n_ues=2)
    for m1, m2, n_iter in ((100, 100, 3), (4, 8, 1)):
        rep = complexity_report(sc, m1=m1, m2=m2, n_iter=n_iter)
        v = rep["vars"]
        assert v["M"] == 3.0 and v["D"] == 2.0  # all-serving defaults
        for stage, oracle in _COMPLEXITY_ORACLES.items():
            assert rep["rows"][stage]["count"] == pytest.approx(oracle(v), rel=1e-12), stage


def test_complexity_estimator_totals_sum_their_stages():
    rep = complexity_report(tiny_scenario())
    rows = rep["rows"]
    for name, stages in ESTIMATOR_COMPLEXITY.items():
        assert rep["estimators"][name] == pytest.approx(
            sum(rows[s]["count"] for s in stages), rel=1e-12
        )
    dl = rep["estimators"]["proposed-centralized-dl"]
    lm = rep["estimators"]["proposed-centralized-lmmse"]
    assert dl == pytest.approx(lm + rows["learned-init"]["count"], rel=1e-12)


def test_complexity_reference_operating_point():
    rep = complexity_report(scenario1())
    assert rep["rows"]["joint-distributed"]["count"] == pytest.approx(9.2e6, rel=1e-12)


def test_complexity_respects_serving_sets_and_validates_names():
    sc = tiny_scenario(n_aps=4, n_ues=2)
    beta = np.array([[4.0, 3.0, 2.0, 1.0], [1.0, 2.0, 3.0, 4.0]])
    dcc = DccAssignment.nearest(beta, 2)
    rep = complexity_report(sc, dcc=dcc)
    assert rep["vars"]["M"] == 2.0
    assert rep["vars"]["D"] == 1.0  # 4 serving slots over 4 APs
    with pytest.raises(ConfigError):
        complexity_report(sc, estimator="genie")
    only = complexity_report(sc, estimator="unaware")
    assert set(only["estimators"]) == {"unaware"}


def test_fronthaul_rows_match_independent_oracles():
    sc = tiny_scenario(n_aps=3, n_ues=2)
    rep = fronthaul_report(sc, n_iter=2)
    v = rep["vars"]
    data = v["tau_c"] * v["N_c"] - v["tau_p"]
    for stage, row in rep["rows"].items():
        assert row["data"]["count"] == pytest.approx(data, rel=1e-12)
        if stage in _FRONTHAUL_ORACLES and "pilot" in _FRONTHAUL_ORACLES[stage]:
            assert row["pilot"]["count"] == v["tau_p"]
        if stage in _FRONTHAUL_ORACLES and "estimates" in _FRONTHAUL_ORACLES[stage]:
            assert row["estimates"]["count"] == pytest.approx(
                _FRONTHAUL_ORACLES[stage]["estimates"](v), rel=1e-12
            ), stage
    assert "estimates" not in rep["rows"]["centralized-cpe"]  # raw pilots only
