"""Geometry, large-scale fading, and per-block Rayleigh channel draws."""

import numpy as np
import pytest

from cfofdm import gen_block_channels, gen_large_scale, time_domain_taps
from cfofdm.config import ConfigError

from conftest import tiny_scenario


def test_shapes_and_uniform_beta(rng):
    sc = tiny_scenario(n_aps=3, n_ues=2)
    ls = gen_large_scale(rng, sc)
    assert ls.ap_pos.shape == (3, 2)
    assert ls.ue_pos.shape == (2, 2)
    assert ls.beta.shape == (2, 3)
    np.testing.assert_array_equal(ls.beta, 1e-9)


def test_positions_stay_inside_their_areas(rng):
    sc = tiny_scenario(n_aps=40, n_ues=30, ap_area_side=500.0, ue_area_side=100.0)
    ls = gen_large_scale(rng, sc)
    assert np.all((ls.ap_pos >= 0.0) & (ls.ap_pos <= 500.0))
    margin = 0.5 * (500.0 - 100.0)
    assert np.all((ls.ue_pos >= margin) & (ls.ue_pos <= margin + 100.0))
    # a 100 m UE square inside 500 m should not fill the corners
    assert ls.ue_pos.min() > 100.0


def test_log_distance_law_without_shadowing(rng):
    sc = tiny_scenario(n_aps=4, n_ues=3, beta_model="log-distance", shadowing_std_db=0.0)
    ls = gen_large_scale(rng, sc)
    d = np.linalg.norm(ls.ue_pos[:, None, :] - ls.ap_pos[None, :, :], axis=-1)
    want = 10.0 ** ((-30.5 - 36.7 * np.log10(np.maximum(d, sc.min_distance))) / 10.0)
    np.testing.assert_allclose(ls.beta, want, rtol=1e-12)


def test_min_distance_clamps_the_path_loss(rng):
    sc = tiny_scenario(
        n_aps=3, n_ues=2, beta_model="log-distance", shadowing_std_db=0.0, min_distance=1e6
    )
    ls = gen_large_scale(rng, sc)
    np.testing.assert_allclose(ls.beta, 10.0 ** ((-30.5 - 36.7 * 6.0) / 10.0), rtol=1e-12)


def test_shadowing_perturbs_in_db_domain(rng):
    sc = tiny_scenario(n_aps=50, n_ues=20, beta_model="log-distance", shadowing_std_db=4.0)
    base = tiny_scenario(n_aps=50, n_ues=20, beta_model="log-distance", shadowing_std_db=0.0)
    ls = gen_large_scale(np.random.default_rng(7), sc)
    ls0 = gen_large_scale(np.random.default_rng(7), base)
    np.testing.assert_array_equal(ls.ap_pos, ls0.ap_pos)  # same draws before shadowing
    shadow_db = 10.0 * np.log10(ls.beta) - 10.0 * np.log10(ls0.beta)
    assert abs(shadow_db.mean()) < 3 * 4.0 / np.sqrt(shadow_db.size)
    assert abs(shadow_db.std() - 4.0) < 0.5


def test_stripe_layout_is_deterministic_and_evenly_spaced():
    sc = tiny_scenario(n_aps=8, ap_layout="stripe", ap_area_side=100.0)
    ls1 = gen_large_scale(np.random.default_rng(1), sc)
    ls2 = gen_large_scale(np.random.default_rng(2), sc)
    np.testing.assert_array_equal(ls1.ap_pos, ls2.ap_pos)
    # every AP sits on the square's perimeter
    on_edge = (
        (ls1.ap_pos[:, 0] == 0.0)
        | (ls1.ap_pos[:, 0] == 100.0)
        | (ls1.ap_pos[:, 1] == 0.0)
        | (ls1.ap_pos[:, 1] == 100.0)
    )
    assert np.all(on_edge)
    # consecutive APs are 1/n_aps of the perimeter apart along the walk;
    # with 2 APs per edge here, the straight-line gaps within an edge are equal
    lengths = np.linalg.norm(np.diff(ls1.ap_pos, axis=0), axis=1)
    assert lengths.min() > 0


def test_stripe_layout_consumes_no_rng_draws():
    """UE positions pair up across different AP counts at the same seed."""
    a = gen_large_scale(np.random.default_rng(5), tiny_scenario(n_aps=5, ap_layout="stripe"))
    b = gen_large_scale(np.random.default_rng(5), tiny_scenario(n_aps=20, ap_layout="stripe"))
    np.testing.assert_array_equal(a.ue_pos, b.ue_pos)


def test_unknown_layout_and_beta_model_raise(rng):
    sc = tiny_scenario()
    object.__setattr__(sc, "ap_layout", "ring")
    with pytest.raises(ConfigError):
        gen_large_scale(rng, sc)
    sc = tiny_scenario()
    object.__setattr__(sc, "beta_model", "two-slope")
    with pytest.raises(ConfigError):
        gen_large_scale(rng, sc)


def test_block_channels_match_their_variance(rng):
    beta = np.array([[1.0, 4.0], [0.25, 9.0]])
    t = 200_000
    h = gen_block_channels(rng, beta, t)
    assert h.shape == (2, 2, t)
    power = np.mean(np.abs(h) ** 2, axis=-1)
    se = beta * np.sqrt(1.0 / t)  # var(|h|^2) = beta^2 for CN(0, beta)
    assert np.all(np.abs(power - beta) < 3 * se)
    # circular symmetry: pseudo-variance E{h^2} = 0
    pseudo = np.mean(h**2, axis=-1)
    assert np.all(np.abs(pseudo) < 3 * beta * np.sqrt(2.0 / t))
    # independence across blocks
    x, y = h[0, 0, :-1], h[0, 0, 1:]
    corr = np.mean(x * np.conj(y)) / beta[0, 0]
    assert abs(corr) < 3.0 / np.sqrt(t)


def test_block_channels_zero_beta_gives_zero_channel(rng):
    h = gen_block_channels(rng, np.zeros((1, 2)), 5)
    np.testing.assert_array_equal(h, 0.0)


def test_time_domain_taps_invert_to_the_block_response(rng):
    h_blocks = rng.standard_normal((2, 3, 4)) + 1j * rng.standard_normal((2, 3, 4))
    taps = time_domain_taps(h_blocks, block_subcarriers=4, n_subcarriers=16)
    assert taps.shape == (2, 3, 16)
    freq = np.fft.fft(taps, axis=-1)
    want = np.repeat(h_blocks, 4, axis=-1)
    np.testing.assert_allclose(freq, want, atol=1e-12)


def test_time_domain_taps_truncate_the_last_block(rng):
    h_blocks = rng.standard_normal((1, 1, 3)) + 0j  # 3 blocks of 6 > 16 subcarriers
    taps = time_domain_taps(h_blocks, block_subcarriers=6, n_subcarriers=16)
    freq = np.fft.fft(taps, axis=-1)
    want = np.repeat(h_blocks, [6, 6, 4], axis=-1)
    np.testing.assert_allclose(freq, want, atol=1e-12)


def test_flat_channel_concentrates_in_tap_zero():
    taps = time_domain_taps(np.array([[2.0 - 1.0j]]), block_subcarriers=8, n_subcarriers=8)
    np.testing.assert_allclose(taps[0, 0], 2.0 - 1.0j, atol=1e-14)
    np.testing.assert_allclose(taps[0, 1:], 0.0, atol=1e-14)
