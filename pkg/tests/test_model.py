import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from secure_slp.model import (ChannelSet, Constellation, NoiseModel, PowerBudget, SymbolFrame,
                              complex_gaussian, draw_channels, draw_frame, exponential_correlation,
                              make_rng, psk_symbol, snr_to_threshold)


@pytest.mark.parametrize("index, M, expected", [(0, 4, 1 + 0j), (1, 4, 1j), (2, 8, 1j), (3, 4, -1j),
                                                (1, 2, -1 + 0j)])
def test_psk_symbol_examples(index, M, expected):
    assert psk_symbol(index, M) == expected


@pytest.mark.parametrize("index, M", [(-1, 4), (4, 4), (0, 1)])
def test_psk_symbol_rejects_out_of_range(index, M):
    with pytest.raises(ValueError):
        psk_symbol(index, M)


@given(st.sampled_from([2, 4, 8, 16, 32]), st.data())
def test_psk_unit_modulus_and_phase(M, data):
    i = data.draw(st.integers(0, M - 1))
    s = psk_symbol(i, M)
    assert abs(abs(s) - 1.0) <= 1e-15
    assert abs(s - complex(math.cos(2 * math.pi * i / M), math.sin(2 * math.pi * i / M))) < 1e-15


def test_constellation_rejects_non_power_of_two():
    with pytest.raises(ValueError):
        Constellation(6)


def test_constellation_cot():
    assert Constellation(2).cot_half_angle == 0.0
    assert Constellation(4).cot_half_angle == pytest.approx(1.0)
    assert Constellation(8).cot_half_angle == pytest.approx(1.0 / math.tan(math.pi / 8))


def test_draw_channels_shapes_and_determinism():
    a = draw_channels(6, 2, 7)
    b = draw_channels(6, 2, 7)
    assert a.H.shape == (2, 6) and a.g_e.shape == (6,)
    assert np.array_equal(a.H, b.H) and np.array_equal(a.g_e, b.g_e)
    c = draw_channels(6, 2, 8)
    assert not np.array_equal(a.H, c.H)


def test_draw_channels_half_normal_mean():
    # E|CN(0,1)| = sqrt(pi)/2, Var|.| = 1 - pi/4
    vals = np.concatenate([np.abs(np.append(ch.H.ravel(), ch.g_e))
                           for ch in (draw_channels(6, 2, s) for s in range(10_000))])
    se = math.sqrt(1 - math.pi / 4) / math.sqrt(vals.size)
    assert abs(vals.mean() - math.sqrt(math.pi) / 2) < 3 * se


def test_complex_gaussian_variance():
    z = complex_gaussian(make_rng(3), 200_000, scale=2.0)
    assert np.mean(np.abs(z) ** 2) == pytest.approx(4.0, rel=0.02)
    assert abs(np.mean(z.real * z.imag)) < 0.03


def test_make_rng_streams_are_independent_and_reproducible():
    a = make_rng(5, 1, 2).standard_normal(4)
    b = make_rng(5, 1, 2).standard_normal(4)
    c = make_rng(5, 2, 1).standard_normal(4)
    assert np.array_equal(a, b)
    assert not np.array_equal(a, c)


def test_correlated_eve_channel():
    R = exponential_correlation(4, 0.5)
    assert R[0, 3] == pytest.approx(0.125)
    ch = draw_channels(4, 2, 1, eve_correlation=0.5)
    assert np.allclose(ch.R_e, R)
    # sample covariance of g_e approaches R_e
    G = np.array([draw_channels(4, 2, s, 0.5).g_e for s in range(20_000)])
    S = G.T @ G.conj() / G.shape[0]
    assert np.max(np.abs(S - R)) < 0.05


def test_channel_set_validation():
    with pytest.raises(ValueError):
        ChannelSet(np.ones((2, 3)), np.ones(4))
    with pytest.raises(ValueError):
        ChannelSet(np.ones((2, 3)), np.ones(3), np.zeros((3, 3)))


@pytest.mark.parametrize("gamma_db, sigma, expected", [(0.0, 1.0, 1.0), (10.0, 1.0, math.sqrt(10.0)),
                                                       (-math.inf, 1.0, 0.0), (20.0, 0.5, 5.0)])
def test_snr_to_threshold_examples(gamma_db, sigma, expected):
    assert snr_to_threshold(gamma_db, sigma) == pytest.approx(expected)


@given(st.floats(-40, 40), st.floats(-40, 40), st.floats(0.01, 10), st.floats(0.01, 10))
def test_snr_to_threshold_monotone_and_homogeneous(g1, g2, sigma, c):
    lo, hi = sorted((g1, g2))
    assert snr_to_threshold(lo, sigma) <= snr_to_threshold(hi, sigma)
    assert snr_to_threshold(lo, c * sigma) == pytest.approx(c * snr_to_threshold(lo, sigma))


def test_snr_to_threshold_rejects_bad_sigma():
    with pytest.raises(ValueError):
        snr_to_threshold(0.0, 0.0)


def test_frame_stacked_vector():
    f = SymbolFrame((1, 3), 4, target_index=1, jamming_phase=math.pi / 2)
    assert np.allclose(f.b, [1j, -1j, 1j])
    assert np.allclose(np.abs(f.b), 1.0)
    assert f.with_indices((0, 0)).target_index == 1
    with pytest.raises(ValueError):
        SymbolFrame((0, 4), 4)
    with pytest.raises(ValueError):
        SymbolFrame((0, 1), 4, target_index=2)


def test_draw_frame_uniform():
    counts = np.zeros(4)
    for t in range(4000):
        for i in draw_frame(2, 4, make_rng(0, t)).indices:
            counts[i] += 1
    assert np.all(np.abs(counts / counts.sum() - 0.25) < 0.02)


def test_noise_and_budget_validation():
    with pytest.raises(ValueError):
        NoiseModel(0.0, 1.0)
    b = PowerBudget.from_snr_db(10.0, rho=0.25)
    assert b.P_s == pytest.approx(10.0) and b.P_n == pytest.approx(2.5) and b.P_0 == b.P_n
    with pytest.raises(ValueError):
        PowerBudget(1.0, rho=1.5)
