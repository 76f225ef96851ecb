import csv

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

import nfbeam.beamformer_time as bt
from nfbeam.beamformer_freq import BeamformerConfig, modal_factors
from nfbeam.beamformer_time import (StreamingBeamformer, design_filter_bank, export_filters_csv,
                                    g_denominator, g_denominator_roots, g_frequency_response, g_hankel_ratio,
                                    inverse_dft_estimate, modal_td_response, residue_filters,
                                    sample_and_truncate, td_beamform)
from nfbeam.modal_core import ModalCoefficientSet
from nfbeam.special_fn import sh_harmonic_values

FS = 48000.0
TS = 0.23e-3
TF = 1.17e-3


# ---------------------------------------------------------------- poles

def test_order_one_pole():
    tau = 0.4 / 343.0
    roots = g_denominator_roots(1, tau)
    assert roots.size == 1
    assert roots[0] == pytest.approx(1j / tau, rel=1e-12)
    assert roots[0].imag == pytest.approx(857.5, rel=1e-4)


def test_order_two_poles():
    # s^2 + 3 s + 3 = 0 with s = i w tau
    s = np.array([(-3 + 1j * np.sqrt(3)) / 2, (-3 - 1j * np.sqrt(3)) / 2])
    expect = np.sort_complex(s / (1j * TF))
    assert np.allclose(np.sort_complex(g_denominator_roots(2, TF)), expect, rtol=1e-12)


@pytest.mark.parametrize("u", range(1, 9))
def test_poles_are_roots_in_upper_half_plane(u):
    roots = g_denominator_roots(u, TF)
    assert roots.size == u
    assert np.all(roots.imag > 0)
    # residual of D_u at each pole, relative to the largest term of the sum
    scale = np.abs(bt.phi_coeffs(u)).max() * np.max(np.abs(1 / (1j * roots * TF)) ** np.arange(u + 1)[:, None], axis=0)
    assert np.all(np.abs(g_denominator(u, roots, TF)) / scale <= 1e-9)


def test_order_zero_and_limits():
    assert g_denominator_roots(0, TF).size == 0
    with pytest.raises(ValueError):
        g_denominator_roots(2, 0.0)
    with pytest.raises(ValueError):
        g_denominator_roots(99, TF)


# ---------------------------------------------------------------- residue filters

@pytest.mark.parametrize("u", range(1, 7))
def test_residue_sum_is_real(u):
    g1, g2 = residue_filters(u, TS, TF)
    t = np.linspace(0, 5e-3, 200)
    assert g1.imag_leakage(t) <= 1e-10
    assert g2.imag_leakage(t) <= 1e-10


def test_order_one_closed_form():
    # G1_1 = (ts^-1 - tf^-1) / (i w + 1/tf)  ->  g1(t) = (1/ts - 1/tf) exp(-t/tf)
    g1, g2 = residue_filters(1, TS, TF)
    t = np.linspace(1e-5, 4e-3, 50)
    assert np.allclose(g1(t), (1 / TS - 1 / TF) * np.exp(-t / TF), rtol=1e-10)
    assert np.allclose(g2(t), -(1 / TF) * np.exp(-t / TF), rtol=1e-10)
    assert g1(0.0) == pytest.approx(0.5 * (1 / TS - 1 / TF))
    assert g1(-1e-4) == 0.0


def test_order_zero_filters_vanish():
    g1, g2 = residue_filters(0, TS, TF)
    assert not np.any(g1(np.linspace(0, 1e-3, 10)))
    assert g2.energy_after(0.0) == 0.0


@pytest.mark.parametrize("u", range(1, 5))
@pytest.mark.parametrize("which", [1, 2])
def test_rational_form_equals_hankel_ratio(u, which):
    w = 2 * np.pi * np.linspace(50, 8000, 300)
    assert np.allclose(g_frequency_response(u, w, TS, TF, which), g_hankel_ratio(u, w, TS, TF, which),
                       rtol=1e-9, atol=1e-12)


@pytest.mark.parametrize("u", range(1, 5))
@pytest.mark.parametrize("which", [1, 2])
def test_pole_sum_transform_equals_rational_form(u, which):
    g = residue_filters(u, TS, TF)[which - 1]
    w = 2 * np.pi * np.linspace(100, 6000, 60)
    assert np.allclose(g.frequency_response(w), g_frequency_response(u, w, TS, TF, which), rtol=1e-9)


@given(st.integers(1, 4), st.integers(1, 2), st.floats(0.05e-3, 4.5e-3))
def test_residue_vs_inverse_dft(u, which, t):
    # pointwise check at a random time away from the step at t = 0
    g = residue_filters(u, TS, TF)[which - 1]
    t = np.round(t * FS * 32) / (FS * 32)
    est = inverse_dft_estimate(u, [t], TS, TF, which)[0]
    peak = np.max(np.abs(g(np.linspace(1e-6, 5e-3, 500))))
    assert abs(est - g(t)) <= 2e-3 * peak


def test_inverse_dft_window():
    with pytest.raises(ValueError):
        inverse_dft_estimate(1, [-1e-3], TS, TF)
    assert not np.any(inverse_dft_estimate(0, [1e-3], TS, TF))


@pytest.mark.parametrize("u", range(1, 5))
def test_tail_energy_of_default_bank(u):
    pair = design_filter_bank(4, TS, TF, FS)[u]
    assert pair.tail_energy_g1 <= 0.01
    assert pair.tail_energy_g2 <= 0.01
    assert pair.taps_g1.size == 240


def test_long_filter_decays_to_zero():
    pair = sample_and_truncate(residue_filters(4, TS, TF), 4, FS, 2000, TS, TF)
    for taps in (pair.taps_g1, pair.taps_g2):
        assert np.max(np.abs(taps[-50:])) <= 1e-6 * np.max(np.abs(taps))


@pytest.mark.parametrize("u", range(1, 5))
@pytest.mark.parametrize("which", [1, 2])
def test_sampled_taps_dtft(u, which):
    pair = sample_and_truncate(residue_filters(u, TS, TF), u, FS, 4000, TS, TF)
    taps = pair.taps_g1 if which == 1 else pair.taps_g2
    w = 2 * np.pi * np.linspace(400, 4000, 200)
    H = np.exp(-1j * np.outer(w, np.arange(taps.size)) / FS) @ taps / FS
    G = g_frequency_response(u, w, TS, TF, which)
    assert np.linalg.norm(H - G) / np.linalg.norm(G) <= 0.02


def test_repeated_poles_rejected(monkeypatch):
    monkeypatch.setattr(bt, "g_denominator_roots", lambda u, tf: np.array([1j, 1j + 1e-14]))
    with pytest.raises(ValueError, match="repeated"):
        residue_filters(2, TS, TF)


def test_zero_taps_rejected():
    with pytest.raises(ValueError):
        sample_and_truncate(residue_filters(1, TS, TF), 1, FS, 0, TS, TF)


def test_export_csv(tmp_path):
    bank = design_filter_bank(1, TS, TF, FS, taps=4)
    path = tmp_path / "g.csv"
    export_filters_csv(bank, path)
    rows = list(csv.reader(path.open()))
    assert rows[0] == ["u", "filter_id", "tap_index", "value"]
    assert len(rows) == 1 + 2 * 2 * 4
    assert rows[-1][:3] == ["1", "g2", "3"]
    assert float(rows[-1][3]) == bank[1].taps_g2[3]


# ---------------------------------------------------------------- discrete-time response

def _ramped_tone(n, f, amp):
    t = np.arange(n) / FS
    env = np.minimum(1.0, np.arange(n) / 480.0)
    return np.real(amp * np.exp(2j * np.pi * f * t)) * env


def test_order_zero_reduction(rng):
    pair = design_filter_bank(0, TS, TF, FS)[0]
    p, v = rng.standard_normal(300), rng.standard_normal(300)
    b = modal_td_response(p, v, pair)
    expect = -TS * bt.time_derivative(v, FS) + p + TS * bt.time_derivative(p, FS)
    assert np.allclose(b[1:], expect[:-1])


@pytest.mark.parametrize("u", range(0, 5))
def test_tone_matches_frequency_domain_modal_response(u):
    cfg = BeamformerConfig(focus_r=TF * 343.0, array_radius=TS * 343.0)
    f = 1000.0
    w = 2 * np.pi * f
    a, b = modal_factors(cfg, w)
    P, V = 0.7 - 0.2j, 0.3 + 0.5j
    expect = a[u] * V + b[u] * P
    pair = design_filter_bank(4, cfg.tau_s, cfg.tau_focus, FS)[u]
    n = 9600
    out = modal_td_response(_ramped_tone(n, f, P), _ramped_tone(n, f, V), pair)
    k = np.arange(n - 4800, n)
    got = 2 * np.mean(out[k] * np.exp(-1j * w * (k - 1) / FS))
    assert abs(got - expect) <= 0.05 * abs(expect)


def test_zero_input_and_length_mismatch():
    pair = design_filter_bank(2, TS, TF, FS)[2]
    assert not np.any(modal_td_response(np.zeros(100), np.zeros(100), pair))
    with pytest.raises(ValueError):
        modal_td_response(np.zeros(10), np.zeros(11), pair)


def test_zero_alpha_gives_zero_output(rng):
    bank = design_filter_bank(2, TS, TF, FS)
    p = ModalCoefficientSet(2, rng.standard_normal((9, 200)), "pressure")
    v = ModalCoefficientSet(2, rng.standard_normal((9, 200)), "velocity")
    assert not np.any(td_beamform(p, v, bank, np.zeros(9), 0.3))


def test_td_beamform_is_weighted_sum_of_modes(rng):
    bank = design_filter_bank(2, TS, TF, FS, taps=64)
    p = ModalCoefficientSet(2, rng.standard_normal((9, 300)), "pressure")
    v = ModalCoefficientSet(2, rng.standard_normal((9, 300)), "velocity")
    alpha = rng.standard_normal(9)
    weights = alpha * sh_harmonic_values(2, 0.7, 1.9)
    ref = sum(weights[i] * modal_td_response(p.values[i], v.values[i], bank[u])
              for u in range(3) for i in range(u * u, (u + 1) ** 2))
    assert np.allclose(td_beamform(p, v, bank, alpha, 0.7, 1.9), ref)
    with pytest.raises(ValueError):
        td_beamform(p, v, bank[:2], alpha, 0.7)


def test_streaming_matches_batch(geometry, rng):
    cfg = BeamformerConfig()
    bank = design_filter_bank(4, geometry.tau, cfg.tau_focus, FS)
    T = 1500
    x = rng.standard_normal((36, T))
    y = 1e-3 * rng.standard_normal((36, T))
    # leading zeros make the batch edge derivative agree with the streaming state
    x[:, :2] = 0
    y[:, :2] = 0
    proc = StreamingBeamformer(bank, geometry, cfg.alpha, cfg.focus_theta, cfg.focus_phi)
    stream = np.concatenate([proc.process(x[:, i:i + 97], y[:, i:i + 97]) for i in range(0, T, 97)])
    Y = geometry.sh_matrix(4) * geometry.weights
    p = ModalCoefficientSet(4, Y @ x, "pressure")
    v = ModalCoefficientSet(4, 1.225 * 343.0 * (Y @ y), "velocity")
    batch = td_beamform(p, v, bank, cfg.alpha, cfg.focus_theta, cfg.focus_phi)
    assert np.allclose(stream, batch, atol=1e-9 * np.max(np.abs(batch)))
    assert proc.latency == 0


def test_streaming_single_sample_chunks(geometry, rng):
    bank = design_filter_bank(2, geometry.tau, TF, FS, taps=32)
    alpha = np.ones(9)
    x = rng.standard_normal((36, 40))
    a = StreamingBeamformer(bank, geometry, alpha, 0.0)
    b = StreamingBeamformer(bank, geometry, alpha, 0.0)
    one = np.concatenate([a.process(x[:, i], x[:, i]) for i in range(40)])
    assert np.allclose(one, b.process(x, x))
