import csv

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from nfbeam.modal_analysis import (export_coefficients_csv, field_coeffs, pressure_coeffs_f,
                                   pressure_coeffs_t, time_derivative, velocity_coeffs_f,
                                   velocity_coeffs_t, velocity_from_pressure_gradient)
from nfbeam.modal_core import ModalCoefficientSet, num_coeffs
from nfbeam.scene_sim import (VectorSensorCapture, free_field_transfer, modal_ground_truth,
                              spherical_to_cartesian)
from nfbeam.special_fn import sh_matrix, sph_bessel_j, sph_bessel_j_prime

FS = 48000.0


def _per_order_error(est, ref, order):
    out = []
    for u in range(order + 1):
        sl = slice(u * u, (u + 1) ** 2)
        out.append(np.linalg.norm(est[sl] - ref[sl]) / np.linalg.norm(ref[sl]))
    return np.array(out)


def test_constant_pressure(geometry):
    cap = VectorSensorCapture(np.ones((36, 4)), np.zeros((36, 4)), FS, geometry)
    p = pressure_coeffs_t(cap, 4)
    assert np.allclose(p[(0, 0)], np.sqrt(4 * np.pi), rtol=0.05)
    assert np.max(np.abs(p.values[1:])) < 0.05 * np.sqrt(4 * np.pi)
    assert p.tag == "pressure" and not np.iscomplexobj(p.values)


def test_zero_capture(geometry):
    cap = VectorSensorCapture(np.zeros((36, 8)), np.zeros((36, 8)), FS, geometry)
    assert not np.any(pressure_coeffs_t(cap, 4).values)
    assert not np.any(velocity_coeffs_t(cap, 4).values)


def test_recover_synthesised_tone(geometry, rng):
    # time series built from modes u <= 2 at one frequency
    t = np.arange(64) / FS
    truth = rng.standard_normal(9)
    amp = np.zeros(25)
    amp[:9] = truth
    Y = sh_matrix(4, geometry.theta, geometry.phi)
    x = np.outer(amp @ Y, np.cos(2 * np.pi * 1000 * t))
    cap = VectorSensorCapture(x, 2 * x, FS, geometry)
    p = pressure_coeffs_t(cap, 4).values
    assert np.max(np.abs(p[:, 0] - amp)) <= 0.05 * np.max(np.abs(truth))
    v = velocity_coeffs_t(cap, 4, rho=1.0, c=1.0).values
    assert np.allclose(v, 2 * p)


def test_velocity_scale(geometry, rng):
    x = rng.standard_normal((36, 5))
    cap = VectorSensorCapture(x, x, FS, geometry)
    assert np.allclose(velocity_coeffs_t(cap, 3).values, 1.225 * 343.0 * pressure_coeffs_t(cap, 3).values)


def test_order_too_high(geometry):
    cap = VectorSensorCapture(np.zeros((36, 4)), np.zeros((36, 4)), FS, geometry)
    with pytest.raises(ValueError):
        pressure_coeffs_t(cap, 6)


def test_field_coeffs_from_exact_modes():
    # exact P = K j_u, V = i K j_u' must return K for every order
    order, ts, c = 6, 0.08 / 343.0, 343.0
    w = 2 * np.pi * np.array([300.0, 1200.0, 3900.0])
    K = modal_ground_truth(0.7, 1.1, 0.4, w, order)
    P = K.map(lambda u, v, k: k * sph_bessel_j(u, w * ts), "pressure")
    V = K.map(lambda u, v, k: 1j * k * sph_bessel_j_prime(u, w * ts), "velocity")
    got = field_coeffs(P, V, w, ts)
    assert np.allclose(got.values, K.values, rtol=1e-10, atol=0)


# spatial aliasing of the 36-sensor array limits the orders that stay within 5 %
@pytest.mark.parametrize("f,max_u", [(500, 3), (1500, 3), (2500, 3), (3500, 1)])
def test_field_coeffs_from_sampled_array(geometry, f, max_u):
    w = 2 * np.pi * f
    src = spherical_to_cartesian(0.4, 0.0, 0.0)
    Pq, Vq = free_field_transfer(src, geometry, [w])
    P = pressure_coeffs_f(Pq, geometry, 4)
    V = velocity_coeffs_f(Vq, geometry, 4)
    K = field_coeffs(P, V, w, geometry.tau).values[:, 0]
    ref = modal_ground_truth(0.4, 0.0, 0.0, w, 4).values
    err = _per_order_error(K, ref, 4)
    assert np.all(err[: max_u + 1] <= 0.05)


def test_field_coeffs_validation():
    P = ModalCoefficientSet.zeros(2, tag="pressure")
    V = ModalCoefficientSet.zeros(2, tag="velocity")
    with pytest.raises(ValueError):
        field_coeffs(P, V, 0.0, 1e-4)
    with pytest.raises(ValueError):
        field_coeffs(P, ModalCoefficientSet.zeros(1, tag="velocity"), 1.0, 1e-4)


def test_time_derivative_of_polynomial():
    # central differences are exact for quadratics
    n = np.arange(10.0)
    x = 3 * n ** 2 - n + 2
    d = time_derivative(x, 2.0)
    assert np.allclose(d[1:-1], 2.0 * (6 * n[1:-1] - 1))
    assert d[0] == pytest.approx((x[1] - x[0]) * 2.0)
    assert d[-1] == pytest.approx((x[-1] - x[-2]) * 2.0)
    with pytest.raises(ValueError):
        time_derivative(np.zeros(2), 1.0)


@given(st.floats(50, 4000))
def test_time_derivative_tone_response(f):
    n = np.arange(400)
    x = np.sin(2 * np.pi * f * n / FS)
    d = time_derivative(x, FS)
    expect = np.sin(2 * np.pi * f / FS) * FS * np.cos(2 * np.pi * f * n / FS)
    assert np.allclose(d[1:-1], expect[1:-1], atol=1e-6 * FS)


def test_time_derivative_on_set():
    s = ModalCoefficientSet(0, np.array([[0.0, 1.0, 4.0, 9.0]]), "pressure")
    d = time_derivative(s, 1.0)
    assert d.tag == "pressure" and np.allclose(d.values[0, 1:3], [2.0, 4.0])


def test_pressure_gradient_plane_wave():
    rho, c, f, dx = 1.225, 343.0, 800.0, 0.002
    t = np.arange(200) / FS
    w = 2 * np.pi * f
    p = lambda x: np.cos(w * (t - x / c))
    est = velocity_from_pressure_gradient(p(dx), p(-dx), dx, rho)
    exact = -w * np.sin(w * t) / (rho * c)
    assert np.allclose(est, exact, atol=1e-3 * w / (rho * c))
    with pytest.raises(ValueError):
        velocity_from_pressure_gradient(p(dx), p(-dx), 0.0)


def test_export_csv(tmp_path):
    s = ModalCoefficientSet(1, np.arange(8.0).reshape(4, 2) * (1 + 1j), "field")
    path = tmp_path / "k.csv"
    export_coefficients_csv(s, path, [100.0, 200.0], "f")
    rows = list(csv.reader(path.open()))
    assert rows[0] == ["u", "v", "f", "re", "im"]
    assert rows[1][:3] == ["0", "0", "100.0"]
    assert [r[:2] for r in rows[1::2]] == [["0", "0"], ["1", "-1"], ["1", "0"], ["1", "1"]]
    assert float(rows[-1][3]) == 7.0
    with pytest.raises(ValueError):
        export_coefficients_csv(s, path, [1.0], "t")
    with pytest.raises(ValueError):
        export_coefficients_csv(s, path, [1.0, 2.0], "x")


def test_export_real_csv(tmp_path):
    s = ModalCoefficientSet(0, np.array([[1.5, 2.5]]), "pressure")
    path = tmp_path / "p.csv"
    export_coefficients_csv(s, path, [0, 1])
    assert path.read_text().splitlines() == ["u,v,t,value", "0,0,0.0,1.5", "0,0,1.0,2.5"]
    assert num_coeffs(0) == 1


def test_pure_mode_injection():
    w, ts = 2 * np.pi * 1800, 0.08 / 343.0
    P = ModalCoefficientSet.zeros(2, tag="pressure")
    P.values[5] = 1.0
    K = field_coeffs(P, ModalCoefficientSet.zeros(2, tag="velocity"), w, ts)
    from nfbeam.special_fn import sph_hankel_prime
    assert K.values[5] == pytest.approx(1j * (w * ts) ** 2 * sph_hankel_prime(2, w * ts), rel=1e-14)
    assert np.count_nonzero(K.values) == 1


def test_zero_fields_give_zero_coefficients():
    K = field_coeffs(ModalCoefficientSet.zeros(3, tag="pressure"), ModalCoefficientSet.zeros(3, tag="velocity"),
                     1000.0, 2e-4)
    assert not np.any(K.values)


def test_velocity_of_point_source_capture(geometry):
    # 1 kHz noiseless capture: DFT of v_uv(t) against i K_uv j_u'(w ts), scaled by rho c
    from nfbeam.scene_sim import AcousticScene, PointSource, simulate_capture, tone_signal
    f, T = 1000.0, 9600
    w = 2 * np.pi * f
    cap = simulate_capture(AcousticScene([PointSource(0.4, 0.0, 0.0, tone_signal(T, f))], snr_db=None), geometry)
    n = np.arange(T // 2, T)
    V = 2 * velocity_coeffs_t(cap, 4).values[:, n] @ np.exp(-1j * w * n / FS) / n.size
    K = modal_ground_truth(0.4, 0.0, 0.0, w, 4).values
    ref = np.array([1j * K[k] * sph_bessel_j_prime(u, w * geometry.tau) for k, u in
                    enumerate(np.repeat(np.arange(5), 2 * np.arange(5) + 1))])
    for u in range(3):
        sl = slice(u * u, (u + 1) ** 2)
        assert np.linalg.norm(V[sl] - ref[sl]) <= 0.05 * np.linalg.norm(ref[sl])


def test_velocity_linearity(geometry, rng):
    x = rng.standard_normal((36, 6))
    one = velocity_coeffs_t(VectorSensorCapture(x, x, FS, geometry), 4).values
    two = velocity_coeffs_t(VectorSensorCapture(x, 2 * x, FS, geometry), 4).values
    assert np.allclose(two, 2 * one)
    assert not np.any(velocity_coeffs_t(VectorSensorCapture(x, 0 * x, FS, geometry), 4).values)


def test_time_and_frequency_analysis_commute(geometry, rng):
    x = rng.standard_normal((36, 256))
    cap = VectorSensorCapture(x, x, FS, geometry)
    a = np.fft.rfft(pressure_coeffs_t(cap, 4).values, axis=1)
    b = pressure_coeffs_f(np.fft.rfft(x, axis=1), geometry, 4).values
    assert np.max(np.abs(a - b)) <= 1e-10 * np.max(np.abs(b))


def test_analysed_pressure_matches_field_reconstruction(geometry):
    # P_uv = K_uv j_u(w ts) from the exact field, against the sensor analysis
    for f in (500.0, 1500.0, 2500.0):
        w = 2 * np.pi * f
        Pq, _ = free_field_transfer(spherical_to_cartesian(0.4, 0.0, 0.0), geometry, [w])
        P = pressure_coeffs_f(Pq, geometry, 4).values[:, 0]
        K = modal_ground_truth(0.4, 0.0, 0.0, w, 4).values
        recon = np.array([K[k] * sph_bessel_j(u, w * geometry.tau) for k, u in
                          enumerate(np.repeat(np.arange(5), 2 * np.arange(5) + 1))])
        assert np.linalg.norm(P - recon) <= 0.05 * np.linalg.norm(recon)


def test_derivative_examples():
    n = np.arange(200)
    w = 2 * np.pi * 1000
    d = time_derivative(np.sin(w * n / FS), FS)
    # central difference gain sin(w / fs) / (w / fs) = 0.99714 at 1 kHz
    assert np.max(np.abs(d[1:-1])) == pytest.approx(np.sin(w / FS) / (w / FS) * w, rel=1e-12)
    assert np.max(np.abs(d[1:-1])) == pytest.approx(0.99714 * w, rel=1e-5)
    assert not np.any(time_derivative(np.full(20, 3.0), FS)[1:-1])
    assert np.allclose(time_derivative(2.5 * n / FS, FS), 2.5)


def test_pressure_gradient_trivial_cases():
    p = np.sin(np.arange(50) * 0.2)
    assert not np.any(velocity_from_pressure_gradient(p, p, 0.005))
    a = velocity_from_pressure_gradient(p, -p, 0.005)
    b = velocity_from_pressure_gradient(p, -p, 0.010)
    assert np.allclose(a, 2 * b)


def test_pressure_gradient_5mm_plane_wave():
    rho, c, w, dx = 1.225, 343.0, 2 * np.pi * 1000, 0.005
    t = np.arange(480) / FS
    p = lambda x: np.cos(w * (t - x / c))
    dv_exact = -w * np.sin(w * t) / (rho * c)
    est = velocity_from_pressure_gradient(p(dx), p(-dx), dx, rho)
    assert np.max(np.abs(est - dv_exact)) <= 0.01 * np.max(np.abs(dv_exact))
