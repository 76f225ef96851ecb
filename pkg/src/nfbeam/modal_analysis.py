"""Sound-field coefficients from vector-sensor captures.

Pressure and velocity coefficients at the array radius are quadrature sums
over the sensors; the radial-independent field coefficients follow from both
without dividing by a spherical Bessel function:

    K_uv(w) = (i w tau_s)**2 V_uv h_u(w tau_s) + i (w tau_s)**2 P_uv h_u'(w tau_s)

Velocity coefficients carry a ``rho c`` factor so they share the pressure's
units.
"""
from __future__ import annotations

import csv

import numpy as np

from .modal_core import ModalCoefficientSet, iter_uv, num_coeffs
from .sampling import SensorArrayGeometry, discrete_sh_analysis
from .scene_sim import AIR_DENSITY, SPEED_OF_SOUND, VectorSensorCapture
from .special_fn import sph_hankel, sph_hankel_prime


def _check_order(geometry: SensorArrayGeometry, order: int):
    if num_coeffs(order) > geometry.num_sensors:
        raise ValueError(f"order {order} needs at least {num_coeffs(order)} sensors, "
                         f"array has {geometry.num_sensors}")


def pressure_coeffs_t(capture: VectorSensorCapture, order: int,
                      geometry: SensorArrayGeometry | None = None) -> ModalCoefficientSet:
    """Time-domain pressure coefficients ``p_uv(n)``, shape ``(n_coeffs, T)``."""
    geometry = geometry or capture.geometry
    _check_order(geometry, order)
    return discrete_sh_analysis(geometry, capture.pressure, order, tag="pressure")


def velocity_coeffs_t(capture: VectorSensorCapture, order: int,
                      geometry: SensorArrayGeometry | None = None,
                      rho: float = AIR_DENSITY, c: float = SPEED_OF_SOUND) -> ModalCoefficientSet:
    """Time-domain velocity coefficients ``v_uv(n)`` including the ``rho c`` scale."""
    geometry = geometry or capture.geometry
    _check_order(geometry, order)
    coeffs = discrete_sh_analysis(geometry, capture.radial_velocity, order, tag="velocity")
    return coeffs.scale(rho * c)


def pressure_coeffs_f(pressure_spectra, geometry: SensorArrayGeometry, order: int) -> ModalCoefficientSet:
    """Frequency-domain ``P_uv(w, r_s)`` from per-sensor spectra ``(Q, n_freq)``."""
    _check_order(geometry, order)
    return discrete_sh_analysis(geometry, pressure_spectra, order, tag="pressure")


def velocity_coeffs_f(velocity_spectra, geometry: SensorArrayGeometry, order: int,
                      rho: float = AIR_DENSITY, c: float = SPEED_OF_SOUND) -> ModalCoefficientSet:
    _check_order(geometry, order)
    return discrete_sh_analysis(geometry, velocity_spectra, order, tag="velocity").scale(rho * c)


def field_coeffs(P_set: ModalCoefficientSet, V_set: ModalCoefficientSet, omega,
                 tau_s: float) -> ModalCoefficientSet:
    """Radial-independent field coefficients ``K_uv(w)``.

    ``omega`` may be a scalar or an array matching the trailing axis of the
    coefficient sets.
    """
    if P_set.order != V_set.order:
        raise ValueError("pressure and velocity sets must share the same order")
    omega = np.asarray(omega, dtype=float)
    if np.any(omega <= 0):
        raise ValueError("field coefficients need w > 0 (Hankel function singular at 0)")
    x = omega * tau_s
    out = np.empty(np.broadcast_shapes(P_set.values.shape, V_set.values.shape), dtype=complex)
    for k, (u, _) in enumerate(iter_uv(P_set.order)):
        out[k] = ((1j * x) ** 2 * V_set.values[k] * sph_hankel(u, x)
                  + 1j * x ** 2 * P_set.values[k] * sph_hankel_prime(u, x))
    return ModalCoefficientSet(P_set.order, out, "field")


def time_derivative(series, fs: float):
    """Central difference ``(x[n+1] - x[n-1]) * fs / 2`` along the last axis.

    The first and last samples use one-sided differences so the output keeps
    the input length. Accepts an array or a time-domain coefficient set.
    """
    if isinstance(series, ModalCoefficientSet):
        return ModalCoefficientSet(series.order, time_derivative(series.values, fs), series.tag)
    x = np.asarray(series, dtype=float)
    if x.shape[-1] < 3:
        raise ValueError("time derivative needs at least 3 samples")
    out = np.empty_like(x)
    out[..., 1:-1] = (x[..., 2:] - x[..., :-2]) * (fs / 2)
    out[..., 0] = (x[..., 1] - x[..., 0]) * fs
    out[..., -1] = (x[..., -1] - x[..., -2]) * fs
    return out


def velocity_from_pressure_gradient(p_plus, p_minus, dx: float, rho: float = AIR_DENSITY):
    """Estimate ``dv_x/dt`` from two pressure microphones ``2 dx`` apart.

    Returns the time derivative of the particle velocity, not the velocity,
    from Euler's equation ``rho dv/dt = -grad p``.
    """
    if dx <= 0:
        raise ValueError("microphone half-spacing dx must be positive")
    return -(np.asarray(p_plus, dtype=float) - np.asarray(p_minus, dtype=float)) / (2 * dx * rho)


def export_coefficients_csv(coeffs: ModalCoefficientSet, path, axis_values, axis_name: str = "t"):
    """Write ``u, v, <axis>, value`` rows (``re, im`` columns for complex sets)."""
    if axis_name not in ("t", "f"):
        raise ValueError("axis_name must be 't' or 'f'")
    values = coeffs.values.reshape(num_coeffs(coeffs.order), -1)
    axis_values = np.asarray(axis_values)
    if axis_values.size != values.shape[1]:
        raise ValueError("axis_values length does not match coefficient series")
    is_complex = np.iscomplexobj(values)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["u", "v", axis_name] + (["re", "im"] if is_complex else ["value"]))
        for k, (u, v) in enumerate(iter_uv(coeffs.order)):
            for a, val in zip(axis_values, values[k]):
                row = [u, v, repr(float(a))]
                row += [repr(float(val.real)), repr(float(val.imag))] if is_complex else [repr(float(val))]
                w.writerow(row)
