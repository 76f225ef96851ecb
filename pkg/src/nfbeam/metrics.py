"""Beampatterns, mainlobe/sidelobe measures, coherence and the cost model."""
from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
from scipy import signal

from .beamformer_freq import BeamformerConfig, modal_response, response
from .modal_analysis import pressure_coeffs_f, velocity_coeffs_f
from .modal_core import ModalCoefficientSet, orders_of
from .sampling import SensorArrayGeometry
from .scene_sim import free_field_transfer, spherical_to_cartesian
from .special_fn import sh_matrix, sph_bessel_j, sph_bessel_j_prime, sph_hankel


@dataclass(frozen=True)
class BeampatternGrid:
    """Beamformer magnitude over evaluation points and frequencies.

    ``points`` holds ``(r, theta, phi)`` rows; ``magnitude_db`` has shape
    ``(n_freq, n_points)`` and is normalised so its global maximum is 0 dB.
    ``response`` keeps the complex, unnormalised values.
    """

    frequencies: np.ndarray
    points: np.ndarray
    response: np.ndarray

    @property
    def magnitude_db(self) -> np.ndarray:
        mag = np.abs(self.response)
        with np.errstate(divide="ignore"):
            return 20 * np.log10(mag / mag.max())

    def rows(self):
        """``(frequency, r, theta_deg, phi_deg, magnitude_db)`` tuples."""
        db = self.magnitude_db
        for i, f in enumerate(self.frequencies):
            for j, (r, th, ph) in enumerate(self.points):
                yield f, r, np.degrees(th), np.degrees(ph), db[i, j]


def _analytic_pressure_velocity(config: BeamformerConfig, points: np.ndarray, omega: float):
    # exact P_uv = K_uv j_u(w ts), V_uv = i K_uv j_u'(w ts) for unit point sources
    r, th, ph = points.T
    Y = sh_matrix(config.order, th, ph)
    u_idx = orders_of(config.order)
    x_s = omega * config.tau_s
    P = np.empty(Y.shape, dtype=complex)
    V = np.empty(Y.shape, dtype=complex)
    for k, u in enumerate(u_idx):
        K = (-1j * omega / config.c) * sph_hankel(int(u), omega * r / config.c) * Y[k]
        P[k] = K * sph_bessel_j(int(u), x_s)
        V[k] = 1j * K * sph_bessel_j_prime(int(u), x_s)
    return P, V


def beampattern(config: BeamformerConfig, points, frequencies, path: str = "analytic",
                geometry: SensorArrayGeometry | None = None) -> BeampatternGrid:
    """Response to a unit point source placed at each evaluation point.

    ``path="analytic"`` uses the exact modal coefficients of the source;
    ``path="sampled"`` evaluates the exact pressure and velocity at the
    sensors of ``geometry`` and goes through the discrete analysis, so it
    includes spatial aliasing of the finite array.
    """
    points = np.atleast_2d(np.asarray(points, dtype=float))
    frequencies = np.atleast_1d(np.asarray(frequencies, dtype=float))
    if points.size == 0 or frequencies.size == 0:
        raise ValueError("beampattern grid is empty")
    if np.any(points[:, 0] <= config.array_radius):
        raise ValueError("evaluation points must lie outside the array sphere")
    if path == "sampled" and geometry is None:
        raise ValueError("sampled path needs the array geometry")
    out = np.empty((frequencies.size, points.shape[0]), dtype=complex)
    for i, f in enumerate(frequencies):
        w = 2 * np.pi * f
        if path == "analytic":
            P, V = _analytic_pressure_velocity(config, points, w)
        elif path == "sampled":
            Ps, Vs = [], []
            for r, th, ph in points:
                p, v = free_field_transfer(spherical_to_cartesian(r, th, ph), geometry, [w], config.c, config.rho)
                Ps.append(p[:, 0])
                Vs.append(v[:, 0])
            P = pressure_coeffs_f(np.array(Ps).T, geometry, config.order).values
            V = velocity_coeffs_f(np.array(Vs).T, geometry, config.order, config.rho, config.c).values
        else:
            raise ValueError(f"unknown beampattern path {path!r}")
        B = modal_response(ModalCoefficientSet(config.order, P, "pressure"),
                           ModalCoefficientSet(config.order, V, "velocity"), config, np.full(points.shape[0], w))
        out[i] = response(B, config)
    return BeampatternGrid(frequencies, points, out)


def theta_cut(r: float, thetas_deg, phi_deg: float = 0.0) -> np.ndarray:
    th = np.radians(np.asarray(thetas_deg, dtype=float))
    return np.column_stack([np.full(th.size, r), th, np.full(th.size, np.radians(phi_deg))])


# ------------------------------------------------------------------ lobe measures

def _cut(grid: BeampatternGrid, frequency: float):
    i = int(np.argmin(np.abs(grid.frequencies - frequency)))
    theta = np.degrees(grid.points[:, 1])
    order = np.argsort(theta)
    level = np.abs(grid.response[i])[order]
    with np.errstate(divide="ignore"):
        db = 20 * np.log10(level / level.max())
    return theta[order], db


def mainlobe_edge(grid: BeampatternGrid, frequency: float, drop_db: float = 3.0) -> float:
    """Angle (deg) where a theta cut first falls ``drop_db`` below its peak.

    Linear interpolation between grid angles; ``inf`` if it never does.
    """
    theta, db = _cut(grid, frequency)
    peak = int(np.argmax(db))
    below = np.nonzero(db[peak:] < -drop_db)[0]
    if below.size == 0:
        return float("inf")
    j = peak + below[0]
    t0, t1, d0, d1 = theta[j - 1], theta[j], db[j - 1], db[j]
    return float(t0 + (t1 - t0) * (-drop_db - d0) / (d1 - d0))


def mainlobe_width(grid: BeampatternGrid, frequency: float, drop_db: float = 3.0) -> float:
    """Full ``-drop_db`` width (deg) of a cut symmetric about its peak.

    Returns 360 when the cut never drops ``drop_db`` below the peak.
    """
    theta, _ = _cut(grid, frequency)
    edge = mainlobe_edge(grid, frequency, drop_db)
    if not np.isfinite(edge):
        return 360.0
    peak_theta = theta[int(np.argmax(_cut(grid, frequency)[1]))]
    return float(2 * (edge - peak_theta))


def first_null(grid: BeampatternGrid, frequency: float) -> float:
    """Angle of the first local minimum after the peak; ``nan`` if none."""
    theta, db = _cut(grid, frequency)
    peak = int(np.argmax(db))
    for j in range(peak + 1, len(db) - 1):
        if db[j] <= db[j - 1] and db[j] < db[j + 1]:
            return float(theta[j])
    return float("nan")


def sidelobe_level(grid: BeampatternGrid, frequency: float) -> float:
    """Highest level (dB re peak) beyond the first null; ``nan`` if no null."""
    theta, db = _cut(grid, frequency)
    null = first_null(grid, frequency)
    if np.isnan(null):
        return float("nan")
    return float(np.max(db[theta > null]))


# ------------------------------------------------------------------ coherence

def msc(x, y, segment: int = 4096, fs: float = 1.0):
    """Magnitude-squared coherence ``|S_xy|^2 / (S_xx S_yy)`` (Welch, Hann, 50 %).

    Returns ``(frequencies, C)``. Bins where either auto-spectrum vanishes
    are set to zero with a warning.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.shape != y.shape:
        raise ValueError("x and y must have equal length")
    if x.size < 4 * segment:
        raise ValueError(f"need at least {4 * segment} samples for segment {segment}")
    kw = dict(fs=fs, window="hann", nperseg=segment, noverlap=segment // 2)
    f, sxy = signal.csd(x, y, **kw)
    _, sxx = signal.welch(x, **kw)
    _, syy = signal.welch(y, **kw)
    denom = sxx * syy
    zero = denom <= np.finfo(float).tiny
    if np.any(zero):
        warnings.warn(f"{int(zero.sum())} coherence bins with zero auto-spectrum set to 0", RuntimeWarning)
    C = np.zeros_like(f)
    C[~zero] = np.abs(sxy[~zero]) ** 2 / denom[~zero]
    return f, np.clip(C, 0.0, 1.0)


# ------------------------------------------------------------------ cost model

@dataclass(frozen=True)
class ComplexityRow:
    method: str
    parameter: str
    value: int
    multiplications: float
    latency_samples: int
    detailed_multiplications: float | None = None


def time_domain_cost(L: int) -> int:
    """Real multiplications per output sample of one modal channel: two length-L filters."""
    return 2 * L


def freq_domain_cost(M: int) -> float:
    """Real multiplications per output sample with radix-2 FFTs, block M, half overlap."""
    return 16 * np.log2(M) + 4


def freq_domain_cost_detailed(M: int, f_l: float, f_h: float, fs: float) -> float:
    """Un-approximated count: ``[8 M log2 M + 8 M (f_h - f_l) / fs] / (M / 2)``."""
    return ((2 * 2 + 1 * 4) * M * np.log2(M) + 2 * 4 * M * (f_h - f_l) / fs) / (M / 2)


def complexity_table(L_values=(240, 360, 480, 960), M_values=(256, 512, 1024, 2048),
                     f_l: float = 400.0, f_h: float = 4000.0, fs: float = 48000.0) -> list[ComplexityRow]:
    for M in M_values:
        if M < 2 or int(M) & (int(M) - 1):
            raise ValueError(f"block size {M} is not a power of two >= 2")
    rows = [ComplexityRow("time", "L", int(L), time_domain_cost(int(L)), 0) for L in L_values]
    rows += [ComplexityRow("frequency", "M", int(M), freq_domain_cost(int(M)), int(M) // 2,
                           freq_domain_cost_detailed(int(M), f_l, f_h, fs)) for M in M_values]
    return rows
