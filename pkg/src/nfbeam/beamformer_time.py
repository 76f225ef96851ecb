"""Time-domain nearfield beamformer built from residue-theorem modal filters.

For each order ``u`` the beamformer needs two causal filters ``g1_u`` and
``g2_u``, the inverse Fourier transforms of the strictly proper rational
functions

    G1_u(w) = sum_{v=1}^{u} phi_v(u) [(i w ts)^-v - (i w tf)^-v] / D_u(w)
    G2_u(w) = [sum_{v=1}^{u-1} phi_v(u-1) (i w ts)^-v - sum_{v=1}^{u} phi_v(u) (i w tf)^-v] / D_u(w)
    D_u(w)  = sum_{v=0}^{u} phi_v(u) (i w tf)^-v

(``ts`` array radius delay, ``tf`` focus delay). The zeros of ``D_u`` are the
roots of a reverse Bessel polynomial, all in the upper half ``w``-plane, so
each filter is a finite sum of decaying exponentials.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np
from scipy import linalg, signal

from .modal_analysis import time_derivative
from .modal_core import MAX_ORDER, ModalCoefficientSet, num_coeffs
from .special_fn import phi_coeffs, sh_harmonic_values, sph_hankel

DEFAULT_STEP_AT_ZERO = 0.5


def g_denominator_roots(u: int, tau_focus: float) -> np.ndarray:
    """Poles ``w_{u,m}`` (rad/s) of the modal filters of order ``u``.

    Roots of ``sum_v phi_v(u) s**(u-v)`` with ``s = i w tau_focus`` from the
    companion-matrix eigenvalues, each refined by one Newton step.
    """
    if u > MAX_ORDER:
        raise ValueError(f"order {u} exceeds supported maximum {MAX_ORDER}")
    if u <= 0:
        return np.zeros(0, dtype=complex)
    if tau_focus <= 0:
        raise ValueError("tau_focus must be positive")
    coeffs = phi_coeffs(u)  # highest power of s first: phi_0 s^u + ... + phi_u
    s = linalg.eigvals(linalg.companion(coeffs))
    p = np.polynomial.Polynomial(coeffs[::-1])
    s = s - p(s) / p.deriv()(s)
    return s / (1j * tau_focus)


def g1_numerator(u: int, omega, tau_s: float, tau_focus: float):
    omega = np.asarray(omega, dtype=complex)
    phi = phi_coeffs(u)
    zs, zf = 1j * omega * tau_s, 1j * omega * tau_focus
    return sum(phi[v] * (zs ** -v - zf ** -v) for v in range(1, u + 1)) + 0 * omega


def g2_numerator(u: int, omega, tau_s: float, tau_focus: float):
    omega = np.asarray(omega, dtype=complex)
    zs, zf = 1j * omega * tau_s, 1j * omega * tau_focus
    prev, phi = phi_coeffs(u - 1), phi_coeffs(u)
    out = sum(prev[v] * zs ** -v for v in range(1, u)) + 0 * omega
    return out - sum(phi[v] * zf ** -v for v in range(1, u + 1))


def g_denominator(u: int, omega, tau_focus: float):
    omega = np.asarray(omega, dtype=complex)
    phi = phi_coeffs(u)
    zf = 1j * omega * tau_focus
    return sum(phi[v] * zf ** -v for v in range(u + 1)) + 0 * omega


def g_denominator_derivative(u: int, omega, tau_focus: float):
    omega = np.asarray(omega, dtype=complex)
    phi = phi_coeffs(u)
    zf = 1j * omega * tau_focus
    return -(1j * tau_focus) * sum(v * phi[v] / zf ** (v + 1) for v in range(1, u + 1)) + 0 * omega


def g_frequency_response(u: int, omega, tau_s: float, tau_focus: float, which: int = 1):
    """Rational-form ``G1_u(w)`` or ``G2_u(w)``."""
    num = g1_numerator if which == 1 else g2_numerator
    return num(u, omega, tau_s, tau_focus) / g_denominator(u, omega, tau_focus)


def g_hankel_ratio(u: int, omega, tau_s: float, tau_focus: float, which: int = 1):
    """``G1_u``/``G2_u`` written directly with Hankel functions (independent form)."""
    omega = np.asarray(omega, dtype=float)
    gain = (tau_s / tau_focus) * np.exp(-1j * omega * (tau_focus - tau_s))
    hf = sph_hankel(u, omega * tau_focus)
    if which == 1:
        return gain * sph_hankel(u, omega * tau_s) / hf - 1
    return 1j * gain * sph_hankel(u - 1, omega * tau_s) / hf - 1


def inverse_dft_estimate(u: int, t, tau_s: float, tau_focus: float, which: int = 1,
                         rate: float = 48000.0 * 32, n_points: int = 2 ** 17) -> np.ndarray:
    """Impulse response of ``G1_u``/``G2_u`` by a direct inverse DFT.

    The rational response is sampled on ``n_points`` bins of width
    ``rate / n_points`` offset by half a bin (so ``w = 0`` is never hit) and
    inverted with one FFT; the result is read off at the nearest multiple of
    ``1 / rate`` to each requested time. Independent of the pole/residue
    route, so it serves as its numerical check.
    """
    t = np.asarray(t, dtype=float)
    if u == 0:
        return np.zeros_like(t)
    k = np.arange(n_points)
    omega = 2 * np.pi * (k - n_points // 2 + 0.5) * rate / n_points
    G = g_frequency_response(u, omega, tau_s, tau_focus, which)
    n = np.arange(n_points)
    g = rate * np.fft.ifft(G) * np.exp(2j * np.pi * (0.5 - n_points // 2) * n / n_points)
    idx = np.rint(t * rate).astype(int)
    if np.any(idx < 0) or np.any(idx >= n_points // 2):
        raise ValueError("requested times fall outside the unaliased window")
    return g.real[idx]


@dataclass(frozen=True)
class ResidueFilter:
    """Causal impulse response ``g(t) = U(t) Re sum_m r_m exp(i w_m t)``."""

    poles: np.ndarray
    residues: np.ndarray
    step_at_zero: float = DEFAULT_STEP_AT_ZERO

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        if self.poles.size == 0:
            return np.zeros_like(t)
        terms = self.residues[:, None] * np.exp(1j * self.poles[:, None] * t.reshape(1, -1))
        g = terms.sum(axis=0).reshape(t.shape)
        step = np.where(t > 0, 1.0, np.where(t == 0, self.step_at_zero, 0.0))
        return step * g.real

    def imag_leakage(self, t) -> float:
        """Largest imaginary part of the pole sum relative to its real part."""
        if self.poles.size == 0:
            return 0.0
        g = (self.residues[:, None] * np.exp(1j * self.poles[:, None] * np.asarray(t)[None, :])).sum(axis=0)
        return float(np.max(np.abs(g.imag)) / max(np.max(np.abs(g.real)), 1e-300))

    def energy_after(self, t0: float) -> float:
        """``int_{t0}^inf g(t)^2 dt`` in closed form."""
        if self.poles.size == 0:
            return 0.0
        wsum = self.poles[:, None] + self.poles[None, :]
        rr = self.residues[:, None] * self.residues[None, :]
        return float(np.real(np.sum(rr * np.exp(1j * wsum * t0) / (-1j * wsum))))

    def frequency_response(self, omega):
        """Fourier transform of the untruncated filter, ``sum_m r_m / (i (w - w_m))``."""
        omega = np.asarray(omega, dtype=float)
        if self.poles.size == 0:
            return np.zeros(omega.shape, dtype=complex)
        return np.sum(self.residues[:, None] / (1j * (omega.reshape(1, -1) - self.poles[:, None])),
                      axis=0).reshape(omega.shape)


def residue_filters(u: int, tau_s: float, tau_focus: float,
                    step_at_zero: float = DEFAULT_STEP_AT_ZERO) -> tuple[ResidueFilter, ResidueFilter]:
    """Impulse responses ``g1_u`` and ``g2_u`` from the residue theorem.

    ``g(t) = U(t) i sum_m N(w_m) / D'(w_m) exp(i w_m t)`` where ``w_m`` are
    the zeros of ``D_u``. Both filters vanish identically for ``u = 0``.
    """
    poles = g_denominator_roots(u, tau_focus)
    if poles.size == 0:
        empty = np.zeros(0, dtype=complex)
        return ResidueFilter(empty, empty, step_at_zero), ResidueFilter(empty, empty, step_at_zero)
    if poles.size > 1:
        gaps = np.abs(poles[:, None] - poles[None, :]) + np.diag(np.full(poles.size, np.inf))
        if np.min(gaps) < 1e-8 * np.max(np.abs(poles)):
            raise ValueError(f"repeated poles for order {u}; residue synthesis unsupported")
    dD = g_denominator_derivative(u, poles, tau_focus)
    r1 = 1j * g1_numerator(u, poles, tau_s, tau_focus) / dD
    r2 = 1j * g2_numerator(u, poles, tau_s, tau_focus) / dD
    return ResidueFilter(poles, r1, step_at_zero), ResidueFilter(poles, r2, step_at_zero)


@dataclass(frozen=True)
class ModalFilterPair:
    """Sampled ``g1_u``/``g2_u`` taps (units 1/s) for one order."""

    order: int
    poles: np.ndarray
    residues_g1: np.ndarray
    residues_g2: np.ndarray
    taps_g1: np.ndarray
    taps_g2: np.ndarray
    fs: float
    tau_s: float
    tau_focus: float
    tail_energy_g1: float
    tail_energy_g2: float


def sample_and_truncate(filters: tuple[ResidueFilter, ResidueFilter], u: int, fs: float, taps: int,
                        tau_s: float, tau_focus: float) -> ModalFilterPair:
    """Sample both filters at ``k / fs`` for ``k < taps``.

    ``tail_energy_*`` is the fraction of each filter's energy beyond the
    last tap.
    """
    if taps < 1:
        raise ValueError("need at least one tap")
    g1, g2 = filters
    t = np.arange(taps) / fs

    def tail(g: ResidueFilter) -> float:
        total = g.energy_after(0.0)
        return g.energy_after(taps / fs) / total if total > 0 else 0.0

    return ModalFilterPair(u, g1.poles, g1.residues, g2.residues, g1(t), g2(t), fs, tau_s, tau_focus,
                           tail(g1), tail(g2))


def design_filter_bank(order: int, tau_s: float, tau_focus: float, fs: float, taps: int = 240,
                       step_at_zero: float = DEFAULT_STEP_AT_ZERO) -> list[ModalFilterPair]:
    return [sample_and_truncate(residue_filters(u, tau_s, tau_focus, step_at_zero), u, fs, taps,
                                tau_s, tau_focus)
            for u in range(order + 1)]


def export_filters_csv(bank: list[ModalFilterPair], path):
    """Rows ``u, filter_id, tap_index, value`` (``filter_id`` is g1 or g2)."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["u", "filter_id", "tap_index", "value"])
        for pair in bank:
            for name, taps in (("g1", pair.taps_g1), ("g2", pair.taps_g2)):
                for i, val in enumerate(taps):
                    w.writerow([pair.order, name, i, repr(float(val))])


# ------------------------------------------------------------------ discrete-time response

def _causal_conv(x: np.ndarray, h: np.ndarray) -> np.ndarray:
    if not np.any(h):
        return np.zeros_like(x)
    return signal.oaconvolve(x, h, axes=-1)[..., : x.shape[-1]] if x.ndim == 1 else \
        signal.oaconvolve(x, h[None, :], axes=-1)[..., : x.shape[-1]]


def modal_td_response(p_uv, v_uv, pair: ModalFilterPair) -> np.ndarray:
    """Discrete-time modal output ``b_uv(n)`` for one (u, v) channel.

    Implements

        b = -ts dv + (u+1) p + ts dp
            + dt * conv(-ts dv + (u+1) p, g1) + ts * dt * conv(dp, g2)

    with central-difference derivatives. The central difference needs the
    next input sample, so the returned series is delayed by one sample.
    """
    p = np.asarray(p_uv, dtype=float)
    v = np.asarray(v_uv, dtype=float)
    if p.shape != v.shape:
        raise ValueError(f"pressure {p.shape} and velocity {v.shape} series differ in length")
    ts, u, dt = pair.tau_s, pair.order, 1.0 / pair.fs
    dp = time_derivative(p, pair.fs)
    dv = time_derivative(v, pair.fs)
    direct = -ts * dv + (u + 1) * p
    b = direct + ts * dp + dt * _causal_conv(direct, pair.taps_g1) + ts * dt * _causal_conv(dp, pair.taps_g2)
    out = np.zeros_like(b)
    out[..., 1:] = b[..., :-1]
    return out


def _order_combine(values: np.ndarray, order: int, weights: np.ndarray) -> np.ndarray:
    # filters depend on u only, so sum_v alpha Y b_uv == b_u(sum_v alpha Y p_uv, ...)
    return np.stack([weights[u * u: (u + 1) ** 2] @ values[u * u: (u + 1) ** 2] for u in range(order + 1)])


def td_beamform(p_set: ModalCoefficientSet, v_set: ModalCoefficientSet, bank: list[ModalFilterPair],
                alpha: np.ndarray, focus_theta: float, focus_phi: float = 0.0) -> np.ndarray:
    """``b(n) = sum_uv alpha_uv b_uv(n) Y_uv(focus)`` (one-sample delay)."""
    order = p_set.order
    if v_set.order != order or len(bank) < order + 1:
        raise ValueError("coefficient sets and filter bank must cover the same orders")
    if p_set.values.shape[0] != num_coeffs(order):
        raise ValueError("incomplete coefficient set")
    weights = np.asarray(alpha) * sh_harmonic_values(order, focus_theta, focus_phi)
    p_u = _order_combine(p_set.values, order, weights)
    v_u = _order_combine(v_set.values, order, weights)
    return sum(modal_td_response(p_u[u], v_u[u], bank[u]) for u in range(order + 1))


class StreamingBeamformer:
    """Sample-by-sample time-domain beamformer with persistent filter state.

    :meth:`process` accepts sensor-domain chunks of any length (including a
    single sample) and returns the same number of output samples, lagging
    the input by one sample because of the central-difference derivative.
    Signals are taken as zero before the first call.
    """

    def __init__(self, bank: list[ModalFilterPair], geometry, alpha, focus_theta: float,
                 focus_phi: float = 0.0, rho: float = 1.225, c: float = 343.0):
        self.bank = bank
        self.order = len(bank) - 1
        Y = geometry.sh_matrix(self.order) * geometry.weights
        weights = np.asarray(alpha) * sh_harmonic_values(self.order, focus_theta, focus_phi)
        self._proj_p = np.stack([weights[u * u:(u + 1) ** 2] @ Y[u * u:(u + 1) ** 2] for u in range(self.order + 1)])
        self._proj_v = self._proj_p * (rho * c)
        self._hist_p = np.zeros((self.order + 1, 2))
        self._hist_v = np.zeros((self.order + 1, 2))
        L = len(bank[0].taps_g1)
        self._zi1 = np.zeros((self.order + 1, L - 1))
        self._zi2 = np.zeros((self.order + 1, L - 1))

    @property
    def latency(self) -> int:
        return 0

    def process(self, pressure: np.ndarray, velocity: np.ndarray) -> np.ndarray:
        pressure = np.asarray(pressure, dtype=float)
        velocity = np.asarray(velocity, dtype=float)
        if pressure.ndim == 1:
            pressure, velocity = pressure[:, None], velocity[:, None]
        p = self._proj_p @ pressure
        v = self._proj_v @ velocity
        n = p.shape[1]
        ext_p = np.concatenate([self._hist_p, p], axis=1)
        ext_v = np.concatenate([self._hist_v, v], axis=1)
        self._hist_p, self._hist_v = ext_p[:, -2:], ext_v[:, -2:]
        fs = self.bank[0].fs
        # centre sample m = n_new - 1: values at ext[:, 1:-1], derivatives from neighbours
        pc, vc = ext_p[:, 1:n + 1], ext_v[:, 1:n + 1]
        dp = (ext_p[:, 2:] - ext_p[:, :-2]) * (fs / 2)
        dv = (ext_v[:, 2:] - ext_v[:, :-2]) * (fs / 2)
        out = np.zeros(n)
        dt = 1.0 / fs
        for u, pair in enumerate(self.bank):
            ts = pair.tau_s
            direct = -ts * dv[u] + (u + 1) * pc[u]
            c1, self._zi1[u] = signal.lfilter(pair.taps_g1 * dt, 1.0, direct, zi=self._zi1[u])
            c2, self._zi2[u] = signal.lfilter(pair.taps_g2 * dt, 1.0, dp[u], zi=self._zi2[u])
            out += direct + ts * dp[u] + c1 + ts * c2
        return out
