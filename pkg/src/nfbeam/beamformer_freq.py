"""Frequency-domain nearfield frequency-invariant beamformer.

The beamforming coefficients factor into four independent parts:

    W_uv(w) = alpha_uv * spectral(w) * causal(w) * radial_u(w) * Y_uv(focus)

with ``spectral = 1 / (i w tau_s)`` (frequency invariance),
``causal = -(tau_s / tau_f) exp(-i w (tau_f - tau_s))`` (gain and a delay
that keeps the time-domain filters causal), ``radial_u = 1 / h_u(w tau_f)``
(range focusing) and the angular factor ``Y_uv`` at the focus direction.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from numpy.polynomial import chebyshev, legendre

from .modal_core import ModalCoefficientSet, iter_uv, num_coeffs, orders_of
from .sampling import SensorArrayGeometry
from .scene_sim import AIR_DENSITY, SPEED_OF_SOUND, VectorSensorCapture
from .special_fn import sh_harmonic_values, sph_hankel, sph_hankel_prime


# ------------------------------------------------------------------ beampattern weights

def dolph_chebyshev_pattern_coeffs(order: int, sidelobe_db: float) -> np.ndarray:
    """Legendre coefficients ``c_u`` of the normalised Dolph-Chebyshev pattern.

    The pattern ``T_{2N}(x0 cos(Theta/2)) / R`` is a degree-``N`` polynomial in
    ``cos(Theta)``; projecting it on a Gauss-Legendre grid with ``N+1`` or more
    nodes is exact.
    """
    if order < 1:
        raise ValueError("Dolph-Chebyshev design needs order >= 1")
    if sidelobe_db >= 0:
        raise ValueError("sidelobe level must be negative (dB)")
    R = 10 ** (-sidelobe_db / 20)
    x0 = np.cosh(np.arccosh(R) / (2 * order))
    nodes, weights = legendre.leggauss(2 * order + 2)
    cheb = np.zeros(2 * order + 1)
    cheb[-1] = 1.0
    pattern = chebyshev.chebval(x0 * np.sqrt((1 + nodes) / 2), cheb) / R
    coeffs = np.array([(2 * u + 1) / 2 * np.sum(weights * pattern * legendre.legval(nodes, np.eye(u + 1)[u]))
                       for u in range(order + 1)])
    return coeffs / legendre.legval(1.0, coeffs)


def design_dolph_chebyshev(order: int, sidelobe_db: float = -25.0) -> np.ndarray:
    """Rotationally symmetric beampattern coefficients ``alpha_uv = alpha_u0``.

    The axisymmetric pattern ``sum_u alpha_u (2u+1)/(4 pi) P_u(cos Theta)``
    equals one on the look direction and has equal-ripple sidelobes at
    ``sidelobe_db``. Returned flat over all (u, v).
    """
    c = dolph_chebyshev_pattern_coeffs(order, sidelobe_db)
    alpha_u = c * 4 * np.pi / (2 * np.arange(order + 1) + 1)
    return alpha_u[orders_of(order)]


def axisymmetric_pattern(alpha: np.ndarray, order: int, theta) -> np.ndarray:
    """``sum_uv alpha_uv Y_uv(Theta) Y_uv(0)`` for rotationally symmetric weights."""
    alpha_u = np.asarray(alpha)[[u * u + u for u in range(order + 1)]]
    c = alpha_u * (2 * np.arange(order + 1) + 1) / (4 * np.pi)
    return legendre.legval(np.cos(theta), c)


# ------------------------------------------------------------------ configuration

@dataclass
class BeamformerConfig:
    """Design parameters of the nearfield beamformer.

    ``alpha`` defaults to a Dolph-Chebyshev design at ``sidelobe_db``.
    """

    order: int = 4
    focus_r: float = 0.4
    focus_theta: float = 0.0
    focus_phi: float = 0.0
    array_radius: float = 0.08
    sidelobe_db: float = -25.0
    block_size: int = 1024
    overlap: float = 0.5
    c: float = SPEED_OF_SOUND
    rho: float = AIR_DENSITY
    alpha: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self):
        if self.alpha is None:
            self.alpha = design_dolph_chebyshev(self.order, self.sidelobe_db)
        self.alpha = np.asarray(self.alpha, dtype=float)
        if self.alpha.shape != (num_coeffs(self.order),):
            raise ValueError(f"alpha must hold {num_coeffs(self.order)} entries")
        if not self.tau_focus > self.tau_s > 0:
            raise ValueError("focus must lie outside the array sphere (tau_focus > tau_s > 0)")
        if self.block_size < 2 or self.block_size & (self.block_size - 1):
            raise ValueError("block size must be a power of two")
        if self.overlap != 0.5:
            raise ValueError("only half-overlapping blocks are supported")

    @property
    def tau_s(self) -> float:
        return self.array_radius / self.c

    @property
    def tau_focus(self) -> float:
        return self.focus_r / self.c

    @property
    def focus_harmonics(self) -> np.ndarray:
        return sh_harmonic_values(self.order, self.focus_theta, self.focus_phi)

    @classmethod
    def from_file(cls, path) -> "BeamformerConfig":
        """Read a JSON config with keys ``array``, ``focus``, ``order``,
        ``sidelobe_db`` and ``block_size`` (angles in degrees)."""
        return cls.from_dict(json.loads(Path(path).read_text()))

    @classmethod
    def from_dict(cls, data: dict) -> "BeamformerConfig":
        known = {"array", "focus", "order", "sidelobe_db", "block_size", "c", "rho"}
        unknown = set(data) - known
        if unknown:
            raise ValueError(f"unknown beamformer config keys: {sorted(unknown)}")
        focus = data.get("focus", {})
        return cls(order=int(data.get("order", 4)),
                   focus_r=float(focus.get("r", 0.4)),
                   focus_theta=np.radians(float(focus.get("theta_deg", 0.0))),
                   focus_phi=np.radians(float(focus.get("phi_deg", 0.0))),
                   array_radius=float(data.get("array", {}).get("radius", 0.08)),
                   sidelobe_db=float(data.get("sidelobe_db", -25.0)),
                   block_size=int(data.get("block_size", 1024)),
                   c=float(data.get("c", SPEED_OF_SOUND)),
                   rho=float(data.get("rho", AIR_DENSITY)))


# ------------------------------------------------------------------ coefficient factors

def _omega(omega) -> np.ndarray:
    omega = np.asarray(omega, dtype=float)
    if np.any(omega <= 0):
        raise ValueError("beamformer coefficients are defined for w > 0")
    return omega


def spectral_filter(omega, tau_s: float):
    return 1.0 / (1j * _omega(omega) * tau_s)


def causality_term(omega, tau_s: float, tau_focus: float):
    omega = _omega(omega)
    return -(tau_s / tau_focus) * np.exp(-1j * omega * (tau_focus - tau_s))


def radial_filter(u: int, omega, tau_focus: float):
    return 1.0 / sph_hankel(u, _omega(omega) * tau_focus)


def beamforming_coeffs(config: BeamformerConfig, omega) -> ModalCoefficientSet:
    """Beamforming coefficients ``W_uv(w)``; trailing axis follows ``omega``."""
    omega = _omega(omega)
    common = spectral_filter(omega, config.tau_s) * causality_term(omega, config.tau_s, config.tau_focus)
    ylm = config.focus_harmonics
    values = np.stack([config.alpha[k] * common * radial_filter(u, omega, config.tau_focus) * ylm[k]
                       for k, (u, _) in enumerate(iter_uv(config.order))])
    return ModalCoefficientSet(config.order, values, "weights")


def modal_factors(config: BeamformerConfig, omega):
    """Per-order multipliers ``(a_u, b_u)`` with ``B_uv = a_u V_uv + b_u P_uv``.

    Shapes ``(order+1, n_omega)``; entries at ``w = 0`` are set to zero.
    """
    omega = np.atleast_1d(np.asarray(omega, dtype=float))
    pos = omega > 0
    w = omega[pos]
    ts, tf = config.tau_s, config.tau_focus
    gain = (ts / tf) * np.exp(-1j * w * (tf - ts))
    a = np.zeros((config.order + 1, omega.size), dtype=complex)
    b = np.zeros_like(a)
    for u in range(config.order + 1):
        hf = sph_hankel(u, w * tf)
        a[u, pos] = -1j * w * ts * gain * sph_hankel(u, w * ts) / hf
        b[u, pos] = -w * ts * gain * sph_hankel_prime(u, w * ts) / hf
    return a, b


def modal_response(P_set: ModalCoefficientSet, V_set: ModalCoefficientSet,
                   config: BeamformerConfig, omega) -> ModalCoefficientSet:
    """Per-mode beamformer output ``B_uv(w)`` from pressure/velocity coefficients."""
    if P_set.order != config.order or V_set.order != config.order:
        raise ValueError("coefficient sets must match the beamformer order")
    _omega(omega)
    a, b = modal_factors(config, omega)
    u_idx = orders_of(config.order)
    shape = np.asarray(omega).shape
    a = a[u_idx].reshape((-1,) + shape)
    b = b[u_idx].reshape((-1,) + shape)
    return ModalCoefficientSet(config.order, a * V_set.values + b * P_set.values, "beamformer")


def response(B_set: ModalCoefficientSet, config: BeamformerConfig):
    """Total response ``B(w) = sum_uv alpha_uv B_uv(w) Y_uv(focus)``."""
    w = config.alpha * config.focus_harmonics
    w = w.reshape((-1,) + (1,) * (B_set.values.ndim - 1))
    return np.sum(w * B_set.values, axis=0)


# ------------------------------------------------------------------ block pipeline

def sqrt_hann(M: int) -> np.ndarray:
    return np.sqrt(0.5 - 0.5 * np.cos(2 * np.pi * np.arange(M) / M))


class BlockBeamformer:
    """Streaming block-DFT beamformer (half-overlapping, square-root Hann).

    Feed sensor chunks with :meth:`process`; output is produced in hops of
    ``M/2`` samples and lags the input by exactly ``M/2`` samples.
    ``transfer`` may replace the beamformer with any per-bin filter of shape
    ``(n_coeffs, M//2+1)`` applied to the summed modal channels (used to
    check perfect reconstruction).
    """

    def __init__(self, config: BeamformerConfig, geometry: SensorArrayGeometry, fs: float,
                 transfer_p=None, transfer_v=None):
        self.config = config
        self.geometry = geometry
        self.fs = fs
        M = config.block_size
        self.M, self.hop = M, M // 2
        self.window = sqrt_hann(M)
        omega = 2 * np.pi * np.fft.rfftfreq(M, 1.0 / fs)
        if transfer_p is None or transfer_v is None:
            a, b = modal_factors(config, omega)
            u_idx = orders_of(config.order)
            w = (config.alpha * config.focus_harmonics)[:, None]
            transfer_v, transfer_p = w * a[u_idx], w * b[u_idx]
        self.transfer_p = np.asarray(transfer_p)
        self.transfer_v = np.asarray(transfer_v)
        Y = geometry.sh_matrix(config.order) * geometry.weights
        self._analysis_p = Y
        self._analysis_v = Y * (config.rho * config.c)
        n = num_coeffs(config.order)
        self._buf_p = np.zeros((n, M))
        self._buf_v = np.zeros((n, M))
        self._pending_p = np.zeros((n, 0))
        self._pending_v = np.zeros((n, 0))
        self._ola = np.zeros(M)

    @property
    def latency(self) -> int:
        return self.hop

    def _frames(self, frames_p: np.ndarray, frames_v: np.ndarray) -> np.ndarray:
        # frames_*: (n_coeffs, J, M) -> windowed output frames (J, M)
        Fp = np.fft.rfft(frames_p * self.window, axis=-1)
        Fv = np.fft.rfft(frames_v * self.window, axis=-1)
        spec = np.einsum("kf,kjf->jf", self.transfer_p, Fp) + np.einsum("kf,kjf->jf", self.transfer_v, Fv)
        return np.fft.irfft(spec, self.M, axis=-1) * self.window

    def process(self, pressure: np.ndarray, velocity: np.ndarray) -> np.ndarray:
        p = self._analysis_p @ np.atleast_2d(pressure)
        v = self._analysis_v @ np.atleast_2d(velocity)
        self._pending_p = np.concatenate([self._pending_p, p], axis=1)
        self._pending_v = np.concatenate([self._pending_v, v], axis=1)
        out = []
        H = self.hop
        while self._pending_p.shape[1] >= H:
            self._buf_p = np.concatenate([self._buf_p[:, H:], self._pending_p[:, :H]], axis=1)
            self._buf_v = np.concatenate([self._buf_v[:, H:], self._pending_v[:, :H]], axis=1)
            self._pending_p = self._pending_p[:, H:]
            self._pending_v = self._pending_v[:, H:]
            frame = self._frames(self._buf_p[:, None, :], self._buf_v[:, None, :])[0]
            self._ola += frame
            out.append(self._ola[:H].copy())
            self._ola = np.concatenate([self._ola[H:], np.zeros(H)])
        return np.concatenate(out) if out else np.zeros(0)


def block_pipeline(capture: VectorSensorCapture, config: BeamformerConfig,
                   geometry: SensorArrayGeometry | None = None, transfer_p=None, transfer_v=None) -> np.ndarray:
    """Beamformer output for a whole capture, same length as the input.

    Equivalent to running :class:`BlockBeamformer` over the capture followed
    by a zero flush: ``b[n]`` holds the beamformed signal delayed by ``M/2``.
    """
    geometry = geometry or capture.geometry
    M = config.block_size
    T = capture.num_samples
    if T < M:
        raise ValueError(f"capture of {T} samples is shorter than one block ({M})")
    proc = BlockBeamformer(config, geometry, capture.fs, transfer_p, transfer_v)
    H = proc.hop
    p = proc._analysis_p @ capture.pressure
    v = proc._analysis_v @ capture.radial_velocity
    n_hops = -(-T // H)
    pad = ((0, 0), (H, n_hops * H - T))
    p = np.pad(p, pad)
    v = np.pad(v, pad)
    idx = np.arange(n_hops)[:, None] * H + np.arange(M)[None, :]
    frames = proc._frames(p[:, idx], v[:, idx])
    out = np.zeros((n_hops + 1) * H)
    for j in range(n_hops):
        out[j * H: j * H + M] += frames[j]
    return out[:T]
