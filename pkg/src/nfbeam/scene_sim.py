"""Free-field scene simulation for a spherical vector-sensor array.

Point sources radiate ``exp(-i w R / c) / (4 pi R)`` (unit strength); the
radial particle velocity at each sensor follows from Euler's equation,
``V = i / (rho w) dP/dr``. Propagation is synthesised per DFT bin over the
full signal length and transformed back, so delays and amplitudes are exact
for the band-limited source signals.
"""
from __future__ import annotations

import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy import fft as sfft
from scipy import signal

from .modal_core import ModalCoefficientSet, iter_uv
from .sampling import SensorArrayGeometry
from .special_fn import sh_harmonic_values, sph_hankel

SPEED_OF_SOUND = 343.0
AIR_DENSITY = 1.225
SAMPLE_RATE = 48000.0

CAPTURE_MAGIC = b"NFBVSC01"


def spherical_to_cartesian(r, theta, phi) -> np.ndarray:
    return np.array([r * np.sin(theta) * np.cos(phi),
                     r * np.sin(theta) * np.sin(phi),
                     r * np.cos(theta)])


@dataclass(frozen=True)
class PointSource:
    """Point source at spherical position ``(r, theta, phi)`` with its output signal."""

    r: float
    theta: float
    phi: float = 0.0
    signal: np.ndarray | None = None

    @property
    def position(self) -> np.ndarray:
        return spherical_to_cartesian(self.r, self.theta, self.phi)


@dataclass(frozen=True)
class AcousticScene:
    sources: tuple[PointSource, ...]
    c: float = SPEED_OF_SOUND
    rho: float = AIR_DENSITY
    fs: float = SAMPLE_RATE
    snr_db: float | None = 30.0
    rng_seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "sources", tuple(self.sources))


@dataclass(frozen=True)
class VectorSensorCapture:
    """Sampled pressure (Pa) and radial velocity (m/s), shape ``(Q, T)`` each."""

    pressure: np.ndarray
    radial_velocity: np.ndarray
    fs: float
    geometry: SensorArrayGeometry | None = field(default=None, repr=False)

    def __post_init__(self):
        p = np.asarray(self.pressure, dtype=float)
        v = np.asarray(self.radial_velocity, dtype=float)
        if p.shape != v.shape or p.ndim != 2:
            raise ValueError(f"pressure {p.shape} and velocity {v.shape} must be equal 2-D shapes")
        if not (np.all(np.isfinite(p)) and np.all(np.isfinite(v))):
            raise ValueError("capture contains non-finite samples")
        object.__setattr__(self, "pressure", p)
        object.__setattr__(self, "radial_velocity", v)

    @property
    def num_samples(self) -> int:
        return self.pressure.shape[1]

    def __add__(self, other: "VectorSensorCapture") -> "VectorSensorCapture":
        return VectorSensorCapture(self.pressure + other.pressure,
                                   self.radial_velocity + other.radial_velocity,
                                   self.fs, self.geometry)

    # -- export ---------------------------------------------------------------
    def to_csv(self, directory) -> tuple[Path, Path]:
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        paths = []
        for name, data in (("pressure", self.pressure), ("radial_velocity", self.radial_velocity)):
            path = directory / f"{name}.csv"
            header = "n," + ",".join(f"q{q}" for q in range(data.shape[0]))
            table = np.column_stack([np.arange(data.shape[1]), data.T])
            np.savetxt(path, table, delimiter=",", header=header, comments="",
                       fmt=["%d"] + ["%.17g"] * data.shape[0])
            paths.append(path)
        return tuple(paths)

    def to_binary(self, path):
        """Header ``magic(8) | Q int64 | T int64 | fs float64``, then pressure
        and velocity as row-major little-endian float64."""
        Q, T = self.pressure.shape
        with open(path, "wb") as fh:
            fh.write(CAPTURE_MAGIC)
            fh.write(struct.pack("<qqd", Q, T, float(self.fs)))
            fh.write(self.pressure.astype("<f8").tobytes())
            fh.write(self.radial_velocity.astype("<f8").tobytes())

    @classmethod
    def from_binary(cls, path, geometry: SensorArrayGeometry | None = None):
        raw = Path(path).read_bytes()
        if raw[:8] != CAPTURE_MAGIC:
            raise ValueError(f"{path}: not a capture file")
        Q, T, fs = struct.unpack("<qqd", raw[8:32])
        data = np.frombuffer(raw[32:], dtype="<f8")
        if data.size != 2 * Q * T:
            raise ValueError(f"{path}: truncated payload")
        return cls(data[: Q * T].reshape(Q, T).copy(), data[Q * T:].reshape(Q, T).copy(), fs, geometry)


# ------------------------------------------------------------------ signals

def _butterworth_fir(taps: int, f_l: float, f_h: float, fs: float, order: int = 4) -> np.ndarray:
    sos = signal.butter(order, [f_l, f_h], "bandpass", fs=fs, output="sos")
    freqs = np.linspace(0.0, fs / 2, 8193)
    _, response = signal.sosfreqz(sos, freqs, fs=fs)
    target = np.abs(response)
    # antisymmetric (type IV) linear phase: exact zero at DC; relative-error
    # weighting keeps the stopbands well below the passband despite 64 taps
    w = 2 * np.pi * freqs / fs
    half = taps // 2
    centre = (taps - 1) / 2 - np.arange(half)
    basis = 2 * np.sin(np.outer(w, centre))
    weight = np.sqrt(1.0 / (target ** 2 + 0.03))
    h_half = np.linalg.lstsq(basis * weight[:, None], target * weight, rcond=None)[0]
    return np.concatenate([h_half, -h_half[::-1]])


def bandpass_fir(taps: int = 64, f_l: float = 400.0, f_h: float = 4000.0,
                 fs: float = SAMPLE_RATE) -> np.ndarray:
    """Linear-phase FIR least-squares fit to a Butterworth bandpass magnitude."""
    if not 0 < f_l < f_h < fs / 2:
        raise ValueError(f"invalid band [{f_l}, {f_h}] Hz for fs={fs}")
    if taps < 4 or taps % 2:
        raise ValueError("tap count must be even and >= 4")
    return _butterworth_fir(taps, f_l, f_h, fs)


def band_noise_signal(length: int, f_l: float = 400.0, f_h: float = 4000.0, taps: int = 64,
                      seed=0, fs: float = SAMPLE_RATE) -> np.ndarray:
    """Unit-variance Gaussian noise shaped by :func:`bandpass_fir`."""
    h = bandpass_fir(taps, f_l, f_h, fs)
    rng = np.random.default_rng(seed)
    white = rng.standard_normal(length + taps - 1)
    out = signal.lfilter(h, 1.0, white)[taps - 1:]
    return out / np.std(out)


def tone_signal(length: int, freq: float, fs: float = SAMPLE_RATE, ramp: int = 256) -> np.ndarray:
    """Cosine tone with a raised-cosine onset of ``ramp`` samples."""
    t = np.arange(length) / fs
    x = np.cos(2 * np.pi * freq * t)
    ramp = min(ramp, length)
    x[:ramp] *= 0.5 - 0.5 * np.cos(np.pi * np.arange(ramp) / ramp)
    return x


# ------------------------------------------------------------------ propagation

def point_transfer(source_xyz, sensor_xyz, normal, omega, c: float = SPEED_OF_SOUND,
                   rho: float = AIR_DENSITY):
    """Pressure and velocity-along-``normal`` responses at points to a unit source.

    ``sensor_xyz`` and ``normal`` have shape ``(n, 3)``; returns ``(P, V)`` of
    shape ``(n, n_omega)``. ``V`` is zero at ``w = 0``, where the velocity
    response has an integrator pole.
    """
    omega = np.atleast_1d(np.asarray(omega, dtype=float))
    diff = np.atleast_2d(sensor_xyz) - np.asarray(source_xyz, dtype=float)[None, :]
    R = np.linalg.norm(diff, axis=1)
    cos_gamma = np.sum(diff * np.atleast_2d(normal), axis=1) / R
    k = omega[None, :] / c
    P = np.exp(-1j * k * R[:, None]) / (4 * np.pi * R[:, None])
    safe_k = np.where(k > 0, k, 1.0)
    near = np.where(k > 0, 1.0 / (1j * safe_k * R[:, None]), 0.0)
    V = P * (1.0 + near) * cos_gamma[:, None] / (rho * c)
    V[:, omega == 0] = 0.0
    return P, V


def free_field_transfer(source_xyz, geometry: SensorArrayGeometry, omega,
                        c: float = SPEED_OF_SOUND, rho: float = AIR_DENSITY):
    """Pressure and radial-velocity transfer functions to every sensor, ``(Q, n_omega)``."""
    return point_transfer(source_xyz, geometry.positions, geometry.unit_vectors, omega, c, rho)


def _check_source(src: PointSource, geometry: SensorArrayGeometry):
    if src.r <= geometry.radius:
        raise ValueError(f"source at r={src.r} m lies inside the array sphere (r_s={geometry.radius} m)")


def simulate_capture(scene: AcousticScene, geometry: SensorArrayGeometry, duration: float | None = None,
                     noise_seed=None) -> VectorSensorCapture:
    """Noisy vector-sensor capture of all scene sources.

    Every source signal is propagated through :func:`free_field_transfer`
    with zero padding covering the longest propagation delay. The velocity's
    near-field term is an integrator with its DC bin removed, so velocities
    carry a small offset (about 1e-3 of peak for band-limited noise) that
    depends on the FFT length. With
    ``snr_db`` set, independent white Gaussian noise is added per channel at
    that signal-to-noise power ratio (``None`` or ``inf`` disables noise).
    """
    if not scene.sources:
        raise ValueError("scene has no sources")
    lengths = {len(s.signal) for s in scene.sources}
    T = min(lengths) if duration is None else int(round(duration * scene.fs))
    if T < 1 or T > min(lengths):
        raise ValueError(f"requested {T} samples but source signals hold {min(lengths)}")
    for src in scene.sources:
        _check_source(src, geometry)
    max_delay = max(np.linalg.norm(geometry.positions - src.position, axis=1).max()
                    for src in scene.sources) / scene.c
    n_fft = sfft.next_fast_len(T + int(np.ceil(max_delay * scene.fs)) + 64, real=True)
    omega = 2 * np.pi * np.fft.rfftfreq(n_fft, 1.0 / scene.fs)

    spectra = [sfft.rfft(s.signal[:T], n_fft) for s in scene.sources]
    positions, normals = geometry.positions, geometry.unit_vectors
    Q = geometry.num_sensors
    pressure = np.empty((Q, T))
    velocity = np.empty((Q, T))
    for q in range(Q):
        P = np.zeros(omega.size, dtype=complex)
        V = np.zeros(omega.size, dtype=complex)
        for spec, src in zip(spectra, scene.sources):
            tp, tv = point_transfer(src.position, positions[q], normals[q], omega, scene.c, scene.rho)
            P += spec * tp[0]
            V += spec * tv[0]
        pressure[q] = sfft.irfft(P, n_fft)[:T]
        velocity[q] = sfft.irfft(V, n_fft)[:T]

    if scene.snr_db is not None and np.isfinite(scene.snr_db):
        rng = np.random.default_rng(scene.rng_seed if noise_seed is None else noise_seed)
        pressure = add_sensor_noise(pressure, scene.snr_db, rng)
        velocity = add_sensor_noise(velocity, scene.snr_db, rng)
    return VectorSensorCapture(pressure, velocity, scene.fs, geometry)


def add_sensor_noise(data: np.ndarray, snr_db: float, rng: np.random.Generator) -> np.ndarray:
    """Add white Gaussian noise so each row (channel) has the given SNR."""
    power = np.mean(data ** 2, axis=-1, keepdims=True)
    sigma = np.sqrt(power / 10 ** (snr_db / 10))
    return data + sigma * rng.standard_normal(data.shape)


def simulate_point_pressure(scene: AcousticScene, point, length: int | None = None,
                            noise_rng: np.random.Generator | None = None) -> np.ndarray:
    """Pressure of all scene sources at one Cartesian point (omni microphone)."""
    point = np.asarray(point, dtype=float)
    T = min(len(s.signal) for s in scene.sources) if length is None else length
    dists = [np.linalg.norm(s.position - point) for s in scene.sources]
    n_fft = sfft.next_fast_len(T + int(np.ceil(max(dists) / scene.c * scene.fs)) + 64, real=True)
    omega = 2 * np.pi * np.fft.rfftfreq(n_fft, 1.0 / scene.fs)
    total = np.zeros(omega.size, dtype=complex)
    for s, R in zip(scene.sources, dists):
        total += sfft.rfft(s.signal[:T], n_fft) * np.exp(-1j * omega * R / scene.c) / (4 * np.pi * R)
    out = sfft.irfft(total, n_fft)[:T]
    if noise_rng is not None and scene.snr_db is not None and np.isfinite(scene.snr_db):
        out = add_sensor_noise(out[None, :], scene.snr_db, noise_rng)[0]
    return out


def modal_ground_truth(r: float, theta: float, phi: float, omega, order: int,
                       c: float = SPEED_OF_SOUND) -> ModalCoefficientSet:
    """Field coefficients ``K_uv(w) = (-i w / c) h_u(w r / c) Y_uv(theta, phi)`` of a unit point source."""
    if r <= 0:
        raise ValueError("source radius must be positive")
    omega = np.asarray(omega, dtype=float)
    ylm = sh_harmonic_values(order, theta, phi)
    values = np.stack([(-1j * omega / c) * sph_hankel(u, omega * r / c) * ylm[k]
                       for k, (u, _) in enumerate(iter_uv(order))])
    return ModalCoefficientSet(order, values, "field")
