"""Sensor layouts on a sphere and discrete spherical-harmonic analysis."""
from __future__ import annotations

import csv
from dataclasses import dataclass, field
from functools import lru_cache
from pathlib import Path

import numpy as np
from scipy.optimize import least_squares

from .modal_core import ModalCoefficientSet, num_coeffs
from .special_fn import sh_matrix

SPEED_OF_SOUND = 343.0


@dataclass(frozen=True)
class SensorArrayGeometry:
    """``Q`` sensor directions on a sphere of radius ``radius`` (m).

    ``weights`` are the quadrature weights (steradians) used when projecting
    sensor samples onto spherical harmonics.
    """

    radius: float
    theta: np.ndarray
    phi: np.ndarray
    weights: np.ndarray
    c: float = SPEED_OF_SOUND
    _ymat_cache: dict = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self):
        for name in ("theta", "phi", "weights"):
            object.__setattr__(self, name, np.asarray(getattr(self, name), dtype=float))
        if not (self.theta.shape == self.phi.shape == self.weights.shape):
            raise ValueError("theta, phi and weights must have equal length")
        if self.radius <= 0:
            raise ValueError("array radius must be positive")

    @property
    def num_sensors(self) -> int:
        return self.theta.size

    @property
    def tau(self) -> float:
        """Propagation time across the array radius, ``r_s / c``."""
        return self.radius / self.c

    @property
    def unit_vectors(self) -> np.ndarray:
        st = np.sin(self.theta)
        return np.stack([st * np.cos(self.phi), st * np.sin(self.phi), np.cos(self.theta)], axis=1)

    @property
    def positions(self) -> np.ndarray:
        return self.radius * self.unit_vectors

    def sh_matrix(self, order: int) -> np.ndarray:
        """``Y_uv`` at the sensor directions, shape ``((order+1)**2, Q)``."""
        if order not in self._ymat_cache:
            self._ymat_cache[order] = sh_matrix(order, self.theta, self.phi)
        return self._ymat_cache[order]

    def gram(self, order: int) -> np.ndarray:
        Y = self.sh_matrix(order)
        return (Y * self.weights) @ Y.T

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["q", "theta", "phi", "weight"])
            for q in range(self.num_sensors):
                w.writerow([q, repr(float(self.theta[q])), repr(float(self.phi[q])), repr(float(self.weights[q]))])

    @classmethod
    def from_csv(cls, path, radius: float, c: float = SPEED_OF_SOUND):
        with open(path, newline="") as fh:
            rows = list(csv.DictReader(fh))
        rows.sort(key=lambda r: int(r["q"]))
        return cls(radius,
                   [float(r["theta"]) for r in rows],
                   [float(r["phi"]) for r in rows],
                   [float(r["weight"]) for r in rows], c=c)


def _fibonacci_directions(Q: int):
    i = np.arange(Q) + 0.5
    theta = np.arccos(1.0 - 2.0 * i / Q)
    phi = np.mod(np.pi * (3.0 - np.sqrt(5.0)) * np.arange(Q), 2 * np.pi)
    return theta, phi


def _canonical_angles(theta, phi):
    xyz = np.stack([np.sin(theta) * np.cos(phi), np.sin(theta) * np.sin(phi), np.cos(theta)])
    theta = np.arccos(np.clip(xyz[2], -1.0, 1.0))
    phi = np.mod(np.arctan2(xyz[1], xyz[0]), 2 * np.pi)
    return theta, phi


@lru_cache(maxsize=None)
def _nearly_uniform_directions(Q: int, refine: bool):
    if Q == 4:
        theta = np.array([0.0, np.arccos(-1 / 3), np.arccos(-1 / 3), np.arccos(-1 / 3)])
        phi = np.array([0.0, 0.0, 2 * np.pi / 3, 4 * np.pi / 3])
        return theta, phi
    theta, phi = _fibonacci_directions(Q)
    degree = 2 * (int(np.floor(np.sqrt(Q))) - 2)
    if not refine or degree < 2:
        return theta, phi

    # pull the spiral towards an equal-weight quadrature exact up to `degree`:
    # every non-constant harmonic must sum to zero over the points
    def residual(x):
        return sh_matrix(degree, x[:Q], x[Q:])[1:].sum(axis=1) / Q

    sol = least_squares(residual, np.concatenate([theta, phi]), xtol=1e-15, ftol=1e-15, gtol=1e-15)
    return _canonical_angles(sol.x[:Q], sol.x[Q:])


def nearly_uniform_sphere(Q: int, radius: float, c: float = SPEED_OF_SOUND,
                          refine: bool = True) -> SensorArrayGeometry:
    """Nearly uniform layout of ``Q`` sensors with equal weights ``4 pi / Q``.

    Directions start from a Fibonacci spiral and are refined by a
    deterministic least-squares fit towards an equal-weight spherical
    design, which keeps the discrete Gram matrix close to identity for
    orders ``N`` with ``(N+2)**2 <= Q``. ``Q = 4`` returns a tetrahedron.
    """
    if Q < 4:
        raise ValueError(f"need at least 4 sensors, got {Q}")
    theta, phi = _nearly_uniform_directions(int(Q), bool(refine))
    return SensorArrayGeometry(radius, theta.copy(), phi.copy(), np.full(Q, 4 * np.pi / Q), c=c)


def discrete_sh_analysis(geometry: SensorArrayGeometry, samples, order: int,
                         tag: str = "pressure") -> ModalCoefficientSet:
    """Project sensor samples onto ``Y_uv``: ``sum_q w_q x_q Y_uv(q)``.

    ``samples`` has the sensor index on axis 0; any trailing axes (time or
    frequency) are carried through.
    """
    samples = np.asarray(samples)
    if samples.shape[0] != geometry.num_sensors:
        raise ValueError(f"expected {geometry.num_sensors} sensor rows, got {samples.shape[0]}")
    Y = geometry.sh_matrix(order) * geometry.weights
    flat = samples.reshape(samples.shape[0], -1)
    coeffs = (Y @ flat).reshape((num_coeffs(order),) + samples.shape[1:])
    return ModalCoefficientSet(order, coeffs, tag)


def max_supported_order(geometry: SensorArrayGeometry) -> int:
    return int(np.floor(np.sqrt(geometry.num_sensors))) - 1
