"""Spherical harmonics and spherical Bessel/Hankel functions.

Conventions (fixed package-wide):

* time dependence ``exp(+i w t)``, so outgoing waves carry ``exp(-i k r)``;
* ``h_u`` is the spherical Hankel function of the second kind, written in
  closed polynomial form

      h_u(x) = -i**u * exp(-i x) * sum_{v=0}^{u} phi_v(u) / (i x)**(v+1)

  with integer coefficients ``phi_v(u)`` (see :func:`phi_coeffs`);
* ``h_{-1}(x) = exp(-i x) / x`` so that the derivative identity
  ``h_u' = h_{u-1} - (u+1)/x h_u`` also holds at ``u = 0``;
* spherical harmonics are real and orthonormal on the unit sphere.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy import special

from .modal_core import MAX_ORDER, iter_uv, num_coeffs


@dataclass(frozen=True)
class Direction:
    """Polar angle ``theta`` in [0, pi] and azimuth ``phi`` (radians)."""

    theta: float
    phi: float = 0.0

    def __post_init__(self):
        if not 0.0 <= self.theta <= np.pi:
            raise ValueError(f"theta must lie in [0, pi], got {self.theta}")


# ---------------------------------------------------------------- harmonics

def _check_uv(u: int, v: int):
    if u < 0 or abs(v) > u:
        raise ValueError(f"invalid spherical harmonic index (u, v) = ({u}, {v})")


def sph_harmonic(u: int, v: int, theta, phi=0.0):
    """Real orthonormal spherical harmonic ``Y_uv(theta, phi)``.

    ``v > 0`` uses ``cos(v phi)``, ``v < 0`` uses ``sin(|v| phi)``. Accepts a
    :class:`Direction` in place of ``theta`` or broadcastable angle arrays.
    """
    _check_uv(u, v)
    if isinstance(theta, Direction):
        theta, phi = theta.theta, theta.phi
    theta = np.asarray(theta, dtype=float)
    phi = np.asarray(phi, dtype=float)
    m = abs(v)
    norm = np.sqrt((2 * u + 1) / (4 * np.pi)
                   * np.exp(special.gammaln(u - m + 1) - special.gammaln(u + m + 1)))
    legendre = special.lpmv(m, u, np.cos(theta))
    if v == 0:
        out = norm * legendre
    elif v > 0:
        out = np.sqrt(2.0) * norm * legendre * np.cos(m * phi)
    else:
        out = np.sqrt(2.0) * norm * legendre * np.sin(m * phi)
    return out if out.ndim else float(out)


def sh_matrix(order: int, theta, phi) -> np.ndarray:
    """All ``Y_uv`` for ``u <= order`` at the given angles.

    Returns an array of shape ``((order+1)**2,) + broadcast(theta, phi).shape``.
    """
    theta, phi = np.broadcast_arrays(np.asarray(theta, float), np.asarray(phi, float))
    out = np.empty((num_coeffs(order),) + theta.shape)
    for k, (u, v) in enumerate(iter_uv(order)):
        out[k] = sph_harmonic(u, v, theta, phi)
    return out


def sh_harmonic_values(order: int, theta: float, phi: float = 0.0) -> np.ndarray:
    """Flat vector of ``Y_uv(theta, phi)`` for one direction, ``u <= order``."""
    return sh_matrix(order, theta, phi).reshape(num_coeffs(order))


# ---------------------------------------------------------------- Bessel

def sph_bessel_j(u: int, x):
    x = np.asarray(x, dtype=float)
    if np.any(x < 0):
        raise ValueError("spherical Bessel j_u requires x >= 0")
    out = special.spherical_jn(u, x)
    return out if out.ndim else float(out)


def sph_bessel_j_prime(u: int, x):
    x = np.asarray(x, dtype=float)
    if np.any(x <= 0):
        raise ValueError("derivative of j_u is evaluated for x > 0 only")
    out = special.spherical_jn(u, x, derivative=True)
    return out if out.ndim else float(out)


# ---------------------------------------------------------------- Hankel

@lru_cache(maxsize=None)
def _phi_row_exact(u: int) -> tuple[int, ...]:
    # Q_u(z) = sum_v phi_v(u) z**v obeys Q_{u+1} = (2u+1) z Q_u + Q_{u-1},
    # the polynomial image of h_{u+1} = (2u+1)/x h_u - h_{u-1}.
    if u == -1 or u == 0:
        return (1,)
    prev, cur = _phi_row_exact(u - 2), _phi_row_exact(u - 1)
    n = u - 1  # cur is Q_n, we build Q_{n+1}
    row = [0] * (u + 1)
    for v, c in enumerate(cur):
        row[v + 1] += (2 * n + 1) * c
    for v, c in enumerate(prev):
        row[v] += c
    return tuple(row)


def phi_coeffs(u: int) -> np.ndarray:
    """Coefficients ``phi_v(u)``, ``v = 0..max(u, 0)``, of the Hankel polynomial.

    Computed with exact integer arithmetic, e.g. ``u=2 -> [1, 3, 3]``.
    """
    if u < -1:
        raise ValueError(f"phi coefficients defined for u >= -1, got {u}")
    if u > MAX_ORDER:
        raise ValueError(f"order {u} exceeds supported maximum {MAX_ORDER}")
    return np.array(_phi_row_exact(u), dtype=float)


def phi_table(max_order: int) -> dict[int, np.ndarray]:
    return {u: phi_coeffs(u) for u in range(-1, max_order + 1)}


def hankel_poly(u: int, z):
    """``sum_v phi_v(u) z**v`` evaluated by Horner's rule (complex ``z``)."""
    coeffs = phi_coeffs(u)
    z = np.asarray(z, dtype=complex)
    acc = np.zeros_like(z)
    for c in coeffs[::-1]:
        acc = acc * z + c
    return acc


def sph_hankel(u: int, x):
    """Outgoing spherical Hankel function ``h_u(x)`` (second kind), ``u >= -1``."""
    x = np.asarray(x, dtype=float)
    if np.any(x <= 0):
        raise ValueError("spherical Hankel function is singular at x <= 0")
    z = 1.0 / (1j * x)
    if u == -1:
        out = np.exp(-1j * x) / x
    else:
        out = -(1j ** u) * np.exp(-1j * x) * z * hankel_poly(u, z)
    return out if out.ndim else complex(out)


def sph_hankel_prime(u: int, x):
    """Derivative ``h_u'(x) = h_{u-1}(x) - (u+1)/x h_u(x)``."""
    if u < 0:
        raise ValueError(f"derivative defined for u >= 0, got {u}")
    x = np.asarray(x, dtype=float)
    out = sph_hankel(u - 1, x) - (u + 1) / x * sph_hankel(u, x)
    return out if np.ndim(out) else complex(out)
