"""Triangular (u, v) indexing and the modal coefficient container.

Coefficients are stored flat in the order (0,0), (1,-1), (1,0), (1,1), (2,-2), ...
so that flat index ``k = u*u + u + v``. This order is also the row order of
every CSV export in the package.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Iterator

import numpy as np

MAX_ORDER = 16

TAGS = ("pressure", "velocity", "field", "beamformer", "weights")


def num_coeffs(order: int) -> int:
    return (order + 1) ** 2


def flat_index(u: int, v: int) -> int:
    if u < 0 or abs(v) > u:
        raise ValueError(f"invalid (u, v) = ({u}, {v})")
    return u * u + u + v


def order_degree(k: int) -> tuple[int, int]:
    if k < 0:
        raise ValueError(f"flat index must be non-negative, got {k}")
    u = int(np.floor(np.sqrt(k)))
    # guard against sqrt rounding for large k
    while u * u > k:
        u -= 1
    while (u + 1) ** 2 <= k:
        u += 1
    return u, k - u * u - u


def iter_uv(order: int) -> Iterator[tuple[int, int]]:
    for u in range(order + 1):
        for v in range(-u, u + 1):
            yield u, v


def orders_of(order: int) -> np.ndarray:
    """Order ``u`` of every flat index up to ``order``."""
    return np.array([u for u, _ in iter_uv(order)], dtype=int)


@dataclass(frozen=True)
class ModalCoefficientSet:
    """Coefficients indexed by (u, v) for u <= order.

    ``values`` has shape ``((order+1)**2, ...)``; trailing axes hold time
    samples or frequency bins. ``tag`` records what the numbers are
    (pressure/velocity at the array radius, radial-independent field, ...).
    """

    order: int
    values: np.ndarray
    tag: str = "field"

    def __post_init__(self):
        values = np.asarray(self.values)
        if values.ndim == 0 or values.shape[0] != num_coeffs(self.order):
            raise ValueError(
                f"expected leading axis {num_coeffs(self.order)} for order {self.order}, "
                f"got shape {values.shape}"
            )
        if self.tag not in TAGS:
            raise ValueError(f"unknown tag {self.tag!r}")
        object.__setattr__(self, "values", values)

    @classmethod
    def zeros(cls, order: int, shape: tuple[int, ...] = (), dtype=complex, tag: str = "field"):
        return cls(order, np.zeros((num_coeffs(order),) + tuple(shape), dtype=dtype), tag)

    @classmethod
    def from_function(cls, order: int, fn: Callable[[int, int], complex], tag: str = "field"):
        return cls(order, np.array([fn(u, v) for u, v in iter_uv(order)]), tag)

    def __getitem__(self, uv: tuple[int, int]):
        u, v = uv
        if u > self.order:
            raise IndexError(f"order {u} exceeds set order {self.order}")
        return self.values[flat_index(u, v)]

    def __add__(self, other: "ModalCoefficientSet") -> "ModalCoefficientSet":
        self._check_compatible(other)
        return ModalCoefficientSet(self.order, self.values + other.values, self.tag)

    def __sub__(self, other: "ModalCoefficientSet") -> "ModalCoefficientSet":
        self._check_compatible(other)
        return ModalCoefficientSet(self.order, self.values - other.values, self.tag)

    def scale(self, factor) -> "ModalCoefficientSet":
        return ModalCoefficientSet(self.order, self.values * factor, self.tag)

    def map(self, fn: Callable[[int, int, np.ndarray], np.ndarray], tag: str | None = None):
        """Apply ``fn(u, v, values_uv)`` channel by channel."""
        out = np.stack([np.asarray(fn(u, v, self.values[k]))
                        for k, (u, v) in enumerate(iter_uv(self.order))])
        return ModalCoefficientSet(self.order, out, tag or self.tag)

    def truncate(self, order: int) -> "ModalCoefficientSet":
        if order > self.order:
            raise ValueError(f"cannot truncate order {self.order} set to {order}")
        return ModalCoefficientSet(order, self.values[: num_coeffs(order)], self.tag)

    def _check_compatible(self, other: "ModalCoefficientSet"):
        if other.order != self.order:
            raise ValueError(f"order mismatch: {self.order} vs {other.order}")
        if other.tag != self.tag:
            raise ValueError(f"cannot combine {self.tag!r} and {other.tag!r} coefficients")


def contract(W: ModalCoefficientSet, K: ModalCoefficientSet):
    """Triangular inner product sum_{u,v} W_uv K_uv (no conjugation).

    Real spherical harmonics are used throughout, so the plain product is the
    correct pairing. Works elementwise over trailing axes.
    """
    if W.order != K.order:
        raise ValueError(f"order mismatch: {W.order} vs {K.order}")
    return np.sum(W.values * K.values, axis=0)
