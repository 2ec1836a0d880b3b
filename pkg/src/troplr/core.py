"""Points of the tropical projective torus and the tropical metric.

Points live in R^e / R1.  Every stored point uses the chart that fixes the
last coordinate to zero, so equality and hashing are exact.  The max-plus
semiring's -inf element never appears at runtime.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence, Union

import numpy as np

__all__ = [
    "TorusPoint",
    "normalize",
    "canonical",
    "trop_distance",
    "trop_distances",
    "phi",
    "s",
    "ball_volume",
    "sphere_area",
    "normalizing_constant",
    "log_normalizing_constant",
    "tropical_inner_product",
]


@dataclass(frozen=True)
class TorusPoint:
    """A point of R^e/R1 stored with its last coordinate equal to 0."""

    coords: tuple

    def __post_init__(self):
        coords = tuple(float(c) for c in self.coords)
        if len(coords) < 2:
            raise ValueError(f"a torus point needs at least 2 coordinates, got {len(coords)}")
        if not all(math.isfinite(c) for c in coords):
            raise ValueError("torus point coordinates must be finite")
        if coords[-1] != 0.0:
            raise ValueError("TorusPoint coords must be canonical (last coordinate 0); use normalize()")
        # -0.0 and 0.0 compare equal but hash differently via repr; fold them
        coords = tuple(c + 0.0 for c in coords)
        object.__setattr__(self, "coords", coords)

    @property
    def e(self) -> int:
        return len(self.coords)

    def __len__(self):
        return len(self.coords)

    def __iter__(self):
        return iter(self.coords)

    def __getitem__(self, i):
        return self.coords[i]

    def __array__(self, dtype=None, copy=None):
        return np.array(self.coords, dtype=dtype or float)

    def __neg__(self) -> "TorusPoint":
        return normalize([-c for c in self.coords])

    def chart(self) -> np.ndarray:
        """The first e-1 coordinates, i.e. the point as an element of R^(e-1)."""
        return np.array(self.coords[:-1])


PointLike = Union[TorusPoint, Sequence[float], np.ndarray]


def canonical(x) -> np.ndarray:
    """Canonical representative(s) as a float array; works row-wise on 2-D input."""
    a = np.asarray(x, dtype=float)
    if a.ndim == 1:
        return a - a[-1]
    return a - a[:, -1:]


def normalize(raw: PointLike) -> TorusPoint:
    """Subtract the last coordinate from every coordinate."""
    a = np.asarray(raw, dtype=float)
    if a.ndim != 1 or a.size < 2:
        raise ValueError(f"expected a flat sequence of at least 2 reals, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise ValueError("non-finite coordinate")
    return TorusPoint(tuple((a - a[-1]).tolist()))


def _pair(v, w):
    a = np.asarray(v, dtype=float)
    b = np.asarray(w, dtype=float)
    if a.shape[-1] != b.shape[-1]:
        raise ValueError(f"dimension mismatch: {a.shape[-1]} vs {b.shape[-1]}")
    return a, b


def trop_distance(v: PointLike, w: PointLike) -> float:
    """Tropical (generalized Hilbert projective) distance max(v-w) - min(v-w)."""
    a, b = _pair(v, w)
    if a.ndim != 1 or b.ndim != 1:
        raise ValueError("trop_distance takes two points; use trop_distances for batches")
    d = a - b
    return float(d.max() - d.min())


def trop_distances(X, w: PointLike) -> np.ndarray:
    """Row-wise tropical distances from every row of ``X`` to ``w``."""
    a, b = _pair(X, w)
    d = np.atleast_2d(a) - b
    return d.max(axis=1) - d.min(axis=1)


def _check_index(v, i):
    e = len(v)
    if not 0 <= i < e:
        raise IndexError(f"coordinate index {i} out of range for dimension {e}")


def phi(v: PointLike, i: int, tol: float = 0.0) -> int:
    """One-sided derivative of ``d_tr(x + t E_i, y)`` at t=0+, with v = x - y.

    Indices are 0-based.  Returns 1 when ``v[i]`` is a (possibly tied)
    maximum, -1 when it is the strict unique minimum and 0 otherwise.
    ``tol`` widens "tied" for data that went through text serialization.
    """
    a = np.asarray(v, dtype=float)
    _check_index(a, i)
    if np.all(a[i] >= a - tol):
        return 1
    others = np.delete(a, i)
    if np.all(a[i] < others - tol):
        return -1
    return 0


def s(v: PointLike, i: int, tol: float = 0.0) -> int:
    """phi(v, i) + phi(-v, i): 2 at the origin, 1 for a tied extremum, else 0."""
    a = np.asarray(v, dtype=float)
    return phi(a, i, tol) + phi(-a, i, tol)


def ball_volume(e: int, r: float) -> float:
    """Volume of the tropical ball of radius r in R^e/R1, e * r^(e-1)."""
    if e < 2 or r < 0:
        raise ValueError("need e >= 2 and r >= 0")
    return e * r ** (e - 1)


def sphere_area(e: int, r: float) -> float:
    """Surface area of the tropical sphere of radius r, e(e-1) r^(e-2)."""
    if e < 2 or r < 0:
        raise ValueError("need e >= 2 and r >= 0")
    return e * (e - 1) * r ** (e - 2)


def log_normalizing_constant(e: int, sigma: float) -> float:
    """log(e! sigma^(e-1))."""
    if e < 2:
        raise ValueError("need e >= 2")
    if not sigma > 0:
        raise ValueError(f"sigma must be positive, got {sigma}")
    return math.lgamma(e + 1) + (e - 1) * math.log(sigma)


def normalizing_constant(e: int, sigma: float) -> float:
    """Normalizer e! sigma^(e-1) of the tropical Laplace density."""
    if not sigma > 0:
        raise ValueError(f"sigma must be positive, got {sigma}")
    if e < 2:
        raise ValueError("need e >= 2")
    return math.factorial(e) * sigma ** (e - 1)


def tropical_inner_product(omega: PointLike, x: PointLike, c: float) -> float:
    return trop_distance(x, omega) - c
