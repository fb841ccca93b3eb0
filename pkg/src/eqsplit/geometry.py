"""Vectors, inner products and closed convex sets with exact projections.

Every set exposes ``project``; membership is decided by the distance to
the projection, with a tolerance relative to the magnitude of the point.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

__all__ = [
    "MEMBERSHIP_TOL",
    "as_vector",
    "inner",
    "norm",
    "three_point_identity_residual",
    "ConvexSet",
    "Box",
    "Ball",
    "Halfspace",
    "Simplex",
    "Product",
    "WholeSpace",
    "product",
]

MEMBERSHIP_TOL = 1e-12


def as_vector(x, dim: int | None = None, name: str = "x") -> np.ndarray:
    """Convert ``x`` to a finite, 1-D float64 array.

    Raises:
        ValueError: if ``x`` is not 1-D, has non-finite entries, or its
            length differs from ``dim``.
    """
    v = np.array(x, dtype=np.float64)
    if v.ndim == 0:
        v = v.reshape(1)
    if v.ndim != 1 or v.size == 0:
        raise ValueError(f"{name} must be a non-empty 1-D vector, got shape {v.shape}")
    if not np.all(np.isfinite(v)):
        raise ValueError(f"{name} has non-finite components")
    if dim is not None and v.shape[0] != dim:
        raise ValueError(f"{name} has dimension {v.shape[0]}, expected {dim}")
    return v


def _frozen(v: np.ndarray) -> np.ndarray:
    v.setflags(write=False)
    return v


def _check_dim(x: np.ndarray, dim: int) -> None:
    if x.shape != (dim,):
        raise ValueError(f"dimension mismatch: got shape {x.shape}, expected ({dim},)")


def inner(x, y) -> float:
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape != y.shape:
        raise ValueError(f"dimension mismatch: {x.shape} vs {y.shape}")
    return float(x @ y)


def norm(x) -> float:
    x = np.asarray(x, dtype=np.float64)
    return math.sqrt(float(x @ x))


def three_point_identity_residual(x, y, z, gamma: float) -> float:
    """LHS minus RHS of the Hilbert-space identity

    ||g x + (1-g) y - z||^2 = g ||x-z||^2 + (1-g) ||y-z||^2 - g (1-g) ||x-y||^2.

    Zero up to rounding for every ``gamma`` in [0, 1].
    """
    x, y, z = (np.asarray(v, dtype=np.float64) for v in (x, y, z))
    if not (x.shape == y.shape == z.shape):
        raise ValueError("x, y, z must have matching dimensions")
    lhs = norm(gamma * x + (1.0 - gamma) * y - z) ** 2
    rhs = (
        gamma * norm(x - z) ** 2
        + (1.0 - gamma) * norm(y - z) ** 2
        - gamma * (1.0 - gamma) * norm(x - y) ** 2
    )
    return lhs - rhs


class ConvexSet:
    """Nonempty closed convex subset of R^n with an exact projection."""

    dim: int

    def project(self, x: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def distance(self, x) -> float:
        x = np.asarray(x, dtype=np.float64)
        return norm(x - self.project(x))

    def contains(self, x, tol: float = MEMBERSHIP_TOL) -> bool:
        x = np.asarray(x, dtype=np.float64)
        return self.distance(x) <= tol * (1.0 + norm(x))

    def bounding_box(self) -> "Box | None":
        """Smallest axis-aligned box containing the set, or None if unbounded."""
        return None

    def sample(self, rng: np.random.Generator, n: int, box: "Box | None" = None) -> np.ndarray:
        """``n`` members of the set, as rows.

        Points are drawn uniformly from ``box`` (default: the bounding box)
        and projected onto the set, so they are members but not uniform.
        """
        region = box if box is not None else self.bounding_box()
        if region is None:
            raise ValueError(
                f"{type(self).__name__} is unbounded; pass an explicit sampling box"
            )
        raw = rng.uniform(region.lo, region.hi, size=(n, self.dim))
        return np.array([self.project(p) for p in raw])


@dataclass(frozen=True, eq=False)
class WholeSpace(ConvexSet):
    dim: int

    def __post_init__(self):
        if self.dim < 1:
            raise ValueError("dim must be >= 1")

    def project(self, x):
        _check_dim(x, self.dim)
        return x

    def distance(self, x) -> float:
        return 0.0


@dataclass(frozen=True, eq=False)
class Box(ConvexSet):
    """``{x : lo <= x <= hi}``; infinite bounds are allowed."""

    lo: np.ndarray
    hi: np.ndarray
    dim: int = field(init=False)

    def __post_init__(self):
        lo = np.array(self.lo, dtype=np.float64).reshape(-1)
        hi = np.array(self.hi, dtype=np.float64).reshape(-1)
        if lo.shape != hi.shape:
            raise ValueError("Box bounds must have the same dimension")
        if np.any(np.isnan(lo)) or np.any(np.isnan(hi)):
            raise ValueError("Box bounds must not be NaN")
        if np.any(lo > hi):
            raise ValueError("Box requires lo <= hi componentwise")
        object.__setattr__(self, "lo", _frozen(lo))
        object.__setattr__(self, "hi", _frozen(hi))
        object.__setattr__(self, "dim", lo.shape[0])

    @classmethod
    def uniform(cls, lo: float, hi: float, dim: int) -> "Box":
        return cls(np.full(dim, float(lo)), np.full(dim, float(hi)))

    def project(self, x):
        _check_dim(x, self.dim)
        return np.minimum(np.maximum(x, self.lo), self.hi)

    def bounding_box(self):
        if np.all(np.isfinite(self.lo)) and np.all(np.isfinite(self.hi)):
            return self
        return None


@dataclass(frozen=True, eq=False)
class Ball(ConvexSet):
    center: np.ndarray
    radius: float
    dim: int = field(init=False)

    def __post_init__(self):
        c = as_vector(self.center, name="center")
        if not self.radius > 0:
            raise ValueError(f"radius must be positive, got {self.radius}")
        object.__setattr__(self, "center", _frozen(c))
        object.__setattr__(self, "radius", float(self.radius))
        object.__setattr__(self, "dim", c.shape[0])

    def project(self, x):
        _check_dim(x, self.dim)
        d = x - self.center
        r = math.sqrt(float(d @ d))
        if r <= self.radius:
            return x
        return self.center + (self.radius / r) * d

    def bounding_box(self):
        return Box(self.center - self.radius, self.center + self.radius)


@dataclass(frozen=True, eq=False)
class Halfspace(ConvexSet):
    """``{x : <a, x> <= b}``; ``a`` is kept as given (not normalised)."""

    a: np.ndarray
    b: float
    dim: int = field(init=False)

    def __post_init__(self):
        a = as_vector(self.a, name="a")
        if not np.any(a != 0):
            raise ValueError("Halfspace normal a must be nonzero")
        object.__setattr__(self, "a", _frozen(a))
        object.__setattr__(self, "b", float(self.b))
        object.__setattr__(self, "dim", a.shape[0])

    def project(self, x):
        _check_dim(x, self.dim)
        excess = float(self.a @ x) - self.b
        if excess <= 0.0:
            return x
        return x - (excess / float(self.a @ self.a)) * self.a


@dataclass(frozen=True, eq=False)
class Simplex(ConvexSet):
    """``{x >= 0 : sum(x) = scale}``."""

    scale: float
    dim: int

    def __post_init__(self):
        if not self.scale > 0:
            raise ValueError(f"scale must be positive, got {self.scale}")
        if self.dim < 1:
            raise ValueError("dim must be >= 1")
        object.__setattr__(self, "scale", float(self.scale))

    def project(self, x):
        _check_dim(x, self.dim)
        # sort-based exact projection, O(n log n)
        u = np.sort(x)[::-1]
        css = np.cumsum(u) - self.scale
        ind = np.arange(1, self.dim + 1)
        rho = np.count_nonzero(u - css / ind > 0)
        theta = css[rho - 1] / rho
        return np.maximum(x - theta, 0.0)

    def bounding_box(self):
        return Box.uniform(0.0, self.scale, self.dim)


@dataclass(frozen=True, eq=False)
class Product(ConvexSet):
    """Cartesian product; block ``i`` acts on the next ``blocks[i].dim`` coordinates."""

    blocks: tuple
    dim: int = field(init=False)

    def __post_init__(self):
        blocks = tuple(self.blocks)
        if not blocks:
            raise ValueError("Product needs at least one block")
        offsets = np.cumsum([0] + [b.dim for b in blocks])
        object.__setattr__(self, "blocks", blocks)
        object.__setattr__(self, "dim", int(offsets[-1]))
        object.__setattr__(self, "_slices", tuple(
            slice(int(offsets[i]), int(offsets[i + 1])) for i in range(len(blocks))
        ))

    @property
    def slices(self) -> tuple:
        return self._slices

    def project(self, x):
        _check_dim(x, self.dim)
        return np.concatenate([b.project(x[s]) for b, s in zip(self.blocks, self._slices)])

    def bounding_box(self):
        boxes = [b.bounding_box() for b in self.blocks]
        if any(bx is None for bx in boxes):
            return None
        return Box(np.concatenate([bx.lo for bx in boxes]), np.concatenate([bx.hi for bx in boxes]))


def product(*blocks: ConvexSet | Sequence[ConvexSet]) -> Product:
    if len(blocks) == 1 and not isinstance(blocks[0], ConvexSet):
        blocks = tuple(blocks[0])
    return Product(tuple(blocks))
