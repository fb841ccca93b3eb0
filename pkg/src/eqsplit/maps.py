"""Nonexpansive mappings: projections, averaged combinations and resolvents."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import lu_factor, lu_solve

from .geometry import ConvexSet, as_vector

__all__ = [
    "NonexpansiveMap",
    "Identity",
    "Projection",
    "Averaged",
    "Resolvent",
    "MonotoneOperator",
    "LinearMonotone",
    "SubdifferentialOfConvexQuadratic",
    "apply",
    "resolvent",
    "fixed_point_residual",
    "component_residual",
]

WEIGHT_TOL = 1e-12


class NonexpansiveMap:
    dim: int

    def __call__(self, x: np.ndarray) -> np.ndarray:
        raise NotImplementedError


@dataclass(frozen=True, eq=False)
class Identity(NonexpansiveMap):
    dim: int

    def __call__(self, x):
        if x.shape != (self.dim,):
            raise ValueError(f"dimension mismatch: got {x.shape}, expected ({self.dim},)")
        return x


@dataclass(frozen=True, eq=False)
class Projection(NonexpansiveMap):
    set: ConvexSet

    @property
    def dim(self) -> int:
        return self.set.dim

    def __call__(self, x):
        return self.set.project(x)


@dataclass(frozen=True, eq=False)
class Averaged(NonexpansiveMap):
    """T(x) = sum_i weights_i T_i(x) with positive weights summing to one.

    The fixed point set is the intersection of the Fix(T_i) whenever that
    intersection is nonempty.
    """

    weights: np.ndarray
    maps: tuple
    dim: int = field(init=False)

    def __post_init__(self):
        maps = tuple(self.maps)
        w = as_vector(self.weights, len(maps), "weights")
        if np.any(w <= 0):
            raise ValueError("averaging weights must be strictly positive")
        if abs(w.sum() - 1.0) > WEIGHT_TOL:
            raise ValueError(f"averaging weights must sum to 1, got {w.sum()!r}")
        dims = {m.dim for m in maps}
        if len(dims) != 1:
            raise ValueError(f"component maps disagree on dimension: {sorted(dims)}")
        w.setflags(write=False)
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "maps", maps)
        object.__setattr__(self, "dim", dims.pop())

    @classmethod
    def uniform(cls, maps) -> "Averaged":
        maps = tuple(maps)
        return cls(np.full(len(maps), 1.0 / len(maps)), maps)

    def __call__(self, x):
        # components are independent; accumulate in index order so the sum
        # is reproducible however they are evaluated
        out = self.weights[0] * self.maps[0](x)
        for w, m in zip(self.weights[1:], self.maps[1:]):
            out = out + w * m(x)
        return out


class MonotoneOperator:
    """Single-valued affine monotone operator x -> M x + q."""

    def __init__(self, M, q=None):
        M = np.atleast_2d(np.array(M, dtype=np.float64))
        n = M.shape[0]
        if M.shape != (n, n):
            raise ValueError(f"M must be square, got {M.shape}")
        q = np.zeros(n) if q is None else as_vector(q, n, "q")
        sym = 0.5 * (M + M.T)
        if np.linalg.eigvalsh(sym).min() < -1e-12 * max(1.0, np.abs(M).max()):
            raise ValueError("operator is not monotone: M + M^T is not positive semidefinite")
        M.setflags(write=False)
        q.setflags(write=False)
        self.M = M
        self.q = q
        self.dim = n

    def __call__(self, x):
        return self.M @ x + self.q

    def zeros(self) -> np.ndarray:
        """A least-squares zero; check ``self(z)`` to see whether it is exact."""
        return np.linalg.lstsq(self.M, -self.q, rcond=None)[0]


class LinearMonotone(MonotoneOperator):
    pass


class SubdifferentialOfConvexQuadratic(MonotoneOperator):
    """Gradient of 0.5 x^T Q x + q^T x with Q symmetric positive semidefinite."""

    def __init__(self, Q, q=None):
        Q = np.atleast_2d(np.array(Q, dtype=np.float64))
        if not np.allclose(Q, Q.T, rtol=0, atol=1e-12 * max(1.0, np.abs(Q).max())):
            raise ValueError("Q must be symmetric")
        super().__init__(Q, q)

    @classmethod
    def distance_to(cls, point) -> "SubdifferentialOfConvexQuadratic":
        """Gradient of 0.5 ||x - point||^2; its only zero is ``point``."""
        p = as_vector(point, name="point")
        return cls(np.eye(p.shape[0]), -p)


class Resolvent(NonexpansiveMap):
    """J(x) = (I + c M)^{-1}(x): the unique z with x in z + c M(z).

    Firmly nonexpansive for any c > 0, and its fixed points are exactly
    the zeros of M.
    """

    def __init__(self, op: MonotoneOperator, c: float = 1.0):
        if not c > 0:
            raise ValueError(f"resolvent parameter c must be positive, got {c}")
        self.op = op
        self.c = float(c)
        self.dim = op.dim
        self._lu = lu_factor(np.eye(op.dim) + self.c * op.M)
        self._shift = self.c * op.q

    def __call__(self, x):
        if x.shape != (self.dim,):
            raise ValueError(f"dimension mismatch: got {x.shape}, expected ({self.dim},)")
        return lu_solve(self._lu, x - self._shift)


def apply(T: NonexpansiveMap, x) -> np.ndarray:
    return T(as_vector(x, T.dim))


def resolvent(op: MonotoneOperator, c: float, x) -> np.ndarray:
    return Resolvent(op, c)(as_vector(x, op.dim))


def fixed_point_residual(T: NonexpansiveMap, x) -> float:
    """||T(x) - x||."""
    x = as_vector(x, T.dim)
    d = T(x) - x
    return math.sqrt(float(d @ d))


def component_residual(T: NonexpansiveMap, x) -> float:
    """Largest ||T_i(x) - x|| over the leaves of nested averaged maps.

    For a single map this is ``fixed_point_residual``.  For an averaged map
    it vanishes only at common fixed points, which ``||T(x) - x||`` does not
    guarantee when the component fixed point sets fail to intersect.
    """
    if isinstance(T, Averaged):
        return max(component_residual(m, x) for m in T.maps)
    d = T(x) - x
    return math.sqrt(float(d @ d))
