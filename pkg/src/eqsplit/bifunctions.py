"""Bifunctions f(x, y), their diagonal subgradients and the sum structure f = f1 + f2.

A bifunction here is convex in its second argument and vanishes on the
diagonal.  Each instance carries an oracle for one element of the partial
subdifferential in ``y``; the quadratic family additionally has a closed
form proximal step.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .geometry import Box, ConvexSet, Product, WholeSpace, as_vector

__all__ = [
    "Bifunction",
    "SeparableQuadratic",
    "SplitBifunction",
    "QuadraticGame",
    "MonotonicityReport",
    "vi_linear",
    "separable_quadratic",
    "zero_bifunction",
    "potential_difference",
    "nikaido_isoda",
    "nikaido_isoda_value",
    "probe_monotonicity",
]


class Bifunction:
    """Generic bifunction built from callables.

    Args:
        value: ``(x, y) -> float``.
        subgrad: ``(x, y) -> ndarray``, some element of the subdifferential
            of ``f(x, .)`` at ``y``.
        lipschitz: Lipschitz constant of ``y -> subgrad(x, y)`` when
            ``f(x, .)`` is smooth; ``None`` if unknown.
        smooth: whether ``f(x, .)`` is differentiable.
    """

    def __init__(
        self,
        value: Callable[[np.ndarray, np.ndarray], float],
        subgrad: Callable[[np.ndarray, np.ndarray], np.ndarray],
        *,
        lipschitz: float | None = None,
        smooth: bool = True,
        name: str = "bifunction",
    ):
        self._value = value
        self._subgrad = subgrad
        self.lipschitz = lipschitz
        self.smooth = smooth
        self.name = name

    def __call__(self, x, y) -> float:
        return float(self._value(x, y))

    def subgrad(self, x, y) -> np.ndarray:
        return self._subgrad(x, y)

    def diag_subgrad(self, x) -> np.ndarray:
        """One element of the subdifferential of f(x, .) at x."""
        return self._subgrad(x, x)

    def prox(self, base, anchor, lam: float, C: ConvexSet) -> np.ndarray | None:
        """Closed-form ``argmin{lam f(base, y) + 0.5||y - anchor||^2 : y in C}``.

        Returns None when no closed form is available for this set; the
        caller then falls back to the iterative solver.
        """
        return None

    def __add__(self, other: "Bifunction") -> "Bifunction":
        if self.lipschitz is not None and other.lipschitz is not None:
            lip = self.lipschitz + other.lipschitz
        else:
            lip = None
        return Bifunction(
            lambda x, y: self(x, y) + other(x, y),
            lambda x, y: self.subgrad(x, y) + other.subgrad(x, y),
            lipschitz=lip,
            smooth=self.smooth and other.smooth,
            name=f"({self.name} + {other.name})",
        )

    def __repr__(self) -> str:
        return f"<{type(self).__name__} {self.name}>"


def _weighted_projection(C: ConvexSet, w: np.ndarray, weights: np.ndarray) -> np.ndarray | None:
    """argmin over C of sum_i weights_i (y_i - w_i)^2, when it has a closed form."""
    if isinstance(C, WholeSpace):
        return w
    if isinstance(C, Box):
        return np.minimum(np.maximum(w, C.lo), C.hi)
    if isinstance(C, Product):
        parts = []
        for block, s in zip(C.blocks, C.slices):
            p = _weighted_projection(block, w[s], weights[s])
            if p is None:
                return None
            parts.append(p)
        return np.concatenate(parts)
    if np.all(weights == weights[0]):
        return C.project(w)
    return None


class SeparableQuadratic(Bifunction):
    """f(x, y) = sum_i [q_i/2 (y_i^2 - x_i^2) + l_i(x) (y_i - x_i)].

    ``l`` is either affine, ``l(x) = L x + offset`` (pass ``L``), or an
    arbitrary callable (pass ``linear``).  The proximal step is solved
    coordinatewise, which is exact on boxes and products of boxes, and
    on any set when ``q`` is constant.
    """

    def __init__(self, q, *, L=None, offset=None, linear=None, name="separable_quadratic"):
        q = as_vector(q, name="q")
        if np.any(q < 0):
            raise ValueError("q must be componentwise nonnegative (f(x, .) must be convex)")
        n = q.shape[0]
        if (L is None) == (linear is None):
            raise ValueError("pass exactly one of L (matrix) or linear (callable)")
        if L is not None:
            L = np.array(L, dtype=np.float64)
            if L.ndim == 0:
                L = L * np.eye(n)
            if L.shape != (n, n):
                raise ValueError(f"L must be {n}x{n}, got {L.shape}")
            offset = np.zeros(n) if offset is None else as_vector(offset, n, "offset")
            L.setflags(write=False)
            offset.setflags(write=False)
        elif offset is not None:
            raise ValueError("offset is only meaningful together with L")
        q.setflags(write=False)
        self.q = q
        self.L = L
        self.offset = offset
        self._linear = linear
        self.dim = n
        super().__init__(self._eval, self._grad, lipschitz=float(q.max()), name=name)

    def linear(self, x) -> np.ndarray:
        if self.L is not None:
            return self.L @ x + self.offset
        return np.asarray(self._linear(x), dtype=np.float64)

    def _eval(self, x, y):
        return float(0.5 * (self.q @ (y * y - x * x)) + self.linear(x) @ (y - x))

    def _grad(self, x, y):
        return self.q * y + self.linear(x)

    def diag_subgrad(self, x):
        return self.q * x + self.linear(x)

    def prox(self, base, anchor, lam, C):
        weights = 1.0 + lam * self.q
        w = (anchor - lam * self.linear(base)) / weights
        return _weighted_projection(C, w, weights)

    def __add__(self, other):
        if not isinstance(other, SeparableQuadratic):
            return Bifunction.__add__(self, other)
        name = f"({self.name} + {other.name})"
        if self.L is not None and other.L is not None:
            return SeparableQuadratic(
                self.q + other.q, L=self.L + other.L, offset=self.offset + other.offset, name=name
            )
        return SeparableQuadratic(
            self.q + other.q, linear=lambda x: self.linear(x) + other.linear(x), name=name
        )


def vi_linear(M, q=None) -> SeparableQuadratic:
    """f(x, y) = <M x + q, y - x>, the bifunction of an affine variational inequality."""
    M = np.atleast_2d(np.array(M, dtype=np.float64))
    n = M.shape[0]
    return SeparableQuadratic(np.zeros(n), L=M, offset=q, name="vi_linear")


def separable_quadratic(q, linear, offset=None) -> SeparableQuadratic:
    """Separable quadratic bifunction; ``linear`` is a matrix or a callable ``x -> l(x)``."""
    if callable(linear):
        return SeparableQuadratic(q, linear=linear)
    return SeparableQuadratic(q, L=linear, offset=offset)


def zero_bifunction(dim: int) -> SeparableQuadratic:
    return SeparableQuadratic(np.zeros(dim), L=np.zeros((dim, dim)), name="zero")


def potential_difference(phi, grad_phi, lipschitz: float | None = None) -> Bifunction:
    """f(x, y) = phi(y) - phi(x), the bifunction of minimising ``phi``."""
    return Bifunction(
        lambda x, y: phi(y) - phi(x),
        lambda x, y: np.asarray(grad_phi(y), dtype=np.float64),
        lipschitz=lipschitz,
        name="potential_difference",
    )


@dataclass(frozen=True, eq=False)
class SplitBifunction:
    """f = f1 + f2, with the two parts kept apart for the splitting steps."""

    f1: Bifunction
    f2: Bifunction

    def __call__(self, x, y) -> float:
        return self.f1(x, y) + self.f2(x, y)

    def combined(self) -> Bifunction:
        return self.f1 + self.f2


@dataclass(frozen=True, eq=False)
class QuadraticGame:
    """n-player game with payoffs phi_i(x) = x_i (a_i - sum_j B_ij x_j) - c_i x_i.

    This is the linear-demand Cournot oligopoly: ``a`` is the demand
    intercept, ``B`` the price sensitivities, ``c`` the marginal costs.
    """

    a: np.ndarray
    B: np.ndarray
    c: np.ndarray

    def __post_init__(self):
        c = as_vector(self.c, name="c")
        n = c.shape[0]
        a = np.broadcast_to(np.asarray(self.a, dtype=np.float64), (n,)).copy()
        B = np.asarray(self.B, dtype=np.float64)
        if B.ndim == 0:
            B = np.full((n, n), float(B))
        if B.shape != (n, n):
            raise ValueError(f"B must be {n}x{n}, got {B.shape}")
        if np.any(np.diag(B) <= 0):
            raise ValueError("B must have a positive diagonal (payoffs concave in own action)")
        for name, v in (("a", a), ("B", B), ("c", c)):
            v.setflags(write=False)
            object.__setattr__(self, name, v)

    @property
    def n(self) -> int:
        return self.c.shape[0]

    def payoffs(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        return x * (self.a - self.B @ x) - self.c * x

    def deviation_payoff(self, x, i: int, t: float) -> float:
        """phi_i(x[t]): payoff of player i after replacing x_i by t."""
        xi = np.array(x, dtype=np.float64)
        xi[i] = t
        return float(self.payoffs(xi)[i])

    def best_response(self, x, i: int, lo: float = -math.inf, hi: float = math.inf) -> float:
        others = float(self.B[i] @ x - self.B[i, i] * x[i])
        t = (self.a[i] - self.c[i] - others) / (2.0 * self.B[i, i])
        return min(max(t, lo), hi)


def nikaido_isoda(game: QuadraticGame, split: str = "revenue-cost") -> SplitBifunction:
    """Nikaido-Isoda bifunction f(x, y) = sum_i phi_i(x) - phi_i(x[y_i]).

    ``split="revenue-cost"`` puts the revenue differences in f1 and the cost
    differences in f2; ``split="lumped"`` puts everything in f1 and f2 = 0.
    """
    d = np.diag(game.B)
    off = game.B - np.diag(d)
    n = game.n
    if split == "revenue-cost":
        f1 = SeparableQuadratic(2.0 * d, L=off, offset=-game.a, name="ni_revenue")
        f2 = SeparableQuadratic(np.zeros(n), L=np.zeros((n, n)), offset=game.c, name="ni_cost")
    elif split == "lumped":
        f1 = SeparableQuadratic(2.0 * d, L=off, offset=game.c - game.a, name="nikaido_isoda")
        f2 = zero_bifunction(n)
    else:
        raise ValueError(f"unknown split {split!r}; expected 'revenue-cost' or 'lumped'")
    return SplitBifunction(f1, f2)


def nikaido_isoda_value(game: QuadraticGame, x, y) -> float:
    """Evaluate the Nikaido-Isoda function straight from the payoffs."""
    x = np.asarray(x, dtype=np.float64)
    base = game.payoffs(x)
    return float(sum(base[i] - game.deviation_payoff(x, i, y[i]) for i in range(game.n)))


@dataclass(frozen=True)
class MonotonicityReport:
    samples: int
    max_symmetric_sum: float
    monotone_violations: int
    pseudo_monotone_violations: int
    verdict: str

    def __str__(self) -> str:
        return (
            f"verdict: {self.verdict}\n"
            f"samples: {self.samples}\n"
            f"max f(x,y)+f(y,x): {self.max_symmetric_sum:.6g}\n"
            f"monotonicity violations: {self.monotone_violations}\n"
            f"pseudo-monotonicity violations: {self.pseudo_monotone_violations}"
        )


def probe_monotonicity(
    f, C: ConvexSet, samples: int, seed: int = 0, box: Box | None = None, tol: float = 1e-12
) -> MonotonicityReport:
    """Sample pairs from C and look for monotonicity counterexamples.

    A ``violated`` verdict is conclusive; the two ``consistent-with-*``
    verdicts only mean no counterexample was found.
    """
    if samples < 1:
        raise ValueError("samples must be >= 1")
    rng = np.random.default_rng(seed)
    xs = C.sample(rng, samples, box)
    ys = C.sample(rng, samples, box)
    worst = -math.inf
    mono = pseudo = 0
    for x, y in zip(xs, ys):
        fxy, fyx = f(x, y), f(y, x)
        slack = tol * (1.0 + abs(fxy) + abs(fyx))
        s = fxy + fyx
        worst = max(worst, s)
        if s > slack:
            mono += 1
        if (fxy >= -slack and fyx > slack) or (fyx >= -slack and fxy > slack):
            pseudo += 1
    if pseudo:
        verdict = "violated"
    elif mono == 0:
        verdict = "consistent-with-monotone"
    else:
        verdict = "consistent-with-pseudo-monotone"
    return MonotonicityReport(samples, worst, mono, pseudo, verdict)
