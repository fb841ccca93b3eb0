"""The strongly convex subproblems argmin{lam f(base, y) + 0.5||y - anchor||^2 : y in C}."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .bifunctions import Bifunction
from .geometry import ConvexSet, as_vector

__all__ = [
    "DEFAULT_INNER_TOL",
    "DEFAULT_INNER_MAX_ITERS",
    "CERTIFICATE_DIRECTIONS",
    "ProxRequest",
    "ProxResult",
    "ProxError",
    "InnerSolveError",
    "prox_step",
    "inner_solve",
    "optimality_certificate",
]

DEFAULT_INNER_TOL = 1e-10
DEFAULT_INNER_MAX_ITERS = 10_000
CERTIFICATE_DIRECTIONS = 32


@dataclass(frozen=True, eq=False)
class ProxRequest:
    """One proximal subproblem.

    ``base`` is the point at which ``bifunction(base, .)`` is frozen,
    ``anchor`` the proximity centre.
    """

    bifunction: Bifunction
    base: np.ndarray
    anchor: np.ndarray
    lam: float
    set: ConvexSet

    def __post_init__(self):
        if not self.lam > 0:
            raise ValueError(f"lam must be positive, got {self.lam}")
        n = self.set.dim
        if self.base.shape != (n,) or self.anchor.shape != (n,):
            raise ValueError(
                f"base {self.base.shape} and anchor {self.anchor.shape} must match set dimension {n}"
            )

    def objective(self, y) -> float:
        d = y - self.anchor
        return self.lam * self.bifunction(self.base, y) + 0.5 * float(d @ d)

    def gradient(self, y) -> np.ndarray:
        return self.lam * self.bifunction.subgrad(self.base, y) + (y - self.anchor)


@dataclass(frozen=True, eq=False)
class ProxResult:
    y: np.ndarray
    certificate: float
    method: str
    iterations: int = 0


class InnerSolveError(RuntimeError):
    def __init__(self, message: str, best: np.ndarray, iterations: int):
        super().__init__(message)
        self.best = best
        self.iterations = iterations


class ProxError(RuntimeError):
    """The iterative solver missed ``inner_tol``; carries the best iterate found."""

    def __init__(self, message: str, best: np.ndarray, certificate: float, iterations: int):
        super().__init__(f"{message} (certificate {certificate:.3e})")
        self.best = best
        self.certificate = certificate
        self.iterations = iterations


def optimality_certificate(req: ProxRequest, y, seed=0, directions: int = CERTIFICATE_DIRECTIONS) -> float:
    """Worst violation of the variational inequality <grad h(y), s - y> >= 0.

    ``h`` is the subproblem objective and ``s`` ranges over ``directions``
    pseudo-random members of the set, generated from ``seed``.  Each
    violation is measured along the unit vector (s - y)/||s - y||, so the
    certificate is on the scale of a gradient norm.  Members closer to
    ``y`` than 1e-9 (1 + ||y||) are skipped.
    """
    rng = np.random.default_rng(seed)
    g = req.gradient(y)
    radius = 1.0 + math.sqrt(float(y @ y))
    # steps of rounding size carry no direction information
    floor = 1e-9 * radius
    worst = 0.0
    for u in rng.standard_normal((directions, y.shape[0])):
        u *= radius / math.sqrt(float(u @ u))
        d = req.set.project(y + u) - y
        nd = math.sqrt(float(d @ d))
        if nd > floor:
            worst = max(worst, -float(g @ d) / nd)
    return worst


def inner_solve(
    grad: Callable[[np.ndarray], np.ndarray],
    C: ConvexSet,
    start,
    *,
    lipschitz: float | None = None,
    value: Callable[[np.ndarray], float] | None = None,
    smooth: bool = True,
    inner_tol: float = DEFAULT_INNER_TOL,
    inner_max_iters: int = DEFAULT_INNER_MAX_ITERS,
) -> tuple[np.ndarray, int]:
    """Minimise a 1-strongly convex objective over ``C`` from ``start``.

    Smooth objectives use projected gradient with step ``1/lipschitz``, or a
    backtracking step when ``lipschitz`` is None (then ``value`` is needed).
    The iteration stops once ||y_new - y|| <= step * inner_tol, which bounds
    the distance to the minimiser by ``inner_tol``.  Nonsmooth objectives
    use projected subgradient steps 1/(k+1) with running averaging.

    Returns:
        The final iterate and the number of iterations.

    Raises:
        InnerSolveError: if the stopping test fails within ``inner_max_iters``.
    """
    if not inner_tol > 0:
        raise ValueError("inner_tol must be positive")
    y = C.project(as_vector(start, C.dim, "start"))
    if not smooth:
        return _subgradient_solve(grad, C, y, inner_tol, inner_max_iters)
    if lipschitz is None and value is None:
        raise ValueError("backtracking needs the objective value when lipschitz is unknown")
    step = 1.0 / lipschitz if lipschitz is not None else 1.0
    for it in range(1, inner_max_iters + 1):
        g = grad(y)
        y_new = C.project(y - step * g)
        d = y_new - y
        if lipschitz is None:
            h = value(y)
            while value(y_new) > h + float(g @ d) + float(d @ d) / (2.0 * step) + 1e-15 * abs(h):
                step *= 0.5
                y_new = C.project(y - step * g)
                d = y_new - y
        if math.sqrt(float(d @ d)) <= step * inner_tol:
            return y_new, it
        y = y_new
    raise InnerSolveError(
        f"projected gradient did not reach inner_tol={inner_tol:g} in {inner_max_iters} iterations",
        y,
        inner_max_iters,
    )


def _subgradient_solve(grad, C, y, inner_tol, inner_max_iters):
    avg = y.copy()
    for it in range(1, inner_max_iters + 1):
        y = C.project(y - grad(y) / (it + 1))
        new_avg = avg + (y - avg) * (2.0 / (it + 2))
        d = new_avg - avg
        avg = new_avg
        if math.sqrt(float(d @ d)) <= inner_tol * (1.0 + math.sqrt(float(avg @ avg))):
            return avg, it
    raise InnerSolveError(
        f"projected subgradient did not reach inner_tol={inner_tol:g} in {inner_max_iters} iterations",
        avg,
        inner_max_iters,
    )


def prox_step(
    req: ProxRequest,
    *,
    method: str = "auto",
    inner_tol: float = DEFAULT_INNER_TOL,
    inner_max_iters: int = DEFAULT_INNER_MAX_ITERS,
    certify: bool = True,
    seed=0,
) -> ProxResult:
    """Solve one proximal subproblem.

    ``method="auto"`` uses the bifunction's closed form when it has one for
    this set and the warm-started iterative solver otherwise;
    ``"closed-form"`` and ``"generic"`` force a path.  With
    ``certify=False`` the certificate is NaN.

    Raises:
        ProxError: the iterative solver did not converge.
    """
    if method not in ("auto", "closed-form", "generic"):
        raise ValueError(f"unknown prox method {method!r}")
    y = None
    iterations = 0
    used = "closed-form"
    if method != "generic":
        y = req.bifunction.prox(req.base, req.anchor, req.lam, req.set)
        if y is None and method == "closed-form":
            raise ValueError(f"{req.bifunction!r} has no closed-form prox on {type(req.set).__name__}")
    if y is None:
        used = "generic"
        f = req.bifunction
        lip = None if f.lipschitz is None else 1.0 + req.lam * f.lipschitz
        try:
            y, iterations = inner_solve(
                req.gradient,
                req.set,
                req.anchor,
                lipschitz=lip,
                value=req.objective,
                smooth=f.smooth,
                inner_tol=inner_tol,
                inner_max_iters=inner_max_iters,
            )
        except InnerSolveError as err:
            cert = optimality_certificate(req, err.best, seed)
            raise ProxError(str(err), err.best, cert, err.iterations) from err
    cert = optimality_certificate(req, y, seed) if certify else math.nan
    return ProxResult(y, cert, used, iterations)
