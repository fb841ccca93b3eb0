"""Problem builders for the four application classes, plus independent ground-truth oracles.

The oracles never call the splitting solver or the iterative prox solver:
they use best-response iteration, closed forms, direct linear algebra,
extragradient with Dykstra projections, or plain enumeration.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .bifunctions import QuadraticGame, SplitBifunction, nikaido_isoda
from .geometry import Box, ConvexSet, Halfspace, WholeSpace, as_vector
from .maps import (
    Averaged,
    Identity,
    MonotoneOperator,
    NonexpansiveMap,
    Projection,
    Resolvent,
    component_residual,
)

__all__ = [
    "ProblemInstance",
    "InstanceCheck",
    "OracleError",
    "check_instance",
    "build_cournot",
    "build_sep_game",
    "build_intersection_ep",
    "build_inclusion_ep",
    "cournot_oracle",
    "cournot_closed_form",
    "dykstra_project",
    "extragradient_oracle",
    "common_zero_oracle",
    "pseudo_gradient",
    "variational_equilibrium_oracle",
]


class OracleError(RuntimeError):
    pass


@dataclass(frozen=True, eq=False)
class ProblemInstance:
    """A problem ``find x in C with x = T(x) and f(x, y) >= 0 for all y in C``.

    ``ep_region`` lists extra sets that restrict the points y used when
    checking the oracle's equilibrium inequality (the coupling
    constraints of a split equilibrium game).
    """

    split: SplitBifunction
    C: ConvexSet
    T: NonexpansiveMap
    oracle_solution: np.ndarray | None = None
    name: str = ""
    oracle_provenance: str = ""
    ep_region: tuple = ()
    spec: dict | None = field(default=None, repr=False)

    def __post_init__(self):
        if self.T.dim != self.C.dim:
            raise ValueError(f"T has dimension {self.T.dim}, C has {self.C.dim}")
        if self.oracle_solution is not None:
            x = as_vector(self.oracle_solution, self.C.dim, "oracle_solution")
            x.setflags(write=False)
            object.__setattr__(self, "oracle_solution", x)

    @property
    def dim(self) -> int:
        return self.C.dim


@dataclass(frozen=True)
class InstanceCheck:
    fixed_point_residual: float
    min_ep_value: float
    samples_used: int

    @property
    def passed(self) -> bool:
        return self.fixed_point_residual <= 1e-8 and self.min_ep_value >= -1e-6


def check_instance(inst: ProblemInstance, samples: int = 1000, seed: int = 0) -> InstanceCheck:
    """Verify the oracle: x* = T(x*) and f(x*, y) >= 0 on sampled y.

    The y are drawn from C (from a box around x* if C is unbounded) and
    kept only if they lie in every set of ``ep_region``.
    """
    x = inst.oracle_solution
    if x is None:
        raise ValueError(f"instance {inst.name!r} has no oracle solution")
    res = component_residual(inst.T, x)
    rng = np.random.default_rng(seed)
    box = inst.C.bounding_box()
    if box is None:
        r = 1.0 + float(np.abs(x).max())
        box = Box(x - r, x + r)
    ys = inst.C.sample(rng, samples, box)
    ys = [y for y in ys if all(S.contains(y, 1e-12) for S in inst.ep_region)]
    f = inst.split
    worst = min((f(x, y) for y in ys), default=math.inf)
    return InstanceCheck(res, worst, len(ys))


def _box_for(box, n: int) -> Box:
    if isinstance(box, Box):
        if box.dim != n:
            raise ValueError(f"box has dimension {box.dim}, game has {n} players")
        return box
    lo, hi = box
    return Box(np.broadcast_to(np.asarray(lo, float), (n,)), np.broadcast_to(np.asarray(hi, float), (n,)))


def cournot_closed_form(a: float, b: float, c) -> np.ndarray:
    """Interior equilibrium of the symmetric-demand duopoly: x_i = (a - 2c_i + c_j) / (3b)."""
    c1, c2 = c
    return np.array([(a - 2 * c1 + c2) / (3 * b), (a - 2 * c2 + c1) / (3 * b)])


def _response_interval(x, i, lo, hi, constraints):
    for aj, bj in constraints:
        coef = aj[i]
        rest = float(aj @ x) - coef * x[i]
        if coef > 0:
            hi = min(hi, (bj - rest) / coef)
        elif coef < 0:
            lo = max(lo, (bj - rest) / coef)
    return lo, hi


def cournot_oracle(
    a,
    B,
    c,
    box,
    constraints: Sequence = (),
    *,
    damping: float = 0.5,
    tol: float = 1e-12,
    max_iters: int = 1_000_000,
    start=None,
) -> np.ndarray:
    """Nash equilibrium by damped simultaneous best responses.

    Each player's best response is restricted to its action interval and
    to the coupling constraints ``<a_j, x> <= b_j`` with the other players'
    actions held fixed.  With coupling constraints the limit is one of the
    generalised equilibria (the one reached from ``start``, default: the
    lower corner of the box).  For an unconstrained two-player symmetric
    demand the result is cross-checked against the closed form.

    Raises:
        OracleError: the best-response iteration is not contractive.
    """
    game = QuadraticGame(a, B, c)
    n = game.n
    box = _box_for(box, n)
    cons = [(as_vector(aj, n, "constraint normal"), float(bj)) for aj, bj in constraints]
    x = box.lo.copy() if start is None else as_vector(start, n, "start")
    first = None
    for _ in range(max_iters):
        br = np.empty(n)
        for i in range(n):
            lo, hi = _response_interval(x, i, box.lo[i], box.hi[i], cons)
            if lo > hi:
                raise OracleError(f"player {i} has no feasible action at x={x}")
            br[i] = game.best_response(x, i, lo, hi)
        gap = float(np.abs(br - x).max())
        if gap <= tol:
            x = br
            break
        if first is None:
            first = gap
        elif gap > 1e6 * max(first, 1.0):
            raise OracleError("best-response iteration diverges (non-contractive)")
        x = (1.0 - damping) * x + damping * br
    else:
        raise OracleError(f"best-response iteration did not reach {tol:g} in {max_iters} iterations")

    if not cons and n == 2 and np.all(game.B == game.B[0, 0]) and game.a[0] == game.a[1]:
        ref = cournot_closed_form(game.a[0], game.B[0, 0], game.c)
        if np.all(ref > box.lo) and np.all(ref < box.hi) and np.abs(ref - x).max() > 1e-9:
            raise OracleError(f"best response {x} disagrees with closed form {ref}")
    return x


def build_cournot(
    game: QuadraticGame, box, split: str = "revenue-cost", oracle: bool = True, name: str = "cournot"
) -> ProblemInstance:
    """Nash-Cournot equilibrium on an action box, T = identity."""
    box = _box_for(box, game.n)
    x_star = cournot_oracle(game.a, game.B, game.c, box) if oracle else None
    return ProblemInstance(
        nikaido_isoda(game, split),
        box,
        Identity(game.n),
        x_star,
        name,
        "damped best-response iteration" if oracle else "",
    )


def build_sep_game(
    game: QuadraticGame,
    box,
    constraints: Sequence = (),
    weights=None,
    split: str = "revenue-cost",
    oracle: bool = True,
    name: str = "sep_game",
) -> ProblemInstance:
    """Cournot game with coupling constraints <a_j, x> <= b_j pushed into T.

    Shared constraints admit a continuum of generalised equilibria; the
    oracle is the variational one (every player faces the same shadow
    price), which is where the iteration converges.

    T is the weighted average of the halfspace projections (uniform
    weights by default); with no constraints T is the identity, which
    makes the instance identical to ``build_cournot``.
    """
    box = _box_for(box, game.n)
    halfspaces = tuple(Halfspace(aj, bj) for aj, bj in constraints)
    if halfspaces:
        w = np.full(len(halfspaces), 1.0 / len(halfspaces)) if weights is None else weights
        T = Averaged(w, tuple(Projection(H) for H in halfspaces))
    else:
        T = Identity(game.n)
    x_star, provenance = None, ""
    if oracle and halfspaces:
        x_star = variational_equilibrium_oracle(game, box, halfspaces)
        provenance = "extragradient on the pseudo-gradient over the feasible region"
    elif oracle:
        x_star = cournot_oracle(game.a, game.B, game.c, box)
        provenance = "damped best-response iteration"
    return ProblemInstance(
        nikaido_isoda(game, split),
        box,
        T,
        x_star,
        name,
        provenance,
        ep_region=halfspaces,
    )


def _default_superset(sets: Sequence[ConvexSet]) -> ConvexSet:
    boxes = [s.bounding_box() for s in sets]
    boxes = [b for b in boxes if b is not None]
    if not boxes:
        return WholeSpace(sets[0].dim)
    return Box(np.min([b.lo for b in boxes], axis=0), np.max([b.hi for b in boxes], axis=0))


def dykstra_project(sets: Sequence[ConvexSet], x, tol: float = 1e-14, max_iters: int = 100_000) -> np.ndarray:
    """Projection onto the intersection of ``sets`` by Dykstra's algorithm.

    With an empty intersection the iteration may still settle; callers
    must check membership of the result.
    """
    x = as_vector(x, sets[0].dim)
    incr = [np.zeros_like(x) for _ in sets]
    for _ in range(max_iters):
        prev = x
        for i, S in enumerate(sets):
            y = S.project(x + incr[i])
            incr[i] = x + incr[i] - y
            x = y
        if np.abs(x - prev).max() <= tol * (1.0 + np.abs(x).max()):
            return x
    raise OracleError("Dykstra projection did not converge")


def extragradient_oracle(
    F: Callable[[np.ndarray], np.ndarray],
    sets: Sequence[ConvexSet],
    x0,
    step: float,
    tol: float = 1e-12,
    max_iters: int = 200_000,
) -> np.ndarray:
    """Solve the variational inequality of F over the intersection of ``sets``.

    ``step`` must be below 1/L for an L-Lipschitz monotone F.
    """
    proj = lambda v: dykstra_project(sets, v)  # noqa: E731
    x = proj(x0)
    for _ in range(max_iters):
        y = proj(x - step * F(x))
        x_new = proj(x - step * F(y))
        if np.abs(x - y).max() <= tol and np.abs(x_new - x).max() <= tol:
            return x_new
        x = x_new
    raise OracleError(f"extragradient did not reach {tol:g} in {max_iters} iterations")


def pseudo_gradient(game: QuadraticGame, x) -> np.ndarray:
    """(-d phi_i / d x_i)_i, differentiated by hand from the payoffs."""
    x = np.asarray(x, dtype=np.float64)
    return -(game.a - game.B @ x - np.diag(game.B) * x - game.c)


def variational_equilibrium_oracle(game: QuadraticGame, box, halfspaces: Sequence[Halfspace], tol: float = 1e-12) -> np.ndarray:
    """Equilibrium of a game with shared constraints that solves the VI of the pseudo-gradient.

    Needs a monotone pseudo-gradient, i.e. B + diag(B) positive semidefinite
    in its symmetric part.
    """
    box = _box_for(box, game.n)
    J = game.B + np.diag(np.diag(game.B))
    if np.linalg.eigvalsh(0.5 * (J + J.T)).min() < -1e-12:
        raise OracleError("pseudo-gradient is not monotone; the variational equilibrium oracle does not apply")
    step = 0.5 / float(np.linalg.norm(J, 2))
    sets = (box, *halfspaces)
    return extragradient_oracle(lambda x: pseudo_gradient(game, x), sets, box.lo, step, tol=tol)


def common_zero_oracle(operators: Sequence[MonotoneOperator]) -> np.ndarray:
    """Common zero of affine maps M_i x + q_i from the stacked linear system.

    Raises:
        OracleError: the stacked system is inconsistent (no common zero).
    """
    M = np.vstack([op.M for op in operators])
    q = np.concatenate([op.q for op in operators])
    x, *_ = np.linalg.lstsq(M, -q, rcond=None)
    resid = float(np.abs(M @ x + q).max())
    if resid > 1e-10 * (1.0 + float(np.abs(q).max())):
        raise OracleError(f"no common zero: stacked residual {resid:.3e}")
    return x


def build_intersection_ep(
    split: SplitBifunction,
    sets: Sequence[ConvexSet],
    weights=None,
    C: ConvexSet | None = None,
    oracle=None,
    name: str = "intersection_ep",
) -> ProblemInstance:
    """Equilibrium problem over the intersection of ``sets``.

    The intersection is never projected onto: T averages the individual
    projections, and the prox steps run over ``C``, by default the
    bounding box of the bounded sets (the whole space if none is bounded).
    The intersection must be nonempty; this is checked by exhibiting a
    common point with Dykstra's algorithm.
    """
    sets = tuple(sets)
    if not sets:
        raise ValueError("need at least one set")
    common = dykstra_project(sets, np.zeros(sets[0].dim))
    if not all(S.contains(common, 1e-8) for S in sets):
        raise ValueError("the sets do not appear to intersect")
    w = np.full(len(sets), 1.0 / len(sets)) if weights is None else weights
    T = Averaged(w, tuple(Projection(S) for S in sets))
    C = _default_superset(sets) if C is None else C
    provenance = ""
    if oracle is not None:
        provenance = "supplied"
    return ProblemInstance(split, C, T, oracle, name, provenance)


def build_inclusion_ep(
    split: SplitBifunction,
    operators: Sequence[MonotoneOperator],
    c: float = 1.0,
    weights=None,
    C: ConvexSet | None = None,
    oracle=None,
    name: str = "inclusion_ep",
) -> ProblemInstance:
    """Equilibrium problem restricted to the common zeros of monotone operators.

    T averages the resolvents (I + cM_i)^{-1}; C defaults to the whole space.
    """
    operators = tuple(operators)
    if not operators:
        raise ValueError("need at least one operator")
    w = np.full(len(operators), 1.0 / len(operators)) if weights is None else weights
    T = Averaged(w, tuple(Resolvent(op, c) for op in operators))
    C = WholeSpace(operators[0].dim) if C is None else C
    return ProblemInstance(split, C, T, oracle, name, "supplied" if oracle is not None else "")
