"""Splitting iteration for fixed points of a nonexpansive map that solve an equilibrium problem.

One iteration from x (with f = f1 + f2 and schedule beta_k):

    g1, g2   diagonal subgradients of f1(x, .), f2(x, .) at x
    eta      max(beta_k, ||g1||, ||g2||)
    lam      beta_k / eta
    y        argmin{lam f1(x, u) + 0.5||u - x||^2 : u in C}
    z        argmin{lam f2(x, u) + 0.5||u - y||^2 : u in C}
    x_next   gamma z + (1 - gamma) T(x)
"""

from __future__ import annotations

import math
import time
import warnings
from dataclasses import dataclass, field

import numpy as np

from .geometry import as_vector
from .maps import Averaged, component_residual
from .prox import DEFAULT_INNER_MAX_ITERS, DEFAULT_INNER_TOL, ProxError, ProxRequest, prox_step

__all__ = [
    "SolverConfig",
    "SolverState",
    "TraceRecord",
    "Trace",
    "TRACE_FIELDS",
    "InvariantLog",
    "SolveResult",
    "FejerReport",
    "DivergenceError",
    "step",
    "solve",
    "prox_residual",
    "check_fejer",
    "fejer_from_trace",
    "Z_BOUND_SLACK",
    "FEASIBILITY_TOL",
]

Z_BOUND_SLACK = 1e-8
FEASIBILITY_TOL = 1e-10


@dataclass(frozen=True)
class SolverConfig:
    """Parameters of the iteration.

    The default schedule is beta_k = beta0 / (k+1)**beta_power, which has a
    divergent sum and a finite sum of squares exactly when
    0.5 < beta_power <= 1.  An explicit ``betas`` sequence overrides it;
    its summability is the caller's responsibility.
    """

    gamma: float = 0.5
    beta0: float = 1.0
    beta_power: float = 1.0
    betas: tuple | None = None
    max_iters: int = 10_000
    tol: float = 1e-6
    prox_lambda: float = 1.0
    trace_every: int = 1
    inner_tol: float = DEFAULT_INNER_TOL
    inner_max_iters: int = DEFAULT_INNER_MAX_ITERS
    certify: bool = False
    record_wall_time: bool = False
    seed: int = 0

    def __post_init__(self):
        if not 0.0 < self.gamma < 1.0:
            raise ValueError("gamma must lie strictly inside (0,1)")
        if not self.beta0 > 0:
            raise ValueError("beta0 must be positive")
        if not 0.5 < self.beta_power <= 1.0:
            raise ValueError("beta_power must lie in (0.5, 1] for sum(beta) = inf and sum(beta^2) < inf")
        if self.betas is not None:
            betas = tuple(float(b) for b in self.betas)
            if any(not (b > 0 and math.isfinite(b)) for b in betas):
                raise ValueError("explicit betas must be positive and finite")
            if len(betas) < self.max_iters:
                raise ValueError(f"explicit betas has {len(betas)} entries, max_iters needs {self.max_iters}")
            object.__setattr__(self, "betas", betas)
        if self.max_iters < 0:
            raise ValueError("max_iters must be nonnegative")
        if not self.tol > 0:
            raise ValueError("tol must be positive")
        if not self.prox_lambda > 0:
            raise ValueError("prox_lambda must be positive")
        if self.trace_every < 1:
            raise ValueError("trace_every must be >= 1")
        if not self.inner_tol > 0:
            raise ValueError("inner_tol must be positive")
        if self.inner_max_iters < 1:
            raise ValueError("inner_max_iters must be >= 1")

    def beta(self, k: int) -> float:
        if self.betas is not None:
            return self.betas[k]
        return self.beta0 / (k + 1) ** self.beta_power


@dataclass(frozen=True, eq=False)
class SolverState:
    """Iterate ``x`` at index ``k`` and the quantities of the step that produced it.

    The initial state has only ``k`` and ``x``.
    """

    k: int
    x: np.ndarray
    g1: np.ndarray | None = None
    g2: np.ndarray | None = None
    eta: float = math.nan
    lam: float = math.nan
    beta: float = math.nan
    y: np.ndarray | None = None
    z: np.ndarray | None = None
    residual_T: float = math.nan
    residual_prox: float = math.nan

    @classmethod
    def initial(cls, x0) -> "SolverState":
        return cls(0, as_vector(x0, name="x0"))


TRACE_FIELDS = (
    "k",
    "beta",
    "lambda",
    "norm_y_minus_x",
    "norm_z_minus_x",
    "fixed_point_residual",
    "prox_residual",
    "dist_to_oracle",
    "wall_time_s",
)


@dataclass(frozen=True)
class TraceRecord:
    """Diagnostics at iterate x^k.

    The step fields (beta, lambda, the two norms) describe the step taken
    from x^k and are None on the terminal record, where no step is taken.
    """

    k: int
    beta: float | None
    lam: float | None
    norm_y_minus_x: float | None
    norm_z_minus_x: float | None
    fixed_point_residual: float
    prox_residual: float
    dist_to_oracle: float | None = None
    wall_time_s: float | None = None

    def as_row(self) -> tuple:
        return (
            self.k,
            self.beta,
            self.lam,
            self.norm_y_minus_x,
            self.norm_z_minus_x,
            self.fixed_point_residual,
            self.prox_residual,
            self.dist_to_oracle,
            self.wall_time_s,
        )


@dataclass
class Trace:
    records: list = field(default_factory=list)

    def append(self, record: TraceRecord) -> None:
        self.records.append(record)

    def __iter__(self):
        return iter(self.records)

    def __len__(self) -> int:
        return len(self.records)

    def __getitem__(self, i):
        return self.records[i]

    def column(self, name: str) -> list:
        attr = "lam" if name == "lambda" else name
        return [getattr(r, attr) for r in self.records]


@dataclass
class InvariantLog:
    """Worst values seen at any iteration, whether or not it was traced."""

    lambda_min: float = math.inf
    lambda_max: float = -math.inf
    z_bound_slack: float = -math.inf
    z_bound_index: int = -1
    feasibility: float = 0.0
    fejer_slack: float = -math.inf
    fejer_index: int = -1
    min_fixed_point_residual: float = math.inf
    max_certificate: float = 0.0


@dataclass
class SolveResult:
    x: np.ndarray
    trace: Trace
    status: str
    iterations: int
    residual_T: float
    residual_component: float
    residual_prox: float
    dist_to_oracle: float | None
    invariants: InvariantLog
    message: str = ""

    @property
    def converged(self) -> bool:
        return self.status == "converged"


class DivergenceError(RuntimeError):
    def __init__(self, message: str, trace: Trace):
        super().__init__(message)
        self.trace = trace


@dataclass(frozen=True)
class FejerReport:
    max_slack: float
    worst_index: int
    threshold: float

    @property
    def passed(self) -> bool:
        return self.max_slack <= self.threshold


def _norm(v) -> float:
    return math.sqrt(float(v @ v))


def prox_residual(f, C, x, lam_bar: float, **prox_kwargs) -> float:
    """||x - argmin{lam_bar f(x, y) + 0.5||y - x||^2 : y in C}||.

    Zero exactly when x solves the equilibrium problem of ``f`` on ``C``,
    whatever the value of ``lam_bar``.
    """
    res = prox_step(ProxRequest(f, x, x, lam_bar, C), certify=False, **prox_kwargs)
    return _norm(x - res.y)


def _advance(x, Tx, k, problem, config, prox_kwargs):
    """One iteration from x^k; returns (state, certificate or nan)."""
    f1, f2 = problem.split.f1, problem.split.f2
    C = problem.C
    beta = config.beta(k)
    g1 = f1.diag_subgrad(x)
    g2 = f2.diag_subgrad(x)
    eta = max(beta, _norm(g1), _norm(g2))
    lam = beta / eta
    certify = config.certify
    r1 = prox_step(ProxRequest(f1, x, x, lam, C), certify=certify, seed=(config.seed, k, 1), **prox_kwargs)
    y = r1.y
    r2 = prox_step(ProxRequest(f2, x, y, lam, C), certify=certify, seed=(config.seed, k, 2), **prox_kwargs)
    z = r2.y
    x_next = config.gamma * z + (1.0 - config.gamma) * Tx
    cert = max(r1.certificate, r2.certificate) if certify else math.nan
    state = SolverState(k + 1, x_next, g1, g2, eta, lam, beta, y, z, _norm(Tx - x))
    return state, cert


def step(state: SolverState, problem, config: SolverConfig) -> SolverState:
    """Advance one iteration; the returned state holds x^{k+1} and the step data of iteration k."""
    x = state.x
    return _advance(x, problem.T(x), state.k, problem, config, _prox_kwargs(config))[0]


def _prox_kwargs(config):
    return {"inner_tol": config.inner_tol, "inner_max_iters": config.inner_max_iters}


def solve(problem, config: SolverConfig, x0) -> SolveResult:
    """Run the iteration from ``x0`` until the stopping test or ``max_iters``.

    ``problem`` needs ``split`` (a SplitBifunction), ``C`` and ``T``; an
    ``oracle_solution`` attribute, when not None, enables distance tracking
    and the online Fejer check.

    Stopping test, evaluated on traced iterations (every ``trace_every``):
    ||T(x) - x||, the largest component residual of an averaged T, and the
    fixed-stepsize prox residual at ``prox_lambda`` are all <= ``tol``.
    ||z - x|| is deliberately not used: it is below sqrt(2) beta_k at every
    iteration regardless of optimality.

    ``x0`` outside C is projected onto C with a warning.
    """
    C, T = problem.C, problem.T
    x = as_vector(x0, C.dim, "x0")
    if not C.contains(x):
        warnings.warn("x0 is not in C; projecting it onto C", UserWarning, stacklevel=2)
        x = C.project(x)
    oracle = getattr(problem, "oracle_solution", None)
    if oracle is not None:
        oracle = as_vector(oracle, C.dim, "oracle_solution")
    f = problem.split.combined()
    averaged = isinstance(T, Averaged)
    prox_kwargs = _prox_kwargs(config)
    gamma = config.gamma
    sqrt2 = math.sqrt(2.0)
    inv = InvariantLog()
    trace = Trace()
    t0 = time.perf_counter()
    status, message = "max_iters", ""
    rT = rC = rP = math.nan
    dist = _norm(x - oracle) if oracle is not None else None
    k = 0

    def record(k, st, rT, rP, dist):
        wall = time.perf_counter() - t0 if config.record_wall_time else None
        if st is None:
            trace.append(TraceRecord(k, None, None, None, None, rT, rP, dist, wall))
        else:
            trace.append(TraceRecord(
                k, st.beta, st.lam, _norm(st.y - x), _norm(st.z - x), rT, rP, dist, wall
            ))

    try:
        while True:
            Tx = T(x)
            evaluate = k % config.trace_every == 0 or k == config.max_iters
            if evaluate:
                rT = _norm(Tx - x)
                rC = component_residual(T, x) if averaged else rT
                rP = prox_residual(f, C, x, config.prox_lambda, **prox_kwargs)
                if max(rT, rC, rP) <= config.tol:
                    status = "converged"
                    record(k, None, rT, rP, dist)
                    break
                if k == config.max_iters:
                    record(k, None, rT, rP, dist)
                    break
            st, cert = _advance(x, Tx, k, problem, config, prox_kwargs)
            x_next = st.x
            if not math.isfinite(float(x_next.sum())):
                record(k, None, rT, rP, dist)
                raise DivergenceError(f"non-finite iterate at k={k + 1}", trace)

            inv.lambda_min = min(inv.lambda_min, st.lam)
            inv.lambda_max = max(inv.lambda_max, st.lam)
            nz = _norm(st.z - x)
            slack = nz - sqrt2 * st.beta
            if slack > inv.z_bound_slack:
                inv.z_bound_slack, inv.z_bound_index = slack, k
            # y and z come out of projections onto C; checked in full on traced iterations
            inv.feasibility = max(inv.feasibility, C.distance(x_next))
            if evaluate:
                inv.feasibility = max(inv.feasibility, C.distance(st.y), C.distance(st.z))
            inv.min_fixed_point_residual = min(inv.min_fixed_point_residual, st.residual_T)
            if config.certify:
                inv.max_certificate = max(inv.max_certificate, cert)
            if oracle is not None:
                dist_next = _norm(x_next - oracle)
                fs = dist_next**2 - dist**2 - 2.0 * gamma * st.beta**2
                if fs > inv.fejer_slack:
                    inv.fejer_slack, inv.fejer_index = fs, k

            if evaluate:
                record(k, st, rT, rP, dist)
            x = x_next
            if oracle is not None:
                dist = dist_next
            k += 1
    except (ProxError, DivergenceError) as err:
        status, message = "error", str(err)
        inv.feasibility = max(inv.feasibility, C.distance(x))
        return SolveResult(x, trace, status, k, rT, rC, rP, dist, inv, message)

    inv.feasibility = max(inv.feasibility, C.distance(x))
    inv.min_fixed_point_residual = min(inv.min_fixed_point_residual, rT)
    return SolveResult(x, trace, status, k, rT, rC, rP, dist, inv, message)


def check_fejer(distances, betas, gamma: float, x_star) -> FejerReport:
    """Check ||x^{k+1} - x*||^2 <= ||x^k - x*||^2 + 2 gamma beta_k^2 along a run.

    ``distances[k]`` is ||x^k - x*|| for k = 0..K and ``betas[k]`` the
    schedule value used in step k (at least K entries).  The check passes
    when the worst slack is at most 1e-8 (1 + ||x*||^2).
    """
    d = np.asarray(distances, dtype=np.float64)
    b = np.asarray(betas, dtype=np.float64)[: max(len(d) - 1, 0)]
    threshold = 1e-8 * (1.0 + _norm(np.asarray(x_star, dtype=np.float64)) ** 2)
    if len(d) < 2:
        return FejerReport(-math.inf, -1, threshold)
    if len(b) < len(d) - 1:
        raise ValueError("need one beta per step")
    slack = d[1:] ** 2 - d[:-1] ** 2 - 2.0 * gamma * b**2
    i = int(np.argmax(slack))
    return FejerReport(float(slack[i]), i, threshold)


def fejer_from_trace(trace: Trace, gamma: float, x_star) -> FejerReport:
    """Fejer check on a trace recorded with ``trace_every=1`` and an oracle."""
    ks = trace.column("k")
    if any(b - a != 1 for a, b in zip(ks, ks[1:])):
        raise ValueError("Fejer check needs a trace with every iteration recorded")
    dists = trace.column("dist_to_oracle")
    if any(d is None for d in dists):
        raise ValueError("trace has no distances to the oracle solution")
    betas = [b for b in trace.column("beta") if b is not None]
    return check_fejer(dists, betas, gamma, x_star)
