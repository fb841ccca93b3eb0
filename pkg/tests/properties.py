"""Seeded property checks shared by the unit suites and the acceptance run.

Each ``check_*`` function draws ``cases`` random instances and returns the
worst normalised violation seen; a value <= 0 (or <= the stated tolerance)
means every case passed.
"""

from __future__ import annotations

import numpy as np

from eqsplit.geometry import Ball, Box, Halfspace, Product, Simplex, WholeSpace, three_point_identity_residual
from eqsplit.maps import Averaged, LinearMonotone, Projection, Resolvent

SET_KINDS = ("box", "ball", "halfspace", "simplex", "product", "whole")


def random_set(rng, kind=None, dim=None):
    kind = kind or SET_KINDS[rng.integers(len(SET_KINDS))]
    n = dim or int(rng.integers(1, 7))
    if kind == "box":
        lo = rng.uniform(-3, 1, n)
        return Box(lo, lo + rng.uniform(0, 3, n))
    if kind == "ball":
        return Ball(rng.uniform(-2, 2, n), rng.uniform(0.1, 3))
    if kind == "halfspace":
        return Halfspace(rng.standard_normal(n) + 0.01, rng.uniform(-2, 2))
    if kind == "simplex":
        return Simplex(rng.uniform(0.1, 3), n)
    if kind == "product":
        k = max(1, n // 2)
        return Product((random_set(rng, "box", k), random_set(rng, "ball", n - k) if n > k else random_set(rng, "simplex", 1)))
    return WholeSpace(n)


def random_point(rng, n, scale=5.0):
    return rng.uniform(-scale, scale, n)


def projection_violations(S, x, y, s):
    """Normalised violations of the three projection axioms for points x, y and member s."""
    px, py = S.project(x), S.project(y)
    scale = 1.0 + float(x @ x) + float(y @ y) + float(s @ s)
    idem = float(np.abs(S.project(px) - px).max()) / np.sqrt(scale)
    d = px - py
    firm = (float(d @ d) - float(d @ (x - y))) / scale
    var = float((x - px) @ (s - px)) / scale
    return idem, firm, var


def check_projection_axioms(cases, seed=0):
    """Worst (idempotence, firm nonexpansiveness, variational inequality) violation."""
    rng = np.random.default_rng(seed)
    worst = np.full(3, -np.inf)
    for _ in range(cases):
        S = random_set(rng)
        n = S.dim
        x, y = random_point(rng, n), random_point(rng, n)
        s = S.project(random_point(rng, n))
        worst = np.maximum(worst, projection_violations(S, x, y, s))
    return tuple(float(w) for w in worst)


def check_three_point_identity(cases, seed=0):
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(cases):
        n = int(rng.integers(1, 9))
        x, y, z = (random_point(rng, n, 3.0) for _ in range(3))
        worst = max(worst, abs(three_point_identity_residual(x, y, z, rng.uniform())))
    return worst


def sets_through(rng, p, m):
    """``m`` random sets that all contain the point ``p``."""
    n = p.shape[0]
    out = []
    for _ in range(m):
        kind = rng.choice(["box", "ball", "halfspace"])
        if kind == "box":
            out.append(Box(p - rng.uniform(0, 2, n), p + rng.uniform(0, 2, n)))
        elif kind == "ball":
            u = rng.standard_normal(n)
            c = p + rng.uniform(0, 1) * u / np.linalg.norm(u)
            out.append(Ball(c, float(np.linalg.norm(c - p)) + rng.uniform(0, 1)))
        else:
            a = rng.standard_normal(n) + 0.01
            out.append(Halfspace(a, float(a @ p) + rng.uniform(0, 1)))
    return out


def check_averaged_fixed_points(cases, seed=0):
    """Two directions of Fix(sum w_i P_i) = intersection of the sets.

    Returns ``(worst_common_point_residual, worst_energy_violation)``.  The
    first is ||T(p) - p|| at a common point p.  The second is the
    normalised violation of

        sum_i w_i ||P_i x - x||^2 <= ||x - p||^2 - ||T x - p||^2,

    which forces every P_i x = x whenever T x = x.
    """
    rng = np.random.default_rng(seed)
    fixed = energy = 0.0
    for _ in range(cases):
        n = int(rng.integers(1, 6))
        p = rng.uniform(-2, 2, n)
        sets = sets_through(rng, p, int(rng.integers(2, 5)))
        w = rng.uniform(0.1, 1, len(sets))
        T = Averaged(w / w.sum(), tuple(Projection(S) for S in sets))
        fixed = max(fixed, float(np.abs(T(p) - p).max()) / (1.0 + float(np.abs(p).max())))
        x = random_point(rng, n)
        Tx = T(x)
        lhs = sum(wi * float((S.project(x) - x) @ (S.project(x) - x)) for wi, S in zip(T.weights, sets))
        rhs = float((x - p) @ (x - p)) - float((Tx - p) @ (Tx - p))
        energy = max(energy, (lhs - rhs) / (1.0 + float(x @ x) + float(p @ p)))
    return fixed, energy


def random_monotone_with_zero(rng, n):
    """Affine monotone x -> M x + q with a nontrivial kernel and a known zero z0."""
    k = int(rng.integers(0, n))
    A = rng.standard_normal((n, n))
    S = A - A.T
    G = rng.standard_normal((n - k, n)) if n > k else np.zeros((0, n))
    M = S + G.T @ G
    # enforce a kernel: project M onto maps vanishing on a random subspace
    if k:
        K = np.linalg.qr(rng.standard_normal((n, k)))[0]
        P = np.eye(n) - K @ K.T
        M = P @ M @ P
    z0 = rng.uniform(-2, 2, n)
    return LinearMonotone(M, -M @ z0), z0


def check_resolvent_zeros(cases, seed=0):
    """Returns (worst ||J(z) - z|| at zeros z, worst resolvent identity residual)."""
    rng = np.random.default_rng(seed)
    at_zero = ident = 0.0
    for _ in range(cases):
        n = int(rng.integers(1, 6))
        op, z0 = random_monotone_with_zero(rng, n)
        c = rng.uniform(0.1, 5)
        J = Resolvent(op, c)
        at_zero = max(at_zero, float(np.abs(J(z0) - z0).max()) / (1.0 + float(np.abs(z0).max())))
        x = random_point(rng, n)
        jx = J(x)
        # x = jx + c M(jx), so J(x) = x exactly when M(x) = 0
        ident = max(ident, float(np.abs(jx + c * op(jx) - x).max()) / (1.0 + float(np.abs(x).max())))
    return at_zero, ident


def random_prox_request(rng):
    """A random separable-quadratic or affine-VI prox request that has a closed form."""
    from eqsplit.bifunctions import separable_quadratic, vi_linear
    from eqsplit.prox import ProxRequest

    n = int(rng.integers(1, 6))
    kind = rng.choice(["box", "product", "ball", "halfspace", "simplex"])
    if kind in ("box", "product"):
        q = rng.uniform(0, 3, n)
    else:
        q = np.full(n, rng.uniform(0, 3))
    if rng.uniform() < 0.3:
        f = vi_linear(rng.normal(size=(n, n)), rng.normal(size=n))
    else:
        f = separable_quadratic(q, rng.normal(size=(n, n)), rng.normal(size=n))
    if kind == "product" and n < 2:
        kind = "box"
    if kind == "product":
        C = Product((random_set(rng, "box", 1), random_set(rng, "box", n - 1)))
    else:
        C = random_set(rng, kind, n)
    return ProxRequest(f, C.project(rng.uniform(-3, 3, n)), rng.uniform(-4, 4, n), float(rng.uniform(0.05, 2)), C)


def check_prox_engine(cases, seed=0, inner_tol=1e-10):
    """Returns (worst closed-form vs generic gap, worst infeasibility, worst certificate)."""
    from eqsplit.prox import prox_step

    rng = np.random.default_rng(seed)
    gap = infeas = cert = 0.0
    for i in range(cases):
        req = random_prox_request(rng)
        a = prox_step(req, method="closed-form", seed=i)
        b = prox_step(req, method="generic", inner_tol=inner_tol, seed=i)
        gap = max(gap, float(np.linalg.norm(a.y - b.y)))
        infeas = max(infeas, req.set.distance(a.y), req.set.distance(b.y))
        cert = max(cert, a.certificate, b.certificate)
    return gap, infeas, cert
