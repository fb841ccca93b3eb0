import math

import numpy as np
import pytest

from eqsplit.bifunctions import Bifunction, potential_difference, separable_quadratic, vi_linear
from eqsplit.geometry import Ball, Box, Halfspace, Simplex, WholeSpace
from eqsplit.prox import (
    InnerSolveError,
    ProxError,
    ProxRequest,
    inner_solve,
    optimality_certificate,
    prox_step,
)
from properties import check_prox_engine


def test_request_validation():
    f = vi_linear(np.eye(2))
    with pytest.raises(ValueError, match="lam must be positive"):
        ProxRequest(f, np.zeros(2), np.zeros(2), 0.0, Box.uniform(0, 1, 2))
    with pytest.raises(ValueError, match="must match set dimension"):
        ProxRequest(f, np.zeros(3), np.zeros(2), 1.0, Box.uniform(0, 1, 2))


def test_unconstrained_affine_vi_step():
    # argmin lam <Mx+q, y> + 0.5||y - a||^2 = a - lam (M x + q)
    M, q = np.array([[2.0, 1.0], [0.0, 1.0]]), np.array([1.0, -1.0])
    x, a = np.array([1.0, 2.0]), np.array([0.5, 0.5])
    res = prox_step(ProxRequest(vi_linear(M, q), x, a, 0.3, WholeSpace(2)))
    np.testing.assert_allclose(res.y, a - 0.3 * (M @ x + q), atol=1e-15)
    assert res.method == "closed-form"
    assert res.certificate <= 1e-12


def test_generic_path_for_a_ball_with_nonuniform_curvature():
    f = separable_quadratic([1.0, 4.0], np.zeros((2, 2)), [-3.0, -3.0])
    req = ProxRequest(f, np.zeros(2), np.zeros(2), 1.0, Ball([0, 0], 1))
    res = prox_step(req)
    assert res.method == "generic" and res.iterations > 0
    assert req.set.contains(res.y, 1e-10)
    assert res.certificate <= 1e-10
    # KKT by hand: y = 3/(1 + q_i + mu) on the circle, mu found by bisection
    lo, hi = 0.0, 10.0
    for _ in range(200):
        mu = 0.5 * (lo + hi)
        y = 3.0 / (np.array([2.0, 5.0]) + mu)
        lo, hi = (mu, hi) if y @ y > 1 else (lo, mu)
    np.testing.assert_allclose(res.y, y, atol=1e-8)


def test_forced_methods():
    f = separable_quadratic([1.0, 4.0], np.zeros((2, 2)))
    req = ProxRequest(f, np.zeros(2), np.ones(2), 1.0, Ball([0, 0], 1))
    with pytest.raises(ValueError, match="no closed-form prox"):
        prox_step(req, method="closed-form")
    with pytest.raises(ValueError, match="unknown prox method"):
        prox_step(req, method="newton")
    box_req = ProxRequest(f, np.zeros(2), np.ones(2), 1.0, Box.uniform(0, 1, 2))
    assert prox_step(box_req, method="generic").method == "generic"


def test_uncertified_result_is_nan():
    req = ProxRequest(vi_linear(np.eye(1)), np.zeros(1), np.ones(1), 1.0, Box([0], [1]))
    assert math.isnan(prox_step(req, certify=False).certificate)


def test_backtracking_when_lipschitz_unknown():
    phi = lambda v: float(np.sum(v**4))  # noqa: E731
    f = potential_difference(phi, lambda v: 4 * v**3)
    req = ProxRequest(f, np.zeros(2), np.array([2.0, -1.0]), 0.5, Box.uniform(-1, 1, 2))
    res = prox_step(req)
    # 1-D optimality 2 y^3 + y - a = 0 on [-1, 1]
    for yi, ai in zip(res.y, [2.0, -1.0]):
        grid = np.linspace(-1, 1, 200001)
        assert abs(yi - grid[np.argmin(0.5 * grid**4 + 0.5 * (grid - ai) ** 2)]) <= 2e-5


def test_nonsmooth_subgradient_path():
    f = Bifunction(
        lambda x, y: float(np.abs(y).sum() - np.abs(x).sum()),
        lambda x, y: np.sign(y),
        smooth=False,
    )
    req = ProxRequest(f, np.zeros(1), np.array([3.0]), 1.0, Box([-5], [5]))
    res = prox_step(req, inner_tol=1e-6, inner_max_iters=200000)
    # soft thresholding: 3 - 1 = 2
    assert abs(res.y[0] - 2.0) <= 1e-2


def test_prox_error_carries_best_iterate():
    f = separable_quadratic([1.0, 400.0], np.zeros((2, 2)), [-3.0, 3.0])
    req = ProxRequest(f, np.zeros(2), np.zeros(2), 1.0, Ball([0, 0], 1))
    with pytest.raises(ProxError) as info:
        prox_step(req, inner_max_iters=2)
    assert info.value.best.shape == (2,)
    assert info.value.iterations == 2
    assert "certificate" in str(info.value)


def test_inner_solve_contract():
    with pytest.raises(ValueError, match="inner_tol"):
        inner_solve(lambda y: y, Box([0], [1]), [0.5], lipschitz=1.0, inner_tol=0)
    with pytest.raises(ValueError, match="objective value"):
        inner_solve(lambda y: y, Box([0], [1]), [0.5])
    with pytest.raises(InnerSolveError):
        inner_solve(lambda y: y - 10, Halfspace([1.0], 100.0), [0.0], lipschitz=1e6, inner_max_iters=3)


def test_certificate_flags_a_wrong_point():
    req = ProxRequest(vi_linear(np.eye(2)), np.zeros(2), np.array([0.2, 0.3]), 1.0, Simplex(1.0, 2))
    good = prox_step(req).y
    assert optimality_certificate(req, good) <= 1e-12
    assert optimality_certificate(req, np.array([1.0, 0.0])) > 0.1


def test_closed_form_and_generic_agree_on_random_requests():
    gap, infeas, cert = check_prox_engine(200, seed=9)
    assert gap <= 1e-9 and infeas <= 1e-10 and cert <= 1e-10
