import math

import numpy as np
import pytest

from eqsplit.geometry import (
    Ball,
    Box,
    Halfspace,
    Product,
    Simplex,
    WholeSpace,
    as_vector,
    inner,
    norm,
    product,
    three_point_identity_residual,
)
from properties import (
    check_projection_axioms,
    check_three_point_identity,
    projection_violations,
    random_point,
    random_set,
)


def simplex_projection_bisection(x, scale):
    """Independent oracle: find theta with sum(max(x - theta, 0)) = scale by bisection."""
    lo, hi = x.min() - scale, x.max()
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if np.maximum(x - mid, 0).sum() > scale:
            lo = mid
        else:
            hi = mid
    return np.maximum(x - 0.5 * (lo + hi), 0)


class TestVectors:
    def test_as_vector_rejects_bad_input(self):
        with pytest.raises(ValueError):
            as_vector([[1.0, 2.0]])
        with pytest.raises(ValueError):
            as_vector([1.0, math.nan])
        with pytest.raises(ValueError, match="has dimension 2, expected 3"):
            as_vector([1.0, 2.0], dim=3)

    def test_inner_and_norm(self):
        assert inner([1, 2, 3], [4, 5, 6]) == 32.0
        assert norm([3, 4]) == 5.0
        with pytest.raises(ValueError, match="dimension mismatch"):
            inner([1, 2], [1, 2, 3])

    def test_three_point_identity_examples(self):
        # gamma = 1/2, x = 0, y = 2e1, z = e2: both sides equal 2
        r = three_point_identity_residual([0, 0], [2, 0], [0, 1], 0.5)
        assert abs(r) <= 1e-15
        assert abs(three_point_identity_residual([1, 2], [-3, 5], [0.5, 0.5], 0.0)) <= 1e-12
        assert abs(three_point_identity_residual([1, 2], [-3, 5], [0.5, 0.5], 1.0)) <= 1e-12

    def test_three_point_identity_random(self):
        assert check_three_point_identity(300, seed=1) <= 1e-12


class TestProjections:
    def test_box_clips(self):
        B = Box([0, 0], [1, 2])
        np.testing.assert_array_equal(B.project(np.array([-1.0, 3.0])), [0.0, 2.0])
        np.testing.assert_array_equal(B.project(np.array([0.5, 1.0])), [0.5, 1.0])

    def test_ball_scales_towards_center(self):
        B = Ball([0, 0], 1)
        np.testing.assert_allclose(B.project(np.array([3.0, 4.0])), [0.6, 0.8], rtol=0, atol=1e-15)

    def test_halfspace_projection(self):
        H = Halfspace([1, 1], 4)
        np.testing.assert_allclose(H.project(np.array([3.0, 3.0])), [2.0, 2.0], atol=1e-15)
        # unnormalised normal gives the same set and projection
        H2 = Halfspace([2, 2], 8)
        np.testing.assert_allclose(H2.project(np.array([3.0, 3.0])), [2.0, 2.0], atol=1e-15)

    def test_simplex_examples(self):
        S = Simplex(1.0, 3)
        np.testing.assert_allclose(S.project(np.array([1.0, 1.0, 1.0])), [1 / 3] * 3, atol=1e-15)
        np.testing.assert_allclose(S.project(np.array([2.0, 0.0, 0.0])), [1.0, 0.0, 0.0], atol=1e-15)

    def test_simplex_against_bisection_oracle(self):
        rng = np.random.default_rng(3)
        for _ in range(200):
            n = int(rng.integers(1, 10))
            scale = rng.uniform(0.1, 5)
            x = rng.normal(0, 3, n)
            np.testing.assert_allclose(
                Simplex(scale, n).project(x), simplex_projection_bisection(x, scale), atol=1e-12
            )

    def test_product_projects_blockwise(self):
        P = product(Box([0], [1]), Ball([0, 0], 1))
        assert P.dim == 3
        assert [s.start for s in P.slices] == [0, 1]
        np.testing.assert_allclose(P.project(np.array([2.0, 0.0, 3.0])), [1.0, 0.0, 1.0])
        assert product([Box([0], [1])]).dim == 1

    def test_whole_space_is_identity(self):
        W = WholeSpace(2)
        x = np.array([1e9, -3.0])
        assert W.project(x) is x
        assert W.distance(x) == 0.0
        assert W.bounding_box() is None

    def test_dimension_mismatch(self):
        for S in (Box([0, 0], [1, 1]), Ball([0, 0], 1), Halfspace([1, 0], 0), Simplex(1, 2), WholeSpace(2)):
            with pytest.raises(ValueError, match="dimension mismatch"):
                S.project(np.zeros(3))

    @pytest.mark.parametrize(
        "make",
        [
            lambda: Box([1], [0]),
            lambda: Ball([0], 0),
            lambda: Halfspace([0, 0], 1),
            lambda: Simplex(0, 2),
            lambda: Product(()),
        ],
    )
    def test_invalid_sets(self, make):
        with pytest.raises(ValueError):
            make()

    def test_axioms_hold_per_kind(self):
        rng = np.random.default_rng(11)
        for kind in ("box", "ball", "halfspace", "simplex", "product", "whole"):
            for _ in range(50):
                S = random_set(rng, kind)
                n = S.dim
                s = S.project(random_point(rng, n))
                idem, firm, var = projection_violations(S, random_point(rng, n), random_point(rng, n), s)
                assert idem <= 1e-12 and firm <= 1e-12 and var <= 1e-12, kind

    def test_axioms_random_mix(self):
        idem, firm, var = check_projection_axioms(300, seed=2)
        assert max(idem, firm, var) <= 1e-12


class TestMembershipAndSampling:
    def test_contains_is_relative(self):
        B = Box([0], [1])
        assert B.contains(np.array([1.0 + 1e-13]))
        assert not B.contains(np.array([1.0 + 1e-6]))

    def test_bounding_boxes(self):
        assert Ball([1, 1], 2).bounding_box().lo.tolist() == [-1, -1]
        assert Halfspace([1, 0], 0).bounding_box() is None
        assert Box([0, -np.inf], [1, 1]).bounding_box() is None
        assert Simplex(2, 3).bounding_box().hi.tolist() == [2, 2, 2]

    def test_samples_are_members(self):
        rng = np.random.default_rng(0)
        for S in (Ball([0, 0], 1), Simplex(1, 4), Box([0, 0], [1, 1])):
            pts = S.sample(rng, 50)
            assert pts.shape == (50, S.dim)
            assert all(S.contains(p) for p in pts)

    def test_unbounded_sampling_needs_box(self):
        H = Halfspace([1, 0], 0)
        with pytest.raises(ValueError, match="unbounded"):
            H.sample(np.random.default_rng(0), 5)
        pts = H.sample(np.random.default_rng(0), 5, Box([-1, -1], [1, 1]))
        assert np.all(pts[:, 0] <= 1e-15)

    def test_arrays_are_read_only(self):
        B = Box([0, 0], [1, 1])
        with pytest.raises(ValueError):
            B.lo[0] = 5
