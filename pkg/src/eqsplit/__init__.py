"""Splitting iteration for equilibrium problems over fixed point sets of nonexpansive maps."""

from .bifunctions import (
    Bifunction,
    QuadraticGame,
    SeparableQuadratic,
    SplitBifunction,
    nikaido_isoda,
    probe_monotonicity,
    separable_quadratic,
    vi_linear,
    zero_bifunction,
)
from .geometry import Ball, Box, ConvexSet, Halfspace, Product, Simplex, WholeSpace
from .maps import Averaged, Identity, LinearMonotone, Projection, Resolvent, SubdifferentialOfConvexQuadratic
from .problems import (
    ProblemInstance,
    build_cournot,
    build_inclusion_ep,
    build_intersection_ep,
    build_sep_game,
    check_instance,
    cournot_oracle,
)
from .prox import ProxRequest, prox_step
from .solver import SolverConfig, SolveResult, solve

__version__ = "0.1.0"

__all__ = [
    "Averaged",
    "Ball",
    "Bifunction",
    "Box",
    "ConvexSet",
    "Halfspace",
    "Identity",
    "LinearMonotone",
    "ProblemInstance",
    "Product",
    "Projection",
    "ProxRequest",
    "QuadraticGame",
    "Resolvent",
    "SeparableQuadratic",
    "Simplex",
    "SolveResult",
    "SolverConfig",
    "SplitBifunction",
    "SubdifferentialOfConvexQuadratic",
    "WholeSpace",
    "build_cournot",
    "build_inclusion_ep",
    "build_intersection_ep",
    "build_sep_game",
    "check_instance",
    "cournot_oracle",
    "nikaido_isoda",
    "probe_monotonicity",
    "prox_step",
    "separable_quadratic",
    "solve",
    "vi_linear",
    "zero_bifunction",
]
