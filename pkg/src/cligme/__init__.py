"""Convexly constrained LiGME: enhanced sparse least squares under hard convex constraints."""

from .gme import (
    ConvexityCertificate,
    GmeRegularizer,
    check_overall_convexity,
    complete_to_nonsingular,
    design_B_multi,
    design_B_theta,
    eval_gme_penalty,
)
from .linop import LinearMap, as_linear_map, direct_sum, identity, operator_norm, stack, to_dense, zero
from .prox import Box, EqualOnIndices, L1Norm, ProductConstraint, SeparableSum, WholeSpace
from .solver import (
    CLigmeProblem,
    SolveReport,
    SolverParams,
    SolverState,
    compute_step_sizes,
    objective,
    p_norm,
    solve,
    t_cligme_step,
    verify_step_condition,
)

__version__ = "0.1.0"
