"""A-stable time discretizations and discrete maximal regularity experiments."""

from .methods import (
    backward_euler,
    bdf_coefficients,
    check_a_stability,
    crank_nicolson,
    gauss_tableau,
    lmm_from_coefficients,
    parse_method,
    radau_iia_tableau,
)
from .regularity import NormSpec, RegularityEstimate, lp_lq_norm, solution_map_norm, uniformity_scan
from .spatial import DiscreteOperator, laplacian, laplacian_1d, laplacian_2d

__all__ = [
    "DiscreteOperator",
    "NormSpec",
    "RegularityEstimate",
    "backward_euler",
    "bdf_coefficients",
    "check_a_stability",
    "crank_nicolson",
    "gauss_tableau",
    "laplacian",
    "laplacian_1d",
    "laplacian_2d",
    "lmm_from_coefficients",
    "lp_lq_norm",
    "parse_method",
    "radau_iia_tableau",
    "solution_map_norm",
    "uniformity_scan",
]
