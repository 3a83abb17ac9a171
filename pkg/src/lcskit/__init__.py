"""Finite-time Lyapunov exponents and variational LCS in two dimensions."""
from ._backend import BACKEND
from .deformation import (DeformationField, SvdPoint, cauchy_green, deformation_field,
                          ftle_backward_from_forward, ftle_forward, svd2)
from .dynamics import (IntegratorParams, SaddleParams, VelocityField, integrate_trajectory,
                       linear_saddle, make_field, nonlinear_saddle, rigid_rotation_sphere)
from .flowmap import (FlowMapGrid, Grid2, advect_grid, deformation_gradient_fd,
                      deformation_gradient_grid, metric_jacobians)
from .geometry import EuclideanChart, SphereChart, gramian, make_chart, metric_representation, modulus
from .lcs import (ConstantDirection, DirectionField, MaterialCurve, ScalarField,
                  classify_variational, generalized_extrema, integrate_line_field)

__version__ = "0.1.0"

__all__ = [
    "BACKEND", "ConstantDirection", "DeformationField", "DirectionField", "EuclideanChart",
    "FlowMapGrid", "Grid2", "IntegratorParams", "MaterialCurve", "SaddleParams", "ScalarField",
    "SphereChart", "SvdPoint", "VelocityField", "advect_grid", "cauchy_green",
    "classify_variational", "deformation_field", "deformation_gradient_fd",
    "deformation_gradient_grid", "ftle_backward_from_forward", "ftle_forward",
    "generalized_extrema", "gramian", "integrate_line_field", "integrate_trajectory",
    "linear_saddle", "make_chart", "make_field", "metric_jacobians", "metric_representation",
    "modulus", "nonlinear_saddle", "rigid_rotation_sphere", "svd2",
]
