"""Barrier subsolutions and a monotone finite-difference solver for degenerate Monge-Ampere problems."""
from .analysis import HolderFit, InteriorBounds, holder_exponent_fit, interior_bounds, refinement_study
from .barrier import (BarrierParams, PerronEnvelope, SubsolutionReport, barrier_constants, build_barrier,
                      det_D2W, eval_W, eval_W_derivs, perron_lower_envelope, verify_subsolution)
from .domain import (BoundaryFrame, ConvexDomain, Disk, Ellipse, Membership, Polygon, boundary_frame,
                     contains, diameter, disk, distance_to_boundary, ellipse, polygon, unit_square)
from .errors import *  # noqa: F401,F403
from .grid import (Grid, GridFunction, build_grid, convexity_defect, gradient, hessian_2x2, ma_operator,
                   second_differences)
from .rhs import Constant, Paraboloid, RhsSpec, StructureReport, check_structure, eval_f
from .solver import (CrosscheckResult, SolveConfig, SolveReport, check_comparison, euler_step,
                     global_bounds, interior_negativity_bound, regularized_rhs, solve, uniqueness_crosscheck)

__version__ = "0.1.0"
