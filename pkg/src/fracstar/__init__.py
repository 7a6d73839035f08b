"""Fractional Sturm-Liouville diffusion on intervals and star graphs, with
adjoint-based boundary optimal control."""

from .control import (
    AdmissibleSet,
    CostConfig,
    EdgeControlProblem,
    OptimResult,
    cost_edge,
    cost_graph,
    gradient_edge,
    gradient_graph,
    optimize,
    project,
)
from .edge_solver import Trajectory, solve_adjoint_edge, solve_forward_edge
from .errors import CoefficientError, ConfigError, SizeGuardError, SolverFailure
from .fracops import (
    ConvWeights,
    SingularMode,
    TriangularConvOp,
    apply_left_integral,
    apply_right_integral,
    frac_integral_weights,
    left_integral_op,
    left_rl_derivative,
    right_caputo_apply,
    right_caputo_nodal,
    right_integral_op,
    singular_mode,
    trace_functional,
)
from .graph_solver import (
    GlobalDofMap,
    GraphSystem,
    GraphTrajectory,
    StarGraphProblem,
    assemble_graph_system,
    solve_adjoint_graph,
    solve_forward_graph,
)
from .grids import Grid1D, TimeGrid
from .sturm import EdgeCoefficients, EdgeOperator, assemble_stiffness, neumann_load

__all__ = [
    "AdmissibleSet",
    "ConfigError",
    "ConvWeights",
    "CoefficientError",
    "CostConfig",
    "EdgeCoefficients",
    "EdgeControlProblem",
    "EdgeOperator",
    "GlobalDofMap",
    "GraphSystem",
    "GraphTrajectory",
    "Grid1D",
    "OptimResult",
    "SingularMode",
    "SizeGuardError",
    "SolverFailure",
    "StarGraphProblem",
    "TimeGrid",
    "Trajectory",
    "TriangularConvOp",
    "apply_left_integral",
    "apply_right_integral",
    "assemble_graph_system",
    "assemble_stiffness",
    "cost_edge",
    "cost_graph",
    "frac_integral_weights",
    "gradient_edge",
    "gradient_graph",
    "left_integral_op",
    "left_rl_derivative",
    "neumann_load",
    "optimize",
    "project",
    "right_caputo_apply",
    "right_caputo_nodal",
    "right_integral_op",
    "singular_mode",
    "solve_adjoint_edge",
    "solve_adjoint_graph",
    "solve_forward_edge",
    "solve_forward_graph",
    "trace_functional",
]

__version__ = "0.1.0"
