"""Tube-based robust output-feedback MPC for linear systems with bounded
process and measurement noise.

Offline, the toolkit turns a constrained plant model into a controller
artifact: stabilizing gains, an RPI tube cross-section for the coupled
estimation/deviation error, tightened constraints, and terminal ingredients.
Online, a sparse QP plans over the noise-free model while tube feedback keeps
the true state inside a moving tube around the plan.
"""

from .errors import (DimensionError, DisturbanceTooLarge, EmptySetError,
                     ExhaustedIterations, InvariantViolation, MpcInfeasible,
                     NonBoxSet, NonConvergence, ProblemFormatError, RpiFailure,
                     SolverFailure, StabilityError, TubeMpcError)
from .geometry import (HPolytope, MappedSet, bounding_box, cross_product,
                       intersect, is_subset, pontryagin_diff,
                       remove_redundancy, scale, support)
from .lti import (GainSet, LtiSystem, controllability_rank, dare_residual,
                  lqr_gain, observability_rank, observer_gain, solve_dare,
                  spectral_radius, state_cost_from_output_weight)
from .rpi import (ErrorSystem, RpiCertificate, RpiResult, compute_rpi,
                  container_recursion, container_set, decay_steps,
                  face_matrix, find_min_k, polygon_faces,
                  smallest_rpi_offsets, verify_rpi)
from .controller import (ControllerArtifact, ControllerState, MpcSolution,
                         PlantModel, SynthesisConfig, build_error_system,
                         build_qp, concretize_delta, control_law,
                         nominal_update, observer_update, solve_mpc,
                         synthesize, terminal_set, tighten)
from .simulate import (SimConfig, TrajectoryLog, audit, feasible_region_scan,
                       fit_geometric_decay, run_closed_loop, sample_from_box)
from .problem_io import load_problem, plant_from_problem, config_from_problem
from .demo import (DEMO_PROBLEMS, double_integrator, scalar_chain,
                   shipped_problem_path, wind_surrogate, write_shipped_problems)

__version__ = "0.1.0"

__all__ = [
    "TubeMpcError", "DimensionError", "EmptySetError", "SolverFailure",
    "NonConvergence", "StabilityError", "DisturbanceTooLarge",
    "InvariantViolation", "MpcInfeasible", "RpiFailure", "NonBoxSet",
    "ExhaustedIterations", "ProblemFormatError",
    "HPolytope", "MappedSet", "support", "pontryagin_diff", "is_subset",
    "intersect", "remove_redundancy", "scale", "cross_product", "bounding_box",
    "LtiSystem", "GainSet", "spectral_radius", "controllability_rank",
    "observability_rank", "dare_residual", "solve_dare", "lqr_gain",
    "observer_gain", "state_cost_from_output_weight",
    "ErrorSystem", "RpiResult", "RpiCertificate", "face_matrix",
    "smallest_rpi_offsets", "compute_rpi", "find_min_k", "decay_steps",
    "container_set", "container_recursion", "polygon_faces", "verify_rpi",
    "PlantModel", "SynthesisConfig", "ControllerState", "ControllerArtifact",
    "MpcSolution", "build_error_system", "concretize_delta", "tighten",
    "terminal_set", "build_qp", "solve_mpc", "control_law", "observer_update",
    "nominal_update", "synthesize",
    "SimConfig", "TrajectoryLog", "sample_from_box", "run_closed_loop",
    "audit", "feasible_region_scan", "fit_geometric_decay",
    "load_problem", "plant_from_problem", "config_from_problem",
    "DEMO_PROBLEMS", "scalar_chain", "double_integrator", "wind_surrogate",
    "shipped_problem_path", "write_shipped_problems",
    "__version__",
]
