"""Distributed inertial proximal conjugate-gradient Halpern methods for
minimizing a sum of agent objectives over the intersection of the agents'
fixed-point sets."""

from dapcg.benchmarks import (
    BUILTINS,
    Example1Config,
    Example2Config,
    ablation_theta,
    build_example1,
    build_example2,
    default_params,
    make_instance,
    random_spd,
)
from dapcg.diagnostics import Certificate, ConvergenceReport, IterationTrace, certify, reference_oracle
from dapcg.io import load_problem, problem_from_dict, problem_to_dict, save_problem
from dapcg.operators import (
    FixedPointMap,
    HalfSpace,
    QuadraticTerm,
    averaged_projection_map,
    check_firmly_nonexpansive,
    gram_resolvent_map,
    hinge_prox_map,
    identity_map,
    project_ball,
    project_halfspace,
    project_polyhedron,
    prox_hinge_abs,
    prox_quadratic,
    resolvent_gram,
)
from dapcg.problem import (
    AgentSpec,
    Ball,
    Indicator,
    Polyhedron,
    Problem,
    SquaredDistance,
    ZeroTerm,
    feasibility_gap,
    objective,
)
from dapcg.schedules import (
    ScheduleError,
    ScheduleParams,
    ScheduleSet,
    build_schedules,
    fitted_params,
    validate_condition1,
)
from dapcg.solvers import DivergenceError, SolverConfig, SolverState, run

__version__ = "0.1.0"
