"""Dynamic string-averaging projections and their superiorized version.

Feasibility seeking for finite intersections of closed convex sets in R^J,
objective-reducing perturbations along negative unit subgradients, and
diagnostics for (strict) Fejer monotonicity of the resulting sequences.
"""
from .errors import (
    ConfigurationError,
    InputError,
    InvalidAmalgamatorError,
    InvalidSetError,
    ObjectiveError,
    SuperDSAPError,
    TraceError,
)
from .geometry import (
    Ball,
    Box,
    ConstraintFamily,
    ConvexSet,
    Halfspace,
    Hyperplane,
    contains,
    distance,
    max_violation,
    project,
)
from .strings import (
    Amalgamator,
    MStarParams,
    PlanSchedule,
    apply_amalgamator,
    apply_string,
    cimmino_plan,
    kaczmarz_plan,
    validate_fit,
    validate_m_star,
)
from .feasibility import (
    PerturbationSchedule,
    StopRule,
    Trace,
    TraceRecord,
    dsap_step,
    random_unit_directions,
    run_dsap,
    run_perturbed_dsap,
)
from .superiorize import (
    AnalysisConstants,
    BetaSchedule,
    CustomObjective,
    InnerLoopPlan,
    LinearObjective,
    MaxLinearObjective,
    Objective,
    OneNormObjective,
    QuadraticObjective,
    make_beta_schedule,
    negative_unit_subgradient,
    run_superiorized_dsap,
    superiorized_inner_loop,
)
from .diagnostics import (
    FejerReport,
    ReferencePoint,
    check_fejer,
    dichotomy_report,
    fit_c0,
    superiority_gap,
)
from .problems import ProblemSpec, gen_box_corner, gen_consistent_halfspaces, oracle_minimize

__version__ = "0.1.0"
