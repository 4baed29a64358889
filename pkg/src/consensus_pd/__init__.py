"""Distributed primal-dual consensus optimization with inequality constraints.

Agents on an undirected network each hold a scalar cost and local
inequality constraints.  Every agent runs a primal-dual gradient step
corrected by a consensus term and an integral state ``z``, and all copies
converge to the constrained optimum.  The package provides the iteration,
an exact KKT oracle for quadratic/affine instances, the Lyapunov-based
stability certificate with its stepsize bound, and an experiment harness.
"""

from .algorithm import (
    CSV_COLUMNS,
    AlgorithmState,
    CoreState,
    OptimalEquilibrium,
    TrajectoryRecord,
    compute_optimal_equilibrium,
    distance_to_optimal_set,
    fit_linear_rate,
    from_core,
    perturbation_signals,
    run,
    step_centralized,
    step_core,
    step_distributed,
    to_core,
)
from .analysis import (
    Certificate,
    ConstantsLedger,
    InitBox,
    RateCertificate,
    V_net,
    V_opt,
    V_total,
    assemble_ledger,
    compute_kappa0,
    estimate_problem_constants,
    monitor_descent,
    rate_certificate,
)
from .exceptions import (
    AssumptionViolation,
    CertificateRefused,
    ComplementarityError,
    ConnectivityError,
    ConsistencyError,
    DegenerateProblemError,
    InfeasibleProblemError,
    LedgerError,
    NumericOverflowError,
    ShapeError,
    StabilityError,
)
from .network import Network, build_dispersion_basis, build_weight_matrix, solve_discrete_lyapunov
from .problem import (
    AgentProblem,
    ConstrainedProblem,
    KktPoint,
    QuadraticAgentProblem,
    classify_constraints,
    grid_bisection_minimizer,
    kkt_residual,
    lagrangian_gradient,
    solve_kkt_oracle,
    squared_distance_agent,
)

__version__ = "0.1.0"
