"""Primal-dual flows on the proximal augmented Lagrangian.

Solves ``min f(x) + phi(Tx)  s.t.  g(x) <= 0, h(x) = 0`` by integrating a
continuous-time saddle-point flow whose inequality multipliers stay
positive without any projection.
"""
from palflow.dynamics import (
    DynamicsParams,
    PrimalDualState,
    lyapunov_value,
    pal_value,
    vector_field,
)
from palflow.engine import (
    IntegratorConfig,
    Method,
    StopReason,
    continuation,
    estimate_rate,
    integrate,
    solve,
)
from palflow.errors import (
    ContractError,
    EstimationError,
    IntegrationError,
    PalflowError,
    ParameterError,
    ProblemFileError,
)
from palflow.io import load_problem_file, parse_problem_file
from palflow.network import (
    Graph,
    NetworkSpec,
    NetworkState,
    distributed_field,
    simulate,
)
from palflow.problem import KktPoint, ProblemSpec, affine, kkt_residual, quadratic
from palflow.prox import ProxFunction, ProxKind, moreau_grad, moreau_value, prox
from palflow.problems import list_problems

__version__ = "0.1.0"

__all__ = [
    "ContractError", "DynamicsParams", "EstimationError", "Graph", "IntegrationError",
    "IntegratorConfig", "KktPoint", "Method", "NetworkSpec", "NetworkState", "PalflowError",
    "ParameterError", "PrimalDualState", "ProblemFileError", "ProblemSpec", "ProxFunction",
    "ProxKind", "StopReason", "affine", "continuation", "distributed_field", "estimate_rate",
    "integrate", "kkt_residual", "list_problems", "load_problem_file", "lyapunov_value",
    "moreau_grad", "moreau_value", "pal_value", "parse_problem_file", "prox", "quadratic",
    "simulate", "solve", "vector_field",
]
