"""Model-based Newton iteration with least-norm quadratic model updates."""

__version__ = "0.1.0"

from .exceptions import (  # noqa: E402
    ConfigError,
    DegenerateGeometryError,
    EvaluationError,
    InitializationError,
    NumericalFailureError,
    QmnewtError,
    UpdateRejectedError,
    WindowRangeError,
)
from .estimator import ModelNewtonMinimizer  # noqa: E402
from .problems import Problem, get_problem, initial_guess  # noqa: E402
from .solver import RunReport, SolverConfig, run  # noqa: E402
from .state import ModelState, QuadraticModel  # noqa: E402

__all__ = [
    "ConfigError",
    "DegenerateGeometryError",
    "EvaluationError",
    "InitializationError",
    "NumericalFailureError",
    "QmnewtError",
    "UpdateRejectedError",
    "WindowRangeError",
    "ModelNewtonMinimizer",
    "Problem",
    "get_problem",
    "initial_guess",
    "RunReport",
    "SolverConfig",
    "run",
    "ModelState",
    "QuadraticModel",
    "__version__",
]
