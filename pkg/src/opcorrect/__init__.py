"""Low-rank, condition-aware correction of misspecified linear models."""

from .estimator import LowRankCorrection
from .exceptions import ContractViolation, GeometryDegenerate, SingularOperator, ZeroGradient
from .frank_wolfe import SolveResult, SolverConfig, solve
from .objective import CorrectionProblem, ObservationSelector, TrainingSet

__all__ = [
    "ContractViolation",
    "CorrectionProblem",
    "GeometryDegenerate",
    "LowRankCorrection",
    "ObservationSelector",
    "SingularOperator",
    "SolveResult",
    "SolverConfig",
    "TrainingSet",
    "ZeroGradient",
    "solve",
]

__version__ = "0.1.0"
