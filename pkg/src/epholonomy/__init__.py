"""Parallel transport, metrics and holonomy around exceptional points."""
from .errors import (
    AtExceptionalPoint,
    EPHolonomyError,
    NearDegenerate,
    NotDiagonalizedByS,
    PathThroughEP,
    PositivityLost,
    StepTooCoarse,
)
from .generators import ClosedFormField, GeneratorPair, SolvedField, assemble_K, solve_generator_pair
from .metric import evolve_metric, joint_transport, norm_along_path
from .model import MODEL, BasePoint, TwoLevelEPModel
from .transport import classify_holonomy, compose, integrate_transport, lambda_trace, transport_state

__version__ = "0.1.0"

__all__ = [
    "AtExceptionalPoint",
    "BasePoint",
    "ClosedFormField",
    "EPHolonomyError",
    "GeneratorPair",
    "MODEL",
    "NearDegenerate",
    "NotDiagonalizedByS",
    "PathThroughEP",
    "PositivityLost",
    "SolvedField",
    "StepTooCoarse",
    "TwoLevelEPModel",
    "assemble_K",
    "classify_holonomy",
    "compose",
    "evolve_metric",
    "integrate_transport",
    "joint_transport",
    "lambda_trace",
    "norm_along_path",
    "solve_generator_pair",
    "transport_state",
]
