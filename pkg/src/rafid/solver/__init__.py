"""Master-problem compilation, conic solver, and model evaluation."""

from .admm import ConeBlock, ConicResult, solve_conic
from .compile import (
    ConicProblem,
    coefficients,
    compile_problem,
    default_lambda2,
    fit,
    prune,
    solve,
)
from .constraints import (
    Bibo,
    ConstraintSet,
    DcBound,
    DcEqual,
    FreqMask,
    L1Tail,
    Monotone,
    RelativeDegree,
    Settling,
    StepTail,
    TimeBox,
    WindowRMS,
)
from .model import RafModel, budgets, dc_gain, frequency_response, simulate

__all__ = [
    "Bibo", "ConeBlock", "ConicProblem", "ConicResult", "ConstraintSet", "DcBound", "DcEqual",
    "FreqMask", "L1Tail", "Monotone", "RafModel", "RelativeDegree", "Settling", "StepTail",
    "TimeBox", "WindowRMS", "budgets", "coefficients", "compile_problem", "dc_gain", "default_lambda2", "fit",
    "frequency_response", "prune", "simulate", "solve", "solve_conic",
]
