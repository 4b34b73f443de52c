"""Continuous-logic workbench for finite-dimensional C*-algebras."""

from .algebra import (Element, FiniteDimAlgebra, Subspace, dist, dist_to_subspace, norm,
                      random_ball_element, retract_to_ball)
from .errors import FdcstarError
from .evaluator import EvalResult, check_condition, eval_qf, evaluate
from .formula import Condition, TypeSchema, free_vars, parse, to_text
from .kernels import BACKEND
from .search import OptConfig

__version__ = "0.1.0"

__all__ = [
    "BACKEND", "Condition", "Element", "EvalResult", "FdcstarError", "FiniteDimAlgebra",
    "OptConfig", "Subspace", "TypeSchema", "check_condition", "dist", "dist_to_subspace",
    "eval_qf", "evaluate", "free_vars", "norm", "parse", "random_ball_element",
    "retract_to_ball", "to_text",
]
