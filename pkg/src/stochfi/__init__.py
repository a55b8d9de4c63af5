"""Jump diffusions with a prescribed stochastic first integral.

Given ``u(t, x)``, build drift, diffusion and jump coefficients so that
``u(t, x(t))`` stays constant along every path, synthesize a program control
realising that drift, and check conservation by simulation.
"""

from .construct import (
    DegeneratePointError,
    IndependenceError,
    NearSingularError,
    SdeSystem,
    build_diffusion,
    build_drift,
    build_jump,
    construct_system,
    jump_map,
)
from .control import ControlledSystem, ProgramControl, SingularGainError, residual_report, synthesize
from .expr import ExprError, ExprSyntaxError, differentiate, evaluate, parse, simplify, to_string
from .integral import DegenerateIntegralError, FirstIntegral, FreeFamily, default_family, independence_check
from .linalg import SingularMatrixError, cofactor_row0, jacobian, ortho_complement, solve
from .sim import BlowUpError, ConservationStats, JumpDiffusionPath, MarkLaw, monte_carlo, simulate
from .verify import ConditionReport, Domain, check_conditions

__version__ = "0.1.0"

__all__ = [
    "BlowUpError",
    "ConditionReport",
    "ConservationStats",
    "ControlledSystem",
    "DegenerateIntegralError",
    "DegeneratePointError",
    "Domain",
    "ExprError",
    "ExprSyntaxError",
    "FirstIntegral",
    "FreeFamily",
    "IndependenceError",
    "JumpDiffusionPath",
    "MarkLaw",
    "NearSingularError",
    "ProgramControl",
    "SdeSystem",
    "SingularGainError",
    "SingularMatrixError",
    "build_diffusion",
    "build_drift",
    "build_jump",
    "check_conditions",
    "cofactor_row0",
    "construct_system",
    "default_family",
    "differentiate",
    "evaluate",
    "independence_check",
    "jacobian",
    "jump_map",
    "monte_carlo",
    "ortho_complement",
    "parse",
    "residual_report",
    "simplify",
    "simulate",
    "solve",
    "synthesize",
    "to_string",
]
