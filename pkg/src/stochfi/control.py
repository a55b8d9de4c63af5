"""Program control keeping a controlled jump diffusion on ``u = const``.

The controlled system has drift ``P(t, x) + Q(t, x) s(t, x)``.  Its disturbance
reactions ``B`` and ``G`` are designed together with the control: a target
system conserving ``u`` is constructed and ``s`` solves ``Q s = A - P``.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .construct import SdeSystem, construct_system
from .expr import Expr, compile_vector, parse, to_string, variables_for
from .integral import FirstIntegral, FreeFamily
from .linalg import SingularMatrixError, solve

__all__ = [
    "ControlledSystem",
    "ProgramControl",
    "ResidualReport",
    "SingularGainError",
    "synthesize",
    "residual_report",
]


class SingularGainError(SingularMatrixError):
    def __init__(self, t: float, x, detail: str = ""):
        self.t = t
        self.x = np.asarray(x, dtype=float).tolist()
        super().__init__(f"gain matrix Q is singular at t={t!r}, x={self.x}" + (f": {detail}" if detail else ""))


@dataclass(frozen=True, eq=False)
class ControlledSystem:
    """``dx = [P + Q s] dt + B dw + int G nu``; ``B``/``G`` are left to the synthesis."""

    n: int
    base_drift: Callable
    gain: Callable
    m: int = 1
    mark_space: tuple[float, float] = (0.0, 1.0)
    summary: dict = dataclasses.field(default_factory=dict)

    @classmethod
    def from_exprs(cls, n: int, P: Sequence, Q: Sequence[Sequence], m: int = 1, mark_space=(0.0, 1.0)) -> "ControlledSystem":
        names = [v for v in variables_for(n) if v != "gamma"]
        as_expr = lambda e: e if isinstance(e, Expr) else parse(str(e), names)  # noqa: E731
        P_e = [as_expr(e) for e in P]
        Q_e = [[as_expr(e) for e in row] for row in Q]
        if len(P_e) != n or len(Q_e) != n or any(len(r) != n for r in Q_e):
            raise ValueError(f"P needs {n} entries and Q must be {n}x{n}")
        p_f = compile_vector(P_e, n)
        q_f = compile_vector([e for row in Q_e for e in row], n)

        def base_drift(t, x):
            return np.array(p_f(t, x))

        def gain(t, x):
            return np.array(q_f(t, x)).reshape(n, n)

        summary = {"P": [to_string(e) for e in P_e], "Q": [[to_string(e) for e in r] for r in Q_e]}
        return cls(n, base_drift, gain, m, tuple(mark_space), summary)


class ProgramControl:
    """State feedback ``s(t, x) = Q^{-1} (A_target - P)``."""

    def __init__(self, cs: ControlledSystem, target: SdeSystem):
        self.cs = cs
        self.target = target

    def __call__(self, t: float, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        rhs = self.target.drift(t, x) - self.cs.base_drift(t, x)
        try:
            return solve(self.cs.gain(t, x), rhs)
        except SingularMatrixError as exc:
            raise SingularGainError(t, x, str(exc)) from None

    def closed_loop_drift(self, t: float, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        return self.cs.base_drift(t, x) + self.cs.gain(t, x) @ self(t, x)

    def closed_loop(self) -> SdeSystem:
        """The controlled system with this control and the designed reactions ``B``, ``G``."""
        summary = dict(self.target.summary)
        summary["control"] = dict(self.cs.summary)
        return dataclasses.replace(self.target, drift=self.closed_loop_drift, summary=summary)


def synthesize(
    cs: ControlledSystem,
    fi: FirstIntegral,
    diffusion_family: FreeFamily | None = None,
    jump_family: FreeFamily | None = None,
    points=None,
    **construct_kwargs,
) -> tuple[ProgramControl, SdeSystem]:
    """Construct the conserving target system and the control matching its drift.

    ``points`` (pairs ``(t, x)``) are screened for a singular gain; the first
    offending point raises :class:`SingularGainError`.
    """
    if cs.n != fi.n:
        raise ValueError(f"controlled system has n={cs.n}, first integral has n={fi.n}")
    target = construct_system(
        fi, diffusion_family, jump_family, m=cs.m, mark_space=cs.mark_space, **construct_kwargs
    )
    pc = ProgramControl(cs, target)
    for t, x in points or ():
        try:
            solve(cs.gain(t, np.asarray(x, dtype=float)), np.zeros(cs.n))
        except SingularMatrixError as exc:
            raise SingularGainError(t, x, str(exc)) from None
    return pc, target


@dataclass
class ResidualReport:
    points: list
    residuals: np.ndarray

    @property
    def max(self) -> float:
        return float(self.residuals.max()) if self.residuals.size else 0.0

    @property
    def argmax(self):
        return self.points[int(np.argmax(self.residuals))] if self.residuals.size else None

    def to_dict(self) -> dict:
        return {
            "n_points": len(self.points),
            "max_residual": self.max,
            "residuals": self.residuals.tolist(),
        }


def residual_report(pc, cs: ControlledSystem, points, target: SdeSystem | None = None) -> ResidualReport:
    """Per-point ``||P + Q s - A_target||_inf``.

    ``pc`` may be a :class:`ProgramControl` or any callable ``s(t, x)``; in the
    latter case ``target`` must be given.
    """
    target = target if target is not None else pc.target
    points = [(float(t), np.asarray(x, dtype=float)) for t, x in points]
    res = np.empty(len(points))
    for i, (t, x) in enumerate(points):
        s = np.asarray(pc(t, x), dtype=float)
        res[i] = np.max(np.abs(cs.base_drift(t, x) + cs.gain(t, x) @ s - target.drift(t, x)))
    return ResidualReport(points, res)
