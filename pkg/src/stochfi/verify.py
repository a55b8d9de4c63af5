"""Numerical check of the three conditions making ``u`` a first integral.

* wiener: ``sum_i b_ik du/dx_i = 0`` for every column ``k``;
* drift: ``du/dt + sum_i du/dx_i (a_i - 1/2 sum_k sum_j b_jk d b_ik/dx_j) = 0``;
* jump: ``u(t, x) - u(t, x + G(t, x, gamma)) = 0`` for every mark.

The first two residuals are divided by ``1 + |generalized gradient|``, the
jump residual by ``1 + |u|``.  Points come from a scrambled Halton sequence so
runs are reproducible.
"""

from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.stats import qmc

from .construct import SdeSystem
from .integral import FirstIntegral

__all__ = [
    "Domain",
    "ConditionResult",
    "ConditionReport",
    "check_conditions",
    "residuals_at",
    "residuals_at_jump",
    "sample_points",
    "CONDITIONS",
]

CONDITIONS = ("wiener", "drift", "jump")

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class Domain:
    """Box ``t_range x prod(x_ranges)``."""

    t_range: tuple[float, float]
    x_ranges: tuple[tuple[float, float], ...]

    @classmethod
    def box(cls, t_range, *x_ranges) -> "Domain":
        return cls(tuple(map(float, t_range)), tuple(tuple(map(float, r)) for r in x_ranges))

    @property
    def n(self) -> int:
        return len(self.x_ranges)

    def to_dict(self) -> dict:
        return {"t": list(self.t_range), "x": [list(r) for r in self.x_ranges]}


def sample_points(domain: Domain, n_samples: int, mark_range=None, seed: int = 0) -> np.ndarray:
    """Quasi-random rows ``(t, x1..xn[, gamma])`` covering the box."""
    lows = [domain.t_range[0], *(r[0] for r in domain.x_ranges)]
    highs = [domain.t_range[1], *(r[1] for r in domain.x_ranges)]
    if mark_range is not None:
        lows.append(mark_range[0])
        highs.append(mark_range[1])
    lows = np.array(lows, dtype=float)
    highs = np.array(highs, dtype=float)
    u = qmc.Halton(d=lows.size, scramble=True, seed=seed).random(n_samples)
    return lows + u * (highs - lows)


@dataclass
class ConditionResult:
    name: str
    max_residual: float
    argmax: list | None
    n_samples: int
    n_errors: int
    tol: float

    @property
    def passed(self) -> bool:
        return bool(self.n_samples > self.n_errors and self.max_residual <= self.tol)

    def to_dict(self) -> dict:
        return {
            "max_residual": float(self.max_residual),
            "argmax": self.argmax,
            "n_samples": self.n_samples,
            "n_errors": self.n_errors,
            "tol": self.tol,
            "passed": self.passed,
        }


@dataclass
class ConditionReport:
    results: dict = field(default_factory=dict)

    def __getitem__(self, name: str) -> ConditionResult:
        return self.results[name]

    @property
    def passed(self) -> bool:
        return bool(all(r.passed for r in self.results.values()))

    @property
    def warnings(self) -> int:
        return sum(r.n_errors for r in self.results.values())

    def to_dict(self) -> dict:
        return {"passed": self.passed, "conditions": {k: v.to_dict() for k, v in self.results.items()}}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)

    def __str__(self) -> str:
        lines = []
        for name, r in self.results.items():
            flag = "ok  " if r.passed else "FAIL"
            lines.append(f"{flag} {name:7s} max residual {r.max_residual:.3e} (tol {r.tol:.1e}, {r.n_samples} points, {r.n_errors} errors)")
        return "\n".join(lines)


def residuals_at(sys: SdeSystem, fi: FirstIntegral, t: float, x) -> dict:
    """Normalized wiener and drift residuals at one point."""
    x = np.asarray(x, dtype=float)
    gg = fi.generalized_gradient(t, x)
    u_t, grad = gg[0], gg[1:]
    norm = 1.0 + float(np.linalg.norm(gg))
    B = np.asarray(sys.diffusion(t, x), dtype=float).reshape(sys.n, sys.m)
    out = {"wiener": float(np.max(np.abs(grad @ B))) / norm}
    dB = sys.diffusion_jacobians(t, x)
    corr = np.zeros(sys.n)
    for k in range(sys.m):
        for i in range(sys.n):
            corr[i] += sum(B[j, k] * dB[k, i, j] for j in range(sys.n))
    A = np.asarray(sys.drift(t, x), dtype=float)
    out["drift"] = abs(u_t + grad @ (A - 0.5 * corr)) / norm
    return out


def check_conditions(
    sys: SdeSystem,
    fi: FirstIntegral,
    domain: Domain,
    n_samples: int = 1000,
    tol: float = 1e-8,
    mark_range=None,
    seed: int = 0,
) -> ConditionReport:
    """Evaluate the three residuals on ``n_samples`` quasi-random points.

    Marks for the jump condition are drawn from ``mark_range`` (default: the
    system's mark space, which must then be bounded).  Points where a
    coefficient cannot be evaluated are counted in ``n_errors`` and left out
    of the maximum.
    """
    if n_samples < 1:
        raise ValueError("n_samples must be >= 1")
    if domain.n != sys.n:
        raise ValueError(f"domain has {domain.n} state ranges, system has n={sys.n}")
    mark_range = tuple(mark_range) if mark_range is not None else tuple(sys.mark_space)
    if not all(math.isfinite(v) for v in mark_range):
        raise ValueError("mark range must be bounded; pass mark_range=")
    pts = sample_points(domain, n_samples, mark_range, seed)
    best = {c: (-1.0, None) for c in CONDITIONS}
    errors = {c: 0 for c in CONDITIONS}
    for row in pts:
        t, x, gamma = float(row[0]), row[1:-1], float(row[-1])
        try:
            res = residuals_at(sys, fi, t, x)
        except (ArithmeticError, ValueError):
            errors["wiener"] += 1
            errors["drift"] += 1
            res = {}
        try:
            res.update(residuals_at_jump(sys, fi, t, x, gamma))
        except (ArithmeticError, ValueError, RuntimeError):
            errors["jump"] += 1
        for c, v in res.items():
            if not math.isfinite(v):
                errors[c] += 1
            elif v > best[c][0]:
                best[c] = (v, [t, *map(float, x), gamma] if c == "jump" else [t, *map(float, x)])
    report = ConditionReport()
    for c in CONDITIONS:
        v, where = best[c]
        report.results[c] = ConditionResult(c, max(v, 0.0) if where is not None else math.nan, where, n_samples, errors[c], tol)
        if errors[c]:
            log.warning("%s: %d of %d points could not be evaluated", c, errors[c], n_samples)
    return report


def residuals_at_jump(sys: SdeSystem, fi: FirstIntegral, t: float, x, gamma: float) -> dict:
    x = np.asarray(x, dtype=float)
    u0 = fi.value(t, x)
    u1 = fi.value(t, x + np.asarray(sys.jump(t, x, gamma), dtype=float))
    return {"jump": abs(u0 - u1) / (1.0 + abs(u0))}
