"""Monte-Carlo simulation of jump diffusions and conservation statistics.

Paths are produced by a jump-adapted Euler-Maruyama scheme: jump instants of
the Poisson measure are inserted into the time grid and the jump map is
applied exactly at them.  The measure is non-centred, so no compensator is
added to the drift.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .construct import SdeSystem
from .integral import FirstIntegral
from .ode import rk4_step

__all__ = [
    "MarkLaw",
    "JumpEvent",
    "JumpDiffusionPath",
    "ConservationStats",
    "BlowUpError",
    "path_seed",
    "time_grid",
    "simulate",
    "monte_carlo",
]


class BlowUpError(ArithmeticError):
    def __init__(self, time: float, reason: str):
        self.time = time
        self.reason = reason
        super().__init__(f"path failed at t={time!r}: {reason}")


@dataclass(frozen=True)
class MarkLaw:
    """Jump intensity and mark distribution of the Poisson measure."""

    kind: str = "uniform"
    intensity: float = 2.0
    low: float = 0.0
    high: float = 1.0
    rate: float = 1.0
    offset: float = 0.0

    def __post_init__(self):
        if self.kind not in ("uniform", "exponential"):
            raise ValueError(f"unknown mark law {self.kind!r}")
        if not self.intensity >= 0.0:
            raise ValueError("intensity must be >= 0")
        if self.kind == "uniform" and not self.low <= self.high:
            raise ValueError("uniform law needs low <= high")
        if self.kind == "exponential" and not self.rate > 0.0:
            raise ValueError("exponential law needs rate > 0")

    @classmethod
    def uniform(cls, low: float = 0.0, high: float = 1.0, intensity: float = 2.0) -> "MarkLaw":
        return cls("uniform", intensity, low=low, high=high)

    @classmethod
    def exponential(cls, rate: float = 1.0, offset: float = 0.0, intensity: float = 2.0) -> "MarkLaw":
        return cls("exponential", intensity, rate=rate, offset=offset)

    @property
    def support(self) -> tuple[float, float]:
        if self.kind == "uniform":
            return (self.low, self.high)
        return (self.offset, math.inf)

    def check_support(self, mark_space) -> None:
        lo, hi = self.support
        if lo < mark_space[0] or hi > mark_space[1]:
            raise ValueError(f"mark law support {self.support} is not inside the mark space {tuple(mark_space)}")

    def sample(self, rng: np.random.Generator, size: int) -> np.ndarray:
        if self.kind == "uniform":
            return rng.uniform(self.low, self.high, size)
        return self.offset + rng.exponential(1.0 / self.rate, size)

    def to_dict(self) -> dict:
        if self.kind == "uniform":
            return {"kind": "uniform", "low": self.low, "high": self.high, "intensity": self.intensity}
        return {"kind": "exponential", "rate": self.rate, "offset": self.offset, "intensity": self.intensity}


@dataclass(frozen=True)
class JumpEvent:
    time: float
    mark: float
    dx: np.ndarray
    u_before: float
    u_after: float

    @property
    def u_change(self) -> float:
        return abs(self.u_after - self.u_before)


@dataclass
class JumpDiffusionPath:
    times: np.ndarray
    states: np.ndarray
    is_jump: np.ndarray
    jumps: list[JumpEvent]
    invariant: np.ndarray
    seed: object = None

    @property
    def u0(self) -> float:
        return float(self.invariant[0])

    def deviation(self, relative: bool = True) -> np.ndarray:
        """``|u(t_i, x_i) - u0|``, divided by ``|u0|`` when relative and ``u0 != 0``."""
        dev = np.abs(self.invariant - self.invariant[0])
        if relative and self.invariant[0] != 0.0:
            dev = dev / abs(self.invariant[0])
        return dev

    def max_deviation(self, relative: bool = True) -> float:
        return float(self.deviation(relative).max())

    @property
    def jump_residual(self) -> float:
        """Total change of ``u`` accumulated at jump instants."""
        return float(sum(j.u_change for j in self.jumps))

    def to_csv(self, target) -> None:
        """Write columns ``t, x1..xn, u, is_jump`` (path or text stream)."""
        n = self.states.shape[1]
        if isinstance(target, (str, Path)):
            with open(target, "w", newline="") as fh:
                self.to_csv(fh)
            return
        w = csv.writer(target, lineterminator="\n")
        w.writerow(["t", *(f"x{i}" for i in range(1, n + 1)), "u", "is_jump"])
        for t, x, u, j in zip(self.times, self.states, self.invariant, self.is_jump):
            w.writerow([repr(float(t)), *(repr(float(v)) for v in x), repr(float(u)), int(j)])

    def csv_text(self) -> str:
        buf = io.StringIO()
        self.to_csv(buf)
        return buf.getvalue()


def path_seed(seed, index: int) -> np.random.SeedSequence:
    """Substream ``index`` of the master ``seed`` (same as ``SeedSequence(seed).spawn`` order)."""
    if isinstance(seed, np.random.SeedSequence):
        return np.random.SeedSequence(seed.entropy, spawn_key=tuple(seed.spawn_key) + (index,))
    return np.random.SeedSequence(seed, spawn_key=(index,))


def time_grid(T: float, h: float) -> np.ndarray:
    """``0, h, 2h, ...`` strictly below ``T`` followed by ``T`` itself."""
    k = int(math.floor(T / h + 1e-9))
    pts = np.arange(k + 1) * h
    pts = pts[pts < T * (1 - 1e-12)]
    return np.append(pts, T)


def _jump_times(rng: np.random.Generator, intensity: float, T: float) -> np.ndarray:
    taus = []
    if intensity <= 0.0:
        return np.array(taus)
    t = 0.0
    while True:
        t += rng.exponential(1.0 / intensity)
        if t >= T:
            return np.array(taus)
        taus.append(t)


def simulate(
    sys: SdeSystem,
    x0,
    T: float,
    dt: float,
    law: MarkLaw,
    seed=None,
    integral: FirstIntegral | None = None,
    scheme: str = "euler",
    brownian_dt: float | None = None,
) -> JumpDiffusionPath:
    """Simulate one path on ``[0, T]``.

    Random numbers are drawn in a fixed order from the path's own stream:
    jump times, marks, then Brownian increments on the grid of step
    ``brownian_dt`` (default ``dt``) merged with the jump times.  Runs whose
    ``dt`` is a multiple of a common ``brownian_dt`` therefore share the same
    Brownian path, which is what a convergence study needs.

    ``scheme="rk4"`` advances the drift with a classical RK4 step and adds
    the Euler diffusion increment; with zero diffusion it is an exact-flow
    reference integrator.
    """
    if not dt > 0.0:
        raise ValueError("dt must be positive")
    if not T >= dt:
        raise ValueError("need T >= dt")
    if scheme not in ("euler", "rk4"):
        raise ValueError(f"unknown scheme {scheme!r}")
    fi = integral if integral is not None else sys.integral
    if fi is None:
        raise ValueError("no first integral to trace: pass integral=")
    law.check_support(sys.mark_space)
    h = brownian_dt if brownian_dt is not None else dt
    ratio = dt / h
    k = int(round(ratio))
    if k < 1 or abs(ratio - k) > 1e-9 * ratio:
        raise ValueError(f"dt={dt} is not a multiple of brownian_dt={h}")

    ss = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)
    rng = np.random.default_rng(ss)
    taus = _jump_times(rng, law.intensity, T)
    marks = law.sample(rng, taus.size)

    ref = time_grid(T, h)
    fine = np.union1d(ref, taus)
    dW = rng.standard_normal((fine.size - 1, sys.m)) * np.sqrt(np.diff(fine))[:, None]
    W = np.vstack([np.zeros((1, sys.m)), np.cumsum(dW, axis=0)])

    base = np.append(ref[:-1][::k], T)
    grid = np.union1d(base, taus)
    idx = np.searchsorted(fine, grid)
    jump_at = np.zeros(grid.size, dtype=bool)
    jump_at[np.searchsorted(grid, taus)] = True
    mark_iter = iter(marks)

    n = sys.n
    x = np.array(x0, dtype=float)
    if x.shape != (n,):
        raise ValueError(f"x0 must have {n} components")
    states = np.empty((grid.size, n))
    trace = np.empty(grid.size)
    states[0] = x
    trace[0] = fi.value(0.0, x)
    events: list[JumpEvent] = []
    drift = sys.drift
    diffusion = sys.diffusion
    t = 0.0
    for i in range(grid.size - 1):
        t_next = grid[i + 1]
        step = t_next - t
        incr = W[idx[i + 1]] - W[idx[i]]
        try:
            if scheme == "euler":
                x = x + drift(t, x) * step + diffusion(t, x) @ incr
            else:
                x = rk4_step(drift, t, x, step) + diffusion(t, x) @ incr
            if not np.all(np.isfinite(x)):
                raise BlowUpError(t_next, "non-finite state")
            if jump_at[i + 1]:
                gamma = float(next(mark_iter))
                u_before = fi.value(t_next, x)
                dx = sys.jump(t_next, x, gamma)
                x = x + dx
                if not np.all(np.isfinite(x)):
                    raise BlowUpError(t_next, "non-finite state after jump")
                u_after = fi.value(t_next, x)
                events.append(JumpEvent(float(t_next), gamma, np.asarray(dx), u_before, u_after))
                trace[i + 1] = u_after
            else:
                trace[i + 1] = fi.value(t_next, x)
        except BlowUpError:
            raise
        except (ArithmeticError, ValueError) as exc:
            raise BlowUpError(t_next, f"{type(exc).__name__}: {exc}") from exc
        states[i + 1] = x
        t = t_next
    return JumpDiffusionPath(grid, states, jump_at, events, trace, ss)


@dataclass
class ConservationStats:
    """Per-path maximal relative deviation of the invariant and its summary."""

    n_paths: int
    max_deviation: np.ndarray
    jump_residual: np.ndarray
    n_jumps: np.ndarray
    failures: list = field(default_factory=list)
    bound: float | None = None
    paths: list | None = None

    @property
    def ok(self) -> np.ndarray:
        return np.isfinite(self.max_deviation)

    @property
    def n_failed(self) -> int:
        return len(self.failures)

    def _finite(self) -> np.ndarray:
        return self.max_deviation[self.ok]

    @property
    def max(self) -> float:
        v = self._finite()
        return float(v.max()) if v.size else math.nan

    @property
    def mean(self) -> float:
        v = self._finite()
        return float(v.mean()) if v.size else math.nan

    def quantiles(self, qs: Sequence[float] = (0.5, 0.9, 0.99)) -> dict:
        v = self._finite()
        return {str(q): (float(np.quantile(v, q)) if v.size else math.nan) for q in qs}

    @property
    def fraction_within(self) -> float:
        if self.bound is None:
            return math.nan
        return float(np.sum(self._finite() <= self.bound) / self.n_paths)

    @property
    def passed(self) -> bool:
        if self.bound is None:
            return self.n_failed == 0
        return self.n_failed == 0 and bool(np.all(self.max_deviation <= self.bound))

    def to_dict(self) -> dict:
        return {
            "n_paths": self.n_paths,
            "n_failed": self.n_failed,
            "max": self.max,
            "mean": self.mean,
            "quantiles": self.quantiles(),
            "bound": self.bound,
            "fraction_within_bound": None if self.bound is None else self.fraction_within,
            "passed": self.passed,
            "total_jumps": int(self.n_jumps.sum()),
            "max_jump_residual": float(self.jump_residual.max()) if self.jump_residual.size else 0.0,
            "per_path_max_deviation": [None if not math.isfinite(v) else float(v) for v in self.max_deviation],
            "failures": self.failures,
        }

    def to_json(self, **kwargs) -> str:
        return json.dumps(self.to_dict(), indent=2, **kwargs)


def monte_carlo(
    sys: SdeSystem,
    x0,
    T: float,
    dt: float,
    law: MarkLaw,
    n_paths: int,
    seed=0,
    integral: FirstIntegral | None = None,
    scheme: str = "euler",
    brownian_dt: float | None = None,
    bound: float | None = None,
    keep_paths: bool = False,
) -> ConservationStats:
    """Simulate ``n_paths`` independent paths; path ``i`` uses ``path_seed(seed, i)``.

    Failed paths (blow-up, domain errors) are recorded in ``failures`` with a
    NaN deviation instead of aborting the run.
    """
    if n_paths < 1:
        raise ValueError("n_paths must be >= 1")
    dev = np.full(n_paths, math.nan)
    jres = np.zeros(n_paths)
    njumps = np.zeros(n_paths, dtype=int)
    failures = []
    kept = [] if keep_paths else None
    for i in range(n_paths):
        try:
            p = simulate(sys, x0, T, dt, law, path_seed(seed, i), integral, scheme, brownian_dt)
        except BlowUpError as exc:
            failures.append({"path": i, "time": exc.time, "reason": exc.reason})
            if kept is not None:
                kept.append(None)
            continue
        dev[i] = p.max_deviation()
        jres[i] = p.jump_residual
        njumps[i] = len(p.jumps)
        if kept is not None:
            kept.append(p)
    return ConservationStats(n_paths, dev, jres, njumps, failures, bound, kept)
