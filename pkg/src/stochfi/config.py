"""Problem configuration files (JSON) for the command line tools."""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any

from .expr import ExprError, parse, variables_for

__all__ = ["ConfigError", "ProblemConfig", "load_config", "WORKED_EXAMPLE"]


class ConfigError(ValueError):
    def __init__(self, message: str, field_name: str | None = None):
        self.field = field_name
        super().__init__(f"{field_name}: {message}" if field_name else message)


@dataclass
class ProblemConfig:
    n: int
    u: str
    m: int = 1
    q00: str | list = "1"
    diffusion_family: list | None = None
    jump_family: list | None = None
    mark_space: list = field(default_factory=lambda: [0.0, 1.0])
    mark_law: dict = field(default_factory=lambda: {"kind": "uniform", "low": 0.0, "high": 1.0})
    intensity: float = 2.0
    control: dict | None = None
    x0: list | None = None
    T: float = 1.0
    dt: float = 1e-3
    n_paths: int = 100
    seed: int = 0
    domain: dict | None = None
    n_samples: int = 1000
    tol: float = 1e-8
    acceptance_bound: float = 0.05
    cofactor_tol: float = 1e-12
    ode_rtol: float = 1e-10
    output_dir: str | None = None

    @classmethod
    def from_dict(cls, data: dict) -> "ProblemConfig":
        if not isinstance(data, dict):
            raise ConfigError("config must be a JSON object")
        known = set(cls.__dataclass_fields__)
        unknown = sorted(set(data) - known)
        if unknown:
            raise ConfigError("unknown field", unknown[0])
        for required in ("n", "u"):
            if required not in data:
                raise ConfigError("missing required field", required)
        cfg = cls(**data)
        cfg.validate()
        return cfg

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    # -- validation -------------------------------------------------------

    def _expr(self, source, name: str, with_gamma: bool = False):
        names = variables_for(self.n) if with_gamma else [v for v in variables_for(self.n) if v != "gamma"]
        if not isinstance(source, str):
            raise ConfigError("expected an expression string", name)
        try:
            return parse(source, names)
        except ExprError as exc:
            raise ConfigError(str(exc), name) from None

    def validate(self) -> None:
        if not isinstance(self.n, int) or self.n < 2:
            raise ConfigError("must be an integer >= 2", "n")
        if not isinstance(self.m, int) or self.m < 1:
            raise ConfigError("must be an integer >= 1", "m")
        self._expr(self.u, "u")
        q = self.q00 if isinstance(self.q00, list) else [self.q00]
        if isinstance(self.q00, list) and len(q) != self.m:
            raise ConfigError(f"needs {self.m} entries (one per column)", "q00")
        for i, e in enumerate(q):
            self._expr(e, f"q00[{i}]" if isinstance(self.q00, list) else "q00")
        for name, size in (("diffusion_family", self.n - 1), ("jump_family", self.n - 2)):
            fam = getattr(self, name)
            if fam is None:
                continue
            if not isinstance(fam, list) or len(fam) != size:
                raise ConfigError(f"needs exactly {size} expressions", name)
            for i, e in enumerate(fam):
                self._expr(e, f"{name}[{i}]")
        if not (isinstance(self.mark_space, list) and len(self.mark_space) == 2):
            raise ConfigError("expected [low, high]", "mark_space")
        lo, hi = (float(v) for v in self.mark_space)
        if not lo < hi:
            raise ConfigError("low must be < high", "mark_space")
        self._law_kwargs()
        if not (isinstance(self.intensity, (int, float)) and self.intensity >= 0):
            raise ConfigError("must be >= 0", "intensity")
        if self.control is not None:
            if not isinstance(self.control, dict) or "P" not in self.control or "Q" not in self.control:
                raise ConfigError("needs P and Q", "control")
            P, Q = self.control["P"], self.control["Q"]
            if not isinstance(P, list) or len(P) != self.n:
                raise ConfigError(f"needs {self.n} entries", "control.P")
            if not isinstance(Q, list) or len(Q) != self.n or any(not isinstance(r, list) or len(r) != self.n for r in Q):
                raise ConfigError(f"must be {self.n}x{self.n}", "control.Q")
            for i, e in enumerate(P):
                self._expr(e, f"control.P[{i}]")
            for i, row in enumerate(Q):
                for j, e in enumerate(row):
                    self._expr(e, f"control.Q[{i}][{j}]")
        if self.x0 is not None and (not isinstance(self.x0, list) or len(self.x0) != self.n):
            raise ConfigError(f"needs {self.n} entries", "x0")
        for name in ("T", "dt", "tol", "acceptance_bound", "cofactor_tol", "ode_rtol"):
            v = getattr(self, name)
            if not isinstance(v, (int, float)) or not v > 0 or not math.isfinite(v):
                raise ConfigError("must be a positive number", name)
        if self.dt > self.T:
            raise ConfigError("must not exceed T", "dt")
        for name in ("n_paths", "n_samples"):
            v = getattr(self, name)
            if not isinstance(v, int) or v < 1:
                raise ConfigError("must be a positive integer", name)
        if not isinstance(self.seed, int) or self.seed < 0:
            raise ConfigError("must be a non-negative integer", "seed")
        if self.domain is not None:
            d = self.domain
            if not isinstance(d, dict) or "t" not in d or "x" not in d:
                raise ConfigError("needs t and x ranges", "domain")
            if len(d["t"]) != 2 or len(d["x"]) != self.n or any(len(r) != 2 for r in d["x"]):
                raise ConfigError(f"expects t=[a,b] and {self.n} x ranges", "domain")

    def _law_kwargs(self) -> dict:
        law = dict(self.mark_law)
        kind = law.pop("kind", "uniform")
        allowed = {"uniform": {"low", "high"}, "exponential": {"rate", "offset"}}
        if kind not in allowed:
            raise ConfigError(f"unknown kind {kind!r}", "mark_law")
        extra = set(law) - allowed[kind]
        if extra:
            raise ConfigError(f"unexpected key {sorted(extra)[0]!r}", "mark_law")
        return {"kind": kind, **{k: float(v) for k, v in law.items()}}

    # -- derived objects ----------------------------------------------------

    @property
    def x0_or_default(self) -> list:
        return list(self.x0) if self.x0 is not None else [0.0] * self.n


def load_config(path: str | Path) -> ProblemConfig:
    try:
        data = json.loads(Path(path).read_text())
    except FileNotFoundError:
        raise ConfigError(f"no such file: {path}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"invalid JSON: {exc}") from None
    return ProblemConfig.from_dict(data)


# Worked example: keep the plane motion on x2*exp(-2*x1) = const.  q00 = 0.1
# keeps exp(2*x1) (a Brownian motion of speed 2*q00 between jumps) away from
# zero over the horizon; with q00 = 1 a large share of paths explodes.
WORKED_EXAMPLE: dict[str, Any] = {
    "n": 2,
    "m": 1,
    "u": "x2*exp(-2*x1)",
    "q00": "0.1",
    "diffusion_family": ["x1"],
    "jump_family": [],
    "mark_space": [0.0, 1.0],
    "mark_law": {"kind": "uniform", "low": 0.0, "high": 1.0},
    "intensity": 2.0,
    "control": {
        "P": ["x1 + x2 + exp(-t)", "x1*x2 + exp(-2*t)"],
        "Q": [["1", "0"], ["0", "1"]],
    },
    "x0": [0.0, 1.0],
    "T": 1.0,
    "dt": 1e-3,
    "n_paths": 100,
    "seed": 0,
    "domain": {"t": [0.0, 1.0], "x": [[-1.0, 1.0], [0.5, 2.0]]},
    "n_samples": 1000,
    "tol": 1e-8,
    "acceptance_bound": 0.05,
}
