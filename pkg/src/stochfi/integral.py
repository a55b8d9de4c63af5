"""First integrals u(t, x) and the free function families of the construction."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .expr import Const, Expr, compile_vector, differentiate, parse, simplify, to_string, variables_for

__all__ = [
    "FirstIntegral",
    "FreeFamily",
    "IndependenceReport",
    "DegenerateIntegralError",
    "default_family",
    "independence_check",
]

INDEPENDENCE_RTOL = 1e-8


class DegenerateIntegralError(ValueError):
    pass


class FirstIntegral:
    """A scalar surface ``u(t, x)`` with its symbolic time derivative and gradient."""

    def __init__(self, u: Expr, n: int):
        if n < 1:
            raise ValueError("n must be >= 1")
        self.n = n
        self.u = u
        self.du_dt = simplify(differentiate(u, "t"))
        self.grad = [simplify(differentiate(u, f"x{i}")) for i in range(1, n + 1)]
        self._value = compile_vector([u], n)
        # generalized gradient (du/dt, du/dx1, ..., du/dxn)
        self._ggrad = compile_vector([self.du_dt, *self.grad], n)

    @classmethod
    def from_string(cls, source: str, n: int) -> "FirstIntegral":
        allowed = [v for v in variables_for(n) if v != "gamma"]
        return cls(parse(source, allowed), n)

    def __repr__(self):
        return f"FirstIntegral({to_string(self.u)!r}, n={self.n})"

    def value(self, t: float, x) -> float:
        return self._value(t, x)[0]

    def gradient(self, t: float, x) -> np.ndarray:
        return np.array(self._ggrad(t, x)[1:])

    def time_derivative(self, t: float, x) -> float:
        return self._ggrad(t, x)[0]

    def generalized_gradient(self, t: float, x) -> np.ndarray:
        return np.array(self._ggrad(t, x))


@dataclass(frozen=True)
class FreeFamily:
    """Auxiliary functions completing ``u`` to an independent set.

    ``kind="diffusion"`` holds ``h_3 .. h_{n+1}`` (``n-1`` members); the
    diffusion columns use the first ``n-2`` of them and the drift uses all.
    ``kind="jump"`` holds ``phi_3 .. phi_n`` (``n-2`` members).  ``q00`` scales
    the diffusion columns.
    """

    kind: str
    members: tuple[Expr, ...]
    q00: Expr = field(default_factory=lambda: Const(1.0))

    def __post_init__(self):
        if self.kind not in ("diffusion", "jump"):
            raise ValueError(f"unknown family kind {self.kind!r}")
        object.__setattr__(self, "members", tuple(self.members))

    @classmethod
    def from_strings(cls, kind: str, members: Iterable[str], n: int, q00: str = "1") -> "FreeFamily":
        names = [v for v in variables_for(n) if v != "gamma"]
        return cls(kind, tuple(parse(m, names) for m in members), parse(q00, names))

    def expected_size(self, n: int) -> int:
        return n - 1 if self.kind == "diffusion" else n - 2

    def gradients(self, n: int) -> list[list[Expr]]:
        """Spatial gradient expressions of each member."""
        return [[simplify(differentiate(m, f"x{j}")) for j in range(1, n + 1)] for m in self.members]

    def generalized_gradients(self, n: int) -> list[list[Expr]]:
        """``(dh/dt, dh/dx1, ..., dh/dxn)`` for each member."""
        return [
            [simplify(differentiate(m, "t"))] + [simplify(differentiate(m, f"x{j}")) for j in range(1, n + 1)]
            for m in self.members
        ]


@dataclass
class IndependenceReport:
    points: list
    sigma_min: np.ndarray
    scale: np.ndarray
    tol: float

    @property
    def passed(self) -> bool:
        return bool(np.all(self.sigma_min >= self.tol * self.scale))

    @property
    def worst(self) -> int:
        return int(np.argmin(self.sigma_min / np.where(self.scale > 0, self.scale, 1.0)))


def _stacked_rows(fi: FirstIntegral, grads: Sequence[Sequence[Expr]]):
    return compile_vector([*fi.grad, *(g for row in grads for g in row)], fi.n)


def independence_check(fi: FirstIntegral, fam: FreeFamily, points, tol: float = INDEPENDENCE_RTOL) -> IndependenceReport:
    """Numerical functional-independence test of ``u`` with the family members.

    At every ``(t, x)`` in ``points`` the spatial gradients of ``u`` and the
    members are stacked; the smallest singular value must be at least
    ``tol`` times the largest row norm.  Full rank of the stacked diffusion
    rows is exactly the non-vanishing of the leading cofactor used for the
    drift.
    """
    points = list(points)
    if not points:
        raise ValueError("need at least one sample point")
    n = fi.n
    rows_f = _stacked_rows(fi, fam.gradients(n))
    k = 1 + len(fam.members)
    sig = np.empty(len(points))
    scale = np.empty(len(points))
    for i, (t, x) in enumerate(points):
        M = np.array(rows_f(t, np.asarray(x, dtype=float))).reshape(k, n)
        norms = np.linalg.norm(M, axis=1)
        scale[i] = norms.max()
        sig[i] = np.linalg.svd(M, compute_uv=False).min() if k <= n else 0.0
        if scale[i] == 0.0:
            # zero gradient: degenerate, make sure it fails
            scale[i] = 1.0
    return IndependenceReport(points, sig, scale, tol)


def default_family(fi: FirstIntegral, kind: str, anchor=None, q00: Expr | None = None, tol: float = INDEPENDENCE_RTOL) -> FreeFamily:
    """Greedy coordinate family: pick from ``x1 .. xn, t`` while independence improves.

    ``anchor`` is ``(t0, x0)``; the default is ``t=0`` and the origin.
    """
    n = fi.n
    if n < 2:
        raise ValueError("construction needs n >= 2")
    t0, x0 = anchor if anchor is not None else (0.0, np.zeros(n))
    x0 = np.asarray(x0, dtype=float)
    need = n - 1 if kind == "diffusion" else n - 2
    q00 = q00 if q00 is not None else Const(1.0)
    grad_u = fi.gradient(t0, x0)
    if np.linalg.norm(grad_u) == 0.0:
        raise DegenerateIntegralError(f"gradient of u vanishes at anchor t={t0}, x={x0.tolist()}")
    chosen: list[Expr] = []
    candidates = [parse(f"x{i}", variables_for(n)) for i in range(1, n + 1)] + [parse("t", ["t"])]
    for cand in candidates:
        if len(chosen) == need:
            break
        trial = FreeFamily(kind, tuple(chosen + [cand]), q00)
        if independence_check(fi, trial, [(t0, x0)], tol).passed:
            chosen.append(cand)
    if len(chosen) < need:
        raise DegenerateIntegralError(
            f"no coordinate family is independent of u at anchor t={t0}, x={x0.tolist()}"
        )
    return FreeFamily(kind, tuple(chosen), q00)
