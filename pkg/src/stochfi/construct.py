"""Build jump-diffusion systems that conserve a prescribed first integral.

Given ``u(t, x)`` the coefficients are assembled pointwise:

* each diffusion column is a scalar multiple of the signed-cofactor vector
  orthogonal to ``grad u`` and the gradients of the free functions, so the
  Wiener increments never move ``u``;
* the drift is ``R + 1/2 sum_k J(B_k) B_k`` where ``R`` comes from the
  leading cofactor expansion of the generalized-gradient matrix and the second
  term is the Ito correction;
* the jump coefficient is ``G = y - x`` with ``y`` the flow, in the mark
  variable, of the orthogonal-complement field started at ``x``.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable, Sequence

import numpy as np

from .expr import Const, Expr, compile_vector, mul, parse, simplify, to_string, variables_for
from .integral import DegenerateIntegralError, FirstIntegral, FreeFamily, default_family, independence_check
from .linalg import cofactor_row0, jacobian, ortho_complement, symbolic_jacobian, symbolic_ortho_complement
from .ode import integrate_adaptive

__all__ = [
    "SdeSystem",
    "DegeneratePointError",
    "NearSingularError",
    "IndependenceError",
    "DiffusionField",
    "DriftField",
    "JumpMap",
    "JumpField",
    "build_diffusion",
    "build_drift",
    "jump_map",
    "build_jump",
    "construct_system",
]

# above this dimension cofactors are evaluated numerically only
SYMBOLIC_MAX_N = 5
COFACTOR_TOL = 1e-12
ODE_RTOL = 1e-10
ODE_ATOL = 1e-12


class DegeneratePointError(ArithmeticError):
    def __init__(self, message: str, t: float, x):
        self.t = t
        self.x = np.asarray(x, dtype=float).tolist()
        super().__init__(f"{message} at t={t!r}, x={self.x}")


class NearSingularError(DegeneratePointError):
    pass


class IndependenceError(DegenerateIntegralError):
    pass


@dataclass(frozen=True, eq=False)
class SdeSystem:
    """Coefficients of ``dx = A dt + B dw + int G(t, x, gamma) nu(dt, dgamma)``.

    ``drift(t, x) -> (n,)``, ``diffusion(t, x) -> (n, m)`` and
    ``jump(t, x, gamma) -> (n,)``.  When ``diffusion_exprs`` (``m`` columns of
    ``n`` expressions) is present its derivatives are taken symbolically,
    otherwise by central differences.
    """

    n: int
    m: int
    drift: Callable
    diffusion: Callable
    jump: Callable
    mark_space: tuple[float, float] = (0.0, 1.0)
    diffusion_exprs: tuple | None = None
    integral: FirstIntegral | None = None
    summary: dict = field(default_factory=dict)

    @classmethod
    def from_exprs(
        cls,
        n: int,
        drift: Sequence,
        diffusion: Sequence[Sequence],
        jump: Sequence | None = None,
        mark_space=(0.0, 1.0),
        integral: FirstIntegral | None = None,
    ) -> "SdeSystem":
        """System from expression strings (or :class:`Expr`).

        ``diffusion`` lists the ``m`` columns, each with ``n`` entries;
        ``jump`` entries may use ``gamma``.  Missing jump means no jumps.
        """
        names = variables_for(n)
        as_expr = lambda e: e if isinstance(e, Expr) else parse(str(e), names)  # noqa: E731
        A = [as_expr(e) for e in drift]
        cols = tuple(tuple(as_expr(e) for e in col) for col in diffusion)
        G = [as_expr(e) for e in jump] if jump is not None else [Const(0.0)] * n
        if len(A) != n or len(G) != n or any(len(c) != n for c in cols):
            raise ValueError("every coefficient needs n entries")
        a_f = compile_vector(A, n)
        g_f = compile_vector(G, n)
        m = len(cols)
        b_f = compile_vector([e for c in cols for e in c], n)

        def drift_f(t, x):
            return np.array(a_f(t, x))

        def diffusion_f(t, x):
            return np.array(b_f(t, x)).reshape(m, n).T

        def jump_f(t, x, gamma):
            return np.array(g_f(t, x, gamma))

        summary = {
            "drift": [to_string(e) for e in A],
            "diffusion": [[to_string(e) for e in c] for c in cols],
            "jump": [to_string(e) for e in G],
        }
        return cls(n, m, drift_f, diffusion_f, jump_f, tuple(mark_space), cols, integral, summary)

    def with_drift(self, drift: Callable) -> "SdeSystem":
        return dataclasses.replace(self, drift=drift)

    @cached_property
    def _jacobian_kernel(self):
        if self.diffusion_exprs is None:
            return None
        flat = [e for col in self.diffusion_exprs for row in symbolic_jacobian(col, self.n) for e in row]
        return compile_vector(flat, self.n)

    def diffusion_jacobians(self, t: float, x) -> np.ndarray:
        """``J[k, i, j] = d b_ik / d x_j`` with shape ``(m, n, n)``."""
        x = np.asarray(x, dtype=float)
        jac = getattr(self.diffusion, "jacobians", None)
        if jac is not None:
            return jac(t, x)
        kernel = self._jacobian_kernel
        if kernel is not None:
            return np.array(kernel(t, x)).reshape(self.m, self.n, self.n)
        return np.stack(
            [jacobian(lambda s, y, k=k: self.diffusion(s, y)[:, k], x, t) for k in range(self.m)]
        )


# ---------------------------------------------------------------------------
# diffusion


class DiffusionField:
    """Diffusion matrix with columns ``q_k(t, x) * ortho_complement(grad u, grad f_3, ...)``."""

    def __init__(self, fi: FirstIntegral, families: Sequence[FreeFamily], scales: Sequence[Expr]):
        n = fi.n
        if n < 2:
            raise ValueError("construction needs n >= 2")
        if len(families) != len(scales):
            raise ValueError("one family per diffusion column")
        self.n = n
        self.m = len(scales)
        self.fi = fi
        self.families = list(families)
        self.scales = list(scales)
        self._scale_f = compile_vector(self.scales, n)
        self._rows_f = []
        self.direction_exprs = None
        if n <= SYMBOLIC_MAX_N:
            self.direction_exprs = []
            for fam in self.families:
                rows = [fi.grad, *fam.gradients(n)[: n - 2]]
                self.direction_exprs.append(symbolic_ortho_complement(rows))
            self._dir_f = compile_vector([e for d in self.direction_exprs for e in d], n)
            self.exprs = tuple(
                tuple(simplify(mul(q, v)) for v in d) for q, d in zip(self.scales, self.direction_exprs)
            )
            flat = [e for col in self.exprs for row in symbolic_jacobian(col, n) for e in row]
            self._jac_f = compile_vector(flat, n)
        else:
            self.exprs = None
            for fam in self.families:
                self._rows_f.append(compile_vector([*fi.grad, *(g for r in fam.gradients(n)[: n - 2] for g in r)], n))
        for fam in self.families:
            if len(fam.members) < n - 2:
                raise ValueError(f"diffusion family needs at least {n - 2} members, got {len(fam.members)}")

    def directions(self, t: float, x) -> np.ndarray:
        n = self.n
        if self.direction_exprs is not None:
            return np.array(self._dir_f(t, x)).reshape(self.m, n).T
        cols = [ortho_complement(np.array(f(t, x)).reshape(n - 1, n)) for f in self._rows_f]
        return np.stack(cols, axis=1)

    def __call__(self, t: float, x) -> np.ndarray:
        V = self.directions(t, x)
        if not np.any(V):
            raise DegeneratePointError("all minors of the diffusion determinant vanish", t, x)
        q = np.array(self._scale_f(t, x))
        return V * q

    def jacobians(self, t: float, x) -> np.ndarray:
        n = self.n
        if self.exprs is not None:
            return np.array(self._jac_f(t, x)).reshape(self.m, n, n)
        x = np.asarray(x, dtype=float)
        return np.stack([jacobian(lambda s, y, k=k: self(s, y)[:, k], x, t) for k in range(self.m)])

    def correction(self, t: float, x) -> np.ndarray:
        """``sum_k J(B_k) B_k``, i.e. ``sum_k sum_j b_jk d b_ik / d x_j``."""
        B = self(t, x)
        J = self.jacobians(t, x)
        return np.einsum("kij,jk->i", J, B)


def build_diffusion(
    fi: FirstIntegral,
    fam: FreeFamily,
    m: int = 1,
    scales: Sequence[Expr] | None = None,
    families: Sequence[FreeFamily] | None = None,
) -> DiffusionField:
    """Diffusion coefficient orthogonal to ``grad u``.

    All ``m`` columns share ``fam`` and its ``q00`` unless per-column
    ``families`` or ``scales`` are supplied.
    """
    if m < 1:
        raise ValueError("m must be >= 1")
    families = list(families) if families is not None else [fam] * m
    scales = list(scales) if scales is not None else [fam.q00] * m
    if len(families) != m or len(scales) != m:
        raise ValueError(f"expected {m} column families and scales")
    return DiffusionField(fi, families, scales)


# ---------------------------------------------------------------------------
# drift


class DriftField:
    """``A = R + 1/2 sum_k J(B_k) B_k`` evaluated pointwise."""

    def __init__(self, fi: FirstIntegral, fam: FreeFamily, diffusion: DiffusionField | None, cofactor_tol: float = COFACTOR_TOL):
        n = fi.n
        if len(fam.members) != n - 1:
            raise ValueError(f"drift family needs exactly {n - 1} members, got {len(fam.members)}")
        self.n = n
        self.fi = fi
        self.family = fam
        self.diffusion = diffusion
        self.cofactor_tol = cofactor_tol
        self._block_f = compile_vector(
            [fi.du_dt, *fi.grad, *(g for row in fam.generalized_gradients(n) for g in row)], n
        )

    def cofactors(self, t: float, x) -> np.ndarray:
        block = np.array(self._block_f(t, x)).reshape(self.n, self.n + 1)
        return cofactor_row0(block), block

    def residual_part(self, t: float, x) -> np.ndarray:
        """The vector ``R`` with ``r_i = cof_i / cof_0``."""
        cof, block = self.cofactors(t, x)
        scale = np.prod(np.linalg.norm(block[:, 1:], axis=1))
        if not abs(cof[0]) >= self.cofactor_tol * scale or scale == 0.0:
            raise NearSingularError(f"leading cofactor {cof[0]:.3g} is near zero", t, x)
        return cof[1:] / cof[0]

    def correction(self, t: float, x) -> np.ndarray:
        if self.diffusion is None:
            return np.zeros(self.n)
        return 0.5 * self.diffusion.correction(t, x)

    def __call__(self, t: float, x) -> np.ndarray:
        return self.residual_part(t, x) + self.correction(t, x)


def build_drift(fi: FirstIntegral, fam: FreeFamily, diffusion: DiffusionField | None, cofactor_tol: float = COFACTOR_TOL) -> DriftField:
    return DriftField(fi, fam, diffusion, cofactor_tol)


# ---------------------------------------------------------------------------
# jumps


class JumpMap:
    """``y(t; x; gamma)``: flow in ``gamma`` of the field orthogonal to ``grad u``."""

    def __init__(self, fi: FirstIntegral, fam: FreeFamily | None = None, rtol: float = ODE_RTOL, atol: float = ODE_ATOL):
        n = fi.n
        if n < 2:
            raise ValueError("construction needs n >= 2")
        members = fam.members if fam is not None else ()
        if len(members) != n - 2:
            raise ValueError(f"jump family needs exactly {n - 2} members, got {len(members)}")
        self.n = n
        self.fi = fi
        self.family = fam
        self.rtol = rtol
        self.atol = atol
        grads = fam.gradients(n) if fam is not None else []
        self._rows_f = compile_vector([*fi.grad, *(g for row in grads for g in row)], n)

    def rhs(self, t: float, y) -> np.ndarray:
        rows = np.array(self._rows_f(t, y)).reshape(self.n - 1, self.n)
        return ortho_complement(rows)

    def __call__(self, t: float, x, gamma: float) -> np.ndarray:
        return integrate_adaptive(lambda y: self.rhs(t, y), x, gamma, self.rtol, self.atol)


def jump_map(fi: FirstIntegral, fam: FreeFamily | None, t: float, x, gamma: float, rtol: float = ODE_RTOL) -> np.ndarray:
    return JumpMap(fi, fam, rtol)(t, x, gamma)


class JumpField:
    """``G(t, x, gamma) = y(t; x; gamma) - x``."""

    def __init__(self, jmap: JumpMap):
        self.map = jmap
        self.n = jmap.n

    def __call__(self, t: float, x, gamma: float) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if gamma == 0.0:
            return np.zeros_like(x)
        return self.map(t, x, gamma) - x


def build_jump(fi: FirstIntegral, fam: FreeFamily | None, rtol: float = ODE_RTOL) -> JumpField:
    return JumpField(JumpMap(fi, fam, rtol))


# ---------------------------------------------------------------------------


def construct_system(
    fi: FirstIntegral,
    diffusion_family: FreeFamily | None = None,
    jump_family: FreeFamily | None = None,
    m: int = 1,
    mark_space=(0.0, 1.0),
    anchor=None,
    q00: Expr | str | None = None,
    scales: Sequence[Expr] | None = None,
    column_families: Sequence[FreeFamily] | None = None,
    cofactor_tol: float = COFACTOR_TOL,
    ode_rtol: float = ODE_RTOL,
) -> SdeSystem:
    """Assemble drift, diffusion and jump coefficients conserving ``fi``.

    Missing families are chosen by :func:`default_family` at ``anchor``
    (default ``t=0`` at the origin); the families are then required to pass
    :func:`independence_check` there.
    """
    n = fi.n
    if n < 2:
        raise ValueError("construction needs n >= 2")
    if anchor is None:
        anchor = (0.0, np.zeros(n))
    anchor = (float(anchor[0]), np.asarray(anchor[1], dtype=float))
    if isinstance(q00, str):
        q00 = parse(q00, [v for v in variables_for(n) if v != "gamma"])
    if diffusion_family is None:
        diffusion_family = default_family(fi, "diffusion", anchor, q00=q00)
    elif q00 is not None:
        diffusion_family = dataclasses.replace(diffusion_family, q00=q00)
    if jump_family is None:
        jump_family = default_family(fi, "jump", anchor)
    for fam in (diffusion_family, jump_family, *(column_families or ())):
        report = independence_check(fi, fam, [anchor])
        if not report.passed:
            raise IndependenceError(
                f"{fam.kind} family {[to_string(e) for e in fam.members]} is not independent of u "
                f"at t={anchor[0]}, x={anchor[1].tolist()} (sigma_min={report.sigma_min[0]:.3g})"
            )
    B = build_diffusion(fi, diffusion_family, m, scales=scales, families=column_families)
    A = build_drift(fi, diffusion_family, B, cofactor_tol)
    G = build_jump(fi, jump_family, ode_rtol)
    summary = {
        "u": to_string(fi.u),
        "n": n,
        "m": m,
        "diffusion_family": [to_string(e) for e in diffusion_family.members],
        "jump_family": [to_string(e) for e in jump_family.members],
        "q00": [to_string(q) for q in B.scales],
        "diffusion": [[to_string(e) for e in col] for col in B.exprs] if B.exprs is not None else None,
        "mark_space": list(mark_space),
    }
    return SdeSystem(n, m, A, B, G, tuple(mark_space), B.exprs, fi, summary)
