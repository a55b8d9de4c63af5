"""Small dense kernels: signed-cofactor orthogonal complements, solves, Jacobians."""

from __future__ import annotations

import warnings
from itertools import permutations
from typing import Callable, Sequence

import numpy as np
import scipy.linalg

from .expr import Const, Expr, add, compile_vector, differentiate, mul, neg, simplify

__all__ = [
    "SingularMatrixError",
    "ortho_complement",
    "cofactor_row0",
    "solve",
    "jacobian",
    "symbolic_jacobian",
    "symbolic_ortho_complement",
    "symbolic_det",
]

FD_STEP = 1e-6
SINGULAR_PIVOT = 1e-12


class SingularMatrixError(np.linalg.LinAlgError):
    pass


def _check_rows(rows: np.ndarray) -> int:
    if rows.ndim != 2:
        raise ValueError("rows must be a 2-d array")
    k, n = rows.shape
    if n < 2:
        raise ValueError("need n >= 2")
    if k != n - 1:
        raise ValueError(f"expected {n - 1} rows of length {n}, got {k}")
    return n


def ortho_complement(rows) -> np.ndarray:
    """Generalized cross product of ``n-1`` vectors in R^n.

    Component ``i`` (0-based) is ``(-1)**i`` times the minor obtained by
    deleting column ``i``; equivalently, the cofactor expansion along a formal
    first row of unit vectors.  The result is orthogonal to every input row
    and vanishes iff the rows are linearly dependent.
    """
    rows = np.asarray(rows, dtype=float)
    n = _check_rows(rows)
    if n == 2:
        a, b = rows[0]
        return np.array([b, -a])
    if n == 3:
        return np.cross(rows[0], rows[1])
    minors = np.empty((n, n - 1, n - 1))
    for i in range(n):
        minors[i] = np.delete(rows, i, axis=1)
    signs = np.where(np.arange(n) % 2 == 0, 1.0, -1.0)
    return signs * np.linalg.det(minors)


def cofactor_row0(block) -> np.ndarray:
    """Cofactors of the first row of an ``(n+1)x(n+1)`` matrix.

    ``block`` holds the numeric rows 2..n+1 as an ``n x (n+1)`` array; the
    first row is formal.  Entry ``j`` is ``(-1)**j * det(block without column j)``,
    so entry 0 is the cofactor of the leading formal element.
    """
    block = np.asarray(block, dtype=float)
    if block.ndim != 2 or block.shape[1] != block.shape[0] + 1:
        raise ValueError(f"expected an n x (n+1) block, got shape {block.shape}")
    if block.shape[0] == 0:
        raise ValueError("empty block")
    return ortho_complement(block)


def solve(Q, rhs) -> np.ndarray:
    """Solve ``Q s = rhs`` by LU with partial pivoting.

    Raises :class:`SingularMatrixError` when a pivot falls below
    ``1e-12 * max|Q|``.
    """
    Q = np.asarray(Q, dtype=float)
    rhs = np.asarray(rhs, dtype=float)
    if Q.ndim != 2 or Q.shape[0] != Q.shape[1]:
        raise ValueError(f"Q must be square, got shape {Q.shape}")
    if rhs.shape != (Q.shape[0],):
        raise ValueError(f"rhs has shape {rhs.shape}, expected ({Q.shape[0]},)")
    scale = np.max(np.abs(Q)) if Q.size else 0.0
    if scale == 0.0 or not np.isfinite(scale):
        raise SingularMatrixError("gain matrix is zero or non-finite")
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", scipy.linalg.LinAlgWarning)
        lu, piv = scipy.linalg.lu_factor(Q, check_finite=False)
    pivots = np.abs(np.diag(lu))
    if pivots.min() < SINGULAR_PIVOT * scale:
        raise SingularMatrixError(
            f"matrix is singular to working precision (pivot {pivots.min():.3g}, scale {scale:.3g})"
        )
    return scipy.linalg.lu_solve((lu, piv), rhs, check_finite=False)


def symbolic_jacobian(exprs: Sequence[Expr], n: int) -> list[list[Expr]]:
    """``J[i][j] = d exprs[i] / d x_{j+1}`` as simplified expressions."""
    return [[simplify(differentiate(e, f"x{j}")) for j in range(1, n + 1)] for e in exprs]


def jacobian(f, x, t: float = 0.0, mode: str = "numeric") -> np.ndarray:
    """Jacobian of a vector field with respect to the state at ``(t, x)``.

    ``mode="symbolic"`` expects ``f`` to be a sequence of :class:`Expr`;
    ``mode="numeric"`` expects a callable ``f(t, x)`` and uses central
    differences with step ``1e-6 * (1 + |x_j|)``.
    """
    x = np.asarray(x, dtype=float)
    n = x.size
    if mode == "symbolic":
        J = symbolic_jacobian(f, n)
        flat = compile_vector([e for row in J for e in row], n)
        return np.array(flat(t, x), dtype=float).reshape(len(J), n)
    if mode != "numeric":
        raise ValueError(f"unknown mode {mode!r}")
    cols = []
    for j in range(n):
        h = FD_STEP * (1.0 + abs(x[j]))
        xp = x.copy()
        xm = x.copy()
        xp[j] += h
        xm[j] -= h
        fp = np.asarray(f(t, xp), dtype=float)
        fm = np.asarray(f(t, xm), dtype=float)
        cols.append((fp - fm) / (xp[j] - xm[j]))
    return np.stack(cols, axis=-1)


# ---------------------------------------------------------------------------
# symbolic cofactors, used when fields are expression-backed


def _perm_sign(p: Sequence[int]) -> int:
    sign = 1
    p = list(p)
    for i in range(len(p)):
        while p[i] != i:
            j = p[i]
            p[i], p[j] = p[j], p[i]
            sign = -sign
    return sign


def symbolic_det(M: Sequence[Sequence[Expr]]) -> Expr:
    """Leibniz determinant of a small square matrix of expressions."""
    k = len(M)
    if k == 0:
        return Const(1.0)
    total: Expr = Const(0.0)
    for p in permutations(range(k)):
        term: Expr = Const(1.0)
        for i in range(k):
            term = mul(term, M[i][p[i]])
            if isinstance(term, Const) and term.value == 0.0:
                break
        if isinstance(term, Const) and term.value == 0.0:
            continue
        total = add(total, term) if _perm_sign(p) > 0 else add(total, neg(term))
    return simplify(total)


def symbolic_ortho_complement(rows: Sequence[Sequence[Expr]]) -> list[Expr]:
    """Expression-valued :func:`ortho_complement` (small n only)."""
    k = len(rows)
    n = k + 1
    if any(len(r) != n for r in rows):
        raise ValueError(f"expected {k} rows of length {n}")
    out = []
    for i in range(n):
        minor = [[r[j] for j in range(n) if j != i] for r in rows]
        d = symbolic_det(minor)
        out.append(d if i % 2 == 0 else simplify(neg(d)))
    return out


def numeric_field(exprs: Sequence[Expr], n: int) -> Callable[..., np.ndarray]:
    f = compile_vector(exprs, n)

    def field(t, x, gamma=0.0):
        return np.array(f(t, x, gamma), dtype=float)

    field.exprs = list(exprs)  # type: ignore[attr-defined]
    return field
