"""Explicit Runge-Kutta integrators for the small autonomous systems used here."""

from __future__ import annotations

from typing import Callable

import numpy as np

__all__ = ["StepSizeError", "integrate_adaptive", "rk4_step"]

# Dormand-Prince 5(4) tableau
_C = np.array([0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0, 1.0])
_A = [
    [],
    [1 / 5],
    [3 / 40, 9 / 40],
    [44 / 45, -56 / 15, 32 / 9],
    [19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729],
    [9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656],
    [35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84],
]
_A = [np.array(row) for row in _A]
_B5 = np.array([35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84, 0.0])
_B4 = np.array([5179 / 57600, 0.0, 7571 / 16695, 393 / 640, -92097 / 339200, 187 / 2100, 1 / 40])
_E = _B5 - _B4


class StepSizeError(RuntimeError):
    def __init__(self, at: float, h: float):
        self.at = at
        self.h = h
        super().__init__(f"step size underflow (h={h:.3g}) at s={at!r}")


def integrate_adaptive(
    rhs: Callable[[np.ndarray], np.ndarray],
    y0,
    s_end: float,
    rtol: float = 1e-10,
    atol: float = 1e-12,
    max_steps: int = 100_000,
) -> np.ndarray:
    """Integrate ``dy/ds = rhs(y)`` from ``s=0`` to ``s_end`` (either sign).

    Dormand-Prince 5(4) with local extrapolation and first-same-as-last reuse.
    """
    y = np.array(y0, dtype=float)
    if s_end == 0.0:
        return y
    direction = 1.0 if s_end > 0 else -1.0
    span = abs(s_end)
    s = 0.0
    k1 = np.asarray(rhs(y), dtype=float)
    scale = atol + rtol * np.abs(y)
    d0 = np.max(np.abs(y) / scale)
    d1 = np.max(np.abs(k1) / scale)
    h = 0.01 * d0 / d1 if d0 > 1e-5 and d1 > 1e-5 else 1e-6
    h = min(h, span, 0.1)
    ks = np.empty((7, y.size))
    for _ in range(max_steps):
        if s >= span:
            return y
        last = h >= span - s
        if last:
            h = span - s
        hs = direction * h
        ks[0] = k1
        try:
            for i in range(1, 7):
                ks[i] = rhs(y + hs * (_A[i] @ ks[:i]))
        except (ArithmeticError, ValueError):
            # a trial stage left the domain of the right-hand side: shrink
            err = np.inf
        else:
            y_new = y + hs * (_B5 @ ks)
            err_vec = hs * (_E @ ks)
            sc = atol + rtol * np.maximum(np.abs(y), np.abs(y_new))
            err = np.max(np.abs(err_vec) / sc)
            if not np.isfinite(err):
                err = np.inf
        if err <= 1.0:
            s = span if last else s + h
            y = y_new
            k1 = ks[6].copy()
            factor = 5.0 if err == 0.0 else min(5.0, 0.9 * err ** -0.2)
            h *= max(1.0, factor)
        else:
            h *= max(0.1, 0.9 * err ** -0.2) if np.isfinite(err) else 0.1
            if h < 1e-14 * span:
                raise StepSizeError(direction * s, h)
    raise StepSizeError(direction * s, h)


def rk4_step(f: Callable[[float, np.ndarray], np.ndarray], t: float, x: np.ndarray, h: float) -> np.ndarray:
    """One classical fourth-order Runge-Kutta step of ``dx/dt = f(t, x)``."""
    k1 = f(t, x)
    k2 = f(t + h / 2, x + h / 2 * k1)
    k3 = f(t + h / 2, x + h / 2 * k2)
    k4 = f(t + h, x + h * k3)
    return x + h / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
