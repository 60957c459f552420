"""Monotone FISTA with backtracking for ``min ||A x - b||^2 + lam * P(x)``."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from ..core import NumericalError


class ReconDivergenceError(NumericalError):
    """Backtracking could not restore sufficient decrease."""

    def __init__(self, message: str, costs):
        super().__init__(message)
        self.costs = list(costs)


@dataclass
class FistaResult:
    x: np.ndarray
    costs: list = field(default_factory=list)
    iterations: int = 0
    converged: bool = False
    lipschitz: float = 0.0


def _sq(r: np.ndarray) -> float:
    return float(np.vdot(r, r).real)


def fista_ls(
    A: Callable[[np.ndarray], np.ndarray],
    AH: Callable[[np.ndarray], np.ndarray],
    b: np.ndarray,
    x0: np.ndarray,
    prox: Callable[[np.ndarray, float], np.ndarray],
    penalty: Callable[[np.ndarray], float],
    lam: float,
    lipschitz: float,
    max_iter: int = 30,
    tol: float = 0.0,
    eta: float = 2.0,
    max_backtracks: int = 40,
    slack: float = 1e-9,
) -> FistaResult:
    """Run ``max_iter`` proximal-gradient steps with Nesterov momentum.

    The iterate only moves when the objective does not increase (the
    monotone variant), so ``costs`` is non-increasing. ``lipschitz`` is
    the initial guess for the gradient's Lipschitz constant; it grows by
    ``eta`` whenever the sufficient-decrease test fails. Stops early once
    an accepted step changes the cost by less than ``tol`` relatively.
    """
    L = float(lipschitz)
    x = np.array(x0, dtype=np.complex128)
    Ax = A(x)
    cost = _sq(Ax - b) + (lam * penalty(x) if lam > 0 else 0.0)
    if not np.isfinite(cost):
        raise ReconDivergenceError("non-finite initial cost", [cost])
    costs = [cost]
    y, Ay = x, Ax
    t = 1.0
    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        ry = Ay - b
        fy = _sq(ry)
        g = 2.0 * AH(ry)
        for _ in range(max_backtracks):
            z = prox(y - g / L, lam / L)
            Az = A(z)
            fz = _sq(Az - b)
            d = z - y
            bound = fy + float(np.vdot(g, d).real) + 0.5 * L * _sq(d)
            if fz <= bound + slack * max(1.0, abs(fy)):
                break
            L *= eta
        else:
            raise ReconDivergenceError(
                f"backtracking exhausted at iteration {it} (L={L:.3g})", costs)
        cz = fz + (lam * penalty(z) if lam > 0 else 0.0)
        if not np.isfinite(cz):
            raise ReconDivergenceError(f"non-finite cost at iteration {it}", costs)
        accepted = cz <= cost
        if accepted:
            x_new, Ax_new, c_new = z, Az, cz
        else:
            x_new, Ax_new, c_new = x, Ax, cost
        t_new = 0.5 * (1.0 + np.sqrt(1.0 + 4.0 * t * t))
        a, c = t / t_new, (t - 1.0) / t_new
        y = x_new + a * (z - x_new) + c * (x_new - x)
        Ay = Ax_new + a * (Az - Ax_new) + c * (Ax_new - Ax)
        rel = (cost - c_new) / cost if cost > 0 else 0.0
        x, Ax, cost, t = x_new, Ax_new, c_new, t_new
        costs.append(cost)
        if accepted and tol > 0 and rel < tol:
            converged = True
            break
        if cost == 0.0:
            converged = True
            break
    return FistaResult(x=x, costs=costs, iterations=it, converged=converged, lipschitz=L)
