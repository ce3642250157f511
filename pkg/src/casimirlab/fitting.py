"""Damped Gauss-Newton (Levenberg-Marquardt) for small dense problems."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np


class FitError(RuntimeError):
    def __init__(self, message, best=None):
        super().__init__(message)
        self.best = best


class SingularJacobianError(FitError):
    pass


@dataclass
class LMResult:
    x: np.ndarray
    residual: np.ndarray
    jacobian: np.ndarray
    iterations: int
    gradient_norm: float
    converged: bool


def levenberg_marquardt(residual: Callable, jacobian: Callable, x0, *, gtol: float = 1e-10,
                        xtol: float = 1e-15, ftol: float = 1e-14, max_iter: int = 200, lam0: float = 1e-3,
                        cond_limit: float = 1e14) -> LMResult:
    """Minimise ``0.5 * |residual(x)|**2``.

    Stops when the scaled gradient ``|J^T r| / (|J| |r|)`` drops below
    ``gtol`` (the cosine between the residual and the Jacobian column space),
    when the residual vanishes, when an accepted step lowers the cost by less
    than ``ftol`` relative (the residual is at rounding level), or when the
    step is below ``xtol`` relative. Raises :class:`FitError` carrying the best
    iterate if ``max_iter`` is reached.
    """
    x = np.asarray(x0, dtype=float).copy()
    r = residual(x)
    cost = float(r @ r)
    lam = lam0
    J = jacobian(x)
    for it in range(1, max_iter + 1):
        g = J.T @ r
        A = J.T @ J
        col = np.sqrt(np.diag(A))
        rn = np.sqrt(cost)
        if np.any(col == 0):
            raise SingularJacobianError("Jacobian has a zero column", best=x)
        scaled_g = float(np.max(np.abs(g) / col)) / rn if rn > 0 else 0.0
        if rn == 0 or scaled_g <= gtol:
            return LMResult(x, r, J, it - 1, scaled_g, True)
        Ds = A / np.outer(col, col)
        if np.linalg.cond(Ds) > cond_limit:
            raise SingularJacobianError("normal matrix is singular (degenerate data)", best=x)
        while True:
            step = -np.linalg.solve(A + lam * np.diag(np.diag(A)), g)
            x_new = x + step
            r_new = residual(x_new)
            cost_new = float(r_new @ r_new)
            if np.isfinite(cost_new) and cost_new <= cost:
                lam = max(lam / 10.0, 1e-12)
                break
            lam *= 10.0
            if lam > 1e12:
                # no descent possible at machine precision
                return LMResult(x, r, J, it, scaled_g, scaled_g <= 1e3 * gtol)
        small_step = np.all(np.abs(step) <= xtol * (np.abs(x) + xtol)) or cost - cost_new <= ftol * cost
        x, r, cost = x_new, r_new, cost_new
        J = jacobian(x)
        if small_step:
            g = J.T @ r
            col = np.sqrt(np.diag(J.T @ J))
            rn = np.sqrt(cost)
            sg = float(np.max(np.abs(g) / col)) / rn if rn > 0 else 0.0
            return LMResult(x, r, J, it, sg, True)
    raise FitError(f"no convergence in {max_iter} iterations", best=x)
