"""Dense primal-dual interior-point method for smooth convex objectives.

Solves ``min f(x)  s.t.  A x = b,  G x <= h`` with Mehrotra predictor-corrector
steps. Sized for problems with at most a few hundred variables.
"""

from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy import linalg, optimize

from ..errors import InnerSolverError

log = logging.getLogger(__name__)


@dataclass
class KktResidual:
    stationarity: float
    primal_eq: float
    primal_ineq: float
    complementarity: float
    dual_infeas: float

    @property
    def worst(self) -> float:
        return max(self.stationarity, self.primal_eq, self.primal_ineq, self.complementarity, self.dual_infeas)

    def as_dict(self) -> dict[str, float]:
        return {
            "stationarity": self.stationarity,
            "primal_eq": self.primal_eq,
            "primal_ineq": self.primal_ineq,
            "complementarity": self.complementarity,
            "dual_infeas": self.dual_infeas,
        }


@dataclass
class IpmResult:
    x: np.ndarray
    y: np.ndarray
    z: np.ndarray
    iterations: int
    kkt: KktResidual
    converged: bool
    method: str = "ipm"


def kkt_residual(grad, A, b, G, h, x, y, z) -> KktResidual:
    """Scaled KKT residuals measured at the true slack ``h - G x``."""
    g = grad(x)
    r_d = g + A.T @ y + G.T @ z
    slack = h - G @ x
    scale_d = 1.0 + np.max(np.abs(g), initial=0.0)
    return KktResidual(
        stationarity=float(np.max(np.abs(r_d), initial=0.0) / scale_d),
        primal_eq=float(np.max(np.abs(A @ x - b), initial=0.0) / (1.0 + np.max(np.abs(b), initial=0.0))),
        primal_ineq=float(np.max(np.maximum(-slack, 0.0), initial=0.0) / (1.0 + np.max(np.abs(h), initial=0.0))),
        complementarity=float(np.max(np.abs(z * np.maximum(slack, 0.0)), initial=0.0) / scale_d),
        dual_infeas=float(np.max(np.maximum(-z, 0.0), initial=0.0)),
    )


def _max_step(v: np.ndarray, dv: np.ndarray) -> float:
    neg = dv < 0
    if not np.any(neg):
        return 1.0
    return float(min(1.0, np.min(-v[neg] / dv[neg])))


def solve_convex(
    fun: Callable[[np.ndarray], float],
    grad: Callable[[np.ndarray], np.ndarray],
    hess: Callable[[np.ndarray], np.ndarray],
    A: np.ndarray,
    b: np.ndarray,
    G: np.ndarray,
    h: np.ndarray,
    x0: np.ndarray,
    tol: float = 1e-9,
    max_iter: int = 100,
) -> IpmResult:
    """Primal-dual interior point from a (possibly infeasible) start ``x0``.

    Raises :class:`InnerSolverError` with the best iterate attached if the scaled
    KKT residual does not fall below ``tol`` within ``max_iter`` iterations.
    """
    n = x0.size
    me, m = A.shape[0], G.shape[0]
    x = x0.astype(float).copy()
    s = np.maximum(h - G @ x, 1e-2)
    z = np.ones(m)
    y = np.zeros(me)
    reg = 1e-12
    best = None

    def newton(H, D, r_d, r_p, r_i, r_c):
        K = np.zeros((n + me, n + me))
        K[:n, :n] = H + G.T @ (D[:, None] * G) + reg * np.eye(n)
        K[:n, n:] = A.T
        K[n:, :n] = A
        K[n:, n:] = -reg * np.eye(me)
        rhs = np.concatenate([-r_d + G.T @ ((r_c - z * r_i) / s), -r_p])
        try:
            with warnings.catch_warnings():
                # the KKT matrix is expected to become ill-conditioned as slacks vanish
                warnings.simplefilter("ignore", linalg.LinAlgWarning)
                sol = linalg.solve(K, rhs, assume_a="sym", check_finite=False)
        except (linalg.LinAlgError, ValueError):
            sol = np.linalg.lstsq(K, rhs, rcond=None)[0]
        dx, dy = sol[:n], sol[n:]
        dz = (-r_c + z * r_i + z * (G @ dx)) / s
        ds = -r_i - G @ dx
        return dx, dy, dz, ds

    for it in range(max_iter + 1):
        g = grad(x)
        r_d = g + A.T @ y + G.T @ z
        r_p = A @ x - b
        r_i = G @ x + s - h
        mu = float(s @ z) / m if m else 0.0
        res = kkt_residual(grad, A, b, G, h, x, y, z)
        if best is None or res.worst < best.kkt.worst:
            best = IpmResult(x.copy(), y.copy(), z.copy(), it, res, False)
        if res.worst <= tol and mu <= tol:
            return IpmResult(x, y, z, it, res, True)
        if it == max_iter:
            break

        H = hess(x)
        D = z / s
        # predictor
        dx, dy, dz, ds = newton(H, D, r_d, r_p, r_i, s * z)
        alpha = min(_max_step(s, ds), _max_step(z, dz))
        mu_aff = float((s + alpha * ds) @ (z + alpha * dz)) / m if m else 0.0
        sigma = (mu_aff / mu) ** 3 if mu > 0 else 0.0
        # corrector
        r_c = s * z + ds * dz - sigma * mu
        dx, dy, dz, ds = newton(H, D, r_d, r_p, r_i, r_c)
        alpha = min(1.0, 0.995 * min(_max_step(s, ds), _max_step(z, dz)))
        x = x + alpha * dx
        y = y + alpha * dy
        z = z + alpha * dz
        s = s + alpha * ds
        if not (np.all(np.isfinite(x)) and np.all(np.isfinite(z))):
            break

    raise InnerSolverError(
        f"interior point did not converge in {max_iter} iterations (KKT {best.kkt.worst:.3e})", best=best
    )


def solve_convex_slsqp(
    fun: Callable[[np.ndarray], float],
    grad: Callable[[np.ndarray], np.ndarray],
    A: np.ndarray,
    b: np.ndarray,
    G: np.ndarray,
    h: np.ndarray,
    x0: np.ndarray,
    tol: float = 1e-12,
    max_iter: int = 500,
) -> IpmResult:
    """Fallback path through scipy's SLSQP; multipliers are recovered by NNLS."""
    cons = [
        {"type": "eq", "fun": lambda x: A @ x - b, "jac": lambda x: A},
        {"type": "ineq", "fun": lambda x: h - G @ x, "jac": lambda x: -G},
    ]
    out = optimize.minimize(
        fun, x0, jac=grad, constraints=cons, method="SLSQP", options={"ftol": tol, "maxiter": max_iter}
    )
    x = out.x
    y, z = _recover_multipliers(grad(x), A, G, h, x)
    res = kkt_residual(grad, A, b, G, h, x, y, z)
    if not out.success:
        raise InnerSolverError(f"SLSQP failed: {out.message}", best=IpmResult(x, y, z, out.nit, res, False, "slsqp"))
    return IpmResult(x, y, z, int(out.nit), res, True, "slsqp")


def _recover_multipliers(g, A, G, h, x, active_tol: float = 1e-8):
    """Least-squares multipliers with ``z >= 0`` on the active inequalities."""
    slack = h - G @ x
    act = np.nonzero(slack <= active_tol * (1.0 + np.abs(h)))[0]
    me = A.shape[0]
    # y is free: split into y+ - y-
    M = np.hstack([A.T, -A.T, G[act].T])
    coef, _ = optimize.nnls(M, -g)
    y = coef[:me] - coef[me:2 * me]
    z = np.zeros(G.shape[0])
    z[act] = coef[2 * me:]
    return y, z
