"""Concave-convex procedure for the battery-aware training schedule.

Each outer step linearises the start-of-eclipse term ``v(d)`` at the current DoD
vector and solves the remaining convex program with the interior-point solver.
After every step the charges are re-derived from the training times by the
forward battery recursion, which never raises the objective and keeps the relaxed
charge constraint tight.

When the objective is nearly flat along the path to the optimum (batteries that
never refill, so start- and end-of-eclipse curvatures almost cancel) plain steps
creep. With ``accelerate`` set, each step is followed by a line search along the
step direction that only accepts points with lower objective.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
from scipy import optimize

from ..energy import BatteryTrajectory, Schedule, horizon_cycle_cost, simulate_battery
from ..errors import BatteryDepletedError, InfeasibleBudgetError, SunlightDeficitError, InnerSolverError, NonConvergenceError
from .ipm import IpmResult, solve_convex, solve_convex_slsqp
from .problem import (
    BLOCK_NAMES,
    D,
    D_HAT,
    ProblemInstance,
    ScaledForm,
    objective,
    pack,
    phi,
    phi_prime,
    phi_second,
    relaxation_gap,
    repair_schedule,
    scaled_form,
    unpack,
)

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class CcpSettings:
    epsilon: float = 1e-6
    lam: float = 0.0
    max_iterations: int = 200
    inner_tol: float = 1e-8
    inner_max_iter: int = 100
    inner: str = "ipm"  # "ipm" or "slsqp"
    accelerate: bool = True

    def __post_init__(self):
        if not self.epsilon > 0:
            raise ValueError("CcpSettings: epsilon must be > 0")
        if not self.lam >= 0:
            raise ValueError("CcpSettings: lambda must be >= 0")
        if self.max_iterations < 1:
            raise ValueError("CcpSettings: max_iterations must be >= 1")
        if self.inner not in ("ipm", "slsqp"):
            raise ValueError(f"CcpSettings: unknown inner solver {self.inner!r}")


@dataclass
class CcpIterate:
    tau_s: np.ndarray
    tau_e: np.ndarray
    b_e: np.ndarray
    b_s_next: np.ndarray
    d_e: np.ndarray
    d_hat_e: np.ndarray
    objective_value: float
    surrogate_value: float = float("nan")
    iteration: int = 0

    @property
    def x(self) -> np.ndarray:
        return np.concatenate([self.tau_s, self.tau_e, self.b_e, self.b_s_next, self.d_e, self.d_hat_e])

    @property
    def schedule(self) -> Schedule:
        return Schedule(self.tau_s.copy(), self.tau_e.copy())


@dataclass
class CcpDiagnostics:
    objective_trace: list[float] = field(default_factory=list)
    surrogate_trace: list[float] = field(default_factory=list)
    step_norms: list[float] = field(default_factory=list)
    kkt_trace: list[dict] = field(default_factory=list)
    relaxation_gap_trace: list[float] = field(default_factory=list)
    iterations: int = 0
    converged: bool = False
    stop_reason: str = ""
    active_constraints: list[str] = field(default_factory=list)
    smooth_cost: float = float("nan")
    accounting_cost: float = float("nan")
    inner_methods: list[str] = field(default_factory=list)

    def as_dict(self) -> dict:
        return {
            "objective_trace": self.objective_trace,
            "surrogate_trace": self.surrogate_trace,
            "step_norms": self.step_norms,
            "kkt_trace": self.kkt_trace,
            "relaxation_gap_trace_Wmin": self.relaxation_gap_trace,
            "iterations": self.iterations,
            "converged": self.converged,
            "stop_reason": self.stop_reason,
            "active_constraints": self.active_constraints,
            "smooth_cost": self.smooth_cost,
            "accounting_cost": self.accounting_cost,
            "inner_methods": self.inner_methods,
        }


def linearized_v_coefficient(d, a: float):
    """Slope of ``10**(a*(d-1))*d`` at ``d``: ``10**(a*(d-1)) * (1 + a*d*ln 10)``."""
    return phi_prime(d, a)


def iterate_from_schedule(inst: ProblemInstance, sched: Schedule, iteration: int = 0) -> CcpIterate:
    """Complete variable vector with charges from the forward recursion."""
    traj = simulate_battery(inst.timeline, inst.profile, inst.task, sched, inst.battery)
    return CcpIterate(
        sched.tau_s.copy(),
        sched.tau_e.copy(),
        traj.b_e,
        traj.b_s_next,
        traj.d_e,
        traj.d_hat_e,
        objective(traj.d_e, traj.d_hat_e, inst.a),
        iteration=iteration,
    )


def greedy_schedule(inst: ProblemInstance) -> Schedule:
    """Chronological sunlight fill, remainder spread over eclipses in proportion to length."""
    tau_s = np.zeros(inst.J)
    left = inst.T_c
    for j in range(inst.J):
        take = min(inst.cap_s[j], left)
        tau_s[j] = take
        left -= take
    tau_e = np.zeros(inst.J)
    total_e = float(np.sum(inst.cap_e))
    if left > 0 and total_e > 0:
        tau_e = np.minimum(left * inst.cap_e / total_e, inst.cap_e)
    return repair_schedule(inst, tau_s, tau_e, snap=0.0)


def feasible_init(inst: ProblemInstance) -> CcpIterate:
    """A point of the relaxed feasible set to start the procedure from.

    Uses the greedy schedule; if that drains the battery, falls back to the
    linear program that maximises the end-of-eclipse charges.
    """
    try:
        return iterate_from_schedule(inst, greedy_schedule(inst))
    except BatteryDepletedError:
        log.debug("greedy initial schedule depletes the battery; solving a feasibility LP")
    form = scaled_form(inst)
    J = inst.J
    c = np.zeros(form.n)
    c[form.slot(3, J)] = -1.0
    lp = optimize.linprog(c, A_ub=form.G, b_ub=form.h, A_eq=form.A, b_eq=form.b, bounds=(None, None), method="highs")
    if lp.status != 0:
        raise InfeasibleBudgetError(f"no schedule keeps the battery within bounds ({lp.message})")
    q = unpack(inst, lp.x)
    return iterate_from_schedule(inst, repair_schedule(inst, q["tau_s"], q["tau_e"]))


class _Surrogate:
    """``u(d_hat) - c.d (+ lam*||x - x_prev||^2)`` in scaled variables."""

    def __init__(self, inst: ProblemInstance, form: ScaledForm, coef: np.ndarray, lam: float, x_prev: np.ndarray):
        self.a = inst.a
        self.J = inst.J
        self.form = form
        self.coef = coef
        self.lam = lam
        self.x_prev = x_prev
        self.sd = form.slot(D, inst.J)
        self.sh = form.slot(D_HAT, inst.J)

    def fun(self, x):
        val = float(np.sum(phi(x[self.sh], self.a))) - float(self.coef @ x[self.sd])
        if self.lam:
            diff = x - self.x_prev
            val += self.lam * float(diff @ diff)
        return val

    def grad(self, x):
        g = np.zeros_like(x)
        g[self.sh] = phi_prime(x[self.sh], self.a)
        g[self.sd] = -self.coef
        if self.lam:
            g += 2.0 * self.lam * (x - self.x_prev)
        return g

    def hess(self, x):
        diag = np.zeros_like(x)
        diag[self.sh] = phi_second(x[self.sh], self.a)
        if self.lam:
            diag += 2.0 * self.lam
        return np.diag(diag)


def solve_surrogate(
    inst: ProblemInstance,
    d_prev,
    settings: CcpSettings = CcpSettings(),
    x_start: CcpIterate | None = None,
    form: ScaledForm | None = None,
) -> tuple[CcpIterate, IpmResult]:
    """Minimise the convex surrogate linearised at ``d_prev`` over the relaxed set.

    The raw solver point is returned (charges are not re-derived), together with
    the solver result carrying the KKT residuals. With ``lam > 0`` the proximal
    term is centred on ``x_start``.
    """
    form = form or scaled_form(inst)
    if x_start is None:
        x_start = feasible_init(inst)
    x0 = pack(inst, x_start.tau_s, x_start.tau_e, x_start.b_e, x_start.b_s_next)
    coef = linearized_v_coefficient(np.asarray(d_prev, dtype=float), inst.a)
    sur = _Surrogate(inst, form, coef, settings.lam, x0)
    if settings.inner == "ipm":
        try:
            res = solve_convex(
                sur.fun, sur.grad, sur.hess, form.A, form.b, form.G, form.h, x0,
                tol=settings.inner_tol, max_iter=settings.inner_max_iter,
            )
        except InnerSolverError as exc:
            log.warning("interior point failed (%s); retrying with SLSQP", exc)
            res = solve_convex_slsqp(sur.fun, sur.grad, form.A, form.b, form.G, form.h, x0)
    else:
        res = solve_convex_slsqp(sur.fun, sur.grad, form.A, form.b, form.G, form.h, x0)
    q = unpack(inst, res.x)
    it = CcpIterate(
        q["tau_s"], q["tau_e"], q["b_e"], q["b_s_next"], q["d_e"], q["d_hat_e"],
        objective(q["d_e"], q["d_hat_e"], inst.a),
        surrogate_value=sur.fun(res.x),
        iteration=x_start.iteration + 1,
    )
    return it, res


def _boost(inst: ProblemInstance, old: CcpIterate, new: CcpIterate, t_init: float) -> tuple[CcpIterate, float]:
    """Extrapolate ``new + t*(new - old)`` in training times while the objective keeps falling."""
    tau = np.concatenate([new.tau_s, new.tau_e])
    caps = np.concatenate([inst.cap_s, inst.cap_e])
    direction = tau - np.concatenate([old.tau_s, old.tau_e])
    # drop components pushing into a bound the point already sits on
    tol = 1e-7 * inst.tscale
    blocked = ((caps - tau <= tol) & (direction > 0)) | ((tau <= tol) & (direction < 0)) | (np.abs(direction) <= 1e-3 * tol)
    direction[blocked] = 0.0
    norm2 = float(direction @ direction) / inst.tscale**2
    if norm2 < 1e-24:
        return new, 0.0
    with np.errstate(divide="ignore", invalid="ignore"):
        up = np.where(direction > 0, (caps - tau) / direction, np.inf)
        down = np.where(direction < 0, -tau / direction, np.inf)
    t_max = float(min(np.min(up), np.min(down)))
    t = min(t_init, t_max)
    J = inst.J
    for _ in range(40):
        if t <= 1e-12:
            break
        trial = tau + t * direction
        try:
            cand = iterate_from_schedule(inst, repair_schedule(inst, trial[:J], trial[J:]), new.iteration)
        except (BatteryDepletedError, SunlightDeficitError):
            cand = None
        if cand is not None and cand.objective_value < new.objective_value - 1e-6 * t * t * norm2:
            return cand, t
        t *= 0.5
    return new, 0.0


def surrogate_value(inst: ProblemInstance, it: CcpIterate, d_prev) -> float:
    coef = linearized_v_coefficient(np.asarray(d_prev, dtype=float), inst.a)
    return float(np.sum(phi(it.d_hat_e, inst.a)) - coef @ it.d_e)


def active_constraints(inst: ProblemInstance, it: CcpIterate, tol: float = 1e-7) -> list[str]:
    out = []
    B = inst.battery.B_max
    for j in range(inst.J):
        k = j + 1
        for name, val, cap in (("tau_s", it.tau_s[j], inst.cap_s[j]), ("tau_e", it.tau_e[j], inst.cap_e[j])):
            if cap > 0 and val <= tol * inst.tscale:
                out.append(f"{name}[{k}]=0")
            elif val >= cap - tol * inst.tscale:
                out.append(f"{name}[{k}]=cap")
        if it.b_e[j] >= B * (1 - tol):
            out.append(f"b_e[{k}]=B_max")
        if it.b_s_next[j] <= B * tol:
            out.append(f"b_s_next[{k}]=0")
    gap = relaxation_gap(inst, it.tau_s, it.b_e, it.b_s_next)
    out.extend(f"relax[{j + 1}]=tight" for j in np.nonzero(np.abs(gap) <= tol * B)[0])
    return out


def ccp_solve(
    inst: ProblemInstance, settings: CcpSettings = CcpSettings()
) -> tuple[Schedule, BatteryTrajectory, CcpDiagnostics]:
    """Run the concave-convex procedure to its stopping rule.

    With ``lam == 0`` the loop stops when the DoD vector moves by at most
    ``epsilon``; with ``lam > 0`` the whole (scaled) variable vector is tested.
    """
    diag = CcpDiagnostics()
    x = feasible_init(inst)
    diag.objective_trace.append(x.objective_value)

    if inst.is_tight:
        diag.converged = True
        diag.stop_reason = "unique feasible schedule"
    else:
        form = scaled_form(inst)
        t_boost = 1.0
        for l in range(1, settings.max_iterations + 1):
            raw, res = solve_surrogate(inst, x.d_e, settings, x_start=x, form=form)
            diag.kkt_trace.append(res.kkt.as_dict())
            diag.inner_methods.append(res.method)
            gap = relaxation_gap(inst, raw.tau_s, raw.b_e, raw.b_s_next)
            diag.relaxation_gap_trace.append(float(np.max(np.abs(gap))))

            sched = repair_schedule(inst, raw.tau_s, raw.tau_e)
            cand = iterate_from_schedule(inst, sched, iteration=l)
            cand.surrogate_value = surrogate_value(inst, cand, x.d_e)
            if cand.objective_value > x.objective_value:
                # numerical noise only: the current point already solves the surrogate
                diag.iterations = l
                diag.converged = True
                diag.stop_reason = "no further decrease"
                break
            if settings.accelerate:
                cand, t = _boost(inst, x, cand, max(1.0, 4.0 * t_boost))
                t_boost = t if t > 0 else 1.0

            if settings.lam > 0:
                step = float(np.linalg.norm(
                    pack(inst, cand.tau_s, cand.tau_e, cand.b_e, cand.b_s_next)
                    - pack(inst, x.tau_s, x.tau_e, x.b_e, x.b_s_next)
                ))
            else:
                step = float(np.linalg.norm(cand.d_e - x.d_e))
            x = cand
            diag.objective_trace.append(x.objective_value)
            diag.surrogate_trace.append(x.surrogate_value)
            diag.step_norms.append(step)
            diag.iterations = l
            if step <= settings.epsilon:
                diag.converged = True
                diag.stop_reason = "step below epsilon"
                break
        else:
            diag.stop_reason = "max iterations"
            raise NonConvergenceError(
                f"concave-convex procedure did not converge in {settings.max_iterations} iterations",
                diagnostics=diag,
            )
        log.debug("ccp: %d iterations, f=%.6g, %s", diag.iterations, x.objective_value, diag.stop_reason)

    sched = x.schedule
    traj = simulate_battery(inst.timeline, inst.profile, inst.task, sched, inst.battery)
    diag.active_constraints = active_constraints(inst, x)
    diag.smooth_cost = objective(traj.d_e, traj.d_hat_e, inst.a)
    diag.accounting_cost = horizon_cycle_cost(traj, inst.a)
    if abs(diag.smooth_cost - diag.accounting_cost) > 1e-12:
        log.info("smooth objective %.12g differs from guarded cost %.12g", diag.smooth_cost, diag.accounting_cost)
    return sched, traj, diag


__all__ = [
    "BLOCK_NAMES",
    "CcpDiagnostics",
    "CcpIterate",
    "CcpSettings",
    "ccp_solve",
    "feasible_init",
    "greedy_schedule",
    "iterate_from_schedule",
    "linearized_v_coefficient",
    "solve_surrogate",
]
