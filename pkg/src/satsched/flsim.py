"""Synchronous federated learning over a satellite constellation.

The horizon is cut into equal slots, one global round each. A satellite takes part
in a round when its ground-station contacts inside the slot leave room for the
whole training time between receiving the model and sending it back. Participants
schedule their training (battery-aware or contiguous), train a small logistic
regression model locally and the parameter server averages the returned models.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from .energy import (
    BatterySpec,
    BatteryTrajectory,
    EnergyProfile,
    Schedule,
    TrainingTask,
    horizon_cycle_cost,
    simulate_battery,
)
from .errors import (
    BatteryDepletedError,
    DomainError,
    InconsistentLengthsError,
    InfeasibleBudgetError,
    NonConvergenceError,
    SatSchedError,
    SunlightDeficitError,
    TrainingError,
)
from .orbital import SunEclipseTimeline
from .scheduler.baseline import energy_agnostic_schedule
from .scheduler.ccp import CcpSettings, ccp_solve
from .scheduler.problem import build_problem

log = logging.getLogger(__name__)

AWARE = "aware"
AGNOSTIC = "agnostic"
MODES = (AWARE, AGNOSTIC)
NORMALIZATIONS = ("total", "participating")
CHECKPOINT_MAGIC = "satsched-model"
CHECKPOINT_VERSION = 1


@dataclass(frozen=True)
class FlConfig:
    horizon_s: float = 96 * 3600.0
    num_slots: int = 50
    local_epochs: int = 1
    batch_size: int = 32
    learning_rate: float = 0.1
    normalization: str = "total"
    scaled_return: bool = False  # ship D_k * w_k as in the satellite procedure

    def __post_init__(self):
        if not self.horizon_s > 0:
            raise DomainError(f"FlConfig: horizon must be > 0, got {self.horizon_s}")
        if self.num_slots < 1:
            raise DomainError(f"FlConfig: num_slots must be >= 1, got {self.num_slots}")
        if self.local_epochs < 1:
            raise DomainError(f"FlConfig: local_epochs must be >= 1, got {self.local_epochs}")
        if self.batch_size < 1:
            raise DomainError(f"FlConfig: batch_size must be >= 1, got {self.batch_size}")
        if not (self.learning_rate > 0 and math.isfinite(self.learning_rate)):
            raise DomainError(f"FlConfig: learning_rate must be > 0, got {self.learning_rate}")
        if self.normalization not in NORMALIZATIONS:
            raise DomainError(f"FlConfig: normalization must be one of {NORMALIZATIONS}")


@dataclass(frozen=True)
class LocalDataset:
    """Features ``x`` (D_k x d) and labels ``y`` in {-1, +1}."""

    x: np.ndarray
    y: np.ndarray

    def __post_init__(self):
        x = np.atleast_2d(np.asarray(self.x, dtype=float))
        y = np.asarray(self.y, dtype=float).reshape(-1)
        if x.shape[0] == 0:
            raise DomainError("LocalDataset: needs at least one sample")
        if x.shape[0] != y.shape[0]:
            raise InconsistentLengthsError(f"LocalDataset: {x.shape[0]} feature rows vs {y.shape[0]} labels")
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "y", y)

    @property
    def size(self) -> int:
        return int(self.y.shape[0])

    @property
    def dim(self) -> int:
        return int(self.x.shape[1])


@dataclass(frozen=True)
class ModelState:
    w: np.ndarray

    def __post_init__(self):
        w = np.asarray(self.w, dtype=float).reshape(-1)
        if not np.all(np.isfinite(w)):
            raise DomainError("ModelState: parameters must be finite")
        object.__setattr__(self, "w", w)

    @property
    def dim(self) -> int:
        return int(self.w.size)

    @classmethod
    def zeros(cls, d: int) -> "ModelState":
        return cls(np.zeros(d))


# ---------------------------------------------------------------- losses


@dataclass(frozen=True)
class Loss:
    name: str
    value: Callable[[np.ndarray, np.ndarray, np.ndarray], np.ndarray]  # per-sample losses
    grad: Callable[[np.ndarray, np.ndarray, np.ndarray], np.ndarray]  # summed gradient


def _logistic_value(w, x, y):
    return np.logaddexp(0.0, -y * (x @ w))


def _logistic_grad(w, x, y):
    m = y * (x @ w)
    # d/dm log(1 + e^-m) = -1 / (1 + e^m), evaluated without overflow
    coef = -y * np.exp(-np.logaddexp(0.0, m))
    return x.T @ coef


def _squared_value(w, x, y):
    return 0.5 * (x @ w - y) ** 2


def _squared_grad(w, x, y):
    return x.T @ (x @ w - y)


LOGISTIC = Loss("logistic", _logistic_value, _logistic_grad)
SQUARED = Loss("squared", _squared_value, _squared_grad)


def mean_loss(w, data: LocalDataset, loss: Loss = LOGISTIC) -> float:
    return float(np.mean(loss.value(np.asarray(w, dtype=float), data.x, data.y)))


def global_loss(model: ModelState, datasets: Sequence[LocalDataset], loss: Loss = LOGISTIC) -> float:
    """Training loss over the union of all local datasets."""
    total = sum(float(np.sum(loss.value(model.w, ds.x, ds.y))) for ds in datasets)
    return total / sum(ds.size for ds in datasets)


def toy_datasets(
    num_satellites: int,
    seed: int,
    dim: int = 20,
    size_range: tuple[int, int] = (200, 1000),
    separation: float = 1.5,
) -> list[LocalDataset]:
    """Two Gaussian clusters at ``±mu`` with unit covariance, split across satellites.

    ``|mu| = separation``, so the Bayes classifier passes through the origin and a
    linear model without bias is adequate.
    """
    if num_satellites < 1:
        raise DomainError("toy_datasets: need at least one satellite")
    lo, hi = size_range
    if not 1 <= lo <= hi:
        raise DomainError(f"toy_datasets: bad size range {size_range}")
    root = np.random.SeedSequence([int(seed), 0xDA7A])
    rng_mu, *rngs = [np.random.default_rng(s) for s in root.spawn(num_satellites + 1)]
    mu = rng_mu.normal(size=dim)
    mu *= separation / np.linalg.norm(mu)
    out = []
    for rng in rngs:
        n = int(rng.integers(lo, hi + 1))
        y = np.where(rng.random(n) < 0.5, -1.0, 1.0)
        x = y[:, None] * mu[None, :] + rng.normal(size=(n, dim))
        out.append(LocalDataset(x, y))
    return out


# ---------------------------------------------------------------- learning


def local_train(
    w_global: ModelState,
    data: LocalDataset,
    epochs: int,
    batch_size: int,
    learning_rate: float,
    seed,
    loss: Loss = LOGISTIC,
    scaled_return: bool = False,
) -> np.ndarray:
    """Mini-batch gradient descent from the global model.

    Each epoch reshuffles the data and walks it in batches of ``batch_size`` (the
    last one may be shorter), stepping by ``learning_rate / |batch|`` times the
    summed gradient. Returns ``w`` or, with ``scaled_return``, ``D_k * w``.
    """
    if epochs < 1 or batch_size < 1:
        raise DomainError("local_train: epochs and batch_size must be >= 1")
    if not learning_rate >= 0:
        raise DomainError("local_train: learning_rate must be >= 0")
    if w_global.dim != data.dim:
        raise InconsistentLengthsError(f"local_train: model has {w_global.dim} parameters, data {data.dim} features")
    rng = np.random.default_rng(seed)
    w = w_global.w.copy()
    n = data.size
    for epoch in range(epochs):
        order = rng.permutation(n)
        for start in range(0, n, batch_size):
            idx = order[start:start + batch_size]
            g = loss.grad(w, data.x[idx], data.y[idx])
            if not np.all(np.isfinite(g)):
                raise TrainingError(
                    "non-finite gradient",
                    {"epoch": epoch, "batch_start": start, "w_norm": float(np.linalg.norm(w))},
                )
            w = w - (learning_rate / idx.size) * g
    if not np.all(np.isfinite(w)):
        raise TrainingError("non-finite parameters after training", {"epochs": epochs})
    return data.size * w if scaled_return else w


def aggregate(
    models: Sequence[np.ndarray],
    alphas: Sequence[int],
    sizes: Sequence[int],
    prescaled: bool = False,
    normalization: str = "total",
    dim: int | None = None,
) -> ModelState:
    """``sum_k alpha_k * D_k / D * w_k``.

    ``D`` is the data held by the whole fleet (``normalization="total"``) or only by
    the participants (``"participating"``). With ``prescaled`` the entries are
    already ``D_k * w_k``. Non-participants may pass ``None``; ``dim`` sizes the
    zero result when nobody participates.
    """
    if not len(models) == len(alphas) == len(sizes):
        raise InconsistentLengthsError("aggregate: models, alphas and sizes differ in length")
    if normalization not in NORMALIZATIONS:
        raise DomainError(f"aggregate: unknown normalization {normalization!r}")
    dims = {np.asarray(m).size for m, a in zip(models, alphas) if a and m is not None}
    if len(dims) > 1:
        raise InconsistentLengthsError(f"aggregate: participant models have dimensions {sorted(dims)}")
    if any(a not in (0, 1) for a in alphas):
        raise DomainError("aggregate: participation flags must be 0 or 1")
    if any(a and m is None for m, a in zip(models, alphas)):
        raise DomainError("aggregate: a participant did not supply a model")
    sizes = [int(s) for s in sizes]
    if normalization == "total":
        D = sum(sizes)
    else:
        D = sum(s for s, a in zip(sizes, alphas) if a)
    if dims and dim is not None and dims != {dim}:
        raise InconsistentLengthsError(f"aggregate: models have dimension {dims.pop()}, expected {dim}")
    if dim is None:
        dim = dims.pop() if dims else max((np.asarray(m).size for m in models if m is not None), default=0)
    acc = np.zeros(dim)
    if D == 0:
        return ModelState(acc)
    # fixed order keeps the reduction independent of arrival order
    for m, a, s in zip(models, alphas, sizes):
        if a:
            m = np.asarray(m, dtype=float)
            acc += m / D if prescaled else (s / D) * m
    return ModelState(acc)


# ---------------------------------------------------------------- slots and participation


def partition_slots(t0: float, t1: float, num_slots: int) -> list[tuple[float, float]]:
    """``num_slots`` equal back-to-back slots covering ``[t0, t1]`` exactly."""
    if num_slots < 1:
        raise DomainError(f"partition_slots: need at least one slot, got {num_slots}")
    if not t1 > t0:
        raise DomainError(f"partition_slots: empty horizon [{t0}, {t1}]")
    edges = t0 + (t1 - t0) * np.arange(num_slots + 1) / num_slots
    edges[-1] = t1
    return [(float(a), float(b)) for a, b in zip(edges[:-1], edges[1:])]


def participation(
    slot: tuple[float, float], contacts: Sequence[tuple[float, float]], tc_min: float
) -> tuple[float, float] | None:
    """Earliest receive and latest return instant inside the slot, or None.

    ``contacts`` are the merged visibility windows towards any station. Since both
    stations share the parameter-server state, the model can be received at the
    first contact instant and returned at the last one.
    """
    a, b = slot
    inside = [(max(s, a), min(e, b)) for s, e in contacts if e >= a and s <= b]
    if not inside:
        return None
    r = inside[0][0]
    q = inside[-1][1]
    if q - r >= 60.0 * tc_min:
        return r, q
    return None


# ---------------------------------------------------------------- per-satellite state


ProfilePolicy = Callable[[SunEclipseTimeline, BatterySpec, TrainingTask], EnergyProfile]


@dataclass
class SatelliteState:
    """What the simulation tracks for one satellite between rounds."""

    sat_id: str
    timeline: SunEclipseTimeline  # sunlight/eclipse pattern over the whole horizon
    contacts: list[tuple[float, float]]  # merged ground-station windows
    dataset: LocalDataset
    charge_Wmin: float
    clock_s: float  # time at which charge_Wmin holds


def advance_idle(
    state: SatelliteState, until: float, battery: BatterySpec, task: TrainingTask, policy: ProfilePolicy
) -> float:
    """Battery charge at ``until`` with no training since ``state.clock_s``."""
    if until <= state.clock_s:
        return state.charge_Wmin
    tl = state.timeline.restrict(state.clock_s, until)
    traj = simulate_battery(
        tl, policy(tl, battery, task), task, Schedule.zeros(tl.J), battery.with_initial_charge(state.charge_Wmin)
    )
    return float(traj.final_charge)


def brownout_schedule(inst, sched: Schedule) -> tuple[Schedule, bool]:
    """Cut a schedule where the battery would run dry; later training is dropped.

    Returns the truncated schedule and whether any cut was needed.
    """
    prof, P = inst.profile, inst.task.power_W
    B = inst.battery.B_max
    tau_s, tau_e = sched.tau_s.copy(), sched.tau_e.copy()
    b = inst.battery.B_0
    cut = False
    for j in range(inst.J):
        if cut:
            tau_s[j] = tau_e[j] = 0.0
        tau_s[j] = min(tau_s[j], max(0.0, (prof.harvest_sunlight[j] - prof.demand_sunlight[j]) / P))
        b = min(b + max(prof.harvest_sunlight[j] - prof.demand_sunlight[j] - P * tau_s[j], 0.0), B)
        room = max(0.0, (b - prof.demand_eclipse[j]) / P)
        if tau_e[j] > room:
            tau_e[j] = room
            cut = True
        b = max(b - prof.demand_eclipse[j] - P * tau_e[j], 0.0)
    return Schedule(tau_s, tau_e), cut or not math.isclose(tau_s.sum() + tau_e.sum(), sched.total, abs_tol=1e-9)


@dataclass
class SatelliteRound:
    sat_id: str
    participates: bool
    receive_s: float = float("nan")
    deadline_s: float = float("nan")
    status: str = "idle"  # idle | ok | depleted | infeasible | failed
    schedule: Schedule | None = None
    window: SunEclipseTimeline | None = None
    trajectory: BatteryTrajectory | None = None
    cycle_cost: float = 0.0
    max_dod: float = 0.0
    diagnostics: dict = field(default_factory=dict)

    @property
    def contributes(self) -> bool:
        return self.status == "ok"


@dataclass
class RoundOutcome:
    slot: int
    start_s: float
    end_s: float
    mode: str
    tc_min: float
    satellites: list[SatelliteRound]
    model: ModelState
    loss: float
    flags: list[str] = field(default_factory=list)

    @property
    def alphas(self) -> list[int]:
        return [int(s.contributes) for s in self.satellites]


def _schedule_satellite(
    state: SatelliteState,
    rec: SatelliteRound,
    mode: str,
    battery: BatterySpec,
    task: TrainingTask,
    policy: ProfilePolicy,
    settings: CcpSettings,
) -> None:
    r, q = rec.receive_s, rec.deadline_s
    charge = advance_idle(state, r, battery, task, policy)
    state.charge_Wmin, state.clock_s = charge, r
    if q <= r:
        # a zero-length window only happens with T_c == 0
        rec.status = "ok"
        rec.schedule = Schedule.zeros(0)
        return
    tl = state.timeline.restrict(r, q)
    bat = battery.with_initial_charge(charge)
    inst = build_problem(tl, policy(tl, bat, task), task, bat)
    rec.window = tl
    if mode == AWARE:
        try:
            sched, traj, diag = ccp_solve(inst, settings)
        except InfeasibleBudgetError as exc:
            # the satellite cannot finish on this charge: it declines the round
            rec.status = "infeasible"
            rec.diagnostics = {"error": str(exc)}
            return
        rec.diagnostics = {"iterations": diag.iterations, "stop_reason": diag.stop_reason}
        status = "ok"
    else:
        sched = energy_agnostic_schedule(inst, start_time=r)
        try:
            traj = simulate_battery(tl, inst.profile, task, sched, bat)
            status = "ok"
        except (BatteryDepletedError, SunlightDeficitError) as exc:
            sched, _ = brownout_schedule(inst, sched)
            traj = simulate_battery(tl, inst.profile, task, sched, bat)
            status = "depleted"
            rec.diagnostics = {"error": str(exc)}
    rec.status = status
    rec.schedule = sched
    rec.trajectory = traj
    rec.cycle_cost = horizon_cycle_cost(traj, battery.aging_constant)
    rec.max_dod = traj.max_dod
    state.charge_Wmin, state.clock_s = float(traj.final_charge), q


def round_seed(seed: int, slot: int, sat_index: int) -> np.random.SeedSequence:
    return np.random.SeedSequence([int(seed), int(slot), int(sat_index)])


def run_round(
    slot_index: int,
    slot: tuple[float, float],
    model: ModelState,
    states: Sequence[SatelliteState],
    cfg: FlConfig,
    battery: BatterySpec,
    task: TrainingTask,
    mode: str = AWARE,
    settings: CcpSettings = CcpSettings(),
    policy: ProfilePolicy = EnergyProfile.full_recharge,
    seed: int = 0,
    loss: Loss = LOGISTIC,
) -> RoundOutcome:
    """One synchronous round: participation, scheduling, local training, averaging.

    Failures of a single satellite are recorded on its entry and it is left out of
    the average; the round itself carries on.
    """
    if mode not in MODES:
        raise DomainError(f"run_round: unknown mode {mode!r}")
    records = []
    models: list[np.ndarray | None] = []
    for k, st in enumerate(states):
        win = participation(slot, st.contacts, task.duration_min)
        rec = SatelliteRound(st.sat_id, win is not None)
        records.append(rec)
        models.append(None)
        if win is None:
            continue
        rec.receive_s, rec.deadline_s = win
        try:
            _schedule_satellite(st, rec, mode, battery, task, policy, settings)
        except (NonConvergenceError, SatSchedError) as exc:
            rec.status = "failed"
            rec.diagnostics = {"error": f"{type(exc).__name__}: {exc}"}
            log.warning("slot %d, %s: scheduling failed: %s", slot_index, st.sat_id, exc)
            continue
        if not rec.contributes:
            continue
        try:
            models[k] = local_train(
                model, st.dataset, cfg.local_epochs, cfg.batch_size, cfg.learning_rate,
                round_seed(seed, slot_index, k), loss, cfg.scaled_return,
            )
        except TrainingError as exc:
            rec.status = "failed"
            rec.diagnostics = {"error": str(exc), **exc.diagnostics}
            log.warning("slot %d, %s: training failed: %s", slot_index, st.sat_id, exc)

    alphas = [int(r.contributes) for r in records]
    new_model = aggregate(
        models, alphas, [st.dataset.size for st in states], cfg.scaled_return, cfg.normalization, model.dim
    )
    flags = []
    if not any(alphas):
        flags.append("no participants")
        if cfg.normalization == "participating":
            # the weights are undefined without participants; keep the model
            new_model = model
    dropped = [r.sat_id for r in records if r.participates and not r.contributes]
    if dropped:
        flags.append("dropped: " + " ".join(dropped))
    datasets = [st.dataset for st in states]
    return RoundOutcome(
        slot_index, slot[0], slot[1], mode, task.duration_min, records, new_model,
        global_loss(new_model, datasets, loss), flags,
    )


# ---------------------------------------------------------------- checkpoints


def write_checkpoint(path, model: ModelState, slot: int | None = None) -> Path:
    """Plain-text vector: a header line, a ``key=value`` line, then one value per line.

    ::

        satsched-model 1
        dim=20 slot=7
        1.2345678901234567e-01
        ...
    """
    path = Path(path)
    meta = f"dim={model.dim}" + (f" slot={slot}" if slot is not None else "")
    body = "\n".join(repr(float(v)) for v in model.w)
    path.write_text(f"{CHECKPOINT_MAGIC} {CHECKPOINT_VERSION}\n{meta}\n{body}\n", encoding="utf-8")
    return path


def read_checkpoint(path) -> ModelState:
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    if len(lines) < 2:
        raise DomainError(f"{path}: truncated checkpoint")
    magic, _, version = lines[0].partition(" ")
    if magic != CHECKPOINT_MAGIC:
        raise DomainError(f"{path}: not a model checkpoint")
    if version.strip() != str(CHECKPOINT_VERSION):
        raise DomainError(f"{path}: unsupported checkpoint version {version.strip()!r}")
    meta = dict(item.split("=", 1) for item in lines[1].split())
    values = np.array([float(v) for v in lines[2:] if v.strip()])
    if values.size != int(meta.get("dim", -1)):
        raise DomainError(f"{path}: header says dim={meta.get('dim')}, found {values.size} values")
    return ModelState(values)
