"""Scenario files: TOML with a versioned ``format`` key.

One file fixes everything a run depends on. Layout (all tables except
``[constellation]``/``[[satellite]]``, ``[battery]`` and ``[training]`` optional)::

    format = "satsched-scenario/1"
    name = "shell-550"
    seed = 7
    mode = "both"                      # aware | agnostic | both

    [constellation]                    # Walker-delta shell ...
    total = 20
    planes = 5
    phasing = 1
    altitude_km = 550.0
    inclination_deg = 53.0
    raan0_deg = 0.0

    [[satellite]]                      # ... or explicit circular orbits
    id = "a1"
    altitude_km = 550.0
    inclination_deg = 53.0
    raan_deg = 0.0
    phase_deg = 0.0

    [[ground_station]]                 # default: Bremen and Tokyo
    name = "bremen"
    latitude_deg = 53.11
    longitude_deg = 8.85
    min_elevation_deg = 10.0

    [ephemeris]
    sun_longitude_deg = 0.0
    gmst_deg = 0.0

    [battery]
    capacity_Wmin = 2000.0
    initial_charge_Wmin = 2000.0       # default: full
    aging_constant = 0.8

    [training]
    power_W = 50.0
    tc_min = 80.0                      # or a list, e.g. [20.0, 80.0]

    [energy]
    policy = "full_recharge"           # or "constant_power"
    demand_sunlight_W = 0.0
    demand_eclipse_W = 0.0
    harvest_W = 0.0

    [fl]
    horizon_hours = 96.0
    num_slots = 50
    local_epochs = 1
    batch_size = 32
    learning_rate = 0.5
    normalization = "total"            # or "participating"
    scaled_return = false
    dim = 20
    samples_min = 200
    samples_max = 1000

    [solver]
    epsilon = 1e-6
    lambda = 0.0
    max_iterations = 200
    inner_tol = 1e-8
    inner_max_iter = 100
    inner = "ipm"
    accelerate = true

    [report]
    focus_sat = "sat02"
    sweep_capacities_Wmin = [1000.0, 1500.0, 2000.0, 3000.0, 4000.0]
"""

from __future__ import annotations

import math
import sys
from dataclasses import dataclass, replace
from pathlib import Path

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from ..energy import BatterySpec, EnergyProfile, TrainingTask
from ..errors import DomainError, ScenarioError
from ..flsim import MODES, FlConfig
from ..orbital import (
    BREMEN,
    TOKYO,
    Constellation,
    Ephemeris,
    GroundStation,
    OrbitSpec,
    Satellite,
    walker_delta,
)
from ..scheduler.ccp import CcpSettings

FORMAT = "satsched-scenario/1"
RUN_MODES = MODES + ("both",)

_TOP = {"format", "name", "seed", "mode", "constellation", "satellite", "ground_station", "ephemeris",
        "battery", "training", "energy", "fl", "solver", "report"}
_TABLES = {
    "constellation": {"total", "planes", "phasing", "altitude_km", "inclination_deg", "raan0_deg", "prefix"},
    "satellite": {"id", "altitude_km", "inclination_deg", "raan_deg", "phase_deg"},
    "ground_station": {"name", "latitude_deg", "longitude_deg", "min_elevation_deg"},
    "ephemeris": {"sun_longitude_deg", "gmst_deg"},
    "battery": {"capacity_Wmin", "initial_charge_Wmin", "aging_constant"},
    "training": {"power_W", "tc_min"},
    "energy": {"policy", "demand_sunlight_W", "demand_eclipse_W", "harvest_W"},
    "fl": {"horizon_hours", "num_slots", "local_epochs", "batch_size", "learning_rate", "normalization",
           "scaled_return", "dim", "samples_min", "samples_max"},
    "solver": {"epsilon", "lambda", "max_iterations", "inner_tol", "inner_max_iter", "inner", "accelerate"},
    "report": {"focus_sat", "sweep_capacities_Wmin"},
}


@dataclass(frozen=True)
class EnergyPolicy:
    kind: str = "full_recharge"
    demand_sunlight_W: float = 0.0
    demand_eclipse_W: float = 0.0
    harvest_W: float = 0.0

    def __call__(self, timeline, battery: BatterySpec, task: TrainingTask) -> EnergyProfile:
        if self.kind == "full_recharge":
            return EnergyProfile.full_recharge(timeline, battery, task)
        return EnergyProfile.from_powers(timeline, self.demand_sunlight_W, self.demand_eclipse_W, self.harvest_W)


@dataclass(frozen=True)
class Scenario:
    name: str
    seed: int
    mode: str
    constellation: Constellation
    stations: tuple[GroundStation, ...]
    ephemeris: Ephemeris
    battery: BatterySpec
    power_W: float
    tc_values: tuple[float, ...]
    energy: EnergyPolicy
    fl: FlConfig
    solver: CcpSettings
    dim: int = 20
    samples: tuple[int, int] = (200, 1000)
    focus_sat: str = ""
    sweep_capacities: tuple[float, ...] = ()
    source: str = ""

    @property
    def modes(self) -> tuple[str, ...]:
        return MODES if self.mode == "both" else (self.mode,)

    def task(self, tc_min: float) -> TrainingTask:
        return TrainingTask(self.power_W, tc_min)

    def with_capacity(self, capacity_Wmin: float) -> "Scenario":
        """Same scenario with a different battery size; the initial charge stays full
        if it was full, otherwise it keeps its fraction of capacity."""
        frac = self.battery.B_0 / self.battery.B_max
        bat = BatterySpec(capacity_Wmin, frac * capacity_Wmin, self.battery.aging_constant)
        return replace(self, battery=bat)


def _fail(where: str, msg: str) -> ScenarioError:
    return ScenarioError(f"{where}: {msg}")


def _check_keys(table: dict, allowed: set, where: str) -> None:
    extra = sorted(set(table) - allowed)
    if extra:
        raise _fail(where, f"unknown key(s) {', '.join(extra)}")


def _num(table: dict, key: str, where: str, default=None, integer: bool = False):
    if key not in table:
        if default is None:
            raise _fail(where, f"missing required key '{key}'")
        return default
    v = table[key]
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise _fail(f"{where}.{key}", f"expected a number, got {v!r}")
    if integer:
        if not isinstance(v, int):
            raise _fail(f"{where}.{key}", f"expected an integer, got {v!r}")
        return v
    if not math.isfinite(v):
        raise _fail(f"{where}.{key}", "must be finite")
    return float(v)


def _str(table: dict, key: str, where: str, default: str | None = None, choices=None) -> str:
    v = table.get(key, default)
    if v is None:
        raise _fail(where, f"missing required key '{key}'")
    if not isinstance(v, str):
        raise _fail(f"{where}.{key}", f"expected a string, got {v!r}")
    if choices is not None and v not in choices:
        raise _fail(f"{where}.{key}", f"must be one of {', '.join(choices)}, got {v!r}")
    return v


def _table(doc: dict, key: str, required: bool = False) -> dict:
    t = doc.get(key)
    if t is None:
        if required:
            raise _fail(key, "missing required table")
        return {}
    if not isinstance(t, dict):
        raise _fail(key, "expected a table")
    _check_keys(t, _TABLES[key], f"[{key}]")
    return t


def _array_of_tables(doc: dict, key: str) -> list[dict]:
    t = doc.get(key, [])
    if not isinstance(t, list) or not all(isinstance(x, dict) for x in t):
        raise _fail(key, "expected an array of tables [[...]]")
    for i, x in enumerate(t):
        _check_keys(x, _TABLES[key], f"[[{key}]] #{i + 1}")
    return t


def _build(where: str, ctor, *args):
    """Call a validated constructor, re-raising its invariant message with context."""
    try:
        return ctor(*args)
    except DomainError as exc:
        raise _fail(where, str(exc)) from exc


def _constellation(doc: dict) -> Constellation:
    sats = _array_of_tables(doc, "satellite")
    if "constellation" in doc and sats:
        raise _fail("constellation", "give either [constellation] or [[satellite]] entries, not both")
    if sats:
        out = []
        for i, s in enumerate(sats):
            where = f"[[satellite]] #{i + 1}"
            sid = _str(s, "id", where)
            orbit = _build(
                where, OrbitSpec,
                _num(s, "altitude_km", where) * 1e3,
                math.radians(_num(s, "inclination_deg", where)),
                math.radians(_num(s, "raan_deg", where, 0.0)),
                math.radians(_num(s, "phase_deg", where, 0.0)),
            )
            out.append(Satellite(sid, orbit))
        return _build("[[satellite]]", Constellation, tuple(out), ())
    c = _table(doc, "constellation", required=True)
    w = "[constellation]"
    alt = _num(c, "altitude_km", w) * 1e3
    inc = math.radians(_num(c, "inclination_deg", w))
    # validate the orbit first so the message names the orbit invariant
    _build(w, OrbitSpec, alt, inc)
    return _build(
        w, walker_delta,
        _num(c, "total", w, integer=True),
        _num(c, "planes", w, integer=True),
        _num(c, "phasing", w, 0, integer=True),
        alt, inc,
        math.radians(_num(c, "raan0_deg", w, 0.0)),
        _str(c, "prefix", w, "sat"),
    )


def _stations(doc: dict) -> tuple[GroundStation, ...]:
    rows = _array_of_tables(doc, "ground_station")
    if not rows:
        return (BREMEN, TOKYO)
    out = []
    for i, g in enumerate(rows):
        where = f"[[ground_station]] #{i + 1}"
        out.append(_build(
            where, GroundStation,
            _str(g, "name", where),
            math.radians(_num(g, "latitude_deg", where)),
            math.radians(_num(g, "longitude_deg", where)),
            math.radians(_num(g, "min_elevation_deg", where, 10.0)),
        ))
    if len({g.name for g in out}) != len(out):
        raise _fail("[[ground_station]]", "station names must be unique")
    return tuple(out)


def parse_scenario(text: str, source: str = "<string>") -> Scenario:
    try:
        doc = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        # the decoder message carries line and column
        raise ScenarioError(f"{source}: parse error: {exc}") from exc
    _check_keys(doc, _TOP, "top level")
    fmt = doc.get("format")
    if fmt != FORMAT:
        raise _fail("format", f"expected {FORMAT!r}, got {fmt!r}")
    if "seed" not in doc:
        raise _fail("seed", "missing required key 'seed' (runs must be reproducible)")
    seed = _num(doc, "seed", "top level", integer=True)
    if seed < 0:
        raise _fail("seed", "must be >= 0")
    mode = _str(doc, "mode", "top level", "both", RUN_MODES)
    name = _str(doc, "name", "top level", Path(source).stem)

    constellation = _constellation(doc)
    stations = _stations(doc)

    e = _table(doc, "ephemeris")
    eph = Ephemeris(
        sun_longitude0_rad=math.radians(_num(e, "sun_longitude_deg", "[ephemeris]", 0.0)),
        gmst0_rad=math.radians(_num(e, "gmst_deg", "[ephemeris]", 0.0)),
    )

    b = _table(doc, "battery", required=True)
    cap = _num(b, "capacity_Wmin", "[battery]")
    battery = _build(
        "[battery]", BatterySpec, cap,
        _num(b, "initial_charge_Wmin", "[battery]", cap),
        _num(b, "aging_constant", "[battery]", 0.8),
    )

    t = _table(doc, "training", required=True)
    power = _num(t, "power_W", "[training]")
    if "tc_min" not in t:
        raise _fail("[training]", "missing required key 'tc_min'")
    raw_tc = t["tc_min"] if isinstance(t["tc_min"], list) else [t["tc_min"]]
    tcs = tuple(_num({"tc_min": v}, "tc_min", "[training]") for v in raw_tc)
    if not tcs or len(set(tcs)) != len(tcs):
        raise _fail("[training].tc_min", "needs at least one value and no duplicates")
    for tc in tcs:
        _build("[training]", TrainingTask, power, tc)

    en = _table(doc, "energy")
    policy = EnergyPolicy(
        _str(en, "policy", "[energy]", "full_recharge", ("full_recharge", "constant_power")),
        _num(en, "demand_sunlight_W", "[energy]", 0.0),
        _num(en, "demand_eclipse_W", "[energy]", 0.0),
        _num(en, "harvest_W", "[energy]", 0.0),
    )
    if min(policy.demand_sunlight_W, policy.demand_eclipse_W, policy.harvest_W) < 0:
        raise _fail("[energy]", "power rates must be >= 0")

    f = _table(doc, "fl")
    w = "[fl]"
    fl = _build(
        w, FlConfig,
        _num(f, "horizon_hours", w, 96.0) * 3600.0,
        _num(f, "num_slots", w, 50, integer=True),
        _num(f, "local_epochs", w, 1, integer=True),
        _num(f, "batch_size", w, 32, integer=True),
        _num(f, "learning_rate", w, 0.5),
        _str(f, "normalization", w, "total", ("total", "participating")),
        bool(f.get("scaled_return", False)),
    )
    dim = _num(f, "dim", w, 20, integer=True)
    samples = (_num(f, "samples_min", w, 200, integer=True), _num(f, "samples_max", w, 1000, integer=True))
    if dim < 1:
        raise _fail(f"{w}.dim", "must be >= 1")
    if not 1 <= samples[0] <= samples[1]:
        raise _fail(w, "need 1 <= samples_min <= samples_max")

    s = _table(doc, "solver")
    w = "[solver]"
    try:
        solver = CcpSettings(
            epsilon=_num(s, "epsilon", w, 1e-6),
            lam=_num(s, "lambda", w, 0.0),
            max_iterations=_num(s, "max_iterations", w, 200, integer=True),
            inner_tol=_num(s, "inner_tol", w, 1e-8),
            inner_max_iter=_num(s, "inner_max_iter", w, 100, integer=True),
            inner=_str(s, "inner", w, "ipm", ("ipm", "slsqp")),
            accelerate=bool(s.get("accelerate", True)),
        )
    except ValueError as exc:
        if isinstance(exc, ScenarioError):
            raise
        raise _fail(w, str(exc)) from exc

    r = _table(doc, "report")
    ids = [sat.sat_id for sat in constellation]
    focus = _str(r, "focus_sat", "[report]", ids[1] if len(ids) > 1 else ids[0])
    if focus not in ids:
        raise _fail("[report].focus_sat", f"unknown satellite {focus!r}")
    sweep = r.get("sweep_capacities_Wmin", [])
    if not isinstance(sweep, list):
        raise _fail("[report].sweep_capacities_Wmin", "expected a list")
    sweep = tuple(_num({"c": v}, "c", "[report].sweep_capacities_Wmin") for v in sweep)
    if any(c <= 0 for c in sweep):
        raise _fail("[report].sweep_capacities_Wmin", "capacities must be > 0")

    return Scenario(
        name, seed, mode, constellation, stations, eph, battery, power, tcs, policy, fl, solver,
        dim, samples, focus, sweep, source,
    )


def load_scenario(path) -> Scenario:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ScenarioError(f"{path}: cannot read scenario: {exc.strerror}") from exc
    return parse_scenario(text, str(path))


def bundled_scenario(name: str) -> Path:
    """Path of a scenario shipped with the package (``reference_96h_tc80`` or ``reference_96h_tc80.cfg``)."""
    from importlib import resources

    fname = name if name.endswith(".cfg") else name + ".cfg"
    ref = resources.files("satsched.scenarios").joinpath(fname)
    if not ref.is_file():
        raise ScenarioError(f"no bundled scenario named {name!r}")
    return Path(str(ref))
