"""Circular-orbit kinematics, sunlight/eclipse timelines and ground-station passes.

All times are seconds from the scenario epoch. Positions are ECI meters.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterable, Sequence

import numpy as np

from .errors import DomainError

R_EARTH = 6_371_000.0  # m
MU_EARTH = 3.98e14  # m^3/s^2
EARTH_ROTATION_RATE = 7.2921159e-5  # rad/s, sidereal
OBLIQUITY = math.radians(23.44)
TROPICAL_YEAR_S = 365.25 * 86400.0

COARSE_STEP_S = 10.0
EVENT_TOL_S = 0.1


@dataclass(frozen=True)
class OrbitSpec:
    altitude_m: float
    inclination_rad: float
    raan_rad: float = 0.0
    phase_rad: float = 0.0
    epoch: float = 0.0

    def __post_init__(self):
        vals = (self.altitude_m, self.inclination_rad, self.raan_rad, self.phase_rad, self.epoch)
        if not all(math.isfinite(v) for v in vals):
            raise DomainError(f"OrbitSpec: all fields must be finite, got {vals}")
        if self.altitude_m <= 0:
            raise DomainError(f"OrbitSpec: altitude_m must be > 0, got {self.altitude_m}")
        if not 0.0 <= self.inclination_rad <= math.pi:
            raise DomainError(f"OrbitSpec: inclination must lie in [0, pi], got {self.inclination_rad}")

    @property
    def semi_major_axis(self) -> float:
        return R_EARTH + self.altitude_m


@dataclass(frozen=True)
class Satellite:
    sat_id: str
    orbit: OrbitSpec


@dataclass(frozen=True)
class Constellation:
    """Flat satellite list plus the number of satellites in each plane."""

    satellites: tuple[Satellite, ...]
    plane_sizes: tuple[int, ...] = ()

    def __post_init__(self):
        ids = [s.sat_id for s in self.satellites]
        if len(set(ids)) != len(ids):
            raise DomainError("Constellation: satellite ids must be unique")
        if self.plane_sizes and sum(self.plane_sizes) != len(ids):
            raise DomainError(
                f"Constellation: plane sizes sum to {sum(self.plane_sizes)} but {len(ids)} satellites given"
            )

    def __len__(self) -> int:
        return len(self.satellites)

    def __iter__(self):
        return iter(self.satellites)


def walker_delta(
    total: int,
    planes: int,
    phasing: int,
    altitude_m: float,
    inclination_rad: float,
    raan0_rad: float = 0.0,
    prefix: str = "sat",
) -> Constellation:
    """Walker-delta shell ``i: total/planes/phasing``.

    Satellites are numbered plane by plane starting at 1.
    """
    if total < 1 or planes < 1 or total % planes:
        raise DomainError(f"walker_delta: total={total} must be a positive multiple of planes={planes}")
    per_plane = total // planes
    sats = []
    for p in range(planes):
        raan = raan0_rad + 2.0 * math.pi * p / planes
        for s in range(per_plane):
            phase = 2.0 * math.pi * s / per_plane + 2.0 * math.pi * phasing * p / total
            orbit = OrbitSpec(altitude_m, inclination_rad, raan % (2 * math.pi), phase % (2 * math.pi))
            sats.append(Satellite(f"{prefix}{p * per_plane + s + 1:02d}", orbit))
    return Constellation(tuple(sats), (per_plane,) * planes)


@dataclass(frozen=True)
class GroundStation:
    name: str
    latitude_rad: float
    longitude_rad: float
    min_elevation_rad: float = math.radians(10.0)

    def __post_init__(self):
        if not abs(self.latitude_rad) <= math.pi / 2:
            raise DomainError(f"GroundStation {self.name}: |latitude| must be <= pi/2")
        if not 0.0 <= self.min_elevation_rad < math.pi / 2:
            raise DomainError(f"GroundStation {self.name}: min_elevation must lie in [0, pi/2)")


BREMEN = GroundStation("bremen", math.radians(53.11), math.radians(8.85))
TOKYO = GroundStation("tokyo", math.radians(35.68), math.radians(139.69))


@dataclass(frozen=True)
class Ephemeris:
    """Sun direction and Earth orientation at the scenario epoch.

    The Sun moves on a circular ecliptic; the Earth spins uniformly.
    """

    sun_longitude0_rad: float = 0.0
    obliquity_rad: float = OBLIQUITY
    year_s: float = TROPICAL_YEAR_S
    gmst0_rad: float = 0.0

    def sun_direction(self, t) -> np.ndarray:
        t = np.asarray(t, dtype=float)
        lam = self.sun_longitude0_rad + 2.0 * np.pi * t / self.year_s
        ce, se = math.cos(self.obliquity_rad), math.sin(self.obliquity_rad)
        return np.stack([np.cos(lam), np.sin(lam) * ce, np.sin(lam) * se], axis=-1)

    def earth_angle(self, t) -> np.ndarray:
        return self.gmst0_rad + EARTH_ROTATION_RATE * np.asarray(t, dtype=float)


DEFAULT_EPHEMERIS = Ephemeris()


def orbit_period(spec: OrbitSpec) -> float:
    """Orbital period in seconds, ``2*pi*sqrt(o**3/mu)``."""
    o = spec.semi_major_axis
    return 2.0 * math.pi * math.sqrt(o**3 / MU_EARTH)


def propagate(spec: OrbitSpec, t) -> np.ndarray:
    """ECI position(s) at time(s) ``t``; shape ``(3,)`` or ``(n, 3)``."""
    t = np.asarray(t, dtype=float)
    if np.any(t < spec.epoch):
        raise DomainError("propagate: t must not precede the orbit epoch")
    o = spec.semi_major_axis
    u = spec.phase_rad + 2.0 * np.pi * (t - spec.epoch) / orbit_period(spec)
    cu, su = np.cos(u), np.sin(u)
    co, so = math.cos(spec.raan_rad), math.sin(spec.raan_rad)
    ci, si = math.cos(spec.inclination_rad), math.sin(spec.inclination_rad)
    x = co * cu - so * su * ci
    y = so * cu + co * su * ci
    z = su * si
    return o * np.stack([x, y, z], axis=-1)


def in_shadow(spec: OrbitSpec, t, ephemeris: Ephemeris = DEFAULT_EPHEMERIS) -> np.ndarray:
    """Cylindrical-umbra test: anti-Sun side and within R_E of the Sun line."""
    r = propagate(spec, t)
    s = ephemeris.sun_direction(t)
    along = np.sum(r * s, axis=-1)
    perp2 = np.sum(r * r, axis=-1) - along**2
    return (along < 0.0) & (perp2 < R_EARTH**2)


def station_position(gs: GroundStation, t, ephemeris: Ephemeris = DEFAULT_EPHEMERIS) -> np.ndarray:
    theta = gs.longitude_rad + ephemeris.earth_angle(t)
    cl = math.cos(gs.latitude_rad)
    return R_EARTH * np.stack(
        [cl * np.cos(theta), cl * np.sin(theta), np.full_like(theta, math.sin(gs.latitude_rad))], axis=-1
    )


def elevation(spec: OrbitSpec, gs: GroundStation, t, ephemeris: Ephemeris = DEFAULT_EPHEMERIS) -> np.ndarray:
    """Elevation of the satellite above the station's local horizon (rad)."""
    r = propagate(spec, t)
    g = station_position(gs, t, ephemeris)
    rho = r - g
    up = g / R_EARTH
    sin_el = np.sum(rho * up, axis=-1) / np.linalg.norm(rho, axis=-1)
    return np.arcsin(np.clip(sin_el, -1.0, 1.0))


def subsatellite_point(spec: OrbitSpec, t: float, ephemeris: Ephemeris = DEFAULT_EPHEMERIS) -> tuple[float, float]:
    """Geocentric (latitude, longitude) in radians of the point under the satellite."""
    x, y, z = propagate(spec, t)
    lat = math.asin(z / math.sqrt(x * x + y * y + z * z))
    lon = math.atan2(y, x) - float(ephemeris.earth_angle(t))
    return lat, math.remainder(lon, 2 * math.pi)


def find_intervals(
    predicate: Callable[[np.ndarray], np.ndarray],
    t0: float,
    t1: float,
    step: float = COARSE_STEP_S,
    tol: float = EVENT_TOL_S,
) -> list[tuple[float, float]]:
    """Intervals of ``[t0, t1]`` where a vectorised boolean predicate holds.

    Coarse scan at ``step`` followed by bisection of every sign change down to ``tol``.
    Events closer together than ``step`` may be missed.
    """
    if not t0 < t1:
        raise DomainError(f"need t0 < t1, got [{t0}, {t1}]")
    n = max(1, int(math.ceil((t1 - t0) / step)))
    grid = np.minimum(t0 + step * np.arange(n + 1), t1)
    vals = np.asarray(predicate(grid), dtype=bool)
    change = np.nonzero(vals[1:] != vals[:-1])[0]
    lo, hi = grid[change].copy(), grid[change + 1].copy()
    lo_val = vals[change]
    while lo.size and np.max(hi - lo) > tol:
        mid = 0.5 * (lo + hi)
        mv = np.asarray(predicate(mid), dtype=bool)
        same = mv == lo_val
        lo = np.where(same, mid, lo)
        hi = np.where(same, hi, mid)
    events = 0.5 * (lo + hi)

    out = []
    start = t0 if vals[0] else None
    for ev, rising in zip(events, ~lo_val):
        if rising:
            start = float(ev)
        else:
            out.append((start, float(ev)))
            start = None
    if start is not None:
        out.append((start, t1))
    return out


@dataclass(frozen=True)
class Period:
    """One sunlight interval followed by its eclipse."""

    sunlight_start: float
    eclipse_start: float
    next_sunlight_start: float

    @property
    def sunlight_s(self) -> float:
        return self.eclipse_start - self.sunlight_start

    @property
    def eclipse_s(self) -> float:
        return self.next_sunlight_start - self.eclipse_start


@dataclass(frozen=True)
class SunEclipseTimeline:
    """Ordered sunlight/eclipse periods tiling ``[t0, t1]``.

    A horizon that opens in eclipse gets a leading period with zero-length sunlight;
    one that closes in sunlight gets a trailing zero-length eclipse.
    """

    t0: float
    t1: float
    periods: tuple[Period, ...] = field(default_factory=tuple)

    def __post_init__(self):
        if not self.periods:
            raise DomainError("timeline needs at least one period")
        if self.periods[0].sunlight_start != self.t0:
            raise DomainError("timeline must start at t0")
        if self.periods[-1].next_sunlight_start != self.t1:
            raise DomainError("timeline must end at t1")
        prev_end = self.t0
        for j, p in enumerate(self.periods):
            if p.sunlight_start != prev_end:
                raise DomainError(f"timeline gap or overlap before period {j}")
            if p.sunlight_s < 0 or p.eclipse_s < 0:
                raise DomainError(f"period {j} has negative length")
            prev_end = p.next_sunlight_start

    @property
    def J(self) -> int:
        return len(self.periods)

    @property
    def sunlight_min(self) -> np.ndarray:
        return np.array([p.sunlight_s for p in self.periods]) / 60.0

    @property
    def eclipse_min(self) -> np.ndarray:
        return np.array([p.eclipse_s for p in self.periods]) / 60.0

    def intervals(self) -> list[tuple[str, float, float]]:
        """Non-empty ``(kind, start, end)`` intervals in time order."""
        out = []
        for p in self.periods:
            if p.sunlight_s > 0:
                out.append(("sunlight", p.sunlight_start, p.eclipse_start))
            if p.eclipse_s > 0:
                out.append(("eclipse", p.eclipse_start, p.next_sunlight_start))
        return out

    def eclipsed_at(self, t: float) -> bool:
        for p in self.periods:
            if p.eclipse_start <= t < p.next_sunlight_start:
                return True
        return False

    @classmethod
    def from_shadow_intervals(
        cls, t0: float, t1: float, shadow: Sequence[tuple[float, float]]
    ) -> "SunEclipseTimeline":
        """Build from the eclipse intervals inside ``[t0, t1]`` (sorted, disjoint)."""
        periods = []
        cursor = t0
        for a, b in shadow:
            a, b = max(a, t0), min(b, t1)
            if b <= a:
                continue
            periods.append(Period(cursor, a, b))
            cursor = b
        if cursor < t1 or not periods:
            periods.append(Period(cursor, t1, t1))
        return cls(t0, t1, tuple(periods))

    @classmethod
    def from_durations(cls, sunlight_min: Sequence[float], eclipse_min: Sequence[float], t0: float = 0.0):
        """Synthetic timeline from per-period lengths in minutes."""
        if len(sunlight_min) != len(eclipse_min):
            raise DomainError("sunlight and eclipse duration lists differ in length")
        periods = []
        t = float(t0)
        for s, e in zip(sunlight_min, eclipse_min):
            if s < 0 or e < 0:
                raise DomainError("durations must be non-negative")
            te = t + 60.0 * s
            tn = te + 60.0 * e
            periods.append(Period(t, te, tn))
            t = tn
        return cls(float(t0), t, tuple(periods))

    def restrict(self, a: float, b: float) -> "SunEclipseTimeline":
        """The same pattern clipped to ``[a, b]`` (must lie inside the horizon)."""
        if not (self.t0 <= a < b <= self.t1):
            raise DomainError(f"restrict: [{a}, {b}] not inside [{self.t0}, {self.t1}]")
        shadow = [(p.eclipse_start, p.next_sunlight_start) for p in self.periods if p.eclipse_s > 0]
        return SunEclipseTimeline.from_shadow_intervals(a, b, shadow)


def sun_eclipse_timeline(
    spec: OrbitSpec, t0: float, t1: float, ephemeris: Ephemeris = DEFAULT_EPHEMERIS
) -> SunEclipseTimeline:
    shadow = find_intervals(lambda t: in_shadow(spec, t, ephemeris), t0, t1)
    return SunEclipseTimeline.from_shadow_intervals(t0, t1, shadow)


def gs_visibility_windows(
    spec: OrbitSpec, gs: GroundStation, t0: float, t1: float, ephemeris: Ephemeris = DEFAULT_EPHEMERIS
) -> list[tuple[float, float]]:
    mask = gs.min_elevation_rad
    return find_intervals(lambda t: elevation(spec, gs, t, ephemeris) >= mask, t0, t1)


def merge_windows(windows: Iterable[tuple[float, float]]) -> list[tuple[float, float]]:
    """Union of possibly overlapping intervals, sorted."""
    out: list[list[float]] = []
    for a, b in sorted(windows):
        if out and a <= out[-1][1]:
            out[-1][1] = max(out[-1][1], b)
        else:
            out.append([a, b])
    return [(a, b) for a, b in out]


def write_intervals_csv(path, rows: Iterable[tuple[str, str, float, float]]) -> Path:
    """Write ``sat_id, kind, start_s, end_s`` rows (kind in sunlight|eclipse|visible)."""
    path = Path(path)
    with path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["sat_id", "kind", "start_s", "end_s"])
        for sat_id, kind, a, b in rows:
            w.writerow([sat_id, kind, f"{a:.3f}", f"{b:.3f}"])
    return path


def timeline_rows(sat_id: str, timeline: SunEclipseTimeline):
    for kind, a, b in timeline.intervals():
        yield sat_id, kind, a, b
