import math

import numpy as np
import pytest

from satsched.errors import DomainError
from satsched.orbital import (
    BREMEN,
    DEFAULT_EPHEMERIS,
    R_EARTH,
    Constellation,
    Ephemeris,
    GroundStation,
    OrbitSpec,
    Satellite,
    SunEclipseTimeline,
    elevation,
    find_intervals,
    gs_visibility_windows,
    in_shadow,
    merge_windows,
    orbit_period,
    propagate,
    subsatellite_point,
    sun_eclipse_timeline,
    timeline_rows,
    walker_delta,
    write_intervals_csv,
)

# 2*pi*sqrt(o^3/mu), evaluated at 30 digits with mpmath
PERIOD_550KM = 5734.447831966999
PERIOD_0KM = 5064.653519091335
# asin(R_E / o) / pi for the 550 km orbit
ECLIPSE_FRACTION_550KM = 0.37224410686448355


def test_period_values():
    assert orbit_period(OrbitSpec(550e3, 0.9)) == pytest.approx(PERIOD_550KM, rel=1e-12)
    assert orbit_period(OrbitSpec(1e-9, 0.0)) == pytest.approx(PERIOD_0KM, rel=1e-9)


def test_period_scales_with_three_halves_power():
    a = OrbitSpec(1000e3, 0.5)
    o = a.semi_major_axis
    b = OrbitSpec(2 * o - R_EARTH, 0.5)
    assert orbit_period(b) / orbit_period(a) == pytest.approx(2 * math.sqrt(2), rel=1e-12)


@pytest.mark.parametrize(
    "kwargs, field",
    [
        ({"altitude_m": -1.0, "inclination_rad": 0.1}, "altitude_m"),
        ({"altitude_m": 0.0, "inclination_rad": 0.1}, "altitude_m"),
        ({"altitude_m": 5e5, "inclination_rad": 4.0}, "inclination"),
        ({"altitude_m": 5e5, "inclination_rad": 0.1, "raan_rad": math.inf}, "finite"),
    ],
)
def test_orbit_invariants(kwargs, field):
    with pytest.raises(DomainError, match=field):
        OrbitSpec(**kwargs)


def test_ground_station_invariants():
    with pytest.raises(DomainError):
        GroundStation("x", 2.0, 0.0)
    with pytest.raises(DomainError):
        GroundStation("x", 0.0, 0.0, math.pi / 2)


def test_propagate_epoch_period_and_half_period():
    spec = OrbitSpec(550e3, math.radians(53), 0.7, 1.1, epoch=100.0)
    T = orbit_period(spec)
    r0 = propagate(spec, 100.0)
    assert np.linalg.norm(r0) == pytest.approx(spec.semi_major_axis, rel=1e-12)
    np.testing.assert_allclose(propagate(spec, 100.0 + T), r0, rtol=0, atol=1e-6 * spec.semi_major_axis)
    half = propagate(spec, 100.0 + T / 2)
    assert np.dot(half, r0) / np.dot(r0, r0) == pytest.approx(-1.0, abs=1e-6)
    # argument of latitude zero sits on the ascending node
    node = propagate(OrbitSpec(550e3, 0.3, 0.7), 0.0)
    np.testing.assert_allclose(node / np.linalg.norm(node), [math.cos(0.7), math.sin(0.7), 0.0], atol=1e-12)


def test_propagate_rejects_time_before_epoch():
    with pytest.raises(DomainError):
        propagate(OrbitSpec(550e3, 0.0, epoch=10.0), 0.0)


def test_walker_delta_layout():
    c = walker_delta(20, 5, 1, 550e3, math.radians(53))
    assert len(c) == 20 and c.plane_sizes == (4,) * 5
    assert [s.sat_id for s in c][:3] == ["sat01", "sat02", "sat03"]
    raans = sorted({round(s.orbit.raan_rad, 12) for s in c})
    np.testing.assert_allclose(np.diff(raans), 2 * math.pi / 5)
    # phasing offset between adjacent planes is 2*pi*F/T
    first = [s.orbit.phase_rad for s in c][::4]
    assert first[1] - first[0] == pytest.approx(2 * math.pi / 20)
    with pytest.raises(DomainError):
        walker_delta(7, 3, 1, 550e3, 0.9)


def test_constellation_rejects_duplicate_ids():
    o = OrbitSpec(550e3, 0.9)
    with pytest.raises(DomainError, match="unique"):
        Constellation((Satellite("a", o), Satellite("a", o)))
    with pytest.raises(DomainError, match="plane sizes"):
        Constellation((Satellite("a", o),), (2,))


def test_dawn_dusk_orbit_is_never_eclipsed():
    # Sun along +x at epoch: a polar orbit with RAAN 90 deg has its normal along the Sun line
    spec = OrbitSpec(550e3, math.pi / 2, math.pi / 2)
    tl = sun_eclipse_timeline(spec, 0.0, 3 * orbit_period(spec))
    assert tl.J == 1
    assert tl.eclipse_min[0] == 0.0
    assert tl.periods[0].sunlight_s == pytest.approx(3 * orbit_period(spec))


def test_sun_plane_orbit_eclipse_fraction():
    # equatorial orbit with zero obliquity lies in the Sun-Earth plane
    eph = Ephemeris(obliquity_rad=0.0, year_s=1e30)
    spec = OrbitSpec(550e3, 0.0)
    T = orbit_period(spec)
    tl = sun_eclipse_timeline(spec, 0.0, 4 * T, eph)
    full = [p for p in tl.periods if p.eclipse_s > 0 and p.next_sunlight_start < tl.t1]
    assert full
    for p in full:
        assert p.eclipse_s == pytest.approx(ECLIPSE_FRACTION_550KM * T, abs=0.2)
    # sampling oracle: fraction of 1 s samples in shadow over whole revolutions
    t = np.arange(0.0, 4 * T, 1.0)
    assert np.mean(in_shadow(spec, t, eph)) == pytest.approx(ECLIPSE_FRACTION_550KM, abs=1e-3)


def test_timeline_tiles_horizon_and_matches_sampling():
    spec = OrbitSpec(550e3, math.radians(53), 1.0, 2.0)
    tl = sun_eclipse_timeline(spec, 0.0, 6 * 3600.0)
    assert tl.periods[0].sunlight_start == 0.0 and tl.periods[-1].next_sunlight_start == 6 * 3600.0
    for kind, a, b in tl.intervals():
        inner = np.arange(a + 5.0, b - 5.0, 5.0)
        if inner.size:
            assert np.all(in_shadow(spec, inner) == (kind == "eclipse"))


def test_timeline_from_durations_and_restrict():
    tl = SunEclipseTimeline.from_durations([60, 30], [35, 35], t0=100.0)
    assert tl.t1 == 100.0 + 160 * 60
    np.testing.assert_allclose(tl.sunlight_min, [60, 30])
    part = tl.restrict(100.0 + 80 * 60, 100.0 + 140 * 60)
    # starts 20 min into the first eclipse
    np.testing.assert_allclose(part.sunlight_min, [0, 30])
    np.testing.assert_allclose(part.eclipse_min, [15, 15])
    assert tl.eclipsed_at(100.0 + 61 * 60) and not tl.eclipsed_at(100.0 + 10)
    with pytest.raises(DomainError):
        tl.restrict(0.0, 200.0)


def test_timeline_rejects_gaps():
    from satsched.orbital import Period

    with pytest.raises(DomainError, match="gap"):
        SunEclipseTimeline(0.0, 30.0, (Period(0.0, 5.0, 10.0), Period(12.0, 20.0, 30.0)))


def test_station_under_satellite_sees_it_overhead():
    spec = OrbitSpec(550e3, math.radians(53), 0.4, 0.9)
    lat, lon = subsatellite_point(spec, 0.0)
    gs = GroundStation("nadir", lat, lon, 0.0)
    assert float(elevation(spec, gs, 0.0)) == pytest.approx(math.pi / 2, abs=1e-9)
    wins = gs_visibility_windows(spec, gs, 0.0, 600.0)
    assert wins and wins[0][0] == 0.0
    anti = GroundStation("anti", -lat, lon + math.pi, 0.0)
    assert float(elevation(spec, anti, 0.0)) < 0


def test_visibility_matches_one_second_scan():
    spec = OrbitSpec(550e3, math.radians(53), 0.3, 0.2)
    t1 = 24 * 3600.0
    wins = gs_visibility_windows(spec, BREMEN, 0.0, t1)
    assert len(wins) >= 2
    t = np.arange(0.0, t1, 1.0)
    vis = elevation(spec, BREMEN, t) >= BREMEN.min_elevation_rad
    inside = np.zeros_like(vis)
    for a, b in wins:
        inside |= (t >= a) & (t <= b)
    # the two may only disagree within the 0.1 s refinement of a boundary
    bad = t[vis != inside]
    for x in bad:
        assert min(min(abs(x - a), abs(x - b)) for a, b in wins) <= 0.1
    for a, b in wins:
        assert float(elevation(spec, BREMEN, a + 0.1)) >= BREMEN.min_elevation_rad - 1e-4


def test_find_intervals_edges():
    assert find_intervals(lambda t: t < 50.0, 0.0, 100.0) == [(0.0, pytest.approx(50.0, abs=0.1))]
    assert find_intervals(lambda t: t > 1e9, 0.0, 100.0) == []
    assert find_intervals(lambda t: np.ones_like(t, dtype=bool), 0.0, 100.0) == [(0.0, 100.0)]
    with pytest.raises(DomainError):
        find_intervals(lambda t: t > 0, 5.0, 5.0)


def test_merge_windows():
    assert merge_windows([(5, 8), (0, 2), (1, 3), (8, 9)]) == [(0, 3), (5, 9)]
    assert merge_windows([]) == []


def test_interval_csv(tmp_path):
    tl = SunEclipseTimeline.from_durations([1.0], [0.5])
    path = write_intervals_csv(tmp_path / "i.csv", list(timeline_rows("s1", tl)) + [("s1", "visible", 3.0, 4.25)])
    assert path.read_text().splitlines() == [
        "sat_id,kind,start_s,end_s",
        "s1,sunlight,0.000,60.000",
        "s1,eclipse,60.000,90.000",
        "s1,visible,3.000,4.250",
    ]


def test_geometry_is_deterministic():
    spec = OrbitSpec(550e3, math.radians(53), 0.3, 0.2)
    a = sun_eclipse_timeline(spec, 0.0, 20000.0, DEFAULT_EPHEMERIS)
    b = sun_eclipse_timeline(spec, 0.0, 20000.0, DEFAULT_EPHEMERIS)
    assert a == b
