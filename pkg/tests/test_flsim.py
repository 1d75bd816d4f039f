import numpy as np
import pytest

from satsched.energy import BatterySpec, EnergyProfile, TrainingTask
from satsched.errors import DomainError, InconsistentLengthsError, TrainingError
from satsched.flsim import (
    LOGISTIC,
    SQUARED,
    FlConfig,
    LocalDataset,
    ModelState,
    SatelliteState,
    aggregate,
    brownout_schedule,
    global_loss,
    local_train,
    mean_loss,
    participation,
    partition_slots,
    read_checkpoint,
    run_round,
    toy_datasets,
    write_checkpoint,
)
from satsched.orbital import SunEclipseTimeline
from satsched.scheduler import build_problem, energy_agnostic_schedule


def test_partition_slots():
    slots = partition_slots(0.0, 96 * 3600.0, 50)
    assert len(slots) == 50
    assert slots[0] == (0.0, 115.2 * 60)
    assert slots[-1][1] == 96 * 3600.0
    assert all(a[1] == b[0] for a, b in zip(slots, slots[1:]))
    assert partition_slots(5.0, 10.0, 1) == [(5.0, 10.0)]
    with pytest.raises(DomainError):
        partition_slots(0.0, 1.0, 0)


def test_participation():
    slot = (1000.0, 8000.0)
    assert participation(slot, [(0.0, 9000.0)], 20.0) == (1000.0, 8000.0)
    assert participation(slot, [], 20.0) is None
    assert participation(slot, [(0.0, 500.0), (8500.0, 9000.0)], 1.0) is None
    # receive in the first pass, return in the last
    assert participation(slot, [(1500.0, 1800.0), (4000.0, 4300.0), (6600.0, 7000.0)], 80.0) == (1500.0, 7000.0)
    assert participation(slot, [(1500.0, 1800.0), (6000.0, 6300.0)], 80.0) == (1500.0, 6300.0)
    assert participation(slot, [(1500.0, 1800.0), (6000.0, 6299.0)], 80.0) is None


def test_logistic_loss_and_gradient():
    rng = np.random.default_rng(0)
    x = rng.normal(size=(30, 4))
    y = np.where(rng.random(30) < 0.5, -1.0, 1.0)
    w = rng.normal(size=4)
    ds = LocalDataset(x, y)
    assert mean_loss(np.zeros(4), ds) == pytest.approx(np.log(2))
    g = LOGISTIC.grad(w, x, y)
    h = 1e-6
    fd = np.array([(LOGISTIC.value(w + h * e, x, y).sum() - LOGISTIC.value(w - h * e, x, y).sum()) / (2 * h)
                   for e in np.eye(4)])
    np.testing.assert_allclose(g, fd, rtol=1e-7, atol=1e-9)
    # large margins must not overflow
    assert np.all(np.isfinite(LOGISTIC.grad(1e4 * w, x, y)))


def test_single_sample_least_squares_step():
    x = np.array([[1.0, -2.0, 0.5]])
    y = np.array([0.7])
    w0 = ModelState(np.array([0.2, 0.1, -0.3]))
    eta = 0.05
    w1 = local_train(w0, LocalDataset(x, y), 1, 1, eta, seed=0, loss=SQUARED)
    resid = float(x[0] @ w0.w - y[0])
    np.testing.assert_allclose(w1, w0.w - eta * resid * x[0], rtol=1e-15)
    # same step from a finite-difference gradient
    h = 1e-6
    fd = np.array([(SQUARED.value(w0.w + h * e, x, y)[0] - SQUARED.value(w0.w - h * e, x, y)[0]) / (2 * h)
                   for e in np.eye(3)])
    np.testing.assert_allclose((w0.w - w1) / eta, fd, rtol=1e-6)


def test_local_train_contract():
    ds = toy_datasets(1, seed=3, dim=5, size_range=(50, 50))[0]
    w0 = ModelState(np.linspace(-1, 1, 5))
    np.testing.assert_array_equal(local_train(w0, ds, 3, 7, 0.0, seed=1), w0.w)
    np.testing.assert_array_equal(local_train(w0, ds, 3, 7, 0.0, seed=1, scaled_return=True), 50 * w0.w)
    a = local_train(w0, ds, 2, 8, 0.3, seed=9)
    b = local_train(w0, ds, 2, 8, 0.3, seed=9)
    np.testing.assert_array_equal(a, b)
    assert mean_loss(a, ds) < mean_loss(w0.w, ds)
    with pytest.raises(InconsistentLengthsError):
        local_train(ModelState.zeros(4), ds, 1, 8, 0.1, seed=0)


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_local_train_reports_non_finite_gradient():
    ds = LocalDataset(np.array([[np.inf, 1.0]]), np.array([1.0]))
    with pytest.raises(TrainingError) as exc:
        local_train(ModelState(np.array([0.0, 1.0])), ds, 1, 1, 0.1, seed=0, loss=SQUARED)
    assert "epoch" in exc.value.diagnostics


def test_aggregate_rules():
    w = np.array([1.0, -2.0])
    assert np.allclose(aggregate([w, w, w], [1, 1, 1], [100, 300, 600]).w, w)
    np.testing.assert_allclose(aggregate([w, None], [1, 0], [500, 500]).w, 0.5 * w)
    np.testing.assert_allclose(aggregate([w, None], [1, 0], [500, 500], normalization="participating").w, w)
    np.testing.assert_allclose(aggregate([500 * w, None], [1, 0], [500, 500], prescaled=True).w, 0.5 * w)
    np.testing.assert_array_equal(aggregate([None, None], [0, 0], [1, 2], dim=2).w, [0.0, 0.0])
    with pytest.raises(InconsistentLengthsError):
        aggregate([w, np.ones(3)], [1, 1], [1, 1])
    with pytest.raises(InconsistentLengthsError):
        aggregate([w], [1, 1], [1, 1])
    with pytest.raises(DomainError):
        aggregate([w], [2], [1])


def test_aggregate_is_order_independent():
    rng = np.random.default_rng(2)
    models = [rng.normal(size=6) for _ in range(5)]
    alphas = [1, 0, 1, 1, 1]
    sizes = [200, 300, 400, 500, 600]
    ref = aggregate(models, alphas, sizes).w
    perm = [3, 0, 4, 2, 1]
    out = aggregate([models[i] for i in perm], [alphas[i] for i in perm], [sizes[i] for i in perm]).w
    np.testing.assert_allclose(out, ref, rtol=1e-14)


def test_toy_datasets():
    a = toy_datasets(4, seed=5)
    b = toy_datasets(4, seed=5)
    assert all(np.array_equal(x.x, y.x) for x, y in zip(a, b))
    assert all(200 <= d.size <= 1000 and d.dim == 20 for d in a)
    assert set(np.unique(a[0].y)) == {-1.0, 1.0}


def test_config_validation():
    for kw in ({"num_slots": 0}, {"local_epochs": 0}, {"batch_size": 0}, {"learning_rate": 0.0},
               {"normalization": "mean"}):
        with pytest.raises(DomainError):
            FlConfig(**kw)


def test_checkpoint_round_trip(tmp_path):
    m = ModelState(np.array([0.1, -1e-17, 3.0e8]))
    p = write_checkpoint(tmp_path / "m.txt", m, slot=4)
    assert p.read_text().splitlines()[:2] == ["satsched-model 1", "dim=3 slot=4"]
    np.testing.assert_array_equal(read_checkpoint(p).w, m.w)
    p.write_text("satsched-model 2\ndim=1\n1.0\n")
    with pytest.raises(DomainError, match="version"):
        read_checkpoint(p)


# ---------------------------------------------------------------- rounds


def _state(tl, contacts, charge=2000.0, size=300, sat_id="s1", seed=0):
    ds = toy_datasets(1, seed=seed, dim=20, size_range=(size, size))[0]
    return SatelliteState(sat_id, tl, contacts, ds, charge, tl.t0)


def test_round_with_sunlight_sufficient_window_costs_nothing():
    tl = SunEclipseTimeline.from_durations([60.0, 60.0], [35.0, 35.0])
    st = _state(tl, [(0.0, 100.0), (3000.0, 3300.0)])
    out = run_round(1, (0.0, 4000.0), ModelState.zeros(20), [st], FlConfig(), BatterySpec(2000), TrainingTask(50, 40))
    rec = out.satellites[0]
    assert rec.participates and rec.status == "ok"
    assert rec.cycle_cost == 0.0 and rec.max_dod == 0.0
    assert out.alphas == [1]
    assert out.loss < np.log(2)


def test_round_without_participants_is_flagged():
    tl = SunEclipseTimeline.from_durations([60.0], [35.0])
    st = _state(tl, [])
    m = ModelState(np.ones(20))
    out = run_round(1, (0.0, 3000.0), m, [st], FlConfig(), BatterySpec(2000), TrainingTask(50, 20))
    assert out.flags == ["no participants"]
    np.testing.assert_array_equal(out.model.w, 0.0)
    out = run_round(1, (0.0, 3000.0), m, [st], FlConfig(normalization="participating"), BatterySpec(2000),
                    TrainingTask(50, 20))
    np.testing.assert_array_equal(out.model.w, m.w)


def test_agnostic_round_in_eclipse_discharges():
    # model arrives at the start of an eclipse
    tl = SunEclipseTimeline.from_durations([60.0, 60.0], [35.0, 35.0])
    st = _state(tl, [(3600.0, 3700.0), (7000.0, 7100.0)])
    out = run_round(1, (3600.0, 8000.0), ModelState.zeros(20), [st], FlConfig(), BatterySpec(2000),
                    TrainingTask(50, 20), mode="agnostic")
    rec = out.satellites[0]
    assert rec.max_dod == pytest.approx(0.5)
    assert rec.cycle_cost > 0.19
    # the aware schedule can wait for the next sunlight
    aware = run_round(1, (3600.0, 8000.0), ModelState.zeros(20), [_state(tl, st.contacts)], FlConfig(),
                      BatterySpec(2000), TrainingTask(50, 20), mode="aware")
    assert aware.satellites[0].cycle_cost == 0.0


def test_depleting_agnostic_satellite_is_dropped_and_charged():
    tl = SunEclipseTimeline.from_durations([60.0, 60.0], [35.0, 35.0])
    st = _state(tl, [(3600.0, 3700.0), (5500.0, 5600.0)])
    out = run_round(1, (3600.0, 6000.0), ModelState.zeros(20), [st], FlConfig(), BatterySpec(1000),
                    TrainingTask(50, 30), mode="agnostic")
    rec = out.satellites[0]
    assert rec.status == "depleted" and not rec.contributes
    assert rec.max_dod == pytest.approx(1.0)
    assert rec.cycle_cost == pytest.approx(1.0)
    assert out.flags == ["no participants", "dropped: s1"]


def test_battery_is_carried_between_rounds():
    tl = SunEclipseTimeline.from_durations([60.0, 0.0], [35.0, 60.0])
    st = _state(tl, [(3600.0, 3700.0), (4800.0, 4900.0), (6600.0, 7000.0)])
    cfg, bat, task = FlConfig(), BatterySpec(2000), TrainingTask(50, 10)
    run_round(1, (3600.0, 4900.0), ModelState.zeros(20), [st], cfg, bat, task, mode="agnostic")
    assert st.charge_Wmin == pytest.approx(1500.0)
    # no sunlight in between: the next round starts from the same charge
    out = run_round(2, (4900.0, 7500.0), ModelState.zeros(20), [st], cfg, bat, task, mode="agnostic")
    assert out.satellites[0].trajectory.b_s[0] == pytest.approx(1500.0)


def test_brownout_cuts_at_empty():
    tl = SunEclipseTimeline.from_durations([10.0, 10.0], [30.0, 30.0])
    bat = BatterySpec(1000)
    task = TrainingTask(50, 50)
    inst = build_problem(tl, EnergyProfile.full_recharge(tl, bat, task), task, bat)
    sched, cut = brownout_schedule(inst, energy_agnostic_schedule(inst))
    assert cut
    np.testing.assert_allclose(sched.tau_s, [10, 0])
    np.testing.assert_allclose(sched.tau_e, [20, 0])


def test_global_loss_weights_by_size():
    a = LocalDataset(np.array([[1.0]]), np.array([1.0]))
    b = LocalDataset(np.array([[1.0], [1.0], [1.0]]), np.array([-1.0, -1.0, -1.0]))
    w = ModelState(np.array([2.0]))
    expected = (np.log1p(np.exp(-2.0)) + 3 * np.log1p(np.exp(2.0))) / 4
    assert global_loss(w, [a, b]) == pytest.approx(expected)
