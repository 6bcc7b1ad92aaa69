import math

import numpy as np
import pytest
from numpy.polynomial import polynomial as P

from models import GridTooCoarse, constant, evaluate_many, tf
from evaluations.stability import (
    Band,
    BodeData,
    StabilityReport,
    closed_loop_poles,
    margins,
    margins_of,
    meets_targets,
    normalized_margin,
    pole_stable,
    sweep,
    unwrap_phase_deg,
)

TRIPLE_POLE = tf([8.0], [1.0, 3.0, 3.0, 1.0])
PHASE_CROSSOVER_HZ = math.sqrt(3.0) / (2 * math.pi)


def test_band_grid_has_exact_endpoints():
    band = Band(10.0, 1e7, 200)
    grid = band.grid()
    assert grid[0] == 10.0 and grid[-1] == 1e7
    assert grid.size == 6 * 200 + 1
    assert np.all(np.diff(grid) > 0)


@pytest.mark.parametrize("f_min, f_max, ppd", [(0.0, 1e3, 100), (1e3, 10.0, 100), (1.0, 1e3, 5)])
def test_band_validation(f_min, f_max, ppd):
    with pytest.raises(ValueError):
        Band(f_min, f_max, ppd)


def test_bode_data_rejects_discontinuous_phase():
    with pytest.raises(ValueError):
        BodeData([1.0, 2.0], [0.0, 0.0], [-170.0, 170.0])
    with pytest.raises(ValueError):
        BodeData([1.0, 1.0], [0.0, 0.0], [0.0, 0.0])


def test_unwrap_is_identity_on_continuous_phase():
    phase = np.linspace(0.0, -500.0, 101)
    np.testing.assert_array_equal(unwrap_phase_deg(phase), phase)


def test_unwrap_restores_lagging_phase():
    freqs = np.geomspace(0.01, 10.0, 300)
    raw = np.angle(evaluate_many(TRIPLE_POLE, freqs), deg=True)
    expected = -3 * np.degrees(np.arctan(2 * np.pi * freqs))
    np.testing.assert_allclose(unwrap_phase_deg(raw), expected, atol=1e-9)


def test_sweep_first_order_corner():
    fc = 1000.0
    bode = sweep(tf([1.0], [1.0, 1 / (2 * math.pi * fc)]), 10.0, 1e5, 200)
    logf = np.log(bode.freqs_hz)
    assert np.interp(math.log(fc), logf, bode.mag_db) == pytest.approx(-3.0103, abs=1e-3)
    assert np.interp(math.log(fc), logf, bode.phase_deg) == pytest.approx(-45.0, abs=0.05)


def test_sweep_double_integrator():
    bode = sweep(tf([1.0], [0.0, 0.0, 1.0]), 1.0, 1e4, 50)
    np.testing.assert_allclose(bode.phase_deg, -180.0, atol=1e-9)
    slope = (bode.mag_db[-1] - bode.mag_db[0]) / 4.0
    assert slope == pytest.approx(-40.0, abs=1e-9)


def test_sweep_triple_pole_phase_crossover():
    bode = sweep(TRIPLE_POLE, 0.01, 10.0, 200)
    logf = np.log(bode.freqs_hz)
    crossing = math.exp(np.interp(180.0, -bode.phase_deg, logf))
    assert crossing == pytest.approx(PHASE_CROSSOVER_HZ, rel=1e-4)


def test_sweep_refuses_unresolvable_resonance():
    w0 = 2 * math.pi * 1234.5
    resonance = tf([1.0], [1.0, 1e-9 / w0, 1 / w0 ** 2])
    with pytest.raises(GridTooCoarse):
        sweep(resonance, 10.0, 1e5, 10)


def test_margins_of_integrator():
    k = 2 * math.pi * 100.0
    report = margins_of(tf([k], [0.0, 1.0]), Band(1.0, 1e4, 100))
    assert report.phase_margin_deg == pytest.approx(90.0, abs=1e-9)
    assert report.gain_crossover_hz[0] == pytest.approx(100.0, rel=1e-9)
    assert report.gain_margin_db == math.inf
    assert report.pole_stable


@pytest.mark.parametrize("n", range(1, 7))
def test_unwrapped_phase_of_repeated_pole(n):
    corner = 1 / (2 * math.pi)
    bode = sweep(tf([1.0], P.polypow([1.0, 1.0], n)), corner / 100, corner * 1e4, 100)
    assert bode.phase_deg[-1] == pytest.approx(-90.0 * n, abs=1.0)
    assert np.all(np.diff(bode.phase_deg) < 0)


@pytest.mark.parametrize("ppd", [100, 200, 400])
def test_crossover_interpolation_error(ppd):
    phase_crossover = margins_of(TRIPLE_POLE, Band(0.01, 10.0, ppd)).phase_crossover_hz[0]
    assert phase_crossover == pytest.approx(PHASE_CROSSOVER_HZ, rel=5e-3)
    gain_crossover = margins_of(tf([1.0], [0.0, 1.0, 1.0]), Band(1e-3, 10.0, ppd)).gain_crossover_hz[0]
    assert 2 * math.pi * gain_crossover == pytest.approx(math.sqrt((math.sqrt(5.0) - 1) / 2), rel=5e-3)


@pytest.mark.parametrize("loop", ["uncompensated_loop", "compensated_loop"])
def test_margins_settle_with_grid_density(loop, request):
    t = request.getfixturevalue(loop)
    coarse = margins_of(t, Band(10.0, 1e7, 200))
    fine = margins_of(t, Band(10.0, 1e7, 400))
    assert coarse.gain_margin_db == pytest.approx(fine.gain_margin_db, abs=0.05)
    assert coarse.phase_margin_deg == pytest.approx(fine.phase_margin_deg, abs=0.2)


def test_margins_of_marginal_triple_pole():
    report = margins_of(TRIPLE_POLE, Band(0.01, 10.0, 200))
    assert report.gain_margin_db == pytest.approx(0.0, abs=0.05)
    assert report.phase_crossover_hz[0] == pytest.approx(PHASE_CROSSOVER_HZ, rel=5e-3)
    assert report.phase_margin_deg == pytest.approx(0.0, abs=0.5)
    assert report.marginal


def test_margins_of_integrator_with_pole():
    report = margins_of(tf([1.0], [0.0, 1.0, 1.0]), Band(1e-3, 10.0, 200))
    assert report.phase_margin_deg == pytest.approx(51.83, abs=0.2)
    assert 2 * math.pi * report.gain_crossover_hz[0] == pytest.approx(0.7862, rel=1e-3)
    assert report.gain_margin_db == math.inf


def test_margins_of_constant_has_no_crossings():
    report = margins_of(constant(0.1), Band(1.0, 1e4, 50))
    assert report.gain_crossover_hz == [] and report.phase_crossover_hz == []
    assert report.gain_margin_db == math.inf and report.phase_margin_deg == math.inf
    assert report.worst_case == (None, None)
    assert report.pole_stable


def test_margins_reports_every_crossing_and_the_worst():
    bode = BodeData([1.0, 10.0, 100.0, 1000.0], [10.0, -10.0, 10.0, -10.0], [-100.0, -100.0, -150.0, -150.0])
    report = margins(bode)
    assert len(report.gain_crossover_hz) == 3
    np.testing.assert_allclose(report.phase_margins_deg, [80.0, 55.0, 30.0])
    assert report.phase_margin_deg == pytest.approx(30.0)
    assert report.worst_case[1] == pytest.approx(math.sqrt(1e5))
    assert report.worst_case[0] is None


def test_uncompensated_fixture_margins(uncompensated_loop, fixture_config):
    report = margins_of(uncompensated_loop, fixture_config.sweep)
    assert report.phase_margin_deg == pytest.approx(13.0, abs=5.0)
    assert report.gain_margin_db == pytest.approx(3.2, abs=1.0)
    assert report.pole_stable
    assert not meets_targets(report)


def test_compensated_fixture_margins(compensated_loop, compensated_config):
    report = margins_of(compensated_loop, compensated_config.sweep)
    assert report.gain_margin_db >= 15.0
    assert report.phase_margin_deg >= 45.0
    assert report.pole_stable
    assert meets_targets(report)


def test_well_behaved_supply(well_behaved_config):
    from models import loop_gain

    report = margins_of(loop_gain(well_behaved_config.model()), well_behaved_config.sweep)
    assert report.gain_margin_db > 20.0
    assert report.phase_margin_deg > 60.0


def test_pole_stable_examples():
    assert pole_stable(tf([1.0], [0.0, 1.0]), constant(1.0))
    assert not pole_stable(tf([10.0], [1.0, 3.0, 3.0, 1.0]))
    assert pole_stable(tf([4.0], [1.0, 3.0, 3.0, 1.0]))
    roots = closed_loop_poles(tf([1.0], [0.0, 1.0]))
    assert len(roots) == 1 and abs(roots[0] + 1.0) < 1e-12


def test_normalized_margin_and_targets():
    report = StabilityReport(gain_margin_db=20.0, phase_margin_deg=45.0)
    assert normalized_margin(report) == pytest.approx(1.0)
    assert meets_targets(report)
    assert not meets_targets(StabilityReport(gain_margin_db=9.9, phase_margin_deg=90.0))


def _random_plant(rng):
    n = int(rng.integers(3, 6))
    corners = 2 * math.pi * np.exp(rng.uniform(math.log(100.0), math.log(1e5), n))
    den = np.array([1.0])
    for w in corners:
        den = np.convolve(den, [1.0, 1.0 / w])
    return tf([math.exp(rng.uniform(math.log(0.5), math.log(100.0)))], den)


def test_margin_sign_agrees_with_closed_loop_poles():
    rng = np.random.default_rng(20240601)
    band = Band(1.0, 1e8, 100)
    checked, stable_count = 0, 0
    for _ in range(500):
        plant = _random_plant(rng)
        report = margins_of(plant, band)
        if report.marginal:
            continue
        checked += 1
        stable_count += report.pole_stable
        assert report.margin_stable == report.pole_stable
    assert checked > 450
    assert 0 < stable_count < checked
