import math

import numpy as np
import pytest

from models import InfeasibleCorner, LeadNetwork, NoCrossover, NoFeasibleDesign, constant, evaluate_many, tf, with_lead
from evaluations.stability import margins_of, normalized_margin, sweep, sweep_band
from experiments.compensator import (
    CompensationDesign,
    capacitance_sweep,
    compare_designs,
    design_lead,
    lead_corner,
    parallel_resistance,
    pick_f0,
    rcomp_for_f0,
    snap_to_series,
)
from models import loop_gain


def test_lead_corner():
    assert lead_corner(1 / (2 * math.pi), 1.0) == pytest.approx(1.0, rel=1e-15)
    assert lead_corner(16.9314, 4.7e-6) == pytest.approx(2000.0, abs=0.1)
    assert lead_corner(100.0, 4.7e-6) == pytest.approx(338.63, abs=0.01)
    with pytest.raises(ValueError):
        lead_corner(0.0, 1e-6)


def test_rcomp_for_f0():
    assert rcomp_for_f0(100.0, 4.7e-6, 2000.0) == pytest.approx(20.3824, abs=1e-4)


def test_rcomp_at_the_feasibility_boundary():
    with pytest.raises(InfeasibleCorner):
        rcomp_for_f0(100.0, 4.7e-6, 338.63)
    with pytest.raises(InfeasibleCorner):
        rcomp_for_f0(100.0, 4.7e-6, 100.0)


def test_feasibility_margin_is_a_hundredth_of_a_percent():
    corner = lead_corner(100.0, 4.7e-6)
    with pytest.raises(InfeasibleCorner):
        rcomp_for_f0(100.0, 4.7e-6, corner * (1 + 5e-5))
    assert rcomp_for_f0(100.0, 4.7e-6, corner * 1.001) == pytest.approx(1e5, rel=1e-6)


def test_rcomp_for_very_high_corner():
    r = rcomp_for_f0(100.0, 4.7e-6, 1e9)
    assert r == pytest.approx(1 / (2 * math.pi * 1e9 * 4.7e-6), rel=1e-6)
    assert lead_corner(parallel_resistance(r, 100.0), 4.7e-6) == pytest.approx(1e9, rel=1e-9)


def test_rcomp_round_trip():
    rng = np.random.default_rng(3)
    for _ in range(1000):
        r_int = math.exp(rng.uniform(math.log(10.0), math.log(1e3)))
        c = math.exp(rng.uniform(math.log(1e-7), math.log(1e-4)))
        f0 = lead_corner(r_int, c) * math.exp(rng.uniform(math.log(1.01), math.log(100.0)))
        r = rcomp_for_f0(r_int, c, f0)
        assert lead_corner(parallel_resistance(r, r_int), c) == pytest.approx(f0, rel=1e-9)


def test_pick_f0_on_fixture(uncompensated_loop, fixture_config):
    f0 = pick_f0(sweep_band(uncompensated_loop, fixture_config.sweep))
    assert f0 == pytest.approx(2016.0, rel=0.10)


def test_pick_f0_synthetic_crossover():
    bode = sweep(tf([2 * math.pi * 1e4], [0.0, 1.0]), 10.0, 1e6, 100)
    assert pick_f0(bode) == pytest.approx(4000.0, rel=1e-9)


def test_pick_f0_without_crossover():
    with pytest.raises(NoCrossover):
        pick_f0(sweep(constant(0.1), 10.0, 1e6, 50))


@pytest.mark.parametrize(
    "value, series, expected",
    [(20.3824, "E24", 20.0), (4.7e-6, "E24", 4.7e-6), (31.0, "E24", 30.0), (9.8, "E24", 10.0), (31.0, "E12", 33.0),
     (0.0123, "e12", 0.012)],
)
def test_snap_to_series(value, series, expected):
    assert snap_to_series(value, series) == expected


def test_snap_to_series_rejects_bad_input():
    with pytest.raises(ValueError):
        snap_to_series(-1.0)
    with pytest.raises(ValueError):
        snap_to_series(10.0, "E96")


def test_design_at_the_crossover_heuristic(uncompensated_model, fixture_config):
    f0 = pick_f0(sweep_band(loop_gain(uncompensated_model), fixture_config.sweep))
    design = design_lead(uncompensated_model, c_candidates=[4.7e-6], f0=f0, band=fixture_config.sweep)
    assert design.r_comp_ohms == 20.0
    assert design.c_comp_farads == 4.7e-6
    assert design.f0_hz == pytest.approx(lead_corner(parallel_resistance(20.0, 100.0), 4.7e-6))
    assert design.achieved.gain_margin_db >= 15.0
    assert design.achieved.phase_margin_deg >= 45.0
    assert design.objective > normalized_margin(design.uncompensated)


def test_design_over_the_default_grid(uncompensated_model, fixture_config):
    design = design_lead(uncompensated_model, c_candidates=[4.7e-6], band=fixture_config.sweep)
    assert design.achieved.gain_margin_db >= 15.0
    assert design.achieved.phase_margin_deg >= 45.0
    assert design.achieved.pole_stable
    assert design.lead.r_comp == design.r_comp_ohms


def test_design_never_worsens_a_good_loop(well_behaved_config):
    model = well_behaved_config.model()
    before = normalized_margin(margins_of(loop_gain(model), well_behaved_config.sweep))
    try:
        design = design_lead(model, band=well_behaved_config.sweep)
    except NoFeasibleDesign:
        return
    assert design.objective >= before


def test_feasible_lead_raises_the_loop_phase(uncompensated_model, uncompensated_loop, fixture_config):
    crossover = margins_of(uncompensated_loop, fixture_config.sweep).gain_crossover_hz[0]
    for ratio in np.linspace(0.2, 0.8, 7):
        f0 = ratio * crossover
        lead = LeadNetwork(rcomp_for_f0(100.0, 4.7e-6, f0), 4.7e-6)
        freqs = np.geomspace(f0, 10 * f0, 100)
        added = np.angle(evaluate_many(loop_gain(with_lead(uncompensated_model, lead)), freqs)
                         / evaluate_many(uncompensated_loop, freqs), deg=True)
        assert np.all(added > 0)


def test_design_is_deterministic(uncompensated_model, fixture_config):
    first = design_lead(uncompensated_model, c_candidates=[2.2e-6, 4.7e-6], band=fixture_config.sweep)
    second = design_lead(uncompensated_model, c_candidates=[2.2e-6, 4.7e-6], band=fixture_config.sweep)
    assert (first.r_comp_ohms, first.c_comp_farads, first.f0_hz) == (second.r_comp_ohms, second.c_comp_farads, second.f0_hz)
    assert first.objective == second.objective


def test_design_without_candidates(uncompensated_model):
    with pytest.raises(NoFeasibleDesign):
        design_lead(uncompensated_model, c_candidates=[])


def test_design_rejects_corner_below_r_int_corner():
    with pytest.raises(ValueError):
        CompensationDesign(f0_hz=100.0, r_comp_ohms=20.0, c_comp_farads=4.7e-6, r_int_ohms=100.0, achieved=None)


def test_compare_designs(uncompensated_loop, compensated_loop, fixture_config):
    before = margins_of(uncompensated_loop, fixture_config.sweep)
    after = margins_of(compensated_loop, fixture_config.sweep)
    frame = compare_designs(before, after)
    assert list(frame.index) == ["uncompensated", "compensated"]
    assert frame.loc["compensated", "phase_margin_deg"] > frame.loc["uncompensated", "phase_margin_deg"]


def test_added_capacitance_never_helps(fixture_config):
    frame = capacitance_sweep(fixture_config.template, fixture_config.sense, band=fixture_config.sweep)
    assert len(frame) == 41
    pm = frame["phase_margin_deg"].to_numpy()
    assert np.all(np.diff(pm) <= 1e-9)
    assert pm[0] > pm[-1]
