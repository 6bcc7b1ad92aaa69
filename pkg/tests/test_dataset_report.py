import json
import math
import os

import numpy as np
import pytest

from models import (
    IoError,
    NonMonotonicFrequency,
    ParseError,
    ValidationError,
    evaluate,
    tf,
)
from evaluations.gen_report import emit, read_report, write_bode_csv, write_waveform_csv
from evaluations.stability import Band, margins, margins_of, sweep
from experiments.dataset import (
    config_to_dict,
    dump_config,
    import_measured,
    load_config,
    parse_config,
    read_measured,
)
from experiments.transient import LoadStep, simulate_step

MINIMAL = {
    "schema": 1,
    "regulator": {"dc_gain": 10.0, "error_amp_pole_hz": 1e3, "lc_corner_hz": 1e5, "lc_quality": 0.7},
    "sense": {"load_r": 1.0},
}


def _write(path, text):
    with open(path, "w") as f:
        f.write(text)
    return str(path)


def test_fixture_config_loads(fixture_config):
    assert fixture_config.name == "internal_supply"
    assert fixture_config.bank.total_capacitance == pytest.approx(4.7e-3)
    assert fixture_config.sense.lead is None
    assert fixture_config.load_step.delta_amps == 5.0


def test_compensated_config_carries_the_lead(compensated_config):
    assert compensated_config.sense.lead.r_comp == 20.0
    assert compensated_config.sense.lead.c_comp == 4.7e-6


def test_minimal_config():
    config = parse_config(MINIMAL)
    assert config.bank is None
    assert config.sweep == Band()
    assert evaluate(config.model().h, 1000.0) == 1.0


def test_negative_esr_names_the_field(fixture_config):
    raw = config_to_dict(fixture_config)
    raw["bank"][0]["esr"] = -1.0
    with pytest.raises(ValidationError) as info:
        parse_config(raw)
    assert info.value.key == "bank[0].esr"


@pytest.mark.parametrize(
    "path, value, key",
    [
        (("regulator", "dc_gian"), 1.0, "regulator.dc_gian"),
        (("sense", "lead"), {"r_comp": 20.0}, "sense.lead.c_comp"),
        (("regulator", "dc_gain"), "ten", "regulator.dc_gain"),
        (("sweep",), {"points_per_decade": 2.5}, "sweep.points_per_decade"),
        (("extra",), 1, "extra"),
    ],
)
def test_validation_errors(path, value, key):
    raw = json.loads(json.dumps(MINIMAL))
    target = raw
    for part in path[:-1]:
        target = target[part]
    target[path[-1]] = value
    with pytest.raises(ValidationError) as info:
        parse_config(raw)
    assert info.value.key == key


def test_schema_version_is_checked():
    with pytest.raises(ValidationError):
        parse_config({**MINIMAL, "schema": 2})


def test_malformed_json_reports_the_line(tmp_path):
    path = _write(tmp_path / "bad.json", '{\n  "schema": 1,\n  oops\n}\n')
    with pytest.raises(ParseError) as info:
        load_config(path)
    assert info.value.line == 3


def test_missing_config_file(tmp_path):
    with pytest.raises(ParseError):
        load_config(str(tmp_path / "missing.json"))


def test_config_round_trip(tmp_path, compensated_config):
    path = str(tmp_path / "round_trip.json")
    dump_config(compensated_config, path)
    assert load_config(path) == compensated_config


def test_bode_csv_round_trip(tmp_path):
    loop = tf([1.0], [0.0, 1.0, 1.0])
    bode = sweep(loop, 1e-3, 10.0, 200)
    path = write_bode_csv(str(tmp_path / "loop.csv"), bode)
    with open(path) as f:
        assert f.readline().strip() == "freq_hz,mag_db,phase_deg"
    measured, report = import_measured(path)
    expected = margins(bode)
    np.testing.assert_array_equal(measured.bode.phase_deg, bode.phase_deg)
    assert report.phase_margin_deg == expected.phase_margin_deg
    assert report.phase_margin_deg == pytest.approx(51.83, abs=0.3)


def test_fixture_bode_csv_round_trip(tmp_path, uncompensated_loop, fixture_config):
    bode = sweep(uncompensated_loop, fixture_config.sweep.f_min_hz, fixture_config.sweep.f_max_hz, 200)
    _, report = import_measured(write_bode_csv(str(tmp_path / "fixture.csv"), bode))
    expected = margins_of(uncompensated_loop, fixture_config.sweep)
    assert report.gain_margin_db == pytest.approx(expected.gain_margin_db, abs=0.01)
    assert report.phase_margin_deg == pytest.approx(expected.phase_margin_deg, abs=0.05)


def test_measured_phase_on_another_branch(tmp_path):
    rows = "freq_hz,mag_db,phase_deg\n10,6,{0}\n100,-6,{0}\n1000,-20,{0}\n"
    _, leading = import_measured(_write(tmp_path / "leading.csv", rows.format(170)))
    _, lagging = import_measured(_write(tmp_path / "lagging.csv", rows.format(-190)))
    assert leading.phase_margin_deg == pytest.approx(-10.0, abs=1e-9)
    assert lagging.phase_margin_deg == leading.phase_margin_deg
    assert not leading.margin_stable


def test_measured_phase_wrapping_mid_sweep(tmp_path):
    rows = "freq_hz,mag_db,phase_deg\n10,6,-170\n100,-6,170\n1000,-20,160\n"
    measured, report = import_measured(_write(tmp_path / "wrapped.csv", rows))
    np.testing.assert_allclose(measured.bode.phase_deg, [-170.0, -190.0, -200.0])
    assert report.phase_margin_deg == pytest.approx(0.0, abs=1e-9)


def test_measured_csv_errors(tmp_path):
    with pytest.raises(ParseError) as info:
        read_measured(_write(tmp_path / "header.csv", "f,mag,phase\n1,0,0\n2,0,0\n"))
    assert info.value.line == 1
    with pytest.raises(ParseError):
        read_measured(_write(tmp_path / "one_row.csv", "freq_hz,mag_db,phase_deg\n1,0,0\n"))
    with pytest.raises(ParseError) as info:
        read_measured(_write(tmp_path / "text.csv", "freq_hz,mag_db,phase_deg\n1,0,0\n2,abc,0\n"))
    assert info.value.line == 3
    with pytest.raises(NonMonotonicFrequency):
        read_measured(_write(tmp_path / "order.csv", "freq_hz,mag_db,phase_deg\n1,0,0\n3,0,0\n2,0,0\n"))


def test_empty_sweep_is_refused(tmp_path):
    path = tmp_path / "empty.csv"
    with pytest.raises(IoError):
        write_bode_csv(str(path), None)
    assert not path.exists()


def test_report_file_format(tmp_path, compensated_loop, compensated_config):
    report = margins_of(compensated_loop, compensated_config.sweep)
    path = emit(report, "report", "txt", str(tmp_path / "report.txt"), title="compensated")
    with open(path) as f:
        lines = f.read().splitlines()
    assert lines[0] == "# compensated"
    assert any(line.startswith("gain_margin_db=") for line in lines)
    assert any(line.startswith("phase_margin_deg=") for line in lines)
    values = read_report(path)
    assert values["gain_margin_db"] == report.gain_margin_db
    assert values["phase_margin_deg"] == report.phase_margin_deg


def test_bode_svg(tmp_path, compensated_loop, compensated_config):
    bode = sweep(compensated_loop, 10.0, 1e7, 50)
    path = emit(bode, "bode", "svg", str(tmp_path / "loop.svg"), report=margins(bode), title="loop gain")
    with open(path) as f:
        assert "<svg" in f.read()


def test_waveform_outputs(tmp_path):
    result = simulate_step(tf([1.0], [1.0, 1e-3]), LoadStep(0.0, 1.0, 1e-5, 5e-3))
    path = write_waveform_csv(str(tmp_path / "step.csv"), result)
    with open(path) as f:
        header = f.readline().strip()
        first = f.readline().strip()
    assert header == "time_s,v_deviation"
    assert first.split(",")[0] == "0.0"
    svg = emit(result, "waveform", "svg", str(tmp_path / "step.svg"))
    assert os.path.getsize(svg) > 0


def test_output_directory_must_exist(tmp_path):
    bode = sweep(tf([1.0], [1.0, 1.0]), 0.01, 100.0, 20)
    with pytest.raises(IoError):
        write_bode_csv(str(tmp_path / "missing" / "loop.csv"), bode)
