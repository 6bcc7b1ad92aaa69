import os
import sys

import numpy as np
import pytest

sys.path.insert(0, os.path.join(os.path.dirname(os.path.dirname(os.path.abspath(__file__))), "tools"))

from calibrate_fixture import (  # noqa: E402
    MISSING_CROSSING_PENALTY,
    FixtureAnchors,
    anchor_error,
    calibrate,
    get_parameters,
    set_parameters,
)


def test_shipped_fixture_sits_on_the_anchors(fixture_config):
    assert anchor_error(fixture_config) < 0.25


def test_parameters_round_trip(fixture_config):
    x = get_parameters(fixture_config)
    again = set_parameters(fixture_config, x)
    np.testing.assert_allclose(get_parameters(again), x, rtol=1e-12)
    assert again.template.dc_gain == pytest.approx(fixture_config.template.dc_gain, rel=1e-12)
    assert again.bank == fixture_config.bank


def test_missing_crossing_is_penalised(fixture_config):
    x = get_parameters(fixture_config)
    x[0] = np.log(0.1)
    assert anchor_error(set_parameters(fixture_config, x)) == MISSING_CROSSING_PENALTY


def test_calibration_does_not_get_worse(fixture_config):
    anchors = FixtureAnchors(gain_crossover_hz=5500.0)
    before = anchor_error(fixture_config, anchors)
    _, after = calibrate(fixture_config, anchors, restarts=1, max_iter=20)
    assert after <= before
