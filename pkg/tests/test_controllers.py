import numpy as np
import pytest

from controller.controllers import GearBoxController, Measurement, PiController, build_controller, thresholds_for
from controller.law import FeedbackSignal, GbParams, PiParams


def _measure(in_rate, out_rate):
    return Measurement(in_rate=in_rate, out_rate=out_rate, congestion=1.0 - out_rate / in_rate)


def test_gearbox_delta_form_matches_congestion_form_with_zero_gain_p():
    params = GbParams.from_thresholds(0.17, 0.02)
    pi_params = PiParams(gain_p=0.0, gain_i=1.0, interval=1e-3, alpha=0.95, speedup=1.28, line_rate=1e8)
    by_congestion = GearBoxController(params, signal="congestion")
    by_delta = GearBoxController(params, signal="delta", pi_params=pi_params)

    rng = np.random.default_rng(7)
    for _ in range(500):
        in_rate = float(rng.uniform(1e6, 2e8))
        out_rate = in_rate * float(rng.uniform(0.5, 1.0))
        m = _measure(in_rate, out_rate)
        if min(abs(m.congestion - 0.17), abs(m.congestion - 0.02)) < 1e-9:
            continue
        assert by_congestion.update(m) == by_delta.update(m)
        assert by_congestion.last_signal is by_delta.last_signal


def test_gearbox_holds_without_arrivals():
    ctl = GearBoxController(GbParams.from_thresholds(0.17, 0.02))
    ctl.update(_measure(100.0, 70.0))
    assert ctl.state.level_index == 1
    prob = ctl.update(Measurement(0.0, 0.0, None))
    assert ctl.last_signal is FeedbackSignal.HOLD
    assert prob == ctl.table[1]


def test_pi_controller_reaches_target_drop():
    params = PiParams(gain_p=0.0, gain_i=0.5, interval=1e-3, alpha=1.0, speedup=1.28, line_rate=1.0)
    ctl = PiController(params)
    offered = 2.0
    out_rate = 1.0
    for _ in range(200):
        in_rate = offered * (1.0 - ctl.drop_prob)
        ctl.update(Measurement(in_rate, min(in_rate, out_rate), None))
    # equilibrium: admitted rate equals alpha * s * out_rate
    assert offered * (1.0 - ctl.drop_prob) == pytest.approx(1.28, rel=1e-3)


def test_pi_controller_keeps_probability_without_arrivals():
    params = PiParams(gain_p=0.0, gain_i=0.5, interval=1e-3)
    ctl = PiController(params)
    ctl.update(Measurement(2e9, 1e9, 0.5))
    before = ctl.drop_prob
    assert ctl.update(Measurement(0.0, 0.0, None)) == before


def test_build_controller_modes():
    assert build_controller({"mode": "off"}, 1.28, 1e8) is None
    pi = build_controller({"mode": "pi", "interval": 1e-3, "pi": {"gain_p": 0.1, "gain_i": 0.4}}, 1.28, 1e8)
    assert isinstance(pi, PiController)
    gb = build_controller(
        {"mode": "gearbox", "interval": 1e-3, "gearbox": {"d_max": 0.17, "d_min": 0.02, "table_size": 32}},
        1.28,
        1e8,
    )
    assert isinstance(gb, GearBoxController)
    assert gb.params.beta == pytest.approx(0.079707, abs=1e-6)
    assert len(gb.table) == 32
    with pytest.raises(ValueError):
        build_controller({"mode": "bang-bang", "interval": 1e-3}, 1.28, 1e8)


def test_thresholds_for_builds_gearbox_params_from_pi_deltas():
    pi_params = PiParams(gain_p=0.0, gain_i=1.0, interval=1e-3, alpha=1.0, speedup=1.28, line_rate=1e8)
    params = thresholds_for(pi_params, 0.064, 0.256)
    assert params.d_max == pytest.approx(0.26875, abs=1e-12)
    assert params.d_min == pytest.approx(0.01875, abs=1e-12)
    assert 0.0 < params.beta < 1.0
