import math

import pytest

from controller.law import (
    DegenerateBandError,
    FeedbackSignal,
    GbParams,
    GbState,
    NoHeadroomError,
    PiParams,
    PiState,
    UndefinedDeltaError,
    apply_gb_signal,
    d_mid,
    derive_beta,
    derive_thresholds,
    drop_level_table,
    drop_prob_from_rate,
    gb_delta,
    gb_signal_from_congestion,
    invert_thresholds,
    pi_update,
    post_step_congestion,
    quantize_delta,
    quantized_drop_update,
)


def _pi(gain_p=0.0, gain_i=0.5):
    return PiParams(gain_p=gain_p, gain_i=gain_i, interval=1.0, alpha=1.0, speedup=1.28, line_rate=1.0)


def test_pi_update_first_step():
    rho, state = pi_update(PiState(), 1.0, 0.5, _pi())
    assert rho == pytest.approx(0.25)
    assert state.accumulator == pytest.approx(0.25)
    assert state.last_error == pytest.approx(0.5)


def test_pi_update_zero_error_stays_zero():
    state = PiState()
    for _ in range(20):
        rho, state = pi_update(state, 0.7, 0.7, _pi(0.3, 0.4))
        assert rho == 0.0


def test_pi_update_linear_ramp_under_saturation():
    sc, r_opt, k, ki = 1.0, 0.9, 0.2, 0.5
    params = _pi(k, ki)
    state = PiState()
    for n in range(10):
        rho, state = pi_update(state, sc, r_opt, params)
        assert rho == pytest.approx(k * (sc - r_opt) + (n + 1) * ki * (sc - r_opt))


def test_pi_update_clamps_and_freezes_accumulator():
    params = _pi(0.0, 0.9)
    state = PiState(accumulator=5.0, last_drop_prob=0.5)
    rho, new_state = pi_update(state, 1.0, 0.2, params)
    assert rho == pytest.approx(2.0)
    assert new_state.accumulator == 5.0

    rho, new_state = pi_update(PiState(accumulator=-1.0), 0.2, 1.0, params)
    assert rho == 0.0
    assert new_state.accumulator == -1.0


def test_pi_update_rejects_negative_rates():
    with pytest.raises(ValueError):
        pi_update(PiState(), -1.0, 0.5, _pi())


def test_pi_output_probability_always_bounded():
    params = _pi(0.4, 1.1)
    state = PiState()
    for measured, desired in [(1.0, 0.1), (3.0, 0.0), (0.5, 2.0), (2.0, 0.3), (0.01, 0.0)]:
        rho, state = pi_update(state, measured, desired, params)
        prob = drop_prob_from_rate(rho, measured, state.last_drop_prob)
        assert 0.0 <= prob <= 1.0
        state = PiState(state.accumulator, state.last_error, prob)


def test_drop_prob_from_rate_examples():
    assert drop_prob_from_rate(0.25, 1.0, 0.0) == pytest.approx(0.25)
    assert drop_prob_from_rate(0.2, 0.8, 0.5) == pytest.approx(0.125)
    assert drop_prob_from_rate(0.0, 3.0, 0.0) == 0.0
    assert drop_prob_from_rate(0.4, 0.0, 0.3) == 0.3
    assert drop_prob_from_rate(5.0, 1.0, 0.0) == 1.0


def test_gb_delta_examples():
    assert gb_delta(0.1, 0.0, 1.0, _pi(0.0, 0.5)) == pytest.approx(0.05)
    assert gb_delta(0.0, 0.0, 1.0, _pi(0.7, 0.2)) == 0.0
    assert gb_delta(1.0, 1.0, 2.0, _pi(0.5, 0.5)) == pytest.approx(0.25)
    with pytest.raises(UndefinedDeltaError, match="undefined delta"):
        gb_delta(1.0, 0.0, 0.0, _pi())


def test_quantize_delta_levels():
    assert quantize_delta(0.3, 0.1, 0.1, 0.08) == 0.08
    assert quantize_delta(0.0, 0.1, 0.1, 0.08) == 0.0
    assert quantize_delta(-0.3, 0.1, 0.1, 0.08) == pytest.approx(-0.0869565, abs=1e-6)
    with pytest.raises(ValueError):
        quantize_delta(0.0, 0.1, -0.2, 0.08)


def test_quantized_update_matches_table_pointer():
    beta = derive_beta(0.17, 0.02)
    table = drop_level_table(beta, 64)
    prob = 0.0
    for k in range(1, 6):
        prob = quantized_drop_update(prob, beta)
        assert prob == pytest.approx(table[k], abs=1e-12)
    for k in range(4, -1, -1):
        prob = quantized_drop_update(prob, beta / (beta - 1.0))
        assert prob == pytest.approx(table[k], abs=1e-12)


def test_gb_signal_from_congestion_branches():
    params = GbParams.from_thresholds(0.17, 0.02)
    assert gb_signal_from_congestion(0.20, params) is FeedbackSignal.INCREASE
    assert gb_signal_from_congestion(0.01, params) is FeedbackSignal.DECREASE
    assert gb_signal_from_congestion(0.10, params) is FeedbackSignal.HOLD


def test_gb_signal_partitions_unit_interval():
    params = GbParams.from_thresholds(0.17, 0.02)
    grid = [i / 10000 for i in range(10001)]
    signals = [gb_signal_from_congestion(c, params) for c in grid]
    for c, s in zip(grid, signals):
        if c > 0.17:
            assert s is FeedbackSignal.INCREASE
        elif c < 0.02:
            assert s is FeedbackSignal.DECREASE
        else:
            assert s is FeedbackSignal.HOLD
    # increase -> hold -> decrease never interleave when read from the top
    changes = sum(1 for a, b in zip(signals, signals[1:]) if a is not b)
    assert changes == 2


def test_drop_level_table_values_and_monotonicity():
    table = drop_level_table(0.0797, 64)
    assert table[0] == 0.0
    assert table[1] == pytest.approx(0.0797)
    assert table[2] == pytest.approx(0.15305, abs=1e-5)
    assert all(b > a for a, b in zip(table, table[1:]))
    assert all(0.0 <= p < 1.0 for p in table)


def test_admit_composition_is_exact():
    beta = derive_beta(0.17, 0.02)
    table = drop_level_table(beta, 64)
    state = GbState()
    for k in range(1, 30):
        state = apply_gb_signal(state, FeedbackSignal.INCREASE, 64)
        assert state.level_index == k
        assert 1.0 - table[k] == pytest.approx((1.0 - beta) ** k, rel=1e-12)


def test_apply_gb_signal_saturates():
    assert apply_gb_signal(GbState(0), FeedbackSignal.DECREASE, 10).level_index == 0
    assert apply_gb_signal(GbState(3), FeedbackSignal.INCREASE, 10).level_index == 4
    assert apply_gb_signal(GbState(9), FeedbackSignal.INCREASE, 10).level_index == 9
    assert apply_gb_signal(GbState(5), FeedbackSignal.HOLD, 10).level_index == 5


def test_derive_beta_and_hysteresis_symmetry():
    beta = derive_beta(0.17, 0.02)
    assert beta == pytest.approx(0.079707, abs=1e-6)
    mid = d_mid(0.02, 0.17)
    assert abs(post_step_congestion(0.17, beta, FeedbackSignal.INCREASE) - mid) < 1e-12
    assert abs(post_step_congestion(0.02, beta, FeedbackSignal.DECREASE) - mid) < 1e-12
    with pytest.raises(DegenerateBandError, match="degenerate hysteresis band"):
        derive_beta(0.1, 0.1)


def test_d_mid_examples():
    assert d_mid(0.02, 0.17) == pytest.approx(0.0981, abs=1e-4)
    assert d_mid(0.0, 0.3) == pytest.approx(1.0 - math.sqrt(0.7))
    with pytest.raises(DegenerateBandError):
        d_mid(0.0, 0.0)


def test_derive_thresholds_examples():
    d_max, d_min = derive_thresholds(1.0, 1.28, 1.0, 0.0, 0.0)
    assert d_max == pytest.approx(0.21875)
    assert d_min == pytest.approx(0.21875)

    d_max, d_min = derive_thresholds(1.0, 1.28, 1.0, 0.064, 0.256)
    assert d_max == pytest.approx(0.26875)
    assert d_min == pytest.approx(0.01875)

    d_max, d_min = derive_thresholds(1.0, 1.28, 1.0, 0.064, 0.32)
    assert d_min == 0.0

    with pytest.raises(NoHeadroomError, match="no congestion headroom"):
        derive_thresholds(0.5, 1.5, 1.0, 0.1, 0.1)


def test_invert_thresholds_round_trip():
    delta_max, delta_min = invert_thresholds(0.95, 1.28, 1.0, 0.17, 0.02)
    assert delta_max + delta_min > 0
    d_max, d_min = derive_thresholds(0.95, 1.28, 1.0, delta_max, delta_min)
    assert d_max == pytest.approx(0.17, abs=1e-12)
    assert d_min == pytest.approx(0.02, abs=1e-12)
