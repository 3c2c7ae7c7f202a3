"""Feedback controllers driving the ingress droppers."""

from .controllers import GearBoxController, Measurement, PiController, build_controller
from .law import (
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
    pi_linear,
    pi_update,
    post_step_congestion,
    quantize_delta,
    quantized_drop_update,
)
