from .model import (
    StepResponse,
    StepScenario,
    UnstableGainsError,
    diverges,
    initial_period,
    is_stable,
    multiflow_initial_period,
    multiflow_initial_rate,
    poles,
    queue_trajectory,
    step_response_closed_form,
    step_response_recurrence,
    transfer_functions,
    worst_case_delay,
)
