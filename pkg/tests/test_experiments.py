import os

import pytest

from foqsim.acceptance import cbr_checks, run_pair, tcp_checks
from foqsim.experiment import ExperimentConfig, load_config, run_experiment, steady_metrics, write_outputs
from switchcore.core import SwitchConfig

ROOT_DIR = os.path.abspath(os.path.join(os.path.dirname(__file__), os.pardir))
CONFIGS = os.path.join(ROOT_DIR, "configs")


def _failed(checks):
    return [c.to_dict() for c in checks if not c.passed]


def test_cbr_competition_off_and_gearbox():
    config, off, gearbox = run_pair(os.path.join(CONFIGS, "cbr_scaled.yaml"))
    checks = cbr_checks(off, gearbox, config.duration)
    assert len(checks) == 9
    assert _failed(checks) == []
    assert off.violations == [] and gearbox.violations == []
    # Gear-Box trades fabric loss for ingress loss on the assured flows
    assert gearbox.totals[1]["ingress_dropped"] > 0
    assert gearbox.totals[1]["fabric_dropped"] < off.totals[1]["fabric_dropped"]


def test_no_sources_gives_zero_series():
    switch = SwitchConfig(num_ports=2, line_rate=10e6, speedup=1.28, fabric_memory=5000, out_queue_size=2000)
    config = ExperimentConfig(switch=switch, sources=[], duration=0.01, seed=1, window=2e-3)
    result = run_experiment(config)
    assert result.totals == {}
    assert result.violations == []
    assert len(result.series) > 0
    assert (result.series.frame["value"] == 0.0).all()


def test_summary_metrics_and_files(tmp_path):
    config = load_config(os.path.join(CONFIGS, "smoke.yaml"))
    result = run_experiment(config)
    paths = write_outputs(config, result, str(tmp_path))
    assert set(paths) == {"native", "windowed", "summary"}
    assert all(os.path.exists(p) for p in paths.values())
    summary = result.summary()
    assert summary["conservation_ok"] is True
    assert set(summary["flows"]) == {"1", "2"}
    metrics = steady_metrics(result.series, 0.5 * config.duration)
    assert 0.0 <= metrics["fabric"]["drop_free_fraction"] <= 1.0
    assert metrics["flow1"]["throughput"] > 0.0


@pytest.mark.slow
def test_staged_tcp_overload():
    config, off, gearbox = run_pair(os.path.join(CONFIGS, "tcp_scaled.yaml"))
    checks = tcp_checks(off, gearbox, config)
    assert _failed(checks) == []
    # off: the fabric stays backlogged, so fabric loss is a real share of the total
    off_fabric = sum(t["fabric_dropped"] for t in off.totals.values())
    off_egress = sum(t["egress_dropped"] for t in off.totals.values())
    assert off_fabric > 0.01 * off_egress
    assert sum(t["fabric_dropped"] for t in gearbox.totals.values()) < off_fabric
