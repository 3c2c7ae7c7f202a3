import os

import pytest

from config.schema import (
    ConfigError,
    expand_dotted,
    resolve_config,
    to_base_units,
    validate_config,
    validate_raw,
)
from config.units import UnitError, parse_quantity
from foqsim.experiment import TcpGroupSpec, load_config
from switchcore.packet import ServiceClass
from traffic.cbr import CbrSource

ROOT_DIR = os.path.abspath(os.path.join(os.path.dirname(__file__), os.pardir))
CONFIGS = os.path.join(ROOT_DIR, "configs")


def _write(tmp_path, text):
    path = tmp_path / "cfg.yaml"
    path.write_text(text, encoding="utf-8")
    return str(path)


def _minimal(**extra):
    raw = {"switch": {"num_ports": 2}, "sources": []}
    raw.update(extra)
    return raw


def test_parse_quantity_units():
    assert parse_quantity("9.52Mb/s", "rate") == pytest.approx(9.52e6)
    assert parse_quantity("50KB", "size") == 50_000
    assert parse_quantity("2.7us", "time") == pytest.approx(2.7e-6)
    assert parse_quantity(64, "size") == 64.0
    assert parse_quantity("1e-3", "time") == 1e-3


def test_parse_quantity_rejects_wrong_dimension():
    with pytest.raises(UnitError, match="unit mismatch"):
        parse_quantity("5ms", "rate")
    with pytest.raises(UnitError):
        parse_quantity("fast", "rate")


def test_expand_dotted_merges_flat_and_nested():
    raw = {"switch.speedup": 1.5, "switch": {"num_ports": 8}, "feedback.gearbox.d_max": 0.2}
    out = expand_dotted(raw)
    assert out["switch"] == {"speedup": 1.5, "num_ports": 8}
    assert out["feedback"] == {"gearbox": {"d_max": 0.2}}


def test_scheduler_weights_keep_integer_keys():
    raw = _minimal()
    raw["switch"]["scheduler"] = {"weights": {1: 6, 2: 1}}
    resolved = resolve_config(raw)
    assert resolved["switch"]["scheduler"]["weights"] == {1: 6, 2: 1}
    assert validate_config(resolved) == []


def test_empty_config_reports_missing_switch(tmp_path):
    assert validate_raw({}) == ["missing switch section"]
    with pytest.raises(ConfigError) as exc:
        load_config(_write(tmp_path, ""))
    assert exc.value.errors == ["missing switch section"]


@pytest.mark.parametrize("text", ["- switch\n- sources\n", "42\n", "just a string\n"])
def test_non_mapping_top_level_is_a_config_error(tmp_path, text):
    with pytest.raises(ConfigError) as exc:
        load_config(_write(tmp_path, text))
    assert "top level must be a mapping" in exc.value.errors[0]
    assert validate_raw(["switch"]) == ["top level must be a mapping, got list"]


def test_negative_rate_names_the_field():
    raw = _minimal(sources=[
        {"type": "cbr", "flow_id": 1, "rate": -5, "packet_size": 64, "ingress_port": 0, "egress_port": 1},
    ])
    errors = validate_raw(raw)
    assert any(e.startswith("sources[0].rate") for e in errors)


def test_every_violation_is_reported():
    raw = _minimal(duration=-1)
    raw["switch"].update({"speedup": 0.9, "bogus": 1, "line_rate": "10ms"})
    raw["feedback"] = {"mode": "fuzzy", "gearbox": {"d_max": 0.1, "d_min": 0.2}}
    errors = validate_raw(raw)
    joined = "\n".join(errors)
    assert "switch.bogus: unknown key" in joined
    assert "switch.speedup: must be > 1" in joined
    assert "switch.line_rate: unit mismatch" in joined
    assert "duration: must be > 0" in joined
    assert "feedback.mode" in joined
    assert len(errors) >= 5


def test_gearbox_threshold_order_checked():
    raw = _minimal(feedback={"mode": "gearbox", "gearbox": {"d_max": 0.1, "d_min": 0.2}})
    assert any(e.startswith("feedback.gearbox: need 0 <= d_min < d_max < 1") for e in validate_raw(raw))


def test_red_thresholds_checked():
    raw = _minimal()
    raw["switch"]["queue_mgmt"] = {"mode": "red", "red": {"min_th": 3000, "max_th": 1000}}
    assert any("min_th must be < max_th" in e for e in validate_raw(raw))


def test_flow_bound_to_one_egress_and_class():
    raw = _minimal(sources=[
        {"type": "cbr", "flow_id": 1, "rate": 1e6, "packet_size": 64, "ingress_port": 0, "egress_port": 1},
        {"type": "cbr", "flow_id": 1, "rate": 1e6, "packet_size": 64, "ingress_port": 1, "egress_port": 0},
    ])
    assert any("flow 1 already bound" in e for e in validate_raw(raw))


def test_ports_must_be_in_range():
    raw = _minimal(sources=[
        {"type": "cbr", "flow_id": 1, "rate": 1e6, "packet_size": 64, "ingress_port": 0, "egress_port": 5},
    ])
    assert any("sources[0].egress_port: 5 out of range" in e for e in validate_raw(raw))


def test_to_base_units_converts_sources():
    raw = _minimal(sources=[
        {"type": "tcp_group", "flow_id": 1, "source_count": 3, "link_rate": "10Mb/s",
         "start_window": ["0s", "500ms"], "packet_size": "1KB", "ingress_port": 0, "egress_port": 1},
    ])
    base = to_base_units(resolve_config(raw))
    src = base["sources"][0]
    assert src["link_rate"] == pytest.approx(10e6)
    assert src["start_window"] == [0.0, 0.5]
    assert src["packet_size"] == 1000.0


def test_cbr_fixture_parses_to_scaled_scenario():
    cfg = load_config(os.path.join(CONFIGS, "cbr_scaled.yaml"))
    assert cfg.switch.line_rate == pytest.approx(100e6)
    assert cfg.switch.speedup == 1.28
    assert cfg.switch.fabric_memory == 50_000
    assert cfg.switch.weights == {1: 6.0, 2: 1.0}
    assert cfg.switch.feedback_mode == "gearbox"
    assert cfg.duration == pytest.approx(0.2)
    rates = {s.flow_id: s.rate for s in cfg.sources}
    assert rates == pytest.approx({0: 9.52e6, 1: 95.2e6, 2: 95.2e6})
    assert all(isinstance(s, CbrSource) for s in cfg.sources)
    assert cfg.sources[0].service_class is ServiceClass.PREMIUM


def test_tcp_fixture_parses_flat_keys():
    cfg = load_config(os.path.join(CONFIGS, "tcp_scaled.yaml"))
    assert cfg.switch.num_ports == 6
    assert cfg.switch.red is not None
    assert cfg.switch.red.max_th == 3000
    groups = [s for s in cfg.sources if isinstance(s, TcpGroupSpec)]
    assert [g.group.source_count for g in groups] == [3000, 3000, 3000, 3000, 1500]
    assert groups[-1].group.start_window == (8.0, 9.0)
    assert cfg.window == pytest.approx(0.05)


def test_overrides_patch_before_validation():
    path = os.path.join(CONFIGS, "cbr_scaled.yaml")
    cfg = load_config(path, {"feedback.mode": "off", "seed": 5})
    assert cfg.switch.feedback_mode == "off"
    assert cfg.seed == 5
    with pytest.raises(ConfigError) as exc:
        load_config(path, {"switch.speedup": 1.0})
    assert any("switch.speedup" in e for e in exc.value.errors)
