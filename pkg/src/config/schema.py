from __future__ import annotations

import copy
import os
from typing import Any, Dict, List, Optional, Tuple

import yaml

from .units import UnitError, parse_quantity


class ConfigError(ValueError):
    def __init__(self, errors: List[str]) -> None:
        self.errors = list(errors)
        super().__init__("invalid config: " + "; ".join(self.errors))


DEFAULT_CONFIG: Dict[str, Any] = {
    "run_id": None,
    "output_dir": "outputs",
    "output_path": None,
    "seed": 1,
    "duration": 0.2,
    "window": 1e-3,
    "sample_interval": 1e-3,
    "switch": {
        "num_ports": 4,
        "line_rate": 100e6,
        "speedup": 1.28,
        "fabric_memory": 50000,
        "fabric_reserve": 0.05,
        "out_queue_size": 20000,
        "num_classes": 3,
        "count_mode": "bytes",
        "queue_mgmt": {
            "mode": "droptail",
            "red": {"max_p": 0.5, "min_th": 1000, "max_th": 3000, "weight": 0.1, "sample_interval": 1e-3},
        },
        "scheduler": {"weights": {}, "default_weight": 1.0},
    },
    "feedback": {
        "mode": "off",
        "interval": 1e-3,
        "delay": 0.0,
        "measure": "relcong",
        "alpha": 0.95,
        "pi": {"gain_p": 0.0, "gain_i": 0.5},
        "gearbox": {
            "d_max": 0.17,
            "d_min": 0.02,
            "beta": None,
            "table_size": 64,
            "signal": "congestion",
            "gain_p": 0.0,
            "gain_i": 1.0,
        },
    },
    "tcp": {"ssthresh_init": 64, "rto_init": 1.0, "rto_min": 0.2, "rto_max_backoff": 64},
    "sources": [],
}

NUM = (int, float)

# dotted key -> (accepted python types, quantity dimension or None)
SCHEMA: Dict[str, Tuple[Tuple[type, ...], Optional[str]]] = {
    "run_id": ((str, type(None)), None),
    "output_dir": ((str,), None),
    "output_path": ((str, type(None)), None),
    "seed": ((int,), None),
    "duration": (NUM + (str,), "time"),
    "window": (NUM + (str,), "time"),
    "sample_interval": (NUM + (str,), "time"),
    "switch": ((dict,), None),
    "switch.num_ports": ((int,), None),
    "switch.line_rate": (NUM + (str,), "rate"),
    "switch.speedup": (NUM, None),
    "switch.fabric_memory": (NUM + (str,), "size"),
    "switch.fabric_reserve": (NUM, None),
    "switch.out_queue_size": (NUM + (str,), "size"),
    "switch.num_classes": ((int,), None),
    "switch.count_mode": ((str,), None),
    "switch.queue_mgmt": ((dict,), None),
    "switch.queue_mgmt.mode": ((str,), None),
    "switch.queue_mgmt.red": ((dict,), None),
    "switch.queue_mgmt.red.max_p": (NUM, None),
    "switch.queue_mgmt.red.min_th": (NUM + (str,), "size"),
    "switch.queue_mgmt.red.max_th": (NUM + (str,), "size"),
    "switch.queue_mgmt.red.weight": (NUM, None),
    "switch.queue_mgmt.red.sample_interval": (NUM + (str,), "time"),
    "switch.scheduler": ((dict,), None),
    "switch.scheduler.weights": ((dict,), None),
    "switch.scheduler.default_weight": (NUM, None),
    "feedback": ((dict,), None),
    "feedback.mode": ((str,), None),
    "feedback.interval": (NUM + (str,), "time"),
    "feedback.delay": (NUM + (str,), "time"),
    "feedback.measure": ((str,), None),
    "feedback.alpha": (NUM, None),
    "feedback.pi": ((dict,), None),
    "feedback.pi.gain_p": (NUM, None),
    "feedback.pi.gain_i": (NUM, None),
    "feedback.gearbox": ((dict,), None),
    "feedback.gearbox.d_max": (NUM, None),
    "feedback.gearbox.d_min": (NUM, None),
    "feedback.gearbox.beta": (NUM + (type(None),), None),
    "feedback.gearbox.table_size": ((int,), None),
    "feedback.gearbox.signal": ((str,), None),
    "feedback.gearbox.gain_p": (NUM, None),
    "feedback.gearbox.gain_i": (NUM, None),
    "tcp": ((dict,), None),
    "tcp.ssthresh_init": ((int,), None),
    "tcp.rto_init": (NUM + (str,), "time"),
    "tcp.rto_min": (NUM + (str,), "time"),
    "tcp.rto_max_backoff": ((int,), None),
    "sources": ((list,), None),
}

# keys whose values are free-form maps
OPEN_MAPS = {"switch.scheduler.weights"}

SOURCE_FIELDS: Dict[str, Dict[str, Tuple[Tuple[type, ...], Optional[str], bool]]] = {
    # field -> (types, dimension, required)
    "cbr": {
        "type": ((str,), None, True),
        "flow_id": ((int,), None, True),
        "class": ((str,), None, False),
        "rate": (NUM + (str,), "rate", True),
        "packet_size": (NUM + (str,), "size", True),
        "start": (NUM + (str,), "time", False),
        "stop": (NUM + (str,), "time", False),
        "ingress_port": ((int,), None, True),
        "egress_port": ((int,), None, True),
    },
    "tcp_group": {
        "type": ((str,), None, True),
        "flow_id": ((int,), None, True),
        "class": ((str,), None, False),
        "source_count": ((int,), None, True),
        "link_rate": (NUM + (str,), "rate", True),
        "start_window": ((list,), "time", True),
        "one_way_delay": (NUM + (str,), "time", False),
        "packet_size": (NUM + (str,), "size", True),
        "ingress_port": ((int,), None, True),
        "egress_port": ((int,), None, True),
    },
}

CLASSES = {"premium", "assured", "best_effort"}


def load_yaml(path: str) -> Dict[str, Any]:
    with open(path, "r", encoding="utf-8") as f:
        data = yaml.safe_load(f)
    if data is None:
        return {}
    if not isinstance(data, dict):
        raise ConfigError([f"{path}: top level must be a mapping, got {type(data).__name__}"])
    return data


def save_yaml(data: Dict[str, Any], path: str) -> None:
    with open(path, "w", encoding="utf-8") as f:
        yaml.safe_dump(data, f, sort_keys=False)


def deep_merge(base: Dict[str, Any], override: Dict[str, Any]) -> Dict[str, Any]:
    for key, val in override.items():
        if isinstance(val, dict) and isinstance(base.get(key), dict):
            base[key] = deep_merge(base[key], val)
        else:
            base[key] = val
    return base


def set_path(config: Dict[str, Any], dotted_key: str, value: Any) -> None:
    parts = dotted_key.split(".")
    cur = config
    for part in parts[:-1]:
        if part not in cur or not isinstance(cur[part], dict):
            cur[part] = {}
        cur = cur[part]
    cur[parts[-1]] = value


def get_path(config: Dict[str, Any], dotted_key: str, default: Any = None) -> Any:
    parts = dotted_key.split(".")
    cur: Any = config
    for part in parts:
        if not isinstance(cur, dict) or part not in cur:
            return default
        cur = cur[part]
    return cur


def expand_dotted(raw: Dict[str, Any], prefix: str = "") -> Dict[str, Any]:
    """Turn ``{"switch.speedup": 1.28}`` into ``{"switch": {"speedup": 1.28}}`` at every level."""
    out: Dict[str, Any] = {}
    for key, val in raw.items():
        key = str(key)
        full = f"{prefix}{key}"
        if isinstance(val, dict) and full not in OPEN_MAPS:
            val = expand_dotted(val, prefix=f"{full}.")
        if "." in key and full not in OPEN_MAPS:
            nested: Dict[str, Any] = {}
            set_path(nested, key, val)
            deep_merge(out, nested)
        elif isinstance(val, dict) and isinstance(out.get(key), dict):
            deep_merge(out[key], val)
        else:
            out[key] = val
    return out


def resolve_config(raw: Dict[str, Any]) -> Dict[str, Any]:
    return deep_merge(copy.deepcopy(DEFAULT_CONFIG), expand_dotted(raw))


def _flatten_keys(config: Dict[str, Any], prefix: str = "") -> List[str]:
    keys = []
    for key, val in config.items():
        full = f"{prefix}{key}"
        keys.append(full)
        if isinstance(val, dict) and full not in OPEN_MAPS:
            keys.extend(_flatten_keys(val, prefix=f"{full}."))
    return keys


def _quantity(val: Any, dim: Optional[str], key: str, errors: List[str]) -> Optional[float]:
    if dim is None:
        return float(val) if isinstance(val, NUM) and not isinstance(val, bool) else None
    try:
        return parse_quantity(val, dim)
    except UnitError as exc:
        errors.append(f"{key}: {exc}")
        return None


def _check_types(config: Dict[str, Any], errors: List[str]) -> None:
    for key in _flatten_keys(config):
        if key not in SCHEMA:
            errors.append(f"{key}: unknown key")
    for key, (expected, dim) in SCHEMA.items():
        val = get_path(config, key, None)
        if val is None:
            continue
        if isinstance(val, bool) or not isinstance(val, expected):
            errors.append(f"{key}: expected {'/'.join(t.__name__ for t in expected)}, got {type(val).__name__}")
            continue
        if dim is not None:
            _quantity(val, dim, key, errors)


def _value(config: Dict[str, Any], key: str) -> Optional[float]:
    expected, dim = SCHEMA[key]
    val = get_path(config, key, None)
    if val is None or isinstance(val, bool) or not isinstance(val, expected):
        return None
    scratch: List[str] = []
    return _quantity(val, dim, key, scratch)


def _check_invariants(config: Dict[str, Any], errors: List[str]) -> None:
    def positive(key: str) -> None:
        v = _value(config, key)
        if v is not None and v <= 0:
            errors.append(f"{key}: must be > 0, got {v:g}")

    for key in [
        "duration",
        "window",
        "sample_interval",
        "switch.num_ports",
        "switch.line_rate",
        "switch.fabric_memory",
        "switch.out_queue_size",
        "switch.num_classes",
        "switch.scheduler.default_weight",
        "feedback.interval",
    ]:
        positive(key)

    speedup = _value(config, "switch.speedup")
    if speedup is not None and speedup <= 1:
        errors.append(f"switch.speedup: must be > 1, got {speedup:g}")
    reserve = _value(config, "switch.fabric_reserve")
    if reserve is not None and not 0 <= reserve < 1:
        errors.append(f"switch.fabric_reserve: must be in [0, 1), got {reserve:g}")
    if get_path(config, "switch.count_mode") not in {"bytes", "packets"}:
        errors.append(f"switch.count_mode: must be bytes or packets, got {get_path(config, 'switch.count_mode')!r}")

    window = _value(config, "window")
    sample = _value(config, "sample_interval")
    if window is not None and sample is not None and 0 < window < sample:
        errors.append(f"window: must be >= sample_interval ({sample:g}), got {window:g}")

    qm_mode = get_path(config, "switch.queue_mgmt.mode")
    if qm_mode not in {"droptail", "red"}:
        errors.append(f"switch.queue_mgmt.mode: must be droptail or red, got {qm_mode!r}")
    elif qm_mode == "red":
        min_th = _value(config, "switch.queue_mgmt.red.min_th")
        max_th = _value(config, "switch.queue_mgmt.red.max_th")
        if min_th is not None and max_th is not None and not min_th < max_th:
            errors.append(f"switch.queue_mgmt.red: min_th must be < max_th, got {min_th:g} >= {max_th:g}")
        max_p = _value(config, "switch.queue_mgmt.red.max_p")
        if max_p is not None and not 0 < max_p <= 1:
            errors.append(f"switch.queue_mgmt.red.max_p: must be in (0, 1], got {max_p:g}")
        w_q = _value(config, "switch.queue_mgmt.red.weight")
        if w_q is not None and not 0 < w_q <= 1:
            errors.append(f"switch.queue_mgmt.red.weight: must be in (0, 1], got {w_q:g}")
        positive("switch.queue_mgmt.red.sample_interval")

    weights = get_path(config, "switch.scheduler.weights") or {}
    if isinstance(weights, dict):
        for flow, w in weights.items():
            if isinstance(w, bool) or not isinstance(w, NUM) or w <= 0:
                errors.append(f"switch.scheduler.weights.{flow}: must be a positive number, got {w!r}")

    mode = get_path(config, "feedback.mode")
    if mode not in {"off", "pi", "gearbox"}:
        errors.append(f"feedback.mode: must be off, pi or gearbox, got {mode!r}")
    if get_path(config, "feedback.measure") not in {"relcong", "dropprob"}:
        errors.append(f"feedback.measure: must be relcong or dropprob, got {get_path(config, 'feedback.measure')!r}")
    delay = _value(config, "feedback.delay")
    if delay is not None and delay < 0:
        errors.append(f"feedback.delay: must be >= 0, got {delay:g}")
    alpha = _value(config, "feedback.alpha")
    if alpha is not None and not 0 < alpha <= 1:
        errors.append(f"feedback.alpha: must be in (0, 1], got {alpha:g}")
    d_max = _value(config, "feedback.gearbox.d_max")
    d_min = _value(config, "feedback.gearbox.d_min")
    if mode == "gearbox" and d_max is not None and d_min is not None and not 0 <= d_min < d_max < 1:
        errors.append(f"feedback.gearbox: need 0 <= d_min < d_max < 1, got d_min={d_min:g} d_max={d_max:g}")
    beta = _value(config, "feedback.gearbox.beta")
    if beta is not None and not 0 < beta < 1:
        errors.append(f"feedback.gearbox.beta: must be in (0, 1), got {beta:g}")
    table_size = _value(config, "feedback.gearbox.table_size")
    if table_size is not None and table_size < 2:
        errors.append(f"feedback.gearbox.table_size: must be >= 2, got {table_size:g}")
    if get_path(config, "feedback.gearbox.signal") not in {"congestion", "delta"}:
        errors.append(f"feedback.gearbox.signal: must be congestion or delta, got {get_path(config, 'feedback.gearbox.signal')!r}")
    if mode == "pi":
        gain_p = _value(config, "feedback.pi.gain_p")
        if gain_p is not None and gain_p < 0:
            errors.append(f"feedback.pi.gain_p: must be >= 0, got {gain_p:g}")


def _check_sources(config: Dict[str, Any], errors: List[str]) -> None:
    sources = get_path(config, "sources")
    if not isinstance(sources, list):
        return
    num_ports = get_path(config, "switch.num_ports")
    if isinstance(num_ports, bool) or not isinstance(num_ports, int):
        num_ports = None
    flow_bindings: Dict[int, Tuple[int, str]] = {}
    classes_used = set()
    for idx, src in enumerate(sources):
        where = f"sources[{idx}]"
        if not isinstance(src, dict):
            errors.append(f"{where}: expected mapping, got {type(src).__name__}")
            continue
        kind = src.get("type")
        if kind not in SOURCE_FIELDS:
            errors.append(f"{where}.type: must be cbr or tcp_group, got {kind!r}")
            continue
        fields = SOURCE_FIELDS[kind]
        for name in src:
            if name not in fields:
                errors.append(f"{where}.{name}: unknown key")
        values: Dict[str, Any] = {}
        for name, (expected, dim, required) in fields.items():
            key = f"{where}.{name}"
            if name not in src:
                if required:
                    errors.append(f"{key}: missing")
                continue
            val = src[name]
            if isinstance(val, bool) or not isinstance(val, expected):
                errors.append(f"{key}: expected {'/'.join(t.__name__ for t in expected)}, got {type(val).__name__}")
                continue
            if name == "start_window":
                if len(val) != 2:
                    errors.append(f"{key}: expected [low, high]")
                    continue
                parsed = [_quantity(v, "time", key, errors) for v in val]
                values[name] = parsed if None not in parsed else None
            elif dim is not None:
                values[name] = _quantity(val, dim, key, errors)
            else:
                values[name] = val

        for name in ["rate", "packet_size", "link_rate", "source_count"]:
            v = values.get(name)
            if v is not None and v <= 0:
                errors.append(f"{where}.{name}: must be > 0, got {v:g}")
        for name in ["start", "one_way_delay"]:
            v = values.get(name)
            if v is not None and v < 0:
                errors.append(f"{where}.{name}: must be >= 0, got {v:g}")
        start, stop = values.get("start"), values.get("stop")
        if start is not None and stop is not None and stop < start:
            errors.append(f"{where}: stop ({stop:g}) must be >= start ({start:g})")
        window = values.get("start_window")
        if window is not None and window[1] < window[0]:
            errors.append(f"{where}.start_window: high must be >= low")

        cls = src.get("class", "assured")
        if cls not in CLASSES:
            errors.append(f"{where}.class: must be one of {sorted(CLASSES)}, got {cls!r}")
        else:
            classes_used.add(cls)
        for port_key in ["ingress_port", "egress_port"]:
            port = values.get(port_key)
            if num_ports is not None and isinstance(port, int) and not 0 <= port < num_ports:
                errors.append(f"{where}.{port_key}: {port} out of range [0, {num_ports})")
        flow = values.get("flow_id")
        egress = values.get("egress_port")
        if isinstance(flow, int) and isinstance(egress, int):
            bound = flow_bindings.setdefault(flow, (egress, cls))
            if bound != (egress, cls):
                errors.append(
                    f"{where}.flow_id: flow {flow} already bound to egress {bound[0]} class {bound[1]}"
                )
    num_classes = get_path(config, "switch.num_classes")
    if isinstance(num_classes, int) and len(classes_used) > num_classes:
        errors.append(f"switch.num_classes: {len(classes_used)} classes in use, only {num_classes} configured")


def validate_config(config: Dict[str, Any]) -> List[str]:
    """Every violation in a resolved config; empty when valid."""
    errors: List[str] = []
    _check_types(config, errors)
    _check_invariants(config, errors)
    _check_sources(config, errors)
    return errors


def validate_raw(raw: Dict[str, Any]) -> List[str]:
    if not isinstance(raw, dict):
        return [f"top level must be a mapping, got {type(raw).__name__}"]
    if not raw:
        return ["missing switch section"]
    expanded = expand_dotted(raw)
    errors: List[str] = []
    if "switch" not in expanded:
        errors.append("missing switch section")
    return errors + validate_config(resolve_config(raw))


def to_base_units(config: Dict[str, Any]) -> Dict[str, Any]:
    """Copy of a valid config with every quantity as a plain number in its base unit."""
    out = copy.deepcopy(config)
    scratch: List[str] = []
    for key, (_, dim) in SCHEMA.items():
        if dim is None:
            continue
        val = get_path(out, key, None)
        if val is not None:
            set_path(out, key, _quantity(val, dim, key, scratch))
    for src in out.get("sources") or []:
        fields = SOURCE_FIELDS.get(src.get("type"), {})
        for name, (_, dim, _) in fields.items():
            if dim is None or name not in src:
                continue
            if name == "start_window":
                src[name] = [parse_quantity(v, "time") for v in src[name]]
            else:
                src[name] = parse_quantity(src[name], dim)
    if scratch:
        raise ConfigError(scratch)
    return out


def write_resolved_config(config: Dict[str, Any], run_dir: str) -> str:
    path = os.path.join(run_dir, "config.resolved.yaml")
    save_yaml(config, path)
    return path
