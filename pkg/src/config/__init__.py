"""Config schema, units and validation."""

from .schema import (
    DEFAULT_CONFIG,
    ConfigError,
    deep_merge,
    expand_dotted,
    get_path,
    load_yaml,
    resolve_config,
    save_yaml,
    set_path,
    to_base_units,
    validate_config,
    validate_raw,
    write_resolved_config,
)
from .units import UNIT_SCALE, UnitError, parse_quantity, unit_dimension
