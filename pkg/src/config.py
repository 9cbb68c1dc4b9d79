"""
Configuration loading and validation for the fractional Ornstein-Uhlenbeck toolkit.
"""

import copy
import json
import math
import os
import re
from typing import Any, Optional, Sequence

import yaml

from .errors import ConfigError
from .models import PropagationMode, WeightKind

NUMBER = 'number'
INTEGER = 'integer'
STRING = 'string'
BOOLEAN = 'boolean'
LIST = 'list'
NUMBER_OR_LIST = 'number_or_list'

# Every accepted key; anything else is rejected before computation.
SCHEMA: dict[str, Any] = {
    'seed': INTEGER,
    'model': {'preset': STRING, 'n': INTEGER, 'B': LIST, 'Q': LIST, 's': NUMBER},
    'grid': {'L': NUMBER_OR_LIST, 'N': NUMBER_OR_LIST},
    'numerics': {'quad_nodes': INTEGER, 'interp_order': INTEGER, 'rank_tol': NUMBER, 'threads': INTEGER},
    'initial': {
        'kind': STRING, 'center': LIST, 'width': NUMBER_OR_LIST, 'amplitude': NUMBER,
        'taper': NUMBER, 'count': INTEGER, 'k_max': NUMBER, 'spread': NUMBER, 'path': STRING,
    },
    'omega': {
        'kind': STRING, 'width': NUMBER, 'period': NUMBER, 'axis': INTEGER, 'offset': NUMBER,
        'center': LIST, 'radius': NUMBER, 'k_values': LIST, 'separator': NUMBER, 'unit': NUMBER,
        'path': STRING, 'gamma': NUMBER, 'a': NUMBER_OR_LIST, 'K': NUMBER,
    },
    'analyze': {'matrix_form': BOOLEAN},
    'evolve': {'times': LIST, 'mode': STRING, 'chained': BOOLEAN},
    'mst': {'times': LIST, 'points': INTEGER, 'starts': INTEGER, 'tolerance': NUMBER},
    'gevrey': {
        'k': INTEGER, 'q': NUMBER, 'times': LIST, 'weight': STRING, 'tolerance': NUMBER,
        'points': INTEGER, 'starts': INTEGER,
    },
    'dissipation': {'k_values': LIST, 'times': LIST, 'floor': NUMBER, 'residual_tolerance': NUMBER},
    'thickness': {'gap_k_values': LIST, 'max_gap_fraction': NUMBER},
    'spectral': {'k_values': LIST, 'samples': INTEGER},
    'observe': {'T': NUMBER, 'probes': INTEGER, 'nt': INTEGER, 'reseed_rounds': INTEGER, 'constants': LIST},
    'hum': {
        'T': NUMBER, 'epsilon': NUMBER, 'nt': INTEGER, 'max_iter': INTEGER, 'rtol': NUMBER,
        'stall_window': INTEGER, 'stall_factor': NUMBER,
    },
    'counterexample': {
        's': NUMBER, 'T': NUMBER, 'k_values': LIST, 'nt': INTEGER, 'unit': NUMBER,
        'max_gap_fraction': NUMBER, 'centers': LIST,
    },
    'subelliptic': {'samples': INTEGER, 'band': NUMBER, 'weight': STRING, 'check_resolution': BOOLEAN},
    'selftest': {'quick': BOOLEAN},
    'output': {'directory': STRING, 'compress': BOOLEAN},
    'logging': {'level': STRING, 'file': STRING},
}

DEFAULTS: dict[str, dict[str, Any]] = {
    'model': {'preset': None, 'n': 1, 's': 0.75},
    'grid': {'L': 30.0, 'N': 256},
    'numerics': {'quad_nodes': 32, 'interp_order': 5, 'rank_tol': None, 'threads': None},
    'initial': {'kind': 'gaussian', 'width': 1.0, 'amplitude': 1.0, 'count': 4, 'k_max': 4.0, 'spread': 0.5},
    'omega': {'kind': 'full', 'gamma': 0.3, 'a': 1.0, 'K': math.e, 'axis': 0, 'offset': 0.0, 'unit': 1.0},
    'analyze': {'matrix_form': False},
    'evolve': {'times': [0.0, 0.5, 1.0], 'mode': 'forward', 'chained': False},
    'mst': {'times': [1e-3, 3e-3, 1e-2, 3e-2, 1e-1], 'points': 4096, 'starts': 16, 'tolerance': 0.02},
    'gevrey': {'k': 0, 'q': 1.0, 'times': [1e-3, 3e-3, 1e-2, 3e-2, 1e-1], 'weight': 'projection',
               'tolerance': 0.1, 'points': 4096, 'starts': 16},
    'dissipation': {'k_values': [1.0, 2.0, 3.0], 'times': [0.2, 0.4, 0.6, 0.8, 1.0],
                    'floor': 1e-14, 'residual_tolerance': 0.05},
    'thickness': {'gap_k_values': [], 'max_gap_fraction': 0.05},
    'spectral': {'k_values': [1, 2, 4, 8, 16, 32], 'samples': 100},
    'observe': {'T': 1.0, 'probes': 8, 'nt': 64, 'reseed_rounds': 2, 'constants': [1.0, 1.0, 1.0, math.e]},
    'hum': {'T': 1.0, 'epsilon': 1e-6, 'nt': 128, 'max_iter': 500, 'rtol': 1e-6,
            'stall_window': 20, 'stall_factor': 0.99},
    'counterexample': {'s': 0.75, 'T': 1.0, 'k_values': [1, 2, 3, 4, 5, 6, 7, 8], 'nt': 64,
                       'unit': 1.0, 'max_gap_fraction': 0.05, 'centers': None},
    'subelliptic': {'samples': 50, 'band': 4.0, 'weight': 'projection', 'check_resolution': True},
    'selftest': {'quick': False},
    'output': {'directory': './runs', 'compress': False},
    'logging': {'level': 'INFO', 'file': None},
}

# Allowed values for enumerated keys.
CHOICES: dict[tuple[str, str], tuple[str, ...]] = {
    ('model', 'preset'): ('kolmogorov', 'heat'),
    ('initial', 'kind'): ('gaussian', 'white_noise', 'wavepackets', 'file'),
    ('omega', 'kind'): ('full', 'stripes', 'blob', 'doubling_gaps', 'bitmap'),
    ('evolve', 'mode'): tuple(mode.value for mode in PropagationMode),
    ('gevrey', 'weight'): tuple(kind.value for kind in WeightKind),
    ('subelliptic', 'weight'): tuple(kind.value for kind in WeightKind),
}

LOG_LEVELS = ('DEBUG', 'INFO', 'WARNING', 'ERROR', 'CRITICAL')

# Keys without a default that a given kind cannot do without.
REQUIRED_BY_KIND: dict[str, dict[str, tuple[str, ...]]] = {
    'initial': {'file': ('path',)},
    'omega': {
        'stripes': ('width', 'period'),
        'blob': ('radius',),
        'doubling_gaps': ('k_values', 'separator'),
        'bitmap': ('path',),
    },
}


class ConfigYamlLoader(yaml.SafeLoader):
    """SafeLoader that also reads exponent floats without a dot, such as 1e-6."""


ConfigYamlLoader.add_implicit_resolver(
    'tag:yaml.org,2002:float',
    re.compile(r'^[-+]?(?:[0-9][0-9_]*)(?:\.[0-9_]*)?[eE][-+]?[0-9]+$'),
    list('-+0123456789'),
)


def parse_override(text: str) -> tuple[list[str], Any]:
    """Split 'path.to.key=value' and parse the value as YAML."""
    if '=' not in text:
        raise ConfigError(f"Override '{text}' must have the form path.to.key=value")
    path, raw = text.split('=', 1)
    keys = [k for k in path.strip().split('.') if k]
    if not keys:
        raise ConfigError(f"Override '{text}' has an empty key path")
    try:
        value = yaml.load(raw, Loader=ConfigYamlLoader)
    except yaml.YAMLError as e:
        raise ConfigError(f"Override '{text}' has an unparsable value: {e}") from e
    return keys, value


def _is_number(value: Any) -> bool:
    return isinstance(value, (int, float)) and not isinstance(value, bool)


def _check_finite(value: Any, path: str) -> None:
    if _is_number(value):
        if not math.isfinite(value):
            raise ConfigError(f"'{path}' must be finite, got {value}")
    elif isinstance(value, list):
        for i, item in enumerate(value):
            _check_finite(item, f"{path}[{i}]")


def _check_type(kind: str, value: Any, path: str) -> None:
    valid = {
        NUMBER: _is_number(value),
        INTEGER: isinstance(value, int) and not isinstance(value, bool),
        STRING: isinstance(value, str),
        BOOLEAN: isinstance(value, bool),
        LIST: isinstance(value, list),
        NUMBER_OR_LIST: _is_number(value) or isinstance(value, list),
    }[kind]
    if not valid:
        raise ConfigError(f"'{path}' must be a {kind.replace('_', ' ')}, got {type(value).__name__}")
    _check_finite(value, path)


def validate(config: dict[str, Any], schema: dict[str, Any] = SCHEMA, prefix: str = '') -> None:
    """Reject unknown keys, wrong types and non-finite numbers."""
    if not isinstance(config, dict):
        raise ConfigError(f"'{prefix or 'config'}' must be a mapping, got {type(config).__name__}")
    for key, value in config.items():
        path = f"{prefix}.{key}" if prefix else str(key)
        if key not in schema:
            raise ConfigError(f"Unknown configuration key '{path}'")
        expected = schema[key]
        if value is None:
            continue
        if isinstance(expected, dict):
            validate(value, expected, path)
        else:
            _check_type(expected, value, path)
    if schema is SCHEMA:
        _check_choices(config)


def _check_choices(config: dict[str, Any]) -> None:
    """Enumerated values and the keys each omega or initial kind needs."""
    for (section, key), allowed in CHOICES.items():
        value = (config.get(section) or {}).get(key)
        if value is not None and value not in allowed:
            raise ConfigError(f"'{section}.{key}' must be one of {', '.join(allowed)}, got '{value}'")
    level = (config.get('logging') or {}).get('level')
    if level is not None and str(level).upper() not in LOG_LEVELS:
        raise ConfigError(f"'logging.level' must be one of {', '.join(LOG_LEVELS)}, got '{level}'")
    for section, kinds in REQUIRED_BY_KIND.items():
        settings = config.get(section) or {}
        kind = settings.get('kind') or DEFAULTS[section]['kind']
        missing = [key for key in kinds.get(kind, ()) if settings.get(key) is None]
        if missing:
            raise ConfigError(f"{section} kind '{kind}' needs {', '.join(f'{section}.{k}' for k in missing)}")


class ConfigLoader:
    """Loads and validates configuration from YAML file."""

    ENV_VAR_PATTERN = re.compile(r'\$\{([^}]+)\}')

    def __init__(self, config_path: Optional[str], overrides: Sequence[str] = ()):
        self.config_path = config_path
        self.config = self._load_config()
        for text in overrides:
            self.apply_override(text)
        validate(self.config)

    def _load_config(self) -> dict[str, Any]:
        """Load configuration from a YAML or JSON file."""
        if self.config_path is None:
            return {}
        with open(self.config_path, 'r') as f:
            if str(self.config_path).lower().endswith('.json'):
                try:
                    config = json.load(f)
                except json.JSONDecodeError as e:
                    raise ConfigError(f"Invalid JSON in {self.config_path}: {e}") from e
            else:
                config = yaml.load(f, Loader=ConfigYamlLoader)

        if config is None:
            return {}
        return self._resolve_env_vars(config)

    def _resolve_env_vars(self, obj: Any) -> Any:
        """Recursively resolve environment variables in config."""
        if isinstance(obj, str):
            matches = self.ENV_VAR_PATTERN.findall(obj)
            for match in matches:
                env_value = os.environ.get(match, '')
                obj = obj.replace(f'${{{match}}}', env_value)
            return obj
        elif isinstance(obj, dict):
            return {k: self._resolve_env_vars(v) for k, v in obj.items()}
        elif isinstance(obj, list):
            return [self._resolve_env_vars(item) for item in obj]
        return obj

    def apply_override(self, text: str) -> None:
        """Apply one --set override in place."""
        keys, value = parse_override(text)
        node = self.config
        for key in keys[:-1]:
            node = node.setdefault(key, {})
            if not isinstance(node, dict):
                raise ConfigError(f"Override '{text}' descends into a non-mapping at '{key}'")
        node[keys[-1]] = value

    def get_section(self, name: str) -> dict[str, Any]:
        """Section merged over its defaults."""
        if name not in SCHEMA or not isinstance(SCHEMA[name], dict):
            raise ValueError(f"Section '{name}' not found in configuration schema")
        merged = copy.deepcopy(DEFAULTS.get(name, {}))
        merged.update({k: v for k, v in (self.config.get(name) or {}).items() if v is not None})
        return merged

    def get_model_settings(self) -> dict[str, Any]:
        """Get model settings."""
        return self.get_section('model')

    def get_grid_settings(self) -> dict[str, Any]:
        """Get grid settings."""
        return self.get_section('grid')

    def get_output_settings(self) -> dict[str, Any]:
        """Get output settings."""
        return self.get_section('output')

    def get_logging_settings(self) -> dict[str, Any]:
        """Get logging settings."""
        return self.get_section('logging')

    def get_seed(self) -> int:
        return int(self.config.get('seed') or 0)

    def to_dict(self) -> dict[str, Any]:
        """Configuration as loaded, after overrides."""
        return copy.deepcopy(self.config)
