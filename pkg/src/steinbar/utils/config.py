import copy
import tomllib
from typing import Optional

from steinbar.utils.paths import CONFIG_PATH

DEFAULTS: dict = {
    "estimation": {
        "batches": 32,
        "confidence": 0.99,
        "se_multiple": 3.0,
        "burn_in_fraction": 0.1,
        "burn_in_regenerations": 10,
        "quadrature_nodes": 5,
        "max_subinterval": 1.0,
    },
    "stein": {"grid_points": 10000, "grid_span": 40.0, "slack": 1e-9},
    "bootstrap": {"resamples": 200, "confidence": 0.99, "block_size": 1},
    "rbm": {"dt": 1e-3, "chunk_steps": 1_000_000},
    "output": {"out_dir": "run_data", "plots": True},
    "logging": {"level": "INFO"},
}


def _merge(base: dict, override: dict) -> dict:
    merged = copy.deepcopy(base)
    for key, value in override.items():
        if isinstance(value, dict) and isinstance(merged.get(key), dict):
            merged[key] = _merge(merged[key], value)
        else:
            merged[key] = value
    return merged


def get_config(section: Optional[str] = None) -> dict:
    """Get configuration from the config.toml file.
    Built-in defaults are merged under the file, so a missing file or a
    missing key falls back to DEFAULTS.
    If section is provided, return only that section of the config.
    Args:
        section (str, optional): The section of the config to return. Defaults to None.
    Returns:
        dict: The configuration dictionary.
    Raises:
        tomllib.TOMLDecodeError: If the config.toml file is not a valid TOML file.
        KeyError: If the section is neither in the file nor in DEFAULTS.
    """
    if CONFIG_PATH.exists():
        with open(CONFIG_PATH, "rb") as f:
            config = _merge(DEFAULTS, tomllib.load(f))
    else:
        config = copy.deepcopy(DEFAULTS)
    if section:
        return config[section]
    return config
