"""Scenario configuration: INI files with typed, sectioned key-values.

Commands own a dictionary of defaults; a config file only needs the keys
it wants to override.  Values are coerced to the type of the default
they replace, with comma-separated lists for sequence-valued keys.
"""

from __future__ import annotations

import configparser
from pathlib import Path

from .errors import ContainerFormatError


def load_config(path) -> dict:
    """Parse an INI file into a {section: {key: raw string}} mapping."""
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"config file not found: {path}")
    parser = configparser.ConfigParser(inline_comment_prefixes=(";", "#"))
    try:
        parser.read(path)
    except configparser.Error as exc:
        raise ContainerFormatError(f"{path}: {exc}") from exc
    return {section: dict(parser.items(section)) for section in parser.sections()}


def _coerce(default, raw: str):
    if isinstance(default, bool):
        val = raw.strip().lower()
        if val in ("1", "true", "yes", "on"):
            return True
        if val in ("0", "false", "no", "off"):
            return False
        raise ValueError(f"expected a boolean, got {raw!r}")
    if isinstance(default, int):
        return int(raw)
    if isinstance(default, float):
        return float(raw)
    if isinstance(default, (list, tuple)):
        parts = [p.strip() for p in raw.split(",") if p.strip()]
        elem = default[0] if len(default) else 0.0
        return [_coerce(elem, p) for p in parts]
    return raw.strip()


def merge_config(defaults: dict, loaded: dict | None) -> dict:
    """Overlay raw config values onto per-section defaults.

    Unknown sections or keys raise ``ValueError`` so typos in config
    files fail loudly instead of silently running the defaults.
    """
    resolved = {section: dict(values) for section, values in defaults.items()}
    for section, values in (loaded or {}).items():
        if section not in resolved:
            raise ValueError(f"unknown config section [{section}]")
        for key, raw in values.items():
            if key not in resolved[section]:
                raise ValueError(f"unknown config key {key!r} in section [{section}]")
            try:
                resolved[section][key] = _coerce(resolved[section][key], raw)
            except ValueError as exc:
                raise ValueError(f"bad value for {section}.{key}: {exc}") from exc
    return resolved
