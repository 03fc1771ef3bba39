"""Flat hierarchical key-value config files.

One dotted key per line, ``key = value``. Values: integers, floats,
``true``/``false``, bare strings, or bracketed lists ``[a, b, c]``. Lines
starting with ``#`` and blank lines are ignored. ``dump_config`` writes the
canonical form (sorted keys); the config fingerprint is the sha256 of that
text, truncated to 16 hex digits, and stamps every result record a run
emits.
"""

from __future__ import annotations

import hashlib


class ConfigError(ValueError):
    pass


def _parse_scalar(text: str):
    text = text.strip()
    lowered = text.lower()
    if lowered == "true":
        return True
    if lowered == "false":
        return False
    try:
        return int(text)
    except ValueError:
        pass
    try:
        return float(text)
    except ValueError:
        pass
    return text


def _format_scalar(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    return str(value)


def parse_config_text(text: str) -> dict:
    cfg: dict = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value'")
        key, _, value = line.partition("=")
        key = key.strip()
        value = value.strip()
        if not key:
            raise ConfigError(f"line {lineno}: empty key")
        if key in cfg:
            raise ConfigError(f"line {lineno}: duplicate key {key!r}")
        if value.startswith("[") and value.endswith("]"):
            inner = value[1:-1].strip()
            cfg[key] = [_parse_scalar(v) for v in inner.split(",")] if inner else []
        else:
            cfg[key] = _parse_scalar(value)
    return cfg


def load_config(path) -> dict:
    with open(path) as fh:
        return parse_config_text(fh.read())


def dump_config(cfg: dict) -> str:
    lines = []
    for key in sorted(cfg):
        value = cfg[key]
        if isinstance(value, list):
            body = ", ".join(_format_scalar(v) for v in value)
            lines.append(f"{key} = [{body}]")
        else:
            lines.append(f"{key} = {_format_scalar(value)}")
    return "\n".join(lines) + "\n"


def fingerprint(cfg: dict) -> str:
    return hashlib.sha256(dump_config(cfg).encode()).hexdigest()[:16]


def get(cfg: dict, key: str, default=None, required: bool = False):
    if key in cfg:
        return cfg[key]
    if required:
        raise ConfigError(f"missing config key {key!r}")
    return default
