"""Flat key-value config files and typed dataclass overrides.

Files hold one `section.key = value` per line; '#' starts a comment.  CLI
flags override file values, which override dataclass defaults.
"""

from __future__ import annotations

import dataclasses
from pathlib import Path


def read_config(path) -> dict:
    entries = {}
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"{path}:{lineno}: expected 'key = value', got {raw!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        if not key:
            raise ValueError(f"{path}:{lineno}: empty key")
        entries[key] = value
    return entries


def write_config(entries: dict, path) -> None:
    lines = [f"{k} = {entries[k]}" for k in sorted(entries)]
    Path(path).write_text("\n".join(lines) + "\n")


def _coerce(value: str, target_type):
    if target_type is bool:
        low = value.strip().lower()
        if low in ("1", "true", "yes", "on"):
            return True
        if low in ("0", "false", "no", "off"):
            return False
        raise ValueError(f"cannot parse boolean from {value!r}")
    if target_type is int:
        return int(value)
    if target_type is float:
        return float(value)
    if target_type is tuple:
        stripped = value.strip()
        if not stripped:
            return ()
        return tuple(int(part) for part in stripped.split(","))
    return value


def apply_overrides(instance, entries: dict, prefix: str):
    """New dataclass instance with `prefix.field` entries coerced onto it."""
    updates = {}
    fields = {f.name: f for f in dataclasses.fields(instance)}
    for key, value in entries.items():
        if not key.startswith(prefix + "."):
            continue
        name = key[len(prefix) + 1:]
        if name not in fields:
            raise ValueError(f"unknown config key {key!r}")
        current = getattr(instance, name)
        target = type(current) if current is not None else str
        updates[name] = _coerce(value, target)
    return dataclasses.replace(instance, **updates) if updates else instance
