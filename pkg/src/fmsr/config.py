"""Flat ``key=value`` configuration files and typed conversion into config dataclasses."""

from __future__ import annotations

import dataclasses
import typing

from .errors import ConfigError


def read_kv_file(path):
    """Parse ``key=value`` lines; blank lines and ``#`` comments are ignored."""
    out = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            key, sep, value = line.partition("=")
            if not sep:
                raise ConfigError(f"{path}:{lineno}: expected key=value, got {line!r}")
            out[key.strip()] = value.strip()
    return out


def _convert(key, text, tp):
    if isinstance(text, str):
        text = text.strip()
    try:
        if tp is bool:
            if isinstance(text, bool):
                return text
            low = str(text).lower()
            if low in ("1", "true", "yes", "on"):
                return True
            if low in ("0", "false", "no", "off"):
                return False
            raise ValueError(text)
        return tp(text)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"bad value for {key}: {text!r} ({exc})") from exc


def field_types(cls):
    hints = typing.get_type_hints(cls)
    return {f.name: hints[f.name] for f in dataclasses.fields(cls)}


def build_config(cls, values: dict, strict=True):
    """Instantiate dataclass ``cls`` from string (or typed) values.

    With ``strict`` unknown keys raise :class:`ConfigError`; otherwise they are ignored.
    """
    types = field_types(cls)
    unknown = set(values) - set(types)
    if unknown and strict:
        raise ConfigError(f"unknown config keys for {cls.__name__}: {sorted(unknown)}")
    kwargs = {k: _convert(k, v, types[k]) for k, v in values.items() if k in types}
    return cls(**kwargs)


def split_config(values: dict, *classes):
    """Route keys to the dataclasses that declare them; reject keys no class declares."""
    known = [set(field_types(c)) for c in classes]
    unknown = set(values) - set().union(*known)
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    return [build_config(c, {k: v for k, v in values.items() if k in names}) for c, names in zip(classes, known)]


def to_strings(cfg):
    return {k: str(v) for k, v in dataclasses.asdict(cfg).items()}
