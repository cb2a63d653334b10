"""Flat ``key = value`` run configuration with flag overrides.

Files hold one setting per line; ``#`` starts a comment. Values stay strings
until a command asks for them with a type, at which point the typed value
(or the default) is recorded so the fully resolved config can be written
next to the outputs.
"""
from __future__ import annotations

import os
from pathlib import Path

ENV_VAR = "POSEFORECAST_CONFIG"
RESOLVED_NAME = "resolved_config.txt"


class ConfigFileError(ValueError):
    pass


def parse(text: str, source: str = "<string>") -> dict:
    out = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigFileError(f"{source}:{lineno}: expected 'key = value', got {raw.strip()!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        if not key:
            raise ConfigFileError(f"{source}:{lineno}: empty key")
        out[key] = value
    return out


def _bool(v):
    if isinstance(v, bool):
        return v
    s = str(v).strip().lower()
    if s in ("1", "true", "yes", "on"):
        return True
    if s in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {v!r}")


def _ints(v):
    if isinstance(v, (list, tuple)):
        return [int(x) for x in v]
    return [int(x) for x in str(v).replace(" ", "").split(",") if x]


def _floats(v):
    if isinstance(v, (list, tuple)):
        return [float(x) for x in v]
    return [float(x) for x in str(v).replace(" ", "").split(",") if x]


TYPES = {int: int, float: float, str: str, bool: _bool, "ints": _ints, "floats": _floats}


class RunConfig:
    def __init__(self, values: dict | None = None):
        self.raw = dict(values or {})
        self.resolved = {}

    @classmethod
    def load(cls, path=None, overrides=()) -> "RunConfig":
        """Read ``path`` (or the file named by the env var) then apply ``key=value`` overrides."""
        values = {}
        path = path or os.environ.get(ENV_VAR)
        if path:
            try:
                text = Path(path).read_text()
            except OSError as e:
                raise ConfigFileError(f"cannot read config {path}: {e.strerror}") from e
            values.update(parse(text, str(path)))
        for item in overrides:
            if "=" not in item:
                raise ConfigFileError(f"override must look like key=value, got {item!r}")
            k, v = item.split("=", 1)
            values[k.strip()] = v.strip()
        return cls(values)

    def set_default(self, key, value) -> None:
        self.raw.setdefault(key, value)

    def get(self, key, default=None, kind=str):
        conv = TYPES[kind]
        if key in self.raw and self.raw[key] is not None and self.raw[key] != "":
            try:
                value = conv(self.raw[key])
            except (TypeError, ValueError) as e:
                raise ConfigFileError(f"bad value for {key}: {self.raw[key]!r} ({e})") from e
        else:
            value = default
        self.resolved[key] = value
        return value

    def require(self, key, kind=str):
        value = self.get(key, None, kind)
        if value is None:
            raise ConfigFileError(f"missing required setting {key!r}")
        return value

    def dump(self) -> str:
        merged = {k: v for k, v in self.raw.items() if k not in self.resolved}
        merged.update(self.resolved)
        lines = []
        for k in sorted(merged):
            v = merged[k]
            if isinstance(v, (list, tuple)):
                v = ",".join(str(x) for x in v)
            lines.append(f"{k} = {'' if v is None else v}")
        return "\n".join(lines) + "\n"

    def write(self, directory) -> Path:
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        path = directory / RESOLVED_NAME
        path.write_text(self.dump())
        return path
