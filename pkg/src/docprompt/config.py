"""Flat ``key=value`` configuration shared by the command-line tools.

Every key maps onto a field of :class:`~docprompt.synth.SynthConfig`,
:class:`~docprompt.prompt.PromptConfig` or
:class:`~docprompt.net.train.TrainConfig`, and its default is that field's
default. ``seed`` is shared by data synthesis and training. Tuples are
written comma-separated::

    # training
    steps = 2000
    widths = 8,16,32
    task_weights = 0.2,0.2,0.2,0.2,0.2
"""

from __future__ import annotations

import dataclasses
import os

from .errors import InvalidParam
from .net.train import TrainConfig
from .prompt import PromptConfig
from .synth import SynthConfig

_SECTIONS = (SynthConfig, PromptConfig, TrainConfig)


def _registry() -> dict[str, object]:
    defaults = {}
    for cls in _SECTIONS:
        for f in dataclasses.fields(cls):
            value = f.default if f.default is not dataclasses.MISSING else f.default_factory()
            if f.name in defaults and defaults[f.name] != value:
                raise RuntimeError(f"conflicting defaults for shared key {f.name}")
            defaults[f.name] = value
    return defaults


DEFAULTS = _registry()


def _parse_value(key: str, text: str):
    default = DEFAULTS[key]
    text = text.strip()
    try:
        if isinstance(default, bool):
            if text.lower() not in ("true", "false", "1", "0"):
                raise ValueError(text)
            return text.lower() in ("true", "1")
        if isinstance(default, int):
            return int(text)
        if isinstance(default, float):
            return float(text)
        if isinstance(default, tuple):
            kind = type(default[0]) if default else float
            parts = [p.strip() for p in text.split(",") if p.strip()]
            return tuple(kind(p) for p in parts)
        return text
    except ValueError:
        raise InvalidParam(f"config key {key!r}: cannot parse {text!r} as {type(default).__name__}") from None


def _format_value(value) -> str:
    if isinstance(value, tuple):
        return ",".join(_format_value(v) for v in value)
    if isinstance(value, float):
        return repr(value)
    return str(value)


class Config:
    """Validated flat map from key to typed value; unset keys take defaults."""

    def __init__(self, values: dict | None = None):
        self._values = {}
        for key, value in (values or {}).items():
            self._set(key, value)

    def _set(self, key, value):
        if key not in DEFAULTS:
            raise InvalidParam(f"unknown config key {key!r}")
        if isinstance(value, str):
            value = _parse_value(key, value)
        elif isinstance(DEFAULTS[key], tuple):
            value = tuple(value)
        self._values[key] = value

    @classmethod
    def parse(cls, text: str) -> "Config":
        values = {}
        for lineno, raw in enumerate(text.splitlines(), 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise InvalidParam(f"config line {lineno}: expected key=value, got {raw!r}")
            key, value = (s.strip() for s in line.split("=", 1))
            if key not in DEFAULTS:
                raise InvalidParam(f"config line {lineno}: unknown key {key!r}")
            values[key] = _parse_value(key, value)
        return cls(values)

    @classmethod
    def load(cls, path) -> "Config":
        path = os.fspath(path)
        if not os.path.isfile(path):
            raise FileNotFoundError(f"config file not found: {path}")
        with open(path, encoding="utf-8") as fh:
            return cls.parse(fh.read())

    def get(self, key: str):
        if key not in DEFAULTS:
            raise InvalidParam(f"unknown config key {key!r}")
        return self._values.get(key, DEFAULTS[key])

    def resolved(self) -> dict:
        return {k: self.get(k) for k in DEFAULTS}

    def with_overrides(self, **kw) -> "Config":
        out = Config(self._values)
        for k, v in kw.items():
            out._set(k, v)
        return out

    def to_text(self) -> str:
        """Full snapshot, every key written, in declaration order."""
        return "".join(f"{k}={_format_value(v)}\n" for k, v in self.resolved().items())

    def __eq__(self, other):
        return isinstance(other, Config) and self.resolved() == other.resolved()

    def __repr__(self):
        return f"Config({self._values!r})"

    def _section(self, cls):
        names = {f.name for f in dataclasses.fields(cls)}
        return cls(**{k: v for k, v in self.resolved().items() if k in names})

    def synth_config(self) -> SynthConfig:
        return self._section(SynthConfig)

    def prompt_config(self) -> PromptConfig:
        return self._section(PromptConfig)

    def train_config(self) -> TrainConfig:
        return self._section(TrainConfig)
