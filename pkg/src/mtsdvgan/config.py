"""Flat key-value configuration shared by every CLI command.

Format: one `key = value` per line, `#` comments, blank lines ignored.
Keys cover the synthetic-corpus settings and the training settings; every
key has a default, so an empty file is valid.  Unknown keys are rejected
(exit code 2 at the CLI) to catch typos.
"""

from __future__ import annotations

import dataclasses
from pathlib import Path

from .synth import SynthConfig
from .training import TrainConfig


class ConfigError(ValueError):
    pass


_BOOLS = {"true": True, "1": True, "yes": True,
          "false": False, "0": False, "no": False}


def _coerce(key: str, raw: str, target_type):
    raw = raw.strip()
    try:
        if target_type is bool:
            if raw.lower() not in _BOOLS:
                raise ValueError
            return _BOOLS[raw.lower()]
        if target_type is int:
            return int(raw)
        if target_type is float:
            return float(raw)
        if target_type is str:
            return raw
        # frozenset of comma-separated tokens (anomaly_kinds)
        return frozenset(t.strip() for t in raw.split(",") if t.strip())
    except ValueError:
        raise ConfigError(f"key '{key}': cannot parse {raw!r} as {target_type.__name__}") from None


def _field_types(cls):
    return {f.name: (f.type if isinstance(f.type, type) else _resolve(f.type))
            for f in dataclasses.fields(cls)}


def _resolve(annotation):
    mapping = {"int": int, "float": float, "bool": bool, "str": str}
    return mapping.get(str(annotation), frozenset)


SYNTH_FIELDS = _field_types(SynthConfig)
TRAIN_FIELDS = _field_types(TrainConfig)
ALL_FIELDS = {**SYNTH_FIELDS, **TRAIN_FIELDS}  # 'seed' intentionally shared


def parse_config_text(text: str, source: str = "<config>") -> dict:
    out = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.split("#", 1)[0].strip()
        if not stripped:
            continue
        if "=" not in stripped:
            raise ConfigError(f"{source}:{lineno}: expected 'key = value'")
        key, raw = (part.strip() for part in stripped.split("=", 1))
        if key not in ALL_FIELDS:
            raise ConfigError(f"{source}:{lineno}: unknown key '{key}'")
        out[key] = _coerce(key, raw, ALL_FIELDS[key])
    return out


def load_config_file(path) -> dict:
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    return parse_config_text(path.read_text(encoding="utf-8"), source=str(path))


def resolve(file_values: dict, overrides: dict):
    """defaults <- file <- CLI overrides; returns (SynthConfig, TrainConfig)."""
    merged = dict(file_values)
    for key, value in overrides.items():
        if value is None:
            continue
        if key not in ALL_FIELDS:
            raise ConfigError(f"unknown configuration key '{key}'")
        merged[key] = value
    synth_kwargs = {k: v for k, v in merged.items() if k in SYNTH_FIELDS}
    train_kwargs = {k: v for k, v in merged.items() if k in TRAIN_FIELDS}
    try:
        synth = SynthConfig(**synth_kwargs)
        synth.validate()
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    try:
        train = TrainConfig(**train_kwargs)
        train.validate()
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    return synth, train


def as_flat_dict(synth: SynthConfig, train: TrainConfig) -> dict:
    """Fully materialized configuration for manifests and checkpoints."""
    out = {}
    for k in sorted(SYNTH_FIELDS):
        v = getattr(synth, k)
        out[k] = sorted(v) if isinstance(v, frozenset) else v
    for k in sorted(TRAIN_FIELDS):
        out[k] = getattr(train, k)
    return out
