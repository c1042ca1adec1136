"""Config files: INI-style `key = value` lines under three sections.

Sections are [pipeline], [scene] and [corruption]; every key is checked
against the schema below and unknown sections or keys are hard errors, so a
typo can never silently fall back to a default.  Omitted keys use the
defaults of the corresponding config dataclass; the scene geometry has no
sensible defaults and must be given in full.
"""

from __future__ import annotations

import configparser
from pathlib import Path
from typing import Any, Callable

from .geometry import PipelineConfig
from .simulator import CorruptionConfig, SceneConfig


class ConfigError(ValueError):
    """A config file failed validation."""


_PIPELINE_KEYS: dict[str, Callable[[str], Any]] = {
    "downsample": int,
    "max_peaks": int,
    "score_threshold": float,
    "num_classes": int,
    "gate_scale": float,
    "size_loss_weight": float,
    "focal_alpha": float,
    "focal_beta": float,
}

_SCENE_REQUIRED: dict[str, Callable[[str], Any]] = {
    "width": int,
    "height": int,
    "frames": int,
    "min_objects": int,
    "max_objects": int,
    "min_size": float,
    "max_size": float,
    "min_speed": float,
    "max_speed": float,
}

_SCENE_OPTIONAL: dict[str, Callable[[str], Any]] = {
    "downsample": int,
    "spawn_prob": float,
    "despawn_prob": float,
    "seed": int,
}

_CORRUPTION_KEYS: dict[str, Callable[[str], Any]] = {
    "fn_rate": float,
    "fp_rate": float,
    "jitter_sigma": float,
    "hm_noise_sigma": float,
    "temporal_jitter_k": int,
    "seed": int,
}

_SECTIONS = {"pipeline", "scene", "corruption"}


def _read_section(
    parser: configparser.ConfigParser,
    section: str,
    schema: dict[str, Callable[[str], Any]],
    path: str | Path,
) -> dict[str, Any]:
    values: dict[str, Any] = {}
    for key, raw in parser.items(section):
        if key not in schema:
            raise ConfigError(f"{path}: unknown key {key!r} in [{section}]")
        try:
            values[key] = schema[key](raw)
        except ValueError:
            raise ConfigError(
                f"{path}: key {key!r} in [{section}] has invalid value {raw!r}"
            )
    return values


class ConfigFile:
    """Parsed config; section accessors build the validated dataclasses."""

    def __init__(self, path: str | Path):
        self.path = Path(path)
        parser = configparser.ConfigParser(
            interpolation=None, inline_comment_prefixes=("#", ";")
        )
        parser.optionxform = str  # keys are case-sensitive
        try:
            with open(self.path, "r", encoding="utf-8") as fh:
                parser.read_file(fh)
        except configparser.Error as exc:
            raise ConfigError(f"{path}: {exc}")
        unknown = set(parser.sections()) - _SECTIONS
        if unknown:
            raise ConfigError(f"{path}: unknown section(s) {sorted(unknown)}")
        if parser.defaults():
            raise ConfigError(f"{path}: keys are not allowed outside a section")
        self._parser = parser

    def has_section(self, name: str) -> bool:
        return self._parser.has_section(name)

    def pipeline(self) -> PipelineConfig:
        values: dict[str, Any] = {}
        if self.has_section("pipeline"):
            values = _read_section(self._parser, "pipeline", _PIPELINE_KEYS, self.path)
        try:
            return PipelineConfig(**values)
        except ValueError as exc:
            raise ConfigError(f"{self.path}: [pipeline] {exc}")

    def scene(self) -> SceneConfig:
        if not self.has_section("scene"):
            raise ConfigError(f"{self.path}: missing required section [scene]")
        schema = {**_SCENE_REQUIRED, **_SCENE_OPTIONAL}
        values = _read_section(self._parser, "scene", schema, self.path)
        missing = sorted(set(_SCENE_REQUIRED) - set(values))
        if missing:
            raise ConfigError(f"{self.path}: [scene] missing required keys {missing}")
        try:
            return SceneConfig(**values)
        except ValueError as exc:
            raise ConfigError(f"{self.path}: [scene] {exc}")

    def corruption(self) -> CorruptionConfig | None:
        """The corruption settings, or None when the section is absent."""
        if not self.has_section("corruption"):
            return None
        values = _read_section(self._parser, "corruption", _CORRUPTION_KEYS, self.path)
        try:
            return CorruptionConfig(**values)
        except ValueError as exc:
            raise ConfigError(f"{self.path}: [corruption] {exc}")
