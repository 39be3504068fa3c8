"""TOML configuration loading for the command-line pipeline.

Sections mirror the pipeline stages: [paths], [provider], [generation],
[identify], [train], [evaluate]. Unknown keys are rejected so typos fail
loudly, and relative paths resolve against the config file's directory.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field, fields
from pathlib import Path

try:
    import tomllib
except ModuleNotFoundError:  # python 3.10
    import tomli as tomllib

from .embedding import ProviderConfig
from .errors import DataError, ValidationError

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class PathsConfig:
    taxonomy: str = "taxonomy.csv"
    manifest: str = "manifest.csv"
    truth: str = "truth.csv"
    output_dir: str = "out"
    cache_dir: str | None = None
    prior: str | None = None


@dataclass(frozen=True)
class GenerationConfigToml(ProviderConfig):
    # same transport knobs as the embedding provider, offline by default
    kind: str = "local-template"
    model_id: str = "template-v1"


@dataclass(frozen=True)
class IdentifyConfigToml:
    window_lines: int = 3
    min_similarity: float | None = None
    collapse_subtechniques: bool = False
    include_id: bool = True
    hyde_passages: int = 0


@dataclass(frozen=True)
class TrainConfigToml:
    alpha: float = 0.0
    n_folds: int = 10
    seed: int = 13
    stratified: bool = True


@dataclass(frozen=True)
class EvaluateConfigToml:
    selection: str = "min-rank"
    spearman: bool = False

    def __post_init__(self) -> None:
        if self.selection not in ("min-rank", "max-rank"):
            raise ValidationError(f"unknown selection mode: {self.selection!r}")


@dataclass(frozen=True)
class AppConfig:
    base_dir: Path
    paths: PathsConfig = field(default_factory=PathsConfig)
    provider: ProviderConfig = field(default_factory=ProviderConfig)
    generation: GenerationConfigToml = field(default_factory=GenerationConfigToml)
    identify: IdentifyConfigToml = field(default_factory=IdentifyConfigToml)
    train: TrainConfigToml = field(default_factory=TrainConfigToml)
    evaluate: EvaluateConfigToml = field(default_factory=EvaluateConfigToml)

    def resolve(self, rel: str) -> Path:
        p = Path(rel)
        return p if p.is_absolute() else self.base_dir / p


_SECTIONS = {
    "paths": PathsConfig,
    "provider": ProviderConfig,
    "generation": GenerationConfigToml,
    "identify": IdentifyConfigToml,
    "train": TrainConfigToml,
    "evaluate": EvaluateConfigToml,
}


def _build_section(name: str, cls, raw: dict):
    allowed = {f.name for f in fields(cls)}
    unknown = set(raw) - allowed
    if unknown:
        raise DataError(f"[{name}] has unknown keys: {sorted(unknown)}")
    try:
        return cls(**raw)
    except TypeError as exc:
        raise DataError(f"[{name}] invalid: {exc}") from exc


def load_config(path: str | Path) -> AppConfig:
    path = Path(path)
    if not path.is_file():
        raise DataError(f"config file not found: {path}")
    try:
        raw = tomllib.loads(path.read_text(encoding="utf-8"))
    except tomllib.TOMLDecodeError as exc:
        raise DataError(f"{path}: {exc}") from exc

    unknown = set(raw) - set(_SECTIONS)
    if unknown:
        raise DataError(f"{path}: unknown sections {sorted(unknown)}")
    parts = {
        name: _build_section(name, cls, raw.get(name, {}))
        for name, cls in _SECTIONS.items()
    }
    return AppConfig(base_dir=path.parent.resolve(), **parts)
