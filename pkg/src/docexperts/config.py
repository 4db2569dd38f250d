"""Engine configuration: TOML files merged with command-line overrides.

A config file holds one section per subsystem plus a top-level seed.
Every key mirrors the matching CLI flag; unknown sections or keys are
rejected rather than silently ignored. Overrides (from flags) win over
file values, which win over defaults.
"""

from __future__ import annotations

from dataclasses import dataclass, field, fields
from pathlib import Path

try:
    import tomllib
except ModuleNotFoundError:  # 3.10 and older
    import tomli as tomllib

from .baseline import BaselineConfig
from .clustering import ClusteringConfig
from .corpus import ChunkingParams
from .embedding import (
    KIND_DETERMINISTIC,
    KIND_REMOTE,
    DeterministicLocalProvider,
    RemoteHttpProvider,
)
from .errors import ConfigError
from .router import RouterConfig


@dataclass(frozen=True)
class ProviderSettings:
    """How to construct the embedding provider."""

    kind: str = KIND_DETERMINISTIC
    dim: int = 256
    endpoint: str | None = None
    model_name: str | None = None
    batch_size: int = 32
    timeout: float = 30.0
    retries: int = 3

    def __post_init__(self):
        if self.kind not in (KIND_DETERMINISTIC, KIND_REMOTE):
            raise ConfigError(
                f"provider kind must be {KIND_DETERMINISTIC!r} or {KIND_REMOTE!r}, "
                f"got {self.kind!r}"
            )
        if self.dim < 1:
            raise ConfigError("provider dim must be >= 1")
        if self.batch_size < 1:
            raise ConfigError("provider batch_size must be >= 1")
        if self.kind == KIND_REMOTE and not self.endpoint:
            raise ConfigError("remote provider needs an endpoint")

    def build(self, seed: int):
        if self.kind == KIND_DETERMINISTIC:
            return DeterministicLocalProvider(
                self.dim, seed=seed, batch_size=self.batch_size
            )
        return RemoteHttpProvider(
            endpoint=self.endpoint,
            dim=self.dim,
            model_name=self.model_name,
            batch_size=self.batch_size,
            timeout=self.timeout,
            retries=self.retries,
        )


@dataclass(frozen=True)
class BenchSettings:
    runs: int = 3
    warmup: int = 5

    def __post_init__(self):
        if self.runs < 1:
            raise ConfigError("bench runs must be >= 1")
        if self.warmup < 0:
            raise ConfigError("bench warmup must be >= 0")


@dataclass(frozen=True)
class EngineConfig:
    seed: int = 0
    chunking: ChunkingParams = field(default_factory=ChunkingParams)
    provider: ProviderSettings = field(default_factory=ProviderSettings)
    clustering: ClusteringConfig = field(default_factory=ClusteringConfig)
    router: RouterConfig = field(default_factory=RouterConfig)
    baseline: BaselineConfig = field(default_factory=BaselineConfig)
    bench: BenchSettings = field(default_factory=BenchSettings)

    def build_provider(self):
        return self.provider.build(self.seed)


_SECTIONS = {
    "chunking": ChunkingParams,
    "provider": ProviderSettings,
    "clustering": ClusteringConfig,
    "router": RouterConfig,
    "baseline": BaselineConfig,
    "bench": BenchSettings,
}

# the top-level seed is the only seed; per-section seeds are not a thing
_HIDDEN_KEYS = {"clustering": {"seed"}}


def _allowed_keys(section: str) -> set[str]:
    names = {f.name for f in fields(_SECTIONS[section])}
    return names - _HIDDEN_KEYS.get(section, set())


def build_config(
    mapping: dict | None = None,
    overrides: dict | None = None,
    source: str = "config",
) -> EngineConfig:
    """Turn a parsed TOML mapping plus CLI overrides into an EngineConfig.

    mapping keys are validated against the known sections and fields;
    overrides are trusted (they come from our own flag parsing) and win.
    """
    mapping = mapping or {}
    overrides = overrides or {}

    if not isinstance(mapping, dict):
        raise ConfigError(f"{source}: top level must be a table")
    unknown = set(mapping) - set(_SECTIONS) - {"seed"}
    if unknown:
        raise ConfigError(f"{source}: unknown key {sorted(unknown)[0]!r}")
    for section in _SECTIONS:
        table = mapping.get(section, {})
        if not isinstance(table, dict):
            raise ConfigError(f"{source}: [{section}] must be a table")
        bad = set(table) - _allowed_keys(section)
        if bad:
            raise ConfigError(
                f"{source}: unknown key {sorted(bad)[0]!r} in [{section}]"
            )

    merged: dict[str, dict] = {}
    for section in _SECTIONS:
        values = dict(mapping.get(section, {}))
        values.update(
            {k: v for k, v in overrides.get(section, {}).items() if v is not None}
        )
        merged[section] = values
    seed = overrides.get("seed")
    if seed is None:
        seed = mapping.get("seed", 0)
    if not isinstance(seed, int) or isinstance(seed, bool):
        raise ConfigError(f"{source}: seed must be an integer")

    built = {}
    for section, cls in _SECTIONS.items():
        kwargs = merged[section]
        if section == "clustering":
            kwargs = {**kwargs, "seed": seed}
        try:
            built[section] = cls(**kwargs)
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"{source}: [{section}]: {exc}") from exc
    return EngineConfig(seed=seed, **built)


def load_config(path: str | Path, overrides: dict | None = None) -> EngineConfig:
    path = Path(path)
    try:
        with open(path, "rb") as fh:
            mapping = tomllib.load(fh)
    except FileNotFoundError as exc:
        raise ConfigError(f"config file not found: {path}") from exc
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: invalid TOML: {exc}") from exc
    return build_config(mapping, overrides, source=str(path))


def config_overrides(
    seed: int | None = None, **sections: dict | None
) -> dict:
    """Convenience shaping of flag values into the overrides mapping."""
    out: dict = {k: v for k, v in sections.items() if v}
    if seed is not None:
        out["seed"] = seed
    return out
