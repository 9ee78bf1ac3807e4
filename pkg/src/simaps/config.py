"""Run configuration: every module config in one INI-style file.

Example::

    [map]
    scale = 0.05
    [merge]
    k_percent = 9
    [nav]
    void_navigable = true

Sections and keys mirror the dataclass fields; unknown ones are rejected.
"""

from __future__ import annotations

import configparser
from dataclasses import dataclass, field, fields, replace

from .community import LouvainConfig, MergeConfig
from .errors import ConfigError
from .evaluation import DEFAULT_TAU
from .nav.executor import NavConfig
from .projection import MapConfig


@dataclass(frozen=True)
class EvalConfig:
    tau: float = DEFAULT_TAU
    iou_threshold: float = 0.5


@dataclass(frozen=True)
class BuildOptions:
    auto_size: bool = True
    margin: float = 1.0
    keep_obs: bool = False
    threads: int = 1


@dataclass(frozen=True)
class PathsConfig:
    dataset: str = ""
    output: str = ""
    truth: str = ""


@dataclass(frozen=True)
class RunConfig:
    map: MapConfig = MapConfig()
    louvain: LouvainConfig = LouvainConfig()
    merge: MergeConfig = MergeConfig()
    nav: NavConfig = NavConfig()
    eval: EvalConfig = EvalConfig()
    build: BuildOptions = BuildOptions()
    paths: PathsConfig = field(default_factory=PathsConfig)


_TYPES = {"map": MapConfig, "louvain": LouvainConfig, "merge": MergeConfig, "nav": NavConfig,
          "eval": EvalConfig, "build": BuildOptions, "paths": PathsConfig}
_TRUE = {"1", "true", "yes", "on"}
_FALSE = {"0", "false", "no", "off"}


def _convert(raw: str, default, where: str):
    raw = raw.strip()
    try:
        if isinstance(default, bool):
            low = raw.lower()
            if low in _TRUE:
                return True
            if low in _FALSE:
                return False
            raise ValueError(raw)
        if isinstance(default, int):
            return int(raw)
        if isinstance(default, float):
            return float(raw)
        if isinstance(default, str):
            return raw
        if default is None or isinstance(default, tuple):
            # only NavConfig.navigable_classes: a comma-separated id list or "auto"
            if raw.lower() in ("", "auto", "none"):
                return None
            return tuple(int(x) for x in raw.split(","))
    except ValueError:
        raise ConfigError(f"{where}: cannot parse {raw!r}") from None
    raise ConfigError(f"{where}: unsupported option type")


def parse_config(text: str, source: str = "<config>") -> RunConfig:
    cp = configparser.ConfigParser(interpolation=None, default_section="\0none")
    cp.optionxform = str
    try:
        cp.read_string(text, source=source)
    except configparser.Error as e:
        raise ConfigError(f"{source}: {e}") from None
    cfg = RunConfig()
    for sec in cp.sections():
        if sec not in _TYPES:
            raise ConfigError(f"{source}: unknown section [{sec}]")
        current = getattr(cfg, sec)
        defaults = {f.name: getattr(current, f.name) for f in fields(current)}
        updates = {}
        for key, raw in cp.items(sec):
            if key not in defaults:
                raise ConfigError(f"{source}: unknown key {key!r} in [{sec}]")
            updates[key] = _convert(raw, defaults[key], f"{source} [{sec}] {key}")
        try:
            cfg = replace(cfg, **{sec: replace(current, **updates)})
        except (ValueError, TypeError) as e:
            raise ConfigError(f"{source} [{sec}]: {e}") from None
    return cfg


def load_config(path: str) -> RunConfig:
    try:
        with open(path) as fh:
            text = fh.read()
    except OSError as e:
        raise ConfigError(f"cannot read config {path}: {e.strerror}") from None
    return parse_config(text, path)


def dump_config(cfg: RunConfig) -> str:
    lines = []
    for sec in _TYPES:
        lines.append(f"[{sec}]")
        for f in fields(getattr(cfg, sec)):
            v = getattr(getattr(cfg, sec), f.name)
            if isinstance(v, bool):
                v = "true" if v else "false"
            elif isinstance(v, tuple):
                v = ",".join(map(str, v))
            elif v is None:
                v = "auto"
            lines.append(f"{f.name} = {v}")
        lines.append("")
    return "\n".join(lines)

