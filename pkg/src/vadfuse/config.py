"""Run-time configuration and the ``key = value`` config file reader."""

from __future__ import annotations

import ast
from dataclasses import dataclass, field, fields, replace
from pathlib import Path
from typing import Any

from .fusion import FusionConfig
from .gmm import GmmCoeffs, GmmConfig
from .segmenter import EndpointConfig


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class FrontendConfig:
    context_left: int = 5
    context_right: int = 5
    cmn_decay: float = 0.995
    cmn_warmup: int = 20


@dataclass(frozen=True)
class TrainConfig:
    lr: float = 0.01
    batch_size: int = 64
    epochs: int = 10
    activation: str = "relu"
    seed: int = 0


@dataclass(frozen=True)
class Config:
    frontend: FrontendConfig = field(default_factory=FrontendConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    gmm: GmmConfig = field(default_factory=GmmConfig)
    fusion: FusionConfig = field(default_factory=FusionConfig)
    endpoint: EndpointConfig = field(default_factory=EndpointConfig)
    buffer_frames: int = 1000


# flat config key -> (section, attribute)
_KEYS: dict[str, tuple[str, str]] = {}
for _section, _cls in (("frontend", FrontendConfig), ("train", TrainConfig), ("fusion", FusionConfig),
                       ("endpoint", EndpointConfig), ("gmm.coeffs", GmmCoeffs)):
    for _f in fields(_cls):
        _KEYS[_f.name] = (_section, _f.name)
for _f in fields(GmmConfig):
    if _f.name != "coeffs":
        _KEYS[_f.name] = ("gmm", _f.name)
_KEYS["subband_weights"] = ("gmm", "weights")
_KEYS["dnn_threshold"] = ("fusion", "dnn_threshold")
_KEYS["buffer_frames"] = ("", "buffer_frames")


def config_keys() -> list[str]:
    return sorted(_KEYS)


def _parse_value(text: str) -> Any:
    text = text.strip()
    try:
        return ast.literal_eval(text)
    except (ValueError, SyntaxError):
        return text.strip("\"'")


def parse_config_text(text: str) -> dict[str, Any]:
    values: dict[str, Any] = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line or line.startswith("["):
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value'")
        key, value = (part.strip() for part in line.split("=", 1))
        if key not in _KEYS:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        values[key] = _parse_value(value)
    return values


def apply_overrides(cfg: Config, values: dict[str, Any]) -> Config:
    """Return a copy of ``cfg`` with flat-key overrides applied."""
    grouped: dict[str, dict[str, Any]] = {}
    for key, value in values.items():
        if key not in _KEYS:
            raise ConfigError(f"unknown key {key!r}")
        section, attr = _KEYS[key]
        if attr == "weights":
            value = tuple(float(v) for v in value)
        grouped.setdefault(section, {})[attr] = value
    try:
        coeffs = replace(cfg.gmm.coeffs, **grouped.get("gmm.coeffs", {}))
        return replace(
            cfg,
            frontend=replace(cfg.frontend, **grouped.get("frontend", {})),
            train=replace(cfg.train, **grouped.get("train", {})),
            gmm=replace(cfg.gmm, coeffs=coeffs, **grouped.get("gmm", {})),
            fusion=replace(cfg.fusion, **grouped.get("fusion", {})),
            endpoint=replace(cfg.endpoint, **grouped.get("endpoint", {})),
            **grouped.get("", {}),
        )
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc


def load_config(path: str | Path | None, base: Config | None = None) -> Config:
    cfg = base or Config()
    if path is None:
        return cfg
    return apply_overrides(cfg, parse_config_text(Path(path).read_text()))


def dump_config(cfg: Config) -> str:
    lines = []
    for key in config_keys():
        section, attr = _KEYS[key]
        if key == "subband_weights":
            continue
        obj: Any = cfg
        for part in filter(None, section.split(".")):
            obj = getattr(obj, part)
        lines.append(f"{key} = {getattr(obj, attr)!r}")
    lines.append(f"subband_weights = {list(cfg.gmm.weights)!r}")
    return "\n".join(lines) + "\n"
