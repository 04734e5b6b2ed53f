"""One INI-style file holding the model, training and augmentation settings."""

from __future__ import annotations

import configparser
import dataclasses
from dataclasses import dataclass, field
from pathlib import Path

from ..augment import AugmentPolicy
from ..model.config import PRESETS, ModelConfig, config_from_dict, config_to_dict
from .training import TrainConfig


@dataclass
class RunConfig:
    model: ModelConfig = field(default_factory=ModelConfig)
    train: TrainConfig = field(default_factory=TrainConfig)

    @property
    def policy(self) -> AugmentPolicy:
        return self.train.policy


def _parse(value: str, default):
    if isinstance(default, bool):
        v = value.strip().lower()
        if v not in ("1", "0", "true", "false", "yes", "no", "on", "off"):
            raise ValueError(f"not a boolean: {value!r}")
        return v in ("1", "true", "yes", "on")
    if isinstance(default, tuple):
        parts = value.replace(",", " ").split()
        return tuple(type(d)(p) for d, p in zip(default, parts)) if len(parts) == len(default) else _bad(value)
    if default is None:
        return None if value.strip().lower() in ("", "none") else int(value)
    return type(default)(value)


def _bad(value):
    raise ValueError(f"wrong number of items in {value!r}")


def _fmt(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, tuple):
        return ", ".join(str(x) for x in v)
    return "none" if v is None else str(v)


def _apply(obj, section: dict[str, str], skip=()):
    names = {f.name: f for f in dataclasses.fields(obj) if f.name not in skip}
    unknown = set(section) - set(names)
    if unknown:
        raise ValueError(f"unknown keys {sorted(unknown)} for {type(obj).__name__}")
    return dataclasses.replace(obj, **{k: _parse(v, getattr(obj, k)) for k, v in section.items()})


def load_run_config(path) -> RunConfig:
    parser = configparser.ConfigParser()
    if not parser.read(Path(path)):
        raise FileNotFoundError(path)
    unknown = set(parser.sections()) - {"model", "train", "augment"}
    if unknown:
        raise ValueError(f"unknown config sections {sorted(unknown)}")
    model = ModelConfig()
    if parser.has_section("model"):
        sec = dict(parser["model"])
        base = PRESETS[sec.pop("preset", "default")]
        model = config_from_dict(sec, base)
    policy = _apply(AugmentPolicy(), dict(parser["augment"])) if parser.has_section("augment") else AugmentPolicy()
    train = TrainConfig()
    if parser.has_section("train"):
        train = _apply(train, dict(parser["train"]), skip=("policy",))
    return RunConfig(model, dataclasses.replace(train, policy=policy))


def save_run_config(path, cfg: RunConfig) -> None:
    parser = configparser.ConfigParser()
    parser["model"] = config_to_dict(cfg.model)
    parser["train"] = {f.name: _fmt(getattr(cfg.train, f.name)) for f in dataclasses.fields(cfg.train) if f.name != "policy"}
    parser["augment"] = {f.name: _fmt(getattr(cfg.policy, f.name)) for f in dataclasses.fields(cfg.policy)}
    with open(path, "w") as fh:
        parser.write(fh)
