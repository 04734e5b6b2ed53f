"""Architecture configuration and its key-value text serialisation."""

from __future__ import annotations

import configparser
import dataclasses
from dataclasses import dataclass, field
from pathlib import Path

from ..errors import ShapeError


@dataclass(frozen=True)
class EsaConfig:
    reduction: int = 4
    group_depth: int = 2


@dataclass(frozen=True)
class AdmConfig:
    freq_hidden: int = 128
    time_hidden: int = 256


@dataclass(frozen=True)
class ModelConfig:
    input_shape: tuple[int, int, int] = (1, 128, 199)
    channels: tuple[int, ...] = (32, 64, 128, 256)
    kernel: int = 3
    esa: EsaConfig = field(default_factory=EsaConfig)
    cca_reduction: int = 4
    fused_channels: int = 256
    adm: AdmConfig = field(default_factory=AdmConfig)
    classifier_hidden: int = 128
    use_esa: bool = True
    use_cca: bool = True
    use_adm: bool = True
    use_multiscale: bool = True

    def __post_init__(self):
        if not self.channels or min(self.channels) < 1:
            raise ShapeError(f"invalid channel widths {self.channels}")
        _, h, w = self.input_shape
        for _ in self.channels:
            h, w = h // 2, w // 2
        if h < 1 or w < 1:
            raise ShapeError(f"{len(self.channels)} pooling stages do not fit input {self.input_shape}")

    @property
    def n_blocks(self) -> int:
        return len(self.channels)

    def block_output_hw(self) -> list[tuple[int, int]]:
        _, h, w = self.input_shape
        sizes = []
        for _ in self.channels:
            h, w = h // 2, w // 2
            sizes.append((h, w))
        return sizes

    @property
    def concat_channels(self) -> int:
        return sum(self.channels) if self.use_multiscale else self.channels[-1]

    def ablate(self, *flags: str) -> "ModelConfig":
        """Copy with modules disabled, e.g. ``cfg.ablate("esa", "adm")``."""
        known = {"esa", "cca", "adm", "multiscale"}
        unknown = set(flags) - known
        if unknown:
            raise ValueError(f"unknown ablation flags {sorted(unknown)}")
        return dataclasses.replace(self, **{f"use_{f}": False for f in flags})


PRESETS = {
    "default": ModelConfig(),
    # three narrow blocks, the widths suggested by the architecture sketch
    "small": ModelConfig(channels=(16, 32, 64), fused_channels=64, adm=AdmConfig(32, 64)),
    "tiny": ModelConfig(
        channels=(4, 8), esa=EsaConfig(reduction=2, group_depth=1), cca_reduction=2,
        fused_channels=8, adm=AdmConfig(4, 8), classifier_hidden=16,
    ),
}


def _fmt(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, tuple):
        return ", ".join(str(x) for x in v)
    return str(v)


def config_to_dict(cfg: ModelConfig) -> dict[str, str]:
    return {
        "input_shape": _fmt(cfg.input_shape),
        "channels": _fmt(cfg.channels),
        "kernel": _fmt(cfg.kernel),
        "esa_reduction": _fmt(cfg.esa.reduction),
        "esa_group_depth": _fmt(cfg.esa.group_depth),
        "cca_reduction": _fmt(cfg.cca_reduction),
        "fused_channels": _fmt(cfg.fused_channels),
        "adm_freq_hidden": _fmt(cfg.adm.freq_hidden),
        "adm_time_hidden": _fmt(cfg.adm.time_hidden),
        "classifier_hidden": _fmt(cfg.classifier_hidden),
        "use_esa": _fmt(cfg.use_esa),
        "use_cca": _fmt(cfg.use_cca),
        "use_adm": _fmt(cfg.use_adm),
        "use_multiscale": _fmt(cfg.use_multiscale),
    }


def _ints(s: str) -> tuple[int, ...]:
    return tuple(int(x) for x in s.replace(",", " ").split())


def _bool(s: str) -> bool:
    v = s.strip().lower()
    if v in ("1", "true", "yes", "on"):
        return True
    if v in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {s!r}")


def config_from_dict(d: dict[str, str], base: ModelConfig | None = None) -> ModelConfig:
    base = base or ModelConfig()
    known = set(config_to_dict(base))
    unknown = set(d) - known
    if unknown:
        raise ValueError(f"unknown model config keys {sorted(unknown)}")
    get = lambda k, conv, default: conv(d[k]) if k in d else default  # noqa: E731
    return ModelConfig(
        input_shape=get("input_shape", _ints, base.input_shape),
        channels=get("channels", _ints, base.channels),
        kernel=get("kernel", int, base.kernel),
        esa=EsaConfig(get("esa_reduction", int, base.esa.reduction), get("esa_group_depth", int, base.esa.group_depth)),
        cca_reduction=get("cca_reduction", int, base.cca_reduction),
        fused_channels=get("fused_channels", int, base.fused_channels),
        adm=AdmConfig(get("adm_freq_hidden", int, base.adm.freq_hidden), get("adm_time_hidden", int, base.adm.time_hidden)),
        classifier_hidden=get("classifier_hidden", int, base.classifier_hidden),
        use_esa=get("use_esa", _bool, base.use_esa),
        use_cca=get("use_cca", _bool, base.use_cca),
        use_adm=get("use_adm", _bool, base.use_adm),
        use_multiscale=get("use_multiscale", _bool, base.use_multiscale),
    )


def save_model_config(path, cfg: ModelConfig) -> None:
    parser = configparser.ConfigParser()
    parser["model"] = config_to_dict(cfg)
    with open(path, "w") as fh:
        parser.write(fh)


def load_model_config(path) -> ModelConfig:
    parser = configparser.ConfigParser()
    if not parser.read(Path(path)):
        raise FileNotFoundError(path)
    base = PRESETS[parser.get("model", "preset", fallback="default")]
    section = {k: v for k, v in parser["model"].items() if k != "preset"} if parser.has_section("model") else {}
    return config_from_dict(section, base)
