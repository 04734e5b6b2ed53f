"""Cry detector architecture: BSConv encoder with ESA/CCA, ADM, MLP classifier."""

from .adm import ADM
from .attention import CCA, ESA, contrast
from .complexity import ComplexityReport, complexity_report, module_complexity
from .config import (
    PRESETS,
    AdmConfig,
    EsaConfig,
    ModelConfig,
    load_model_config,
    save_model_config,
)
from .network import Classifier, CryDetector, Encoder, EncoderBlock, model_forward

__all__ = [
    "ADM",
    "AdmConfig",
    "CCA",
    "Classifier",
    "ComplexityReport",
    "CryDetector",
    "ESA",
    "Encoder",
    "EncoderBlock",
    "EsaConfig",
    "ModelConfig",
    "PRESETS",
    "complexity_report",
    "contrast",
    "load_model_config",
    "model_forward",
    "module_complexity",
    "save_model_config",
]
