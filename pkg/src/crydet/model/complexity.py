"""Parameter and FLOP accounting (1 multiply-accumulate = 2 FLOPs)."""

from __future__ import annotations

from dataclasses import dataclass

from .config import ModelConfig
from .network import CryDetector


@dataclass(frozen=True)
class ComplexityReport:
    n_params: int
    macs: int

    @property
    def flops(self) -> int:
        return 2 * self.macs

    @property
    def np_millions(self) -> float:
        return self.n_params / 1e6

    @property
    def flops_giga(self) -> float:
        return self.flops / 1e9

    def as_dict(self) -> dict:
        return {
            "n_params": self.n_params,
            "np_millions": round(self.np_millions, 4),
            "flops": self.flops,
            "flops_giga": round(self.flops_giga, 4),
        }


def complexity_report(cfg: ModelConfig | None = None) -> ComplexityReport:
    """Trainable parameter count and FLOPs of one forward pass on ``cfg.input_shape``."""
    model = CryDetector(cfg or ModelConfig())
    _, macs = model.macs()
    return ComplexityReport(model.num_parameters(), int(macs))


def module_complexity(module, in_shape) -> ComplexityReport:
    _, macs = module.macs(tuple(in_shape))
    return ComplexityReport(module.num_parameters(), int(macs))
