"""Encoder, classifier and the assembled cry detector."""

from __future__ import annotations

import numpy as np

from ..errors import ShapeError
from ..features import LogMelSpectrogram
from ..nn import functional as F
from ..nn.layers import DEFAULT_DTYPE, BatchNorm2d, BSConv2d, ConvSpec, Linear, Module
from ..nn.tensor import Tensor, concat, no_grad
from .adm import ADM
from .attention import CCA, ESA
from .config import ModelConfig


class EncoderBlock(Module):
    """BSConv -> BN -> ReLU -> 2x2 max-pool -> ESA."""

    def __init__(self, c_in: int, c_out: int, cfg: ModelConfig, rng: np.random.Generator, dtype=DEFAULT_DTYPE):
        super().__init__()
        k = cfg.kernel
        self.conv = BSConv2d(ConvSpec(c_in, c_out, k, padding=k // 2), rng, bias=False, dtype=dtype)
        self.bn = BatchNorm2d(c_out, dtype=dtype)
        self.esa = ESA(c_out, cfg.esa, rng, dtype=dtype) if cfg.use_esa else None

    def forward(self, x: Tensor) -> Tensor:
        y = F.max_pool2d(F.relu(self.bn(self.conv(x))), 2)
        return self.esa(y) if self.esa is not None else y

    def macs(self, shape):
        s, total = self.conv.macs(shape)
        _, m = self.bn.macs(s)
        total += m
        s = (s[0], s[1] // 2, s[2] // 2)
        if self.esa is not None:
            _, m = self.esa.macs(s)
            total += m
        return s, total


class Encoder(Module):
    """Stacked blocks, multi-scale tap fusion, CCA, and a 1x1 BSConv to the fused width."""

    def __init__(self, cfg: ModelConfig, rng: np.random.Generator, dtype=DEFAULT_DTYPE):
        super().__init__()
        self.cfg = cfg
        widths = (cfg.input_shape[0],) + tuple(cfg.channels)
        self.blocks = [EncoderBlock(a, b, cfg, rng, dtype) for a, b in zip(widths[:-1], widths[1:])]
        c_cat = cfg.concat_channels
        self.cca = CCA(c_cat, cfg.cca_reduction, rng, dtype=dtype) if cfg.use_cca else None
        self.fuse = BSConv2d(ConvSpec(c_cat, cfg.fused_channels, 1), rng, dtype=dtype)

    def taps(self, x: Tensor) -> list[Tensor]:
        outs = []
        for block in self.blocks:
            x = block(x)
            outs.append(x)
        return outs

    def concatenated(self, x: Tensor) -> Tensor:
        taps = self.taps(x)
        if not self.cfg.use_multiscale:
            return taps[-1]
        size = taps[-1].shape[-2:]
        return concat([F.adaptive_max_pool2d(t, size) for t in taps], axis=-3)

    def forward(self, x: Tensor) -> Tensor:
        y = self.concatenated(x)
        if self.cca is not None:
            y = self.cca(y)
        return self.fuse(y)

    def macs(self, shape):
        total = 0
        s = shape
        for block in self.blocks:
            s, m = block.macs(s)
            total += m
        s = (self.cfg.concat_channels, s[1], s[2])
        if self.cca is not None:
            _, m = self.cca.macs(s)
            total += m
        s, m = self.fuse.macs(s)
        return s, total + m


class Classifier(Module):
    """Global average pool over F x T, then FC -> ReLU -> FC to one logit."""

    def __init__(self, channels: int, hidden: int, rng: np.random.Generator, dtype=DEFAULT_DTYPE):
        super().__init__()
        self.fc1 = Linear(channels, hidden, rng, dtype=dtype)
        self.fc2 = Linear(hidden, 1, rng, dtype=dtype)

    def forward(self, x: Tensor) -> Tensor:
        z = x.mean(axis=(-2, -1))
        return self.fc2(F.relu(self.fc1(z))).reshape(z.shape[:-1])

    def macs(self, shape):
        c, f, t = shape
        _, m1 = self.fc1.macs((c,))
        _, m2 = self.fc2.macs((self.fc1.weight.shape[0],))
        return (1,), c * f * t + m1 + m2


class CryDetector(Module):
    """Encoder -> ADM -> classifier; ``forward`` returns logits, ``proba`` probabilities."""

    def __init__(self, cfg: ModelConfig | None = None, seed: int = 0, dtype=DEFAULT_DTYPE):
        super().__init__()
        self.cfg = cfg = cfg or ModelConfig()
        self.seed = seed
        rng = np.random.default_rng(seed)
        self.encoder = Encoder(cfg, rng, dtype)
        self.adm = ADM(cfg.fused_channels, cfg.adm, rng, dtype) if cfg.use_adm else None
        self.classifier = Classifier(cfg.fused_channels, cfg.classifier_hidden, rng, dtype)

    def _prepare(self, x) -> Tensor:
        if isinstance(x, LogMelSpectrogram):
            x = x.values
        x = x if isinstance(x, Tensor) else Tensor(np.asarray(x, dtype=self.dtype))
        expected = tuple(self.cfg.input_shape)
        if x.ndim == 2:
            x = x.reshape((1, 1) + x.shape)
        elif x.ndim == 3 and x.shape == expected:
            x = x.reshape((1,) + x.shape)
        if x.ndim != 4 or tuple(x.shape[1:]) != expected:
            raise ShapeError(f"model expects input {expected}, got {x.shape}")
        return x

    @property
    def dtype(self):
        return self.classifier.fc1.weight.dtype

    def embed(self, x) -> Tensor:
        y = self.encoder(self._prepare(x))
        return self.adm(y) if self.adm is not None else y

    def forward(self, x) -> Tensor:
        return self.classifier(self.embed(x))

    def proba(self, x) -> np.ndarray:
        """Cry probabilities for a batch (inference mode, no graph)."""
        was_training = self.training
        self.eval()
        try:
            with no_grad():
                return F.sigmoid(self.forward(x)).data.copy()
        finally:
            self.train(was_training)

    def macs(self, shape=None):
        s, total = self.encoder.macs(tuple(shape or self.cfg.input_shape))
        if self.adm is not None:
            _, m = self.adm.macs(s)
            total += m
        _, m = self.classifier.macs(s)
        return (1,), total + m


def model_forward(spec, model: CryDetector) -> float:
    """Cry probability for one 128 x T log-Mel spectrogram."""
    values = spec.values if isinstance(spec, LogMelSpectrogram) else np.asarray(spec)
    if values.shape != tuple(model.cfg.input_shape[1:]):
        raise ShapeError(f"expected a {model.cfg.input_shape[1:]} spectrogram, got {values.shape}")
    return float(model.proba(values[None, None])[0])
