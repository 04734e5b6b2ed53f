"""Enhanced spatial attention (ESA) and contrast-aware channel attention (CCA)."""

from __future__ import annotations

import numpy as np

from ..errors import ShapeError
from ..nn import functional as F
from ..nn.layers import DEFAULT_DTYPE, BSConv2d, Conv2d, ConvSpec, Linear, Module
from ..nn.tensor import Tensor
from .config import EsaConfig

POOL_KERNEL, POOL_STRIDE, POOL_PAD = 3, 2, 1


class ESA(Module):
    """Spatial sigmoid mask from a reduced-channel, reduced-resolution branch.

    1x1 conv (C -> C/r), stride-2 3x3 conv, 3x3/2 max-pool, a group of
    3x3 BSConvs, bilinear upsampling back to H x W, 1x1 conv (C/r -> C),
    sigmoid, then elementwise product with the input.
    """

    def __init__(self, channels: int, cfg: EsaConfig, rng: np.random.Generator, dtype=DEFAULT_DTYPE):
        super().__init__()
        f = channels // cfg.reduction
        if f < 1:
            raise ShapeError(f"ESA reduction {cfg.reduction} leaves no channels out of {channels}")
        self.reduced = f
        self.reduce = Conv2d(ConvSpec(channels, f, 1), rng, dtype=dtype)
        self.down = Conv2d(ConvSpec(f, f, 3, stride=2, padding=1), rng, dtype=dtype)
        self.group = [BSConv2d(ConvSpec(f, f, 3, padding=1), rng, dtype=dtype) for _ in range(cfg.group_depth)]
        self.expand = Conv2d(ConvSpec(f, channels, 1), rng, dtype=dtype)

    def mask(self, x: Tensor) -> Tensor:
        h, w = x.shape[-2:]
        if h < 4 or w < 4:
            raise ShapeError(f"ESA needs spatial dims >= 4, got {h}x{w}")
        r = self.reduce(x)
        y = F.relu(self.down(r))
        y = F.max_pool2d(y, POOL_KERNEL, POOL_STRIDE, POOL_PAD)
        for i, conv in enumerate(self.group):
            y = conv(y)
            if i < len(self.group) - 1:
                y = F.relu(y)
        y = F.bilinear_upsample(y, (h, w))
        return F.sigmoid(self.expand(y))

    def forward(self, x: Tensor) -> Tensor:
        return x * self.mask(x)

    def macs(self, shape):
        c, h, w = shape
        s, m = self.reduce.macs(shape)
        total = m
        s, m = self.down.macs(s)
        total += m
        f, hh, ww = s
        hh = (hh + 2 * POOL_PAD - POOL_KERNEL) // POOL_STRIDE + 1
        ww = (ww + 2 * POOL_PAD - POOL_KERNEL) // POOL_STRIDE + 1
        s = (f, hh, ww)
        for conv in self.group:
            s, m = conv.macs(s)
            total += m
        total += 4 * f * h * w  # bilinear taps
        s, m = self.expand.macs((f, h, w))
        total += m + c * h * w  # mask product
        return shape, total


def contrast(x: Tensor) -> Tensor:
    """Per-channel population standard deviation plus mean (N x C)."""
    m = x.mean(axis=(-2, -1), keepdims=True)
    var = ((x - m) ** 2).mean(axis=(-2, -1))
    return var.sqrt() + m.reshape(m.shape[:-2])


class CCA(Module):
    """Channel reweighting driven by the contrast statistic through a C -> C/r -> C MLP."""

    def __init__(self, channels: int, reduction: int, rng: np.random.Generator, dtype=DEFAULT_DTYPE):
        super().__init__()
        hidden = max(1, channels // reduction)
        self.fc1 = Linear(channels, hidden, rng, dtype=dtype)
        self.fc2 = Linear(hidden, channels, rng, dtype=dtype)

    def scales(self, x: Tensor) -> Tensor:
        z = contrast(x)
        return F.sigmoid(self.fc2(F.relu(self.fc1(z))))

    def forward(self, x: Tensor) -> Tensor:
        s = self.scales(x)
        return x * s.reshape(s.shape + (1, 1))

    def macs(self, shape):
        c, h, w = shape
        _, m1 = self.fc1.macs((c,))
        _, m2 = self.fc2.macs((self.fc1.weight.shape[0],))
        return shape, 3 * c * h * w + m1 + m2
