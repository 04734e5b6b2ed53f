"""Adaptive denoising module: frequency-axis BiLSTM then time-axis LSTM, both residual."""

from __future__ import annotations

import numpy as np

from ..errors import ShapeError
from ..nn.layers import DEFAULT_DTYPE, BiLSTM, Linear, LSTM, Module
from ..nn.tensor import Tensor
from .config import AdmConfig


class ADM(Module):
    """Maps N x C x F x T to the same shape.

    Stage 1 runs a BiLSTM along F independently for every frame and
    projects 2H_f back to C; stage 2 runs an LSTM along T independently for
    every frequency row and projects H_t back to C.  Each stage adds its
    input.  Projections start at zero, so a fresh module is the identity.
    """

    def __init__(self, channels: int, cfg: AdmConfig, rng: np.random.Generator, dtype=DEFAULT_DTYPE):
        super().__init__()
        self.channels = channels
        self.freq_rnn = BiLSTM(channels, cfg.freq_hidden, rng, dtype=dtype)
        self.freq_proj = Linear(2 * cfg.freq_hidden, channels, rng, zero_init=True, dtype=dtype)
        self.time_rnn = LSTM(channels, cfg.time_hidden, rng, dtype=dtype)
        self.time_proj = Linear(cfg.time_hidden, channels, rng, zero_init=True, dtype=dtype)

    def _check(self, x: Tensor) -> None:
        if x.ndim != 4 or x.shape[1] != self.channels:
            raise ShapeError(f"ADM expects N x {self.channels} x F x T, got {x.shape}")

    def frequency_stage(self, x: Tensor) -> Tensor:
        self._check(x)
        n, c, f, t = x.shape
        seq = x.transpose(0, 3, 2, 1).reshape(n * t, f, c)
        y = self.freq_proj(self.freq_rnn(seq))
        return x + y.reshape(n, t, f, c).transpose(0, 3, 2, 1)

    def time_stage(self, x: Tensor) -> Tensor:
        self._check(x)
        n, c, f, t = x.shape
        seq = x.transpose(0, 2, 3, 1).reshape(n * f, t, c)
        y = self.time_proj(self.time_rnn(seq))
        return x + y.reshape(n, f, t, c).transpose(0, 3, 1, 2)

    def forward(self, x: Tensor) -> Tensor:
        squeezed = x.ndim == 3
        if squeezed:
            x = x.reshape((1,) + x.shape)
        out = self.time_stage(self.frequency_stage(x))
        return out.reshape(out.shape[1:]) if squeezed else out

    def macs(self, shape):
        c, f, t = shape
        _, m_f = self.freq_rnn.macs((f, c))
        _, m_fp = self.freq_proj.macs((f, 2 * self.freq_rnn.hidden_size))
        _, m_t = self.time_rnn.macs((t, c))
        _, m_tp = self.time_proj.macs((t, self.time_rnn.hidden_size))
        return shape, t * (m_f + m_fp) + f * (m_t + m_tp)
