"""Parameterised layers built on :mod:`crydet.nn.functional`.

Every layer exposes ``macs(shape)`` which returns the output shape and the
multiply-accumulate count for a single sample of the given (unbatched)
input shape.  The complexity reporter composes these.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from typing import Iterator

import numpy as np

from ..errors import ShapeError
from . import functional as F
from .tensor import Tensor

DEFAULT_DTYPE = np.float64


def parameter(data: np.ndarray) -> Tensor:
    return Tensor(data, requires_grad=True)


def uniform_init(rng: np.random.Generator, shape: tuple, fan_in: int, dtype=DEFAULT_DTYPE) -> np.ndarray:
    bound = 1.0 / np.sqrt(max(fan_in, 1))
    return rng.uniform(-bound, bound, size=shape).astype(dtype)


class Module:
    """Container tracking parameters, buffers and child modules by attribute name."""

    def __init__(self) -> None:
        object.__setattr__(self, "_params", {})
        object.__setattr__(self, "_buffers", {})
        object.__setattr__(self, "_modules", {})
        object.__setattr__(self, "training", True)

    def __setattr__(self, name, value):
        if isinstance(value, Tensor) and value.requires_grad:
            self._params[name] = value
        elif isinstance(value, Module):
            self._modules[name] = value
        elif isinstance(value, (list, tuple)) and value and all(isinstance(v, Module) for v in value):
            value = ModuleList(value)
            self._modules[name] = value
        object.__setattr__(self, name, value)

    def register_buffer(self, name: str, value: np.ndarray) -> None:
        self._buffers[name] = value
        object.__setattr__(self, name, value)

    def named_parameters(self, prefix: str = "") -> Iterator[tuple[str, Tensor]]:
        for name in self._params:
            yield prefix + name, getattr(self, name)
        for name, mod in self._modules.items():
            yield from mod.named_parameters(prefix + name + ".")

    def parameters(self) -> list[Tensor]:
        return [p for _, p in self.named_parameters()]

    def named_buffers(self, prefix: str = "") -> Iterator[tuple[str, np.ndarray]]:
        for name in self._buffers:
            yield prefix + name, getattr(self, name)
        for name, mod in self._modules.items():
            yield from mod.named_buffers(prefix + name + ".")

    def num_parameters(self) -> int:
        return int(sum(p.size for p in self.parameters()))

    def state_dict(self) -> dict[str, np.ndarray]:
        state = {name: p.data for name, p in self.named_parameters()}
        state.update(dict(self.named_buffers()))
        return state

    def load_state_dict(self, state: dict[str, np.ndarray]) -> None:
        own = self.state_dict()
        missing = sorted(set(own) - set(state))
        unexpected = sorted(set(state) - set(own))
        if missing or unexpected:
            raise ShapeError(f"state mismatch: missing {missing}, unexpected {unexpected}")
        for name, arr in own.items():
            src = np.asarray(state[name])
            if src.shape != arr.shape:
                raise ShapeError(f"{name}: checkpoint shape {src.shape} != model shape {arr.shape}")
            arr[...] = src

    def modules(self) -> Iterator["Module"]:
        yield self
        for mod in self._modules.values():
            yield from mod.modules()

    def train(self, mode: bool = True) -> "Module":
        for m in self.modules():
            object.__setattr__(m, "training", mode)
        return self

    def eval(self) -> "Module":
        return self.train(False)

    def astype(self, dtype) -> "Module":
        for m in self.modules():
            for name, p in list(m._params.items()):
                p.data = p.data.astype(dtype)
            for name, b in list(m._buffers.items()):
                m.register_buffer(name, b.astype(dtype))
        return self

    def zero_grad(self) -> None:
        for p in self.parameters():
            p.grad = None

    def __call__(self, *args, **kwargs):
        return self.forward(*args, **kwargs)


class ModuleList(Module):
    def __init__(self, mods) -> None:
        super().__init__()
        for i, m in enumerate(mods):
            setattr(self, str(i), m)
        object.__setattr__(self, "_items", list(mods))

    def __iter__(self):
        return iter(self._items)

    def __len__(self) -> int:
        return len(self._items)

    def __getitem__(self, i):
        return self._items[i]


@dataclass(frozen=True)
class ConvSpec:
    in_channels: int
    out_channels: int
    kernel: int
    stride: int = 1
    padding: int = 0

    def __post_init__(self):
        if min(self.in_channels, self.out_channels, self.kernel, self.stride) < 1 or self.padding < 0:
            raise ValueError(f"invalid convolution spec {self}")

    def out_hw(self, h: int, w: int) -> tuple[int, int]:
        return (
            (h + 2 * self.padding - self.kernel) // self.stride + 1,
            (w + 2 * self.padding - self.kernel) // self.stride + 1,
        )


def param_count(spec: ConvSpec, kind: str = "standard") -> int:
    """Filter parameter count (bias excluded) of a standard or blueprint separable conv."""
    c, k, n = spec.in_channels, spec.kernel, spec.out_channels
    if kind == "standard":
        return c * k * k * n
    if kind == "bsconv":
        return (c + k * k) * n
    raise ValueError(f"unknown convolution kind {kind!r}")


def param_ratio(spec: ConvSpec) -> Fraction:
    return Fraction(param_count(spec, "bsconv"), param_count(spec, "standard"))


class Conv2d(Module):
    def __init__(self, spec: ConvSpec, rng: np.random.Generator, bias: bool = True, dtype=DEFAULT_DTYPE):
        super().__init__()
        self.spec = spec
        c, n, k = spec.in_channels, spec.out_channels, spec.kernel
        fan_in = c * k * k
        self.weight = parameter(uniform_init(rng, (n, c, k, k), fan_in, dtype))
        self.bias = parameter(uniform_init(rng, (n,), fan_in, dtype)) if bias else None

    def forward(self, x: Tensor) -> Tensor:
        return F.conv2d(x, self.weight, self.bias, self.spec.stride, self.spec.padding)

    def macs(self, shape):
        c, h, w = shape
        ho, wo = self.spec.out_hw(h, w)
        return (self.spec.out_channels, ho, wo), param_count(self.spec) * ho * wo


class BSConv2d(Module):
    """Blueprint separable convolution: pointwise C -> N, then depthwise K x K."""

    def __init__(self, spec: ConvSpec, rng: np.random.Generator, bias: bool = True, dtype=DEFAULT_DTYPE):
        super().__init__()
        self.spec = spec
        c, n, k = spec.in_channels, spec.out_channels, spec.kernel
        self.pointwise = parameter(uniform_init(rng, (n, c), c, dtype))
        self.blueprints = parameter(uniform_init(rng, (n, k, k), k * k, dtype))
        self.bias = parameter(np.zeros(n, dtype=dtype)) if bias else None

    def forward(self, x: Tensor) -> Tensor:
        return F.bsconv2d(x, self.pointwise, self.blueprints, self.bias, self.spec.stride, self.spec.padding)

    def materialized(self) -> np.ndarray:
        return F.materialize_bsconv(self.pointwise.data, self.blueprints.data)

    def macs(self, shape):
        c, h, w = shape
        n, k = self.spec.out_channels, self.spec.kernel
        ho, wo = self.spec.out_hw(h, w)
        return (n, ho, wo), c * n * h * w + k * k * n * ho * wo


class BatchNorm2d(Module):
    def __init__(self, channels: int, momentum: float = 0.1, eps: float = F.BN_EPS, dtype=DEFAULT_DTYPE):
        super().__init__()
        self.momentum, self.eps = momentum, eps
        self.gamma = parameter(np.ones(channels, dtype=dtype))
        self.beta = parameter(np.zeros(channels, dtype=dtype))
        self.register_buffer("running_mean", np.zeros(channels, dtype=dtype))
        self.register_buffer("running_var", np.ones(channels, dtype=dtype))

    def forward(self, x: Tensor) -> Tensor:
        return F.batch_norm(
            x, self.gamma, self.beta, self.running_mean, self.running_var, self.training, self.momentum, self.eps
        )

    def macs(self, shape):
        return shape, int(np.prod(shape))


class Linear(Module):
    def __init__(
        self, in_features: int, out_features: int, rng: np.random.Generator, bias: bool = True,
        zero_init: bool = False, dtype=DEFAULT_DTYPE,
    ):
        super().__init__()
        if zero_init:
            self.weight = parameter(np.zeros((out_features, in_features), dtype=dtype))
            self.bias = parameter(np.zeros(out_features, dtype=dtype)) if bias else None
        else:
            self.weight = parameter(uniform_init(rng, (out_features, in_features), in_features, dtype))
            self.bias = parameter(uniform_init(rng, (out_features,), in_features, dtype)) if bias else None

    def forward(self, x: Tensor) -> Tensor:
        return F.linear(x, self.weight, self.bias)

    def macs(self, shape):
        *lead, n_in = shape
        n_out = self.weight.shape[0]
        return tuple(lead) + (n_out,), int(np.prod(lead, dtype=np.int64)) * n_in * n_out


class LSTM(Module):
    """Unidirectional single-layer LSTM over B x T x I sequences."""

    def __init__(
        self, input_size: int, hidden_size: int, rng: np.random.Generator, reverse: bool = False,
        dtype=DEFAULT_DTYPE,
    ):
        super().__init__()
        self.input_size, self.hidden_size, self.reverse = input_size, hidden_size, reverse
        self.w_ih = parameter(uniform_init(rng, (4 * hidden_size, input_size), hidden_size, dtype))
        self.w_hh = parameter(uniform_init(rng, (4 * hidden_size, hidden_size), hidden_size, dtype))
        self.bias = parameter(uniform_init(rng, (4 * hidden_size,), hidden_size, dtype))

    def params(self) -> tuple[Tensor, Tensor, Tensor]:
        return self.w_ih, self.w_hh, self.bias

    def forward(self, seq: Tensor, h0: Tensor | None = None, c0: Tensor | None = None) -> Tensor:
        return F.lstm(seq, self.w_ih, self.w_hh, self.bias, h0, c0, reverse=self.reverse)

    def macs(self, shape):
        t, _ = shape
        h, i = self.hidden_size, self.input_size
        # gate matmuls plus the three elementwise products per hidden unit
        return (t, h), t * (4 * h * (i + h) + 3 * h)


class BiLSTM(Module):
    def __init__(self, input_size: int, hidden_size: int, rng: np.random.Generator, dtype=DEFAULT_DTYPE):
        super().__init__()
        self.hidden_size = hidden_size
        self.fwd = LSTM(input_size, hidden_size, rng, dtype=dtype)
        self.bwd = LSTM(input_size, hidden_size, rng, reverse=True, dtype=dtype)

    def forward(self, seq: Tensor) -> Tensor:
        return F.bilstm(seq, self.fwd.params(), self.bwd.params())

    def macs(self, shape):
        (t, h), m = self.fwd.macs(shape)
        return (t, 2 * h), 2 * m
