"""Parameterised layers built on the autodiff kernels."""

from __future__ import annotations

import math

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor


class Module:
    """Base class: tracks child modules, named parameters and state buffers."""

    training = True

    def __init__(self):
        self._children: dict[str, Module] = {}
        self._params: dict[str, Tensor] = {}
        self._buffers: dict[str, np.ndarray] = {}

    def __setattr__(self, key, value):
        if isinstance(value, Module) and key != "_children":
            self.__dict__.setdefault("_children", {})[key] = value
        object.__setattr__(self, key, value)

    def add_param(self, name, array) -> Tensor:
        t = Tensor(array, requires_grad=True)
        self._params[name] = t
        return t

    def add_module(self, name, module):
        self._children[name] = module
        return module

    def named_parameters(self, prefix=""):
        for k, v in self._params.items():
            yield prefix + k, v
        for name, child in self._children.items():
            yield from child.named_parameters(f"{prefix}{name}.")

    def named_buffers(self, prefix=""):
        for k, v in self._buffers.items():
            yield prefix + k, v
        for name, child in self._children.items():
            yield from child.named_buffers(f"{prefix}{name}.")

    def parameters(self):
        return [p for _, p in self.named_parameters()]

    def modules(self):
        yield self
        for child in self._children.values():
            yield from child.modules()

    def train(self, mode: bool = True):
        for m in self.modules():
            m.training = mode
        return self

    def eval(self):
        return self.train(False)

    def n_parameters(self) -> int:
        return int(sum(p.data.size for p in self.parameters()))

    def __call__(self, x):
        return self.forward(x)


def he_uniform(rng, shape, fan_in):
    bound = math.sqrt(6.0 / fan_in)
    return rng.uniform(-bound, bound, size=shape)


class Conv2d(Module):
    def __init__(self, rng, c_in, c_out, kernel, groups=1, bias=False, padding="same"):
        super().__init__()
        kh, kw = kernel
        fan_in = (c_in // groups) * kh * kw
        self.weight = self.add_param("weight", he_uniform(rng, (c_out, c_in // groups, kh, kw), fan_in))
        self.bias = self.add_param("bias", np.zeros(c_out)) if bias else None
        self.groups, self.padding = groups, padding

    def forward(self, x):
        return ad.conv2d(x, self.weight, self.bias, self.padding, self.groups)


class BatchNorm2d(Module):
    def __init__(self, channels, momentum=0.1, eps=1e-5):
        super().__init__()
        self.gamma = self.add_param("gamma", np.ones(channels))
        self.beta = self.add_param("beta", np.zeros(channels))
        self._buffers["running_mean"] = np.zeros(channels)
        self._buffers["running_var"] = np.ones(channels)
        self.momentum, self.eps = momentum, eps

    def forward(self, x):
        return ad.batchnorm2d(x, self.gamma, self.beta, self._buffers["running_mean"],
                              self._buffers["running_var"], self.training, self.momentum, self.eps)


class Dense(Module):
    def __init__(self, rng, n_in, n_out):
        super().__init__()
        self.weight = self.add_param("weight", he_uniform(rng, (n_in, n_out), n_in))
        self.bias = self.add_param("bias", np.zeros(n_out))

    def forward(self, x):
        return ad.dense(x, self.weight, self.bias)


class LSTM(Module):
    """Single LSTM layer unrolled over a list of ``[batch, features]`` steps."""

    def __init__(self, rng, n_in, hidden):
        super().__init__()
        bound = 1.0 / math.sqrt(hidden)
        self.hidden = hidden
        self.w_ih = self.add_param("w_ih", rng.uniform(-bound, bound, (n_in, 4 * hidden)))
        self.w_hh = self.add_param("w_hh", rng.uniform(-bound, bound, (hidden, 4 * hidden)))
        b = rng.uniform(-bound, bound, 4 * hidden)
        b[hidden:2 * hidden] = 1.0  # forget gate
        self.b = self.add_param("b", b)

    def forward(self, steps):
        batch = steps[0].shape[0]
        h = Tensor(np.zeros((batch, self.hidden)))
        c = Tensor(np.zeros((batch, self.hidden)))
        outs = []
        for x in steps:
            hc = ad.lstm_cell(x, h, c, self.w_ih, self.w_hh, self.b)
            h, c = hc[0], hc[1]
            outs.append(h)
        return outs


class ConvBNAct(Module):
    """Convolution, batch normalisation, ELU."""

    def __init__(self, rng, c_in, c_out, kernel, groups=1, padding="same"):
        super().__init__()
        self.conv = Conv2d(rng, c_in, c_out, kernel, groups=groups, padding=padding)
        self.bn = BatchNorm2d(c_out)

    def forward(self, x):
        return ad.elu(self.bn(self.conv(x)))
