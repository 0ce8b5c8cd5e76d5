"""Generator (wavelet U-net / deep convolutional framelet) and PatchGAN discriminator.

Generator, ``scales = S``, widths ``c_l = base_channels * 2**l``::

    encoder step l:  [conv3x3 -> bnorm -> lrelu] x 2  ->  wave_dec
                     ll goes down, (lh, hl, hh) skip to decoder step l
    bottom:          [conv3x3 -> bnorm -> lrelu] x 2  at width c_S
    decoder step l:  1x1 conv (c_{l+1} -> c_l) gives the low band, stacked with
                     the skipped (lh, hl, hh) -> wave_rec -> [conv3x3 -> bnorm -> lrelu] x 2
    head:            conv3x3 -> 1 channel

Discriminator: three conv4x4/stride-2 layers (bnorm from the second on) with
LReLU(0.2), then a 1x1 conv to a raw score map ``s``. The discriminator value
is ``D = 1 - exp(s)`` so that ``log(1 - D) = s`` exactly.
"""
from dataclasses import asdict, dataclass

import numpy as np

from . import tensor as T
from .tensor import Tensor
from .wavelet import wave_dec, wave_rec

INIT_STD = 0.01


@dataclass(frozen=True)
class GeneratorConfig:
    scales: int = 2
    base_channels: int = 16
    lrelu_slope: float = 0.2
    in_channels: int = 1

    def __post_init__(self):
        if self.scales < 0 or self.base_channels < 1:
            raise ValueError("scales must be >= 0 and base_channels >= 1")

    def widths(self):
        return [self.base_channels * 2 ** l for l in range(self.scales + 1)]

    def check_input(self, h, w):
        m = 2 ** self.scales
        if h % m or w % m:
            raise ValueError(f"generator with {self.scales} scales needs extents divisible by {m}, got {h}x{w}")


@dataclass(frozen=True)
class DiscriminatorConfig:
    channels: tuple = (16, 32, 64)
    lrelu_slope: float = 0.2
    in_channels: int = 1
    padding: int = 1

    def __post_init__(self):
        object.__setattr__(self, "channels", tuple(int(c) for c in self.channels))
        if len(self.channels) != 3:
            raise ValueError("the discriminator has exactly three strided conv layers")

    def score_extent(self, n):
        for _ in range(3):
            n = (n + 2 * self.padding - 4) // 2 + 1
        return n


class Module:
    """Named parameters, non-trainable buffers and a train/eval flag."""

    def __init__(self):
        self._params = {}
        self._buffers = {}
        self.training = True

    def _param(self, name, value):
        t = Tensor(value, requires_grad=True, name=name)
        self._params[name] = t
        return t

    def parameters(self):
        return dict(self._params)

    def buffers(self):
        return dict(self._buffers)

    def train(self):
        self.training = True
        return self

    def eval(self):
        self.training = False
        return self

    def zero_grad(self):
        for p in self._params.values():
            p.zero_grad()

    def state_dict(self):
        out = {k: p.data.copy() for k, p in self._params.items()}
        out.update({k: b.copy() for k, b in self._buffers.items()})
        return out

    def load_state_dict(self, state):
        expected = set(self._params) | set(self._buffers)
        if set(state) != expected:
            missing = sorted(expected - set(state))
            extra = sorted(set(state) - expected)
            raise ValueError(f"state mismatch: missing {missing[:5]}, unexpected {extra[:5]}")
        for k, v in state.items():
            target = self._params[k].data if k in self._params else self._buffers[k]
            if target.shape != np.shape(v):
                raise ValueError(f"{k}: shape {np.shape(v)} does not match {target.shape}")
            target[...] = v

    # layer helpers ---------------------------------------------------------
    def _add_conv(self, name, cin, cout, k, rng):
        self._param(f"{name}.w", rng.normal(0.0, INIT_STD, size=(cout, cin, k, k)))
        self._param(f"{name}.b", np.zeros(cout))

    def _add_bn(self, name, c):
        self._param(f"{name}.gamma", np.ones(c))
        self._param(f"{name}.beta", np.zeros(c))
        self._buffers[f"{name}.running_mean"] = np.zeros(c)
        self._buffers[f"{name}.running_var"] = np.ones(c)

    def _conv(self, name, x, stride=1, padding=0):
        return T.conv2d(x, self._params[f"{name}.w"], self._params[f"{name}.b"], stride, padding)

    def _bn(self, name, x):
        p, b = self._params, self._buffers
        return T.batch_norm2d(
            x, p[f"{name}.gamma"], p[f"{name}.beta"],
            b[f"{name}.running_mean"], b[f"{name}.running_var"], training=self.training,
        )


class Generator(Module):
    def __init__(self, cfg, init_seed=0):
        super().__init__()
        self.cfg = cfg
        rng = np.random.default_rng(init_seed)
        c = cfg.widths()
        cin = cfg.in_channels
        for l in range(cfg.scales):
            self._add_block(f"enc{l}", cin, c[l], rng)
            cin = c[l]
        self._add_block("bottom", cin, c[cfg.scales], rng)
        for l in reversed(range(cfg.scales)):
            self._add_conv(f"dec{l}.low", c[l + 1], c[l], 1, rng)
            self._add_block(f"dec{l}", c[l], c[l], rng)
        self._add_conv("head", c[0], cfg.in_channels, 3, rng)

    def _add_block(self, name, cin, cout, rng):
        self._add_conv(f"{name}.conv0", cin, cout, 3, rng)
        self._add_bn(f"{name}.bn0", cout)
        self._add_conv(f"{name}.conv1", cout, cout, 3, rng)
        self._add_bn(f"{name}.bn1", cout)

    def _block(self, name, x):
        slope = self.cfg.lrelu_slope
        for i in range(2):
            x = T.leaky_relu(self._bn(f"{name}.bn{i}", self._conv(f"{name}.conv{i}", x, padding=1)), slope)
        return x

    def __call__(self, x):
        if not isinstance(x, Tensor):
            x = Tensor(x)
        self.cfg.check_input(*x.shape[2:])
        skips = []
        h = x
        for l in range(self.cfg.scales):
            bands = wave_dec(self._block(f"enc{l}", h))
            skips.append(bands[1:])
            h = bands.ll
        h = self._block("bottom", h)
        for l in reversed(range(self.cfg.scales)):
            low = self._conv(f"dec{l}.low", h)
            h = self._block(f"dec{l}", wave_rec(low, *skips[l]))
        return self._conv("head", h, padding=1)


class Discriminator(Module):
    def __init__(self, cfg, init_seed=0):
        super().__init__()
        self.cfg = cfg
        rng = np.random.default_rng(init_seed)
        cin = cfg.in_channels
        for i, cout in enumerate(cfg.channels):
            self._add_conv(f"conv{i}", cin, cout, 4, rng)
            if i > 0:
                self._add_bn(f"bn{i}", cout)
            cin = cout
        self._add_conv("score", cin, 1, 1, rng)

    def __call__(self, x):
        """Raw score map ``s`` of shape (N, 1, h', w')."""
        if not isinstance(x, Tensor):
            x = Tensor(x)
        if min(x.shape[2:]) < 8 or self.cfg.score_extent(min(x.shape[2:])) < 1:
            raise ValueError(f"discriminator input {x.shape[2:]} too small for three stride-2 layers")
        h = x
        for i in range(3):
            h = self._conv(f"conv{i}", h, stride=2, padding=self.cfg.padding)
            if i > 0:
                h = self._bn(f"bn{i}", h)
            h = T.leaky_relu(h, self.cfg.lrelu_slope)
        return self._conv("score", h)


def build_generator(cfg=None, init_seed=0):
    return Generator(cfg or GeneratorConfig(), init_seed)


def build_discriminator(cfg=None, init_seed=0):
    return Discriminator(cfg or DiscriminatorConfig(), init_seed)


def discriminator_value(s):
    """Map raw scores to ``D = 1 - exp(s)``; always below 1, with ``log(1 - D) = s``."""
    if isinstance(s, Tensor):
        return 1.0 - T.exp(s)
    return 1.0 - np.exp(s)


def config_dict(cfg):
    d = asdict(cfg)
    return {k: list(v) if isinstance(v, tuple) else v for k, v in d.items()}
