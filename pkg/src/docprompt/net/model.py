"""U-shaped convolutional restoration network.

For widths ``[w0, ..., wL]`` the encoder runs ``L`` levels of two 3x3
conv + leaky-ReLU pairs followed by 2x average pooling, a bottleneck at
``wL``, and a mirrored decoder that upsamples, concatenates the skip and
applies two more conv pairs. A stem maps the 6-channel prompt+image input to
``w0`` and a linear 3x3 head maps ``w0`` to 3 output channels.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import InvalidParam, ShapeMismatch
from ..rng import Rng
from . import autograd as ag

IN_CHANNELS = 6
OUT_CHANNELS = 3


@dataclass
class Param:
    name: str
    tensor: ag.Tensor

    @property
    def value(self) -> np.ndarray:
        return self.tensor.value

    @property
    def grad(self):
        return self.tensor.grad


def _conv_specs(widths):
    """Ordered ``(name, cin, cout)`` for every conv layer."""
    specs = [("stem", IN_CHANNELS, widths[0])]
    cin = widths[0]
    for i, w in enumerate(widths[:-1]):
        specs += [(f"enc{i}.conv0", cin, w), (f"enc{i}.conv1", w, w)]
        cin = w
    specs += [("mid.conv0", cin, widths[-1]), ("mid.conv1", widths[-1], widths[-1])]
    for i in reversed(range(len(widths) - 1)):
        specs += [(f"dec{i}.conv0", widths[i + 1] + widths[i], widths[i]),
                  (f"dec{i}.conv1", widths[i], widths[i])]
    specs.append(("head", widths[0], OUT_CHANNELS))
    return specs


class Model:
    def __init__(self, widths, seed: int = 0, dtype=np.float32):
        widths = [int(w) for w in widths]
        if not widths:
            raise InvalidParam("build_model: widths must not be empty")
        if not 2 <= len(widths) <= 4:
            raise InvalidParam(f"build_model: expected 2-4 width levels, got {len(widths)}")
        if min(widths) < 1:
            raise InvalidParam("build_model: widths must be positive")
        self.widths = widths
        self.train_patch = 64
        self.params: list[Param] = []
        rng = Rng(seed)
        for name, cin, cout in _conv_specs(widths):
            fan_in = cin * 9
            gain = 1.0 if name == "head" else 2.0
            w = rng.normal_array((3, 3, cin, cout)) * np.sqrt(gain / fan_in)
            self.params.append(Param(f"{name}.weight", ag.parameter(w.astype(dtype))))
            self.params.append(Param(f"{name}.bias", ag.parameter(np.zeros(cout, dtype=dtype))))
        self._by_name = {p.name: p for p in self.params}

    @property
    def multiple(self) -> int:
        """Spatial extents must be divisible by this."""
        return 2 ** (len(self.widths) - 1)

    def num_params(self) -> int:
        return sum(p.value.size for p in self.params)

    def named_parameters(self):
        return [(p.name, p.tensor) for p in self.params]

    def zero_grad(self):
        for p in self.params:
            p.tensor.grad = None

    def astype(self, dtype) -> "Model":
        """Copy with parameters cast to ``dtype`` (used by gradient checks)."""
        m = Model.__new__(Model)
        m.widths = list(self.widths)
        m.train_patch = self.train_patch
        m.params = [Param(p.name, ag.parameter(p.value.astype(dtype))) for p in self.params]
        m._by_name = {p.name: p for p in m.params}
        return m

    def _conv(self, name, x):
        p = self._by_name
        return ag.leaky_relu(ag.conv2d(x, p[name + ".weight"].tensor, p[name + ".bias"].tensor))

    def forward(self, x) -> ag.Tensor:
        if not isinstance(x, ag.Tensor):
            x = ag.constant(np.asarray(x, dtype=self.params[0].value.dtype))
        if x.value.ndim != 4 or x.shape[1] != IN_CHANNELS:
            raise ShapeMismatch(f"model input must be (B,{IN_CHANNELS},h,w), got {x.shape}")
        if x.shape[2] % self.multiple or x.shape[3] % self.multiple:
            raise ShapeMismatch(f"spatial extents {x.shape[2:]} not divisible by {self.multiple}")
        h = self._conv("stem", ag.to_channels_last(x))
        skips = []
        for i in range(len(self.widths) - 1):
            h = self._conv(f"enc{i}.conv1", self._conv(f"enc{i}.conv0", h))
            skips.append(h)
            h = ag.avgpool2(h)
        h = self._conv("mid.conv1", self._conv("mid.conv0", h))
        for i in reversed(range(len(self.widths) - 1)):
            h = ag.concat_channels(ag.upsample_nearest2(h), skips[i])
            h = self._conv(f"dec{i}.conv1", self._conv(f"dec{i}.conv0", h))
        p = self._by_name
        return ag.to_channels_first(ag.conv2d(h, p["head.weight"].tensor, p["head.bias"].tensor))

    __call__ = forward


def build_model(widths, seed: int = 0) -> Model:
    return Model(widths, seed)
