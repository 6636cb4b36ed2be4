"""Configurable U-Net over (batch, channels, frames, bins) tensors."""
from __future__ import annotations

from dataclasses import asdict, dataclass, field

import numpy as np

from ..errors import ParameterError
from . import functional as F
from .tensor import Tensor, parameter


@dataclass
class UNetConfig:
    depth: int = 6
    channels: list[int] = field(default_factory=lambda: [16, 32, 64, 128, 256, 512])
    kernel: tuple[int, int] = (5, 5)
    stride: tuple[int, int] = (2, 2)
    leaky_slope: float = 0.2
    dropout_rate: float = 0.5
    dropout_decoder_layers: int = 5
    in_channels: int = 1
    out_channels: int = 1
    seed: int = 0
    bn_momentum: float = 0.1
    bn_eps: float = 1e-5
    dtype: str = "float32"

    def __post_init__(self):
        self.channels = [int(c) for c in self.channels]
        self.kernel = tuple(int(k) for k in self.kernel)
        self.stride = tuple(int(s) for s in self.stride)
        if self.depth < 1:
            raise ParameterError(f"depth must be >= 1, got {self.depth}")
        if len(self.channels) != self.depth:
            raise ParameterError(
                f"need one channel width per layer: depth {self.depth}, channels {self.channels}"
            )
        if self.in_channels not in (1, 2) or self.out_channels != self.in_channels:
            raise ParameterError("in_channels must be 1 or 2 and out_channels must match")
        if self.stride[0] != self.stride[1]:
            raise ParameterError("only square strides are supported")
        if not 0 <= self.dropout_rate < 1:
            raise ParameterError(f"dropout_rate must be in [0, 1), got {self.dropout_rate}")
        if self.dtype not in ("float32", "float64"):
            raise ParameterError(f"dtype must be float32 or float64, got {self.dtype}")

    @property
    def dropout_layers(self) -> int:
        return max(0, min(self.dropout_decoder_layers, self.depth - 1))

    @property
    def multiple(self) -> int:
        """Spatial dims of the input must be divisible by this."""
        return self.stride[0] ** self.depth

    def decoder_channels(self) -> list[tuple[int, int]]:
        """(in, out) channels of every decoder layer, outermost last."""
        d, ch = self.depth, self.channels
        out = []
        for j in range(1, d + 1):
            cin = ch[d - 1] if j == 1 else 2 * ch[d - j]
            cout = self.out_channels if j == d else ch[d - j - 1]
            out.append((cin, cout))
        return out

    def to_dict(self) -> dict:
        return asdict(self)


def parameter_count(config: UNetConfig) -> int:
    """Trainable scalars (weights, biases, batch-norm affine) of the network."""
    kh, kw = config.kernel
    total = 0
    cin = config.in_channels
    for k, cout in enumerate(config.channels):
        total += cin * cout * kh * kw + cout + (2 * cout if k > 0 else 0)
        cin = cout
    for j, (cin, cout) in enumerate(config.decoder_channels(), start=1):
        total += cin * cout * kh * kw + cout + (2 * cout if j < config.depth else 0)
    return total


class UNet:
    """Encoder/decoder with channel-concatenation skips.

    Parameters live in ``self.params`` keyed by dotted names; batch-norm
    running statistics live in ``self.bn``.  The output is the raw (linear)
    last-layer response; mask nonlinearities are applied by the caller.
    """

    def __init__(self, config: UNetConfig):
        self.config = config
        self.dtype = np.dtype(config.dtype)
        self.params: dict[str, Tensor] = {}
        self.bn: dict[str, F.BatchNormState] = {}
        self.rng = np.random.default_rng(config.seed)
        self._dropout_rng = np.random.default_rng([config.seed, 1])
        kh, kw = config.kernel
        cin = config.in_channels
        for k, cout in enumerate(config.channels, start=1):
            std = np.sqrt(2.0 / (cin * kh * kw))
            self._add(f"enc{k}.weight", self.rng.normal(0.0, std, (cout, cin, kh, kw)))
            self._add(f"enc{k}.bias", np.zeros(cout))
            if k > 1:
                self._add_bn(f"enc{k}.bn", cout)
            cin = cout
        s = config.stride[0]
        for j, (cin, cout) in enumerate(config.decoder_channels(), start=1):
            std = np.sqrt(2.0 * s * s / (cin * kh * kw))
            self._add(f"dec{j}.weight", self.rng.normal(0.0, std, (cin, cout, kh, kw)))
            self._add(f"dec{j}.bias", np.zeros(cout))
            if j < config.depth:
                self._add_bn(f"dec{j}.bn", cout)

    def _add(self, name: str, value: np.ndarray):
        self.params[name] = parameter(np.asarray(value, dtype=self.dtype), name=name)

    def _add_bn(self, name: str, channels: int):
        self._add(f"{name}.gamma", np.ones(channels))
        self._add(f"{name}.beta", np.zeros(channels))
        self.bn[name] = F.BatchNormState(channels, self.config.bn_momentum, self.config.bn_eps, self.dtype)

    def num_parameters(self) -> int:
        return sum(p.data.size for p in self.params.values())

    def reseed_dropout(self, seed):
        self._dropout_rng = np.random.default_rng(seed)

    def zero_grad(self):
        for p in self.params.values():
            p.grad = None

    def _bn(self, name: str, x: Tensor, training: bool) -> Tensor:
        return F.batch_norm(x, self.params[f"{name}.gamma"], self.params[f"{name}.beta"],
                            self.bn[name], training)

    def __call__(self, x, mode: str = "eval") -> Tensor:
        return self.forward(x, mode)

    def forward(self, x, mode: str = "eval") -> Tensor:
        if mode not in ("train", "eval"):
            raise ParameterError(f"mode must be 'train' or 'eval', got {mode!r}")
        cfg = self.config
        training = mode == "train"
        x = x if isinstance(x, Tensor) else Tensor(np.asarray(x, dtype=self.dtype))
        if x.ndim != 4 or x.shape[1] != cfg.in_channels:
            raise ParameterError(
                f"expected input (batch, {cfg.in_channels}, frames, bins), got {x.shape}"
            )
        m = cfg.multiple
        if x.shape[2] % m or x.shape[3] % m:
            raise ParameterError(
                f"spatial dims {x.shape[2:]} must be divisible by {m}; pad the input first"
            )
        s = cfg.stride[0]
        p = self.params
        skips = []
        h = x
        for k in range(1, cfg.depth + 1):
            h = F.conv2d(h, p[f"enc{k}.weight"], p[f"enc{k}.bias"], stride=s)
            if k > 1:
                h = self._bn(f"enc{k}.bn", h, training)
            h = F.leaky_relu(h, cfg.leaky_slope)
            skips.append(h)
        for j in range(1, cfg.depth + 1):
            if j > 1:
                h = F.concat([h, skips[cfg.depth - j]], axis=1)
            h = F.conv_transpose2d(h, p[f"dec{j}.weight"], p[f"dec{j}.bias"], stride=s)
            if j < cfg.depth:
                h = self._bn(f"dec{j}.bn", h, training)
                if j <= cfg.dropout_layers:
                    h = F.dropout(h, cfg.dropout_rate, self._dropout_rng, training)
                h = F.relu(h)
        return h

    def state_tensors(self) -> dict[str, np.ndarray]:
        """All persistent arrays: parameters plus batch-norm running stats."""
        out = {name: t.data for name, t in self.params.items()}
        for name, st in self.bn.items():
            out[f"{name}.running_mean"] = st.running_mean
            out[f"{name}.running_var"] = st.running_var
        return out

    def load_state_tensors(self, tensors: dict[str, np.ndarray]):
        expected = self.state_tensors()
        missing = set(expected) - set(tensors)
        extra = set(tensors) - set(expected)
        if missing or extra:
            raise ParameterError(f"tensor names differ: missing {sorted(missing)}, unexpected {sorted(extra)}")
        for name, arr in tensors.items():
            if arr.shape != expected[name].shape:
                raise ParameterError(f"shape mismatch for {name}: {arr.shape} vs {expected[name].shape}")
        for name, t in self.params.items():
            t.data = np.asarray(tensors[name], dtype=self.dtype).copy()
        for name, st in self.bn.items():
            st.running_mean = np.asarray(tensors[f"{name}.running_mean"], dtype=self.dtype).copy()
            st.running_var = np.asarray(tensors[f"{name}.running_var"], dtype=self.dtype).copy()


def unet_forward(config: UNetConfig, input, mode: str = "eval", model: UNet | None = None) -> Tensor:
    return (model or UNet(config)).forward(input, mode)
