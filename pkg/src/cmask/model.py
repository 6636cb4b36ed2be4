"""A U-Net bound to a mask type, a target source and STFT settings.

Also holds the autodiff versions of the mask nonlinearities and of mask
application, used when training.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, fields

import numpy as np

from . import masking
from .errors import FormatError, ParameterError
from .nn import functional as F
from .nn.checkpoint import Checkpoint
from .nn.tensor import Tensor, make
from .nn.unet import UNet, UNetConfig
from .stft import Spectrogram, StftParams, Waveform, istft, stft

MASK_TYPES = ("real", "complex")


def complex_mask_op(o: Tensor) -> Tensor:
    """Two-channel (re, im) version of :func:`masking.complex_mask_from_output`."""
    a = o.data.astype(np.float64)
    r = np.sqrt(a[:, 0] ** 2 + a[:, 1] ** 2)
    ok = r >= masking.EPS
    rs = np.where(ok, r, 1.0)
    scale = np.where(ok, np.tanh(rs) / rs, 0.0)
    # d(scale)/dr / r, with a series near 0 to avoid cancellation
    small = rs < 1e-2
    dscale = np.where(small, -2.0 / 3.0 + 8.0 * rs ** 2 / 15.0,
                      (rs / np.cosh(rs) ** 2 - np.tanh(rs)) / rs ** 3)
    dscale = np.where(ok, dscale, 0.0)
    out = (a * scale[:, None]).astype(o.dtype)

    def back(g):
        g = g.astype(np.float64)
        radial = (g * a).sum(axis=1, keepdims=True) * dscale[:, None]
        return ((g * scale[:, None] + radial * a).astype(o.dtype),)

    return make(out, (o,), back)


def mask_from_output(o: Tensor, mask_type: str) -> Tensor:
    if mask_type == "real":
        return F.sigmoid(o)
    if mask_type == "complex":
        return complex_mask_op(o)
    raise ParameterError(f"mask type must be one of {MASK_TYPES}, got {mask_type!r}")


def apply_mask_op(mask: Tensor, mixture: np.ndarray, mask_type: str) -> Tensor:
    """Masked estimate as (re, im) channels; ``mixture`` is (B, 2, F, K) re/im."""
    if mask_type == "real":
        return mask * mixture
    xr, xi = mixture[:, 0:1], mixture[:, 1:2]
    mr, mi = mask[:, 0:1], mask[:, 1:2]
    return F.concat([mr * xr - mi * xi, mr * xi + mi * xr], axis=1)


def network_input(bins: np.ndarray, mask_type: str) -> np.ndarray:
    """(frames, bins) complex -> (channels, frames, bins), peak-normalized."""
    scale = 1.0 / (np.max(np.abs(bins)) + 1e-8)
    if mask_type == "real":
        return (np.abs(bins) * scale)[None]
    return np.stack([bins.real, bins.imag]) * scale


def pad_to(x: np.ndarray, frames: int, nbins: int) -> np.ndarray:
    out = np.zeros(x.shape[:-2] + (frames, nbins), dtype=x.dtype)
    out[..., :x.shape[-2], :x.shape[-1]] = x
    return out


@dataclass
class SourceModel:
    net: UNet
    mask_type: str = "complex"
    source: str = "vocals"
    stft_params: StftParams = field(default_factory=StftParams)
    padded_bins: int = 1024

    def __post_init__(self):
        if self.mask_type not in MASK_TYPES:
            raise ParameterError(f"mask type must be one of {MASK_TYPES}, got {self.mask_type!r}")
        channels = 1 if self.mask_type == "real" else 2
        if self.net.config.in_channels != channels:
            raise ParameterError(f"{self.mask_type} masks need a {channels}-channel network")
        if self.padded_bins < self.stft_params.num_bins or self.padded_bins % self.net.config.multiple:
            raise ParameterError(
                f"padded_bins {self.padded_bins} must be >= {self.stft_params.num_bins} "
                f"and divisible by {self.net.config.multiple}"
            )

    @classmethod
    def create(cls, config: UNetConfig, mask_type: str, **kw) -> "SourceModel":
        return cls(UNet(config), mask_type, **kw)

    def raw_output(self, bins: np.ndarray, mode: str = "eval") -> Tensor:
        """Network output cropped back to (1, C, frames, bins)."""
        frames, nbins = bins.shape
        m = self.net.config.multiple
        padded_frames = max(m, math.ceil(frames / m) * m)
        x = pad_to(network_input(bins, self.mask_type), padded_frames, self.padded_bins)
        out = self.net.forward(x[None].astype(self.net.dtype), mode)
        return out[:, :, :frames, :nbins]

    def mask(self, spec: Spectrogram) -> np.ndarray:
        """Real (frames, bins) or complex (frames, bins) mask for ``spec``."""
        o = self.raw_output(spec.bins).data[0].astype(np.float64)
        if self.mask_type == "real":
            return masking.real_mask_from_output(o[0])
        return masking.complex_mask_from_output(o[0] + 1j * o[1])

    def estimate_spectrogram(self, spec: Spectrogram) -> Spectrogram:
        mask = self.mask(spec)
        if self.mask_type == "real":
            return masking.apply_real_mask(mask, spec)
        return masking.apply_complex_mask(mask, spec)

    def separate(self, wave: Waveform) -> Waveform:
        spec = stft(wave, self.stft_params)
        return istft(self.estimate_spectrogram(spec), len(wave))

    # checkpoint conversion -------------------------------------------------

    def config_dict(self) -> dict[str, str]:
        cfg = {"source": self.source, "mask": self.mask_type, "padded_bins": str(self.padded_bins)}
        for f in fields(StftParams):
            cfg[f"stft.{f.name}"] = str(getattr(self.stft_params, f.name))
        for key, value in self.net.config.to_dict().items():
            if isinstance(value, (list, tuple)):
                value = ",".join(str(v) for v in value)
            cfg[f"unet.{key}"] = str(value)
        return cfg

    def to_checkpoint(self, step: int = 0, extra: dict[str, str] | None = None) -> Checkpoint:
        cfg = self.config_dict()
        cfg.update(extra or {})
        return Checkpoint(dict(self.net.state_tensors()), cfg, step)

    @classmethod
    def from_checkpoint(cls, ckpt: Checkpoint) -> "SourceModel":
        cfg = ckpt.config
        try:
            unet_kw = {}
            for f in fields(UNetConfig):
                raw = cfg[f"unet.{f.name}"]
                if f.name in ("channels", "kernel", "stride"):
                    unet_kw[f.name] = [int(v) for v in raw.split(",") if v]
                elif f.name == "dtype":
                    unet_kw[f.name] = raw
                elif f.name in ("leaky_slope", "dropout_rate", "bn_momentum", "bn_eps"):
                    unet_kw[f.name] = float(raw)
                else:
                    unet_kw[f.name] = int(raw)
            params = StftParams(int(cfg["stft.window_size"]), int(cfg["stft.hop_size"]),
                                int(cfg["stft.sample_rate"]), cfg["stft.window"])
            model = cls(UNet(UNetConfig(**unet_kw)), cfg["mask"], cfg["source"], params,
                        int(cfg["padded_bins"]))
            model.net.load_state_tensors(ckpt.tensors)
        except KeyError as exc:
            raise FormatError(f"checkpoint config is missing key {exc.args[0]!r}") from exc
        except (ValueError, ParameterError) as exc:
            raise FormatError(f"checkpoint does not match its config: {exc}") from exc
        return model
