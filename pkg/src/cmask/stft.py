"""Short-time Fourier transform with centered Hann framing.

Frames are taken from the input zero-padded by half a window on each side,
so frame ``t`` is centered on sample ``t * hop``.  The forward transform is
unnormalized; the inverse divides the overlap-added frames by the summed
squared window, which makes ``istft(stft(y))`` exact wherever that sum is
nonzero (everywhere inside the signal for hop <= window / 2).
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ParameterError

_WINDOWS = ("hann",)


@dataclass(frozen=True)
class StftParams:
    window_size: int = 1024
    hop_size: int = 256
    sample_rate: int = 22050
    window: str = "hann"

    def __post_init__(self):
        if self.window_size <= 0:
            raise ParameterError(f"window_size must be positive, got {self.window_size}")
        if not 0 < self.hop_size <= self.window_size:
            raise ParameterError(
                f"hop_size must be in (0, window_size], got {self.hop_size}"
            )
        if self.window_size % self.hop_size:
            raise ParameterError(
                f"window_size ({self.window_size}) must be a multiple of hop_size ({self.hop_size})"
            )
        if self.window_size % 2:
            raise ParameterError("window_size must be even")
        if self.sample_rate <= 0:
            raise ParameterError(f"sample_rate must be positive, got {self.sample_rate}")
        if self.window not in _WINDOWS:
            raise ParameterError(f"unknown window {self.window!r}")

    @property
    def num_bins(self) -> int:
        return self.window_size // 2 + 1

    def num_frames(self, length: int) -> int:
        return math.ceil((length + self.window_size) / self.hop_size)


def hann_window(size: int) -> np.ndarray:
    """Periodic Hann window of ``size`` samples."""
    n = np.arange(size)
    return 0.5 - 0.5 * np.cos(2.0 * np.pi * n / size)


def analysis_window(params: StftParams) -> np.ndarray:
    return hann_window(params.window_size)


@dataclass
class Waveform:
    samples: np.ndarray
    sample_rate: int = 22050

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=np.float64)
        if self.samples.ndim != 1:
            raise ParameterError(f"waveform must be 1-D, got shape {self.samples.shape}")
        if not np.all(np.isfinite(self.samples)):
            raise ParameterError("waveform contains non-finite samples")

    def __len__(self) -> int:
        return self.samples.shape[0]


@dataclass
class Spectrogram:
    bins: np.ndarray
    params: StftParams = field(default_factory=StftParams)

    def __post_init__(self):
        self.bins = np.asarray(self.bins, dtype=np.complex128)
        if self.bins.ndim != 2 or self.bins.shape[1] != self.params.num_bins:
            raise ParameterError(
                f"spectrogram must have shape (frames, {self.params.num_bins}), got {self.bins.shape}"
            )
        if not np.all(np.isfinite(self.bins)):
            raise ParameterError("spectrogram contains non-finite bins")

    @property
    def shape(self) -> tuple[int, int]:
        return self.bins.shape

    @property
    def num_frames(self) -> int:
        return self.bins.shape[0]


def frame_signal(x: np.ndarray, params: StftParams) -> np.ndarray:
    """Centered frames of ``x`` as a (frames, window_size) view-backed copy."""
    n = params.window_size
    half = n // 2
    frames = params.num_frames(len(x))
    padded = np.zeros((frames - 1) * params.hop_size + n)
    padded[half:half + len(x)] = x
    view = np.lib.stride_tricks.sliding_window_view(padded, n)[:: params.hop_size]
    return view[:frames]


def stft(wave: Waveform, params: StftParams | None = None) -> Spectrogram:
    params = params or StftParams(sample_rate=wave.sample_rate)
    if wave.sample_rate != params.sample_rate:
        raise ParameterError(
            f"sample rate mismatch: waveform {wave.sample_rate} Hz, params {params.sample_rate} Hz"
        )
    if len(wave) == 0:
        raise ParameterError("cannot transform an empty waveform")
    frames = frame_signal(wave.samples, params) * analysis_window(params)
    return Spectrogram(np.fft.rfft(frames, axis=1), params)


def window_envelope(num_frames: int, params: StftParams) -> np.ndarray:
    """Overlap-added squared window over ``num_frames`` uncentered frames."""
    w2 = analysis_window(params) ** 2
    env = np.zeros((num_frames - 1) * params.hop_size + params.window_size)
    for t in range(num_frames):
        env[t * params.hop_size:t * params.hop_size + params.window_size] += w2
    return env


def _safe_envelope(env: np.ndarray) -> np.ndarray:
    out = env.copy()
    out[out < 1e-10] = 1.0
    return out


def overlap_add(bins: np.ndarray, params: StftParams) -> np.ndarray:
    """Inverse-transform every frame and overlap-add with window normalization.

    Returns the uncropped signal of length ``(frames - 1) * hop + window``;
    sample ``window // 2`` lines up with the center of frame 0.
    """
    n, hop = params.window_size, params.hop_size
    frames = np.fft.irfft(bins, n=n, axis=1) * analysis_window(params)
    out = np.zeros((bins.shape[0] - 1) * hop + n)
    for t in range(bins.shape[0]):
        out[t * hop:t * hop + n] += frames[t]
    return out / _safe_envelope(window_envelope(bins.shape[0], params))


def overlap_add_adjoint(grad: np.ndarray, params: StftParams) -> np.ndarray:
    """Adjoint of :func:`overlap_add` in the real-pair sense.

    Given dL/d(signal), returns the complex array ``dL/dRe + 1j * dL/dIm``
    with respect to the bins.
    """
    n, hop = params.window_size, params.hop_size
    num_frames = (len(grad) - n) // hop + 1
    g = grad / _safe_envelope(window_envelope(num_frames, params))
    frames = np.lib.stride_tricks.sliding_window_view(g, n)[::hop][:num_frames]
    frames = frames * analysis_window(params)
    # irfft weights interior bins twice and ignores the imaginary part of DC/Nyquist
    out = np.fft.rfft(frames, axis=1) * (2.0 / n)
    out[:, 0] = out[:, 0].real / 2.0
    out[:, -1] = out[:, -1].real / 2.0
    return out


def istft(spec: Spectrogram, out_length: int) -> Waveform:
    params = spec.params
    frames = spec.num_frames
    implied = (frames - 1) * params.hop_size
    if out_length <= 0 or abs(out_length - implied) > params.window_size:
        raise ParameterError(
            f"out_length {out_length} inconsistent with {frames} frames "
            f"(implied length about {implied})"
        )
    full = overlap_add(spec.bins, params)
    half = params.window_size // 2
    samples = full[half:half + out_length]
    if samples.shape[0] < out_length:
        samples = np.concatenate([samples, np.zeros(out_length - samples.shape[0])])
    return Waveform(samples, params.sample_rate)


def istft_adjoint(grad: np.ndarray, num_frames: int, params: StftParams) -> np.ndarray:
    """Gradient of a loss w.r.t. spectrogram bins given its gradient w.r.t. ``istft`` output."""
    full_len = (num_frames - 1) * params.hop_size + params.window_size
    half = params.window_size // 2
    full = np.zeros(full_len)
    m = min(len(grad), full_len - half)
    full[half:half + m] = grad[:m]
    return overlap_add_adjoint(full, params)


def magnitude(spec: Spectrogram | np.ndarray) -> np.ndarray:
    bins = spec.bins if isinstance(spec, Spectrogram) else np.asarray(spec)
    return np.abs(bins)


def phase(spec: Spectrogram | np.ndarray) -> np.ndarray:
    """Phase in (-pi, pi]; zero bins get phase 0."""
    bins = spec.bins if isinstance(spec, Spectrogram) else np.asarray(spec)
    ph = np.angle(bins)
    # atan2(-0.0, x<0) yields -pi; fold onto +pi to keep the half-open range
    ph[ph == -np.pi] = np.pi
    ph[bins == 0] = 0.0
    return ph
