"""Real and complex spectral masks, ideal-mask oracles and the residual source."""
from __future__ import annotations

import numpy as np

from .errors import ParameterError
from .stft import Spectrogram, Waveform

EPS = 1e-8


def _check_shapes(a: np.ndarray, b: np.ndarray):
    if a.shape != b.shape:
        raise ParameterError(f"shape mismatch: {a.shape} vs {b.shape}")


def _bins(x) -> np.ndarray:
    return x.bins if isinstance(x, Spectrogram) else np.asarray(x)


def real_mask_from_output(o: np.ndarray) -> np.ndarray:
    """Logistic sigmoid of the raw network output, strictly inside (0, 1)."""
    o = np.asarray(o, dtype=np.float64)
    out = np.empty_like(o)
    pos = o >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-o[pos]))
    e = np.exp(o[~pos])
    out[~pos] = e / (1.0 + e)
    # 1/(1+exp(-o)) rounds to exactly 1.0 for o > ~37
    return np.clip(out, np.finfo(np.float64).tiny, np.nextafter(1.0, 0.0))


def complex_mask_from_output(o: np.ndarray) -> np.ndarray:
    """Bound the modulus with tanh and keep the phase of ``o``.

    Outputs with modulus below ``EPS`` map to a zero mask.
    """
    o = np.asarray(o, dtype=np.complex128)
    r = np.abs(o)
    out = np.zeros_like(o)
    ok = r >= EPS
    # tanh rounds to 1.0 beyond |o| ~ 19; keep the modulus strictly below 1
    out[ok] = np.minimum(np.tanh(r[ok]), 1.0 - 1e-15) * (o[ok] / r[ok])
    return out


def apply_real_mask(mask: np.ndarray, mixture: Spectrogram) -> Spectrogram:
    mask = np.asarray(mask, dtype=np.float64)
    _check_shapes(mask, mixture.bins)
    # mask * |X| * exp(i angle X) == mask * X; the product form keeps the phase bit-exact
    return Spectrogram(mask * mixture.bins, mixture.params)


def apply_complex_mask_polar(mask: np.ndarray, mixture: Spectrogram) -> Spectrogram:
    """Magnitude scaling plus phase rotation, written out in polar form."""
    mask = np.asarray(mask, dtype=np.complex128)
    _check_shapes(mask, mixture.bins)
    mag = np.abs(mask) * np.abs(mixture.bins)
    return Spectrogram(mag * np.exp(1j * (np.angle(mask) + np.angle(mixture.bins))), mixture.params)


def apply_complex_mask(mask: np.ndarray, mixture: Spectrogram) -> Spectrogram:
    mask = np.asarray(mask, dtype=np.complex128)
    _check_shapes(mask, mixture.bins)
    return Spectrogram(mask * mixture.bins, mixture.params)


def ideal_real_mask(source: Spectrogram, mixture: Spectrogram) -> np.ndarray:
    y, x = _bins(source), _bins(mixture)
    _check_shapes(y, x)
    return np.minimum(np.abs(y) / np.maximum(np.abs(x), EPS), 1.0)


def ideal_complex_mask(source: Spectrogram, mixture: Spectrogram, clip: float | None = None) -> np.ndarray:
    """Elementwise ratio source / mixture, zero where the mixture is below ``EPS``.

    With ``clip`` set, entries whose modulus exceeds it are shrunk onto the
    circle of radius ``clip`` with their phase unchanged.
    """
    y, x = _bins(source), _bins(mixture)
    _check_shapes(y, x)
    if clip is not None and clip <= 0:
        raise ParameterError(f"clip must be positive, got {clip}")
    mask = np.zeros(x.shape, dtype=np.complex128)
    ok = np.abs(x) >= EPS
    mask[ok] = y[ok] / x[ok]
    if clip is not None:
        r = np.abs(mask)
        big = r > clip
        mask[big] *= clip / r[big]
    return mask


def residual_other(mixture: Waveform, estimates: list[Waveform]) -> Waveform:
    out = mixture.samples.copy()
    for est in estimates:
        if len(est) != len(mixture):
            raise ParameterError(f"length mismatch: {len(est)} vs {len(mixture)}")
        if est.sample_rate != mixture.sample_rate:
            raise ParameterError(
                f"sample rate mismatch: {est.sample_rate} vs {mixture.sample_rate}"
            )
        out -= est.samples
    return Waveform(out, mixture.sample_rate)
