"""Training objectives with analytic gradients.

Gradients with respect to complex spectrogram bins use the real-pair
convention ``dL/dRe + 1j * dL/dIm``.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ParameterError
from .stft import Spectrogram, Waveform, istft_adjoint

TRAIN_EPS = 1e-8


@dataclass
class LossValue:
    value: float
    gradient: np.ndarray | None = None
    components: dict[str, float] = field(default_factory=dict)

    def __float__(self):
        return float(self.value)


def _as_bins(x) -> np.ndarray:
    return x.bins if isinstance(x, Spectrogram) else np.asarray(x, dtype=np.complex128)


def _as_samples(x) -> np.ndarray:
    return x.samples if isinstance(x, Waveform) else np.asarray(x, dtype=np.float64)


def magnitude_loss(target, estimate, weights: np.ndarray | None = None) -> LossValue:
    """Mean absolute difference of spectrogram magnitudes.

    ``weights`` (0/1 validity mask) restricts the mean to the flagged bins.
    At ties and at zero-magnitude estimates the subgradient 0 is used.
    """
    y, yh = _as_bins(target), _as_bins(estimate)
    if y.shape != yh.shape:
        raise ParameterError(f"shape mismatch: {y.shape} vs {yh.shape}")
    w = np.ones(y.shape) if weights is None else np.broadcast_to(weights, y.shape)
    count = w.sum()
    if count == 0:
        return LossValue(0.0, np.zeros_like(yh))
    mag_y, mag_yh = np.abs(y), np.abs(yh)
    diff = mag_yh - mag_y
    value = float(np.sum(w * np.abs(diff)) / count)
    unit = np.zeros_like(yh)
    nz = mag_yh > 0
    unit[nz] = yh[nz] / mag_yh[nz]
    grad = w * np.sign(diff) * unit / count
    return LossValue(value, grad)


def sdr_loss(target, estimate, eps: float = 0.0) -> LossValue:
    """Negative cosine similarity between time-domain target and estimate.

    ``eps`` is added to both norms; training uses ``TRAIN_EPS``.  A silent
    estimate with ``eps == 0`` falls back to ``TRAIN_EPS`` so the value (0)
    and gradient stay finite.
    """
    y, yh = _as_samples(target), _as_samples(estimate)
    if y.shape != yh.shape:
        raise ParameterError(f"length mismatch: {y.shape} vs {yh.shape}")
    ny = float(np.linalg.norm(y))
    if ny == 0:
        raise ParameterError("target has zero norm")
    nyh = float(np.linalg.norm(yh))
    if nyh == 0 and eps == 0:
        eps = TRAIN_EPS
    dot = float(np.dot(y, yh))
    a, b = ny + eps, nyh + eps
    value = -dot / (a * b)
    grad = -y / (a * b)
    if nyh > 0:
        grad = grad + dot / (a * b * b) * yh / nyh
    return LossValue(value, grad)


def sdr_plus_mag_loss(target_wave, estimate_wave, target_spec, estimate_spec: Spectrogram,
                      eps: float = 0.0, weights: np.ndarray | None = None) -> LossValue:
    """Unweighted sum of the SDR and magnitude losses.

    ``estimate_wave`` is taken to be ``istft(estimate_spec, len(estimate_wave))``,
    so the SDR gradient is pulled back through the inverse STFT and the
    returned gradient is with respect to the estimate bins.  The component
    values are kept in ``components``.
    """
    sdr = sdr_loss(target_wave, estimate_wave, eps=eps)
    mag = magnitude_loss(target_spec, estimate_spec, weights=weights)
    pulled = istft_adjoint(sdr.gradient, estimate_spec.num_frames, estimate_spec.params)
    return LossValue(sdr.value + mag.value, pulled + mag.gradient,
                     components={"sdr": sdr.value, "mag": mag.value})
