"""Energy-ratio SDR and scale-invariant SDR in decibels."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ParameterError
from .stft import Waveform

DB_CAP = 300.0
SI_SDR_FLOOR = -100.0


def _pair(reference, estimate) -> tuple[np.ndarray, np.ndarray]:
    y = reference.samples if isinstance(reference, Waveform) else np.asarray(reference, dtype=np.float64)
    yh = estimate.samples if isinstance(estimate, Waveform) else np.asarray(estimate, dtype=np.float64)
    if y.shape != yh.shape:
        raise ParameterError(f"length mismatch: {y.shape} vs {yh.shape}")
    if not np.any(y):
        raise ParameterError("reference is silent")
    return y, yh


def _ratio_db(num: float, den: float, floor: float = -DB_CAP) -> float:
    if den == 0:
        return DB_CAP
    if num == 0:
        return floor
    return float(np.clip(10.0 * np.log10(num / den), floor, DB_CAP))


def sdr_db(reference, estimate) -> float:
    y, yh = _pair(reference, estimate)
    return _ratio_db(float(np.dot(y, y)), float(np.sum((y - yh) ** 2)))


def si_sdr_db(reference, estimate) -> float:
    y, yh = _pair(reference, estimate)
    alpha = float(np.dot(y, yh)) / float(np.dot(y, y))
    target = alpha * y
    return _ratio_db(float(np.dot(target, target)), float(np.sum((yh - target) ** 2)),
                     floor=SI_SDR_FLOOR)


@dataclass
class EvalReport:
    name: str
    sdr_db: float
    si_sdr_db: float
    num_samples: int

    def line(self) -> str:
        return f"{self.name}\tSDR_dB={self.sdr_db:.4f}\tSI-SDR_dB={self.si_sdr_db:.4f}"

    def as_dict(self) -> dict:
        return {"sdr_db": self.sdr_db, "si_sdr_db": self.si_sdr_db}


def evaluate(name: str, reference, estimate) -> EvalReport:
    y, _ = _pair(reference, estimate)
    return EvalReport(name, sdr_db(reference, estimate), si_sdr_db(reference, estimate), len(y))
