"""Real and complex spectral masking for music source separation."""
from .errors import FormatError, ParameterError
from .stft import Spectrogram, StftParams, Waveform, istft, stft

__all__ = ["FormatError", "ParameterError", "Spectrogram", "StftParams", "Waveform", "istft", "stft"]
