"""Synthetic stems, augmentation, spectrogram patching and audio I/O."""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path

import numpy as np
from scipy import signal
from scipy.io import wavfile

from .errors import FormatError, ParameterError
from .stft import Spectrogram, Waveform

log = logging.getLogger(__name__)

STEM_NAMES = ("vocals", "guitar", "bass", "percussion", "other")
DEFAULT_RATE = 22050


@dataclass
class StemSet:
    stems: dict[str, np.ndarray]
    sample_rate: int = DEFAULT_RATE

    def __post_init__(self):
        missing = [n for n in STEM_NAMES if n not in self.stems]
        if missing:
            raise ParameterError(f"stem set is missing stems: {', '.join(missing)}")
        self.stems = {n: np.asarray(self.stems[n], dtype=np.float64) for n in STEM_NAMES}
        lengths = {len(v) for v in self.stems.values()}
        if len(lengths) != 1:
            raise ParameterError(f"stems have different lengths: {sorted(lengths)}")

    def __len__(self):
        return len(self.stems[STEM_NAMES[0]])

    @property
    def mixture(self) -> Waveform:
        """Unweighted sum of the stems, recomputed on every access."""
        total = np.zeros(len(self))
        for name in STEM_NAMES:
            total += self.stems[name]
        return Waveform(total, self.sample_rate)

    def wave(self, name: str) -> Waveform:
        return Waveform(self.stems[name], self.sample_rate)


# --------------------------------------------------------------------------
# synthesis


def _envelope(n: int, attack: int, release: int) -> np.ndarray:
    env = np.ones(n)
    attack, release = min(attack, n), min(release, n)
    if attack:
        env[:attack] = 0.5 - 0.5 * np.cos(np.pi * np.arange(attack) / attack)
    if release:
        env[n - release:] *= 0.5 + 0.5 * np.cos(np.pi * np.arange(release) / release)
    return env


def _note_grid(rng, n: int, sr: int, beat: float, min_beats: int, max_beats: int):
    """Yield (start, length) note slots tiling the signal on a beat grid."""
    pos = 0
    step = int(round(beat * sr))
    while pos < n:
        length = step * int(rng.integers(min_beats, max_beats + 1))
        yield pos, min(length, n - pos)
        pos += length


def _harmonic_note(f0: np.ndarray | float, n: int, sr: int, amps: list[float], rng) -> np.ndarray:
    f0 = np.broadcast_to(np.asarray(f0, dtype=np.float64), (n,))
    phase0 = 2 * np.pi * np.cumsum(f0) / sr
    out = np.zeros(n)
    for h, a in enumerate(amps, start=1):
        if h * f0.max() >= sr / 2:
            break
        out += a * np.sin(h * phase0 + rng.uniform(0, 2 * np.pi))
    return out


def _bass(rng, n, sr, beat):
    out = np.zeros(n)
    notes = 55.0 * 2 ** (np.arange(0, 22) / 12)  # A1 .. ~F#3
    notes = notes[(notes >= 60) & (notes <= 200)]
    for start, length in _note_grid(rng, n, sr, beat, 1, 4):
        f0 = rng.choice(notes)
        amps = [1.0, 0.5, 0.25, 0.12]
        amps = [a for h, a in enumerate(amps, 1) if h * f0 < 900]
        note = _harmonic_note(f0, length, sr, amps, rng)
        out[start:start + length] += note * _envelope(length, int(0.06 * sr), int(0.05 * sr))
    return 0.35 * out


def _percussion(rng, n, sr, beat):
    out = np.zeros(n)
    kick = signal.butter(4, 150, "lowpass", fs=sr, output="sos")
    snare = signal.butter(2, [1000, 5000], "bandpass", fs=sr, output="sos")
    hat = signal.butter(4, 6000, "highpass", fs=sr, output="sos")
    step = int(round(beat * sr / 2))
    for i, start in enumerate(range(0, n, step)):
        kind = (kick, 0.08, 1.0) if i % 4 == 0 else (snare, 0.05, 0.6) if i % 4 == 2 else (hat, 0.02, 0.25)
        sos, decay, gain = kind
        length = min(int(0.25 * sr), n - start)
        t = np.arange(length) / sr
        burst = signal.sosfilt(sos, rng.standard_normal(length)) * np.exp(-t / decay)
        burst /= np.max(np.abs(burst)) + 1e-12
        out[start:start + length] += gain * rng.uniform(0.8, 1.0) * burst
    return 0.6 * out


def _vocals(rng, n, sr, beat):
    out = np.zeros(n)
    notes = 196.0 * 2 ** (np.arange(0, 16) / 12)  # G3 .. ~A#4
    hp = signal.butter(2, 2000, "highpass", fs=sr, output="sos")
    for start, length in _note_grid(rng, n, sr, beat, 1, 3):
        if rng.random() < 0.15:
            continue
        t = np.arange(length) / sr
        rate, depth = rng.uniform(4.5, 6.5), rng.uniform(0.005, 0.02)
        f0 = rng.choice(notes) * (1 + depth * np.sin(2 * np.pi * rate * t) * np.minimum(t / 0.2, 1))
        amps = [1.0 / h ** 1.2 for h in range(1, 10)]
        note = _harmonic_note(f0, length, sr, amps, rng)
        note *= _envelope(length, int(0.02 * sr), int(0.04 * sr))
        burst_len = min(int(0.015 * sr), length)
        burst = signal.sosfilt(hp, rng.standard_normal(burst_len)) * np.linspace(1, 0, burst_len)
        note[:burst_len] += 0.4 * burst
        out[start:start + length] += note
    return 0.25 * out


def _guitar(rng, n, sr, beat):
    out = np.zeros(n)
    notes = 98.0 * 2 ** (np.arange(0, 24) / 12)  # G2 .. ~F#4
    for start, length in _note_grid(rng, n, sr, beat / 2, 1, 4):
        if rng.random() < 0.3:
            continue
        t = np.arange(length) / sr
        f0 = rng.choice(notes)
        note = np.zeros(length)
        for h in range(1, 12):
            if h * f0 > 6000:
                break
            note += np.exp(-t * (3.0 + 1.5 * h)) * np.sin(2 * np.pi * h * f0 * t + rng.uniform(0, 2 * np.pi)) / h
        note *= _envelope(length, int(0.002 * sr), int(0.01 * sr))
        out[start:start + length] += note
    return 0.25 * out


def _other(rng, n, sr, beat):
    sos = signal.butter(4, [300, 3000], "bandpass", fs=sr, output="sos")
    noise = signal.sosfilt(sos, rng.standard_normal(n))
    t = np.arange(n) / sr
    swell = 0.6 + 0.4 * np.sin(2 * np.pi * rng.uniform(0.2, 0.5) * t + rng.uniform(0, 2 * np.pi))
    return 0.05 * noise / (np.std(noise) + 1e-12) * swell


_GENERATORS = {"vocals": _vocals, "guitar": _guitar, "bass": _bass, "percussion": _percussion, "other": _other}


def synth_stems(seed: int, duration_s: float = 3.0, sample_rate: int = DEFAULT_RATE) -> StemSet:
    """Deterministic five-stem track whose stems overlap in time and frequency."""
    if duration_s <= 0:
        raise ParameterError(f"duration must be positive, got {duration_s}")
    n = int(round(duration_s * sample_rate))
    root = np.random.default_rng(seed)
    beat = 60.0 / root.uniform(90, 130)
    stems = {}
    for i, name in enumerate(STEM_NAMES):
        rng = np.random.default_rng([seed, i])
        stems[name] = _GENERATORS[name](rng, n, sample_rate, beat)
    peak = np.max(np.abs(sum(stems.values())))
    if peak > 0.9:
        stems = {k: v * (0.9 / peak) for k, v in stems.items()}
    return StemSet(stems, sample_rate)


# --------------------------------------------------------------------------
# augmentation


@dataclass(frozen=True)
class Biquad:
    b: tuple[float, float, float]
    a: tuple[float, float, float]

    def __post_init__(self):
        a0, a1, a2 = self.a
        if a0 == 0:
            raise ParameterError("biquad a0 must be nonzero")
        a1, a2 = a1 / a0, a2 / a0
        if not (abs(a2) < 1 and abs(a1) < 1 + a2):
            raise ParameterError(f"unstable biquad denominator {self.a}")

    @classmethod
    def peaking(cls, freq: float, q: float, gain_db: float, sample_rate: int = DEFAULT_RATE) -> "Biquad":
        amp = 10 ** (gain_db / 40)
        w0 = 2 * math.pi * freq / sample_rate
        alpha = math.sin(w0) / (2 * q)
        c = math.cos(w0)
        return cls((1 + alpha * amp, -2 * c, 1 - alpha * amp), (1 + alpha / amp, -2 * c, 1 - alpha / amp))

    @classmethod
    def lowpass(cls, freq: float, q: float = 0.7071, sample_rate: int = DEFAULT_RATE) -> "Biquad":
        w0 = 2 * math.pi * freq / sample_rate
        alpha = math.sin(w0) / (2 * q)
        c = math.cos(w0)
        return cls(((1 - c) / 2, 1 - c, (1 - c) / 2), (1 + alpha, -2 * c, 1 - alpha))

    @classmethod
    def highpass(cls, freq: float, q: float = 0.7071, sample_rate: int = DEFAULT_RATE) -> "Biquad":
        w0 = 2 * math.pi * freq / sample_rate
        alpha = math.sin(w0) / (2 * q)
        c = math.cos(w0)
        return cls(((1 + c) / 2, -(1 + c), (1 + c) / 2), (1 + alpha, -2 * c, 1 - alpha))

    def apply(self, x: np.ndarray) -> np.ndarray:
        return signal.lfilter(self.b, self.a, x)


@dataclass
class AugmentSpec:
    """Track-level resampling plus per-stem gain and filtering."""

    resample_ratio: float = 1.0
    gains_db: dict[str, float] = field(default_factory=dict)
    filters: dict[str, list[Biquad]] = field(default_factory=dict)

    def validate(self):
        if not 0.9 <= self.resample_ratio <= 1.1:
            raise ParameterError(f"resample ratio must be in [0.9, 1.1], got {self.resample_ratio}")
        for name, g in self.gains_db.items():
            if name not in STEM_NAMES:
                raise ParameterError(f"unknown stem {name!r}")
            if not -12 <= g <= 12:
                raise ParameterError(f"gain for {name} must be in [-12, 12] dB, got {g}")
        for name in self.filters:
            if name not in STEM_NAMES:
                raise ParameterError(f"unknown stem {name!r}")

    @classmethod
    def random(cls, seed, sample_rate: int = DEFAULT_RATE) -> "AugmentSpec":
        rng = np.random.default_rng(seed)
        ratio = float(rng.uniform(0.9, 1.1))
        gains = {n: float(rng.uniform(-6, 6)) for n in STEM_NAMES}
        filters = {}
        for n in STEM_NAMES:
            if rng.random() < 0.5:
                freq = float(np.exp(rng.uniform(np.log(200), np.log(5000))))
                filters[n] = [Biquad.peaking(freq, float(rng.uniform(0.5, 2.0)),
                                             float(rng.uniform(-6, 6)), sample_rate)]
        return cls(ratio, gains, filters)


def resample_ratio(x: np.ndarray, ratio: float) -> np.ndarray:
    """Play back ``ratio`` times faster: output length ``round(len / ratio)``."""
    target = int(round(len(x) / ratio))
    frac = Fraction(1 / ratio).limit_denominator(200)
    y = signal.resample_poly(x, frac.numerator, frac.denominator)
    if len(y) >= target:
        return y[:target]
    return np.concatenate([y, np.zeros(target - len(y))])


def augment(stems: StemSet, spec: AugmentSpec | None = None, seed=0) -> StemSet:
    """Apply ``spec`` (or a random spec drawn from ``seed`` when None)."""
    if spec is None:
        spec = AugmentSpec.random(seed, stems.sample_rate)
    spec.validate()
    out = {}
    for name in STEM_NAMES:
        x = stems.stems[name].copy()
        if spec.resample_ratio != 1.0:
            x = resample_ratio(x, spec.resample_ratio)
        for bq in spec.filters.get(name, []):
            x = bq.apply(x)
        g = spec.gains_db.get(name, 0.0)
        if g != 0.0:
            x = x * 10 ** (g / 20)
        out[name] = x
    return StemSet(out, stems.sample_rate)


# --------------------------------------------------------------------------
# patching


@dataclass
class PatchBatch:
    patches: np.ndarray   # (batch, channels, patch_frames, padded_bins)
    valid: np.ndarray     # (batch, 1, patch_frames, padded_bins) bool
    offsets: list[int]    # first spectrogram frame of each patch


def spectrogram_channels(bins: np.ndarray, channels_mode: str) -> np.ndarray:
    """(frames, bins) complex -> (channels, frames, bins) real."""
    if channels_mode == "magnitude":
        return np.abs(bins)[None]
    if channels_mode == "complex":
        return np.stack([bins.real, bins.imag])
    raise ParameterError(f"channels_mode must be 'magnitude' or 'complex', got {channels_mode!r}")


def make_patches(spec: Spectrogram, channels_mode: str, patch_frames: int = 256,
                 padded_bins: int = 1024, batch_size: int = 16) -> list[PatchBatch]:
    """Non-overlapping patches, zero-padded in time and frequency, grouped into batches."""
    frames, nbins = spec.bins.shape
    if frames == 0:
        raise ParameterError("empty spectrogram")
    if padded_bins < nbins:
        raise ParameterError(f"padded_bins {padded_bins} < bin count {nbins}")
    chans = spectrogram_channels(spec.bins, channels_mode)
    count = math.ceil(frames / patch_frames)
    patches = np.zeros((count, chans.shape[0], patch_frames, padded_bins))
    valid = np.zeros((count, 1, patch_frames, padded_bins), dtype=bool)
    offsets = []
    for i in range(count):
        start = i * patch_frames
        stop = min(start + patch_frames, frames)
        patches[i, :, :stop - start, :nbins] = chans[:, start:stop]
        valid[i, :, :stop - start, :nbins] = True
        offsets.append(start)
    return [PatchBatch(patches[i:i + batch_size], valid[i:i + batch_size], offsets[i:i + batch_size])
            for i in range(0, count, batch_size)]


def reassemble(batches: list[PatchBatch], num_frames: int, num_bins: int, channels_mode: str) -> np.ndarray:
    """Inverse of :func:`make_patches`: crop padding and concatenate."""
    patches = np.concatenate([b.patches for b in batches])
    nchan = patches.shape[1]
    stacked = patches[..., :num_bins].transpose(1, 0, 2, 3).reshape(nchan, -1, num_bins)[:, :num_frames]
    if channels_mode == "complex":
        return stacked[0] + 1j * stacked[1]
    return stacked[0]


# --------------------------------------------------------------------------
# audio I/O


def read_wav(path, sample_rate: int = DEFAULT_RATE) -> Waveform:
    """Read a 16-bit PCM or float32 WAV as mono, resampling to ``sample_rate``.

    Resampling uses a polyphase windowed-sinc FIR (Kaiser window, beta 5)
    from ``scipy.signal.resample_poly``.
    """
    if not Path(path).is_file():
        raise ParameterError(f"no such file: {path}")
    try:
        rate, data = wavfile.read(str(path))
    except (ValueError, OSError, EOFError) as exc:
        raise FormatError(f"cannot read WAV {path}: {exc}") from exc
    if data.dtype == np.int16:
        x = data.astype(np.float64) / 32768.0
    elif data.dtype == np.float32:
        x = data.astype(np.float64)
    else:
        raise FormatError(f"{path}: unsupported sample format {data.dtype}; use 16-bit PCM or float32")
    if x.ndim == 2:
        log.warning("%s has %d channels; downmixing to mono", path, x.shape[1])
        x = x.mean(axis=1)
    if rate != sample_rate:
        log.warning("%s is %d Hz; resampling to %d Hz", path, rate, sample_rate)
        g = math.gcd(rate, sample_rate)
        x = signal.resample_poly(x, sample_rate // g, rate // g)
    return Waveform(x, sample_rate)


def write_wav(path, wave: Waveform, sample_format: str = "float32") -> None:
    if sample_format == "float32":
        data = wave.samples.astype(np.float32)
    elif sample_format == "pcm16":
        data = np.round(np.clip(wave.samples, -1.0, 32767 / 32768) * 32768).astype(np.int16)
    else:
        raise ParameterError(f"sample_format must be float32 or pcm16, got {sample_format!r}")
    wavfile.write(str(path), wave.sample_rate, data)


def write_stemset(directory, stems: StemSet, sample_format: str = "float32") -> None:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    for name in STEM_NAMES:
        write_wav(directory / f"{name}.wav", stems.wave(name), sample_format)


def load_track(directory, sample_rate: int = DEFAULT_RATE) -> StemSet:
    directory = Path(directory)
    missing = [n for n in STEM_NAMES if not (directory / f"{n}.wav").is_file()]
    if missing:
        raise ParameterError(f"track {directory} is missing stems: {', '.join(missing)}")
    stems = {n: read_wav(directory / f"{n}.wav", sample_rate).samples for n in STEM_NAMES}
    return StemSet(stems, sample_rate)


def load_dataset(root, sample_rate: int = DEFAULT_RATE) -> list[tuple[str, StemSet]]:
    """All ``<root>/<track>/`` directories, sorted by name."""
    root = Path(root)
    if not root.is_dir():
        raise ParameterError(f"dataset directory {root} does not exist")
    tracks = sorted(p for p in root.iterdir() if p.is_dir())
    if not tracks:
        raise ParameterError(f"dataset directory {root} contains no track directories")
    return [(p.name, load_track(p, sample_rate)) for p in tracks]
