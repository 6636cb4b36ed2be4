"""Patch-based training of a single-source model."""
from __future__ import annotations

import csv
import logging
import math
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import loss as losses
from .data import STEM_NAMES, AugmentSpec, StemSet, augment, make_patches
from .errors import ParameterError
from .metrics import si_sdr_db
from .model import SourceModel, apply_mask_op, mask_from_output, network_input, pad_to
from .nn.optim import Adam
from .nn.tensor import Tensor, as_tensor, make
from .stft import Spectrogram, StftParams, Waveform, istft, istft_adjoint, overlap_add, overlap_add_adjoint, stft

log = logging.getLogger(__name__)

LOSSES = ("mag", "sdr", "sdr+mag")


@dataclass
class TrainConfig:
    loss: str = "mag"
    steps: int = 1000
    lr: float = 1e-4
    betas: tuple[float, float] = (0.9, 0.999)
    batch_size: int = 16
    patch_frames: int = 256
    augment: int = 10
    seed: int = 0
    val_every: int = 100

    def __post_init__(self):
        if self.loss not in LOSSES:
            raise ParameterError(f"loss must be one of {LOSSES}, got {self.loss!r}")
        if self.steps < 0:
            raise ParameterError("steps must be >= 0")
        if self.batch_size < 1 or self.patch_frames < 1:
            raise ParameterError("batch_size and patch_frames must be positive")


@dataclass
class Example:
    """One track prepared for training on a single target source."""

    mixture: Spectrogram
    target: Spectrogram
    target_wave: Waveform
    inputs: np.ndarray = field(repr=False)      # (patches, C, patch_frames, padded_bins)
    mixture_ri: np.ndarray = field(repr=False)  # (patches, 2, patch_frames, bins)

    @property
    def num_patches(self) -> int:
        return self.inputs.shape[0]


def prepare_example(stems: StemSet, model: SourceModel, patch_frames: int) -> Example:
    params = model.stft_params
    mix = stft(stems.mixture, params)
    target_wave = stems.wave(model.source)
    target = stft(target_wave, params)
    frames, nbins = mix.shape
    count = math.ceil(frames / patch_frames)
    chans = network_input(mix.bins, model.mask_type)
    inputs = pad_to(chans, count * patch_frames, model.padded_bins)
    inputs = inputs.reshape(chans.shape[0], count, patch_frames, model.padded_bins).transpose(1, 0, 2, 3)
    ri = pad_to(np.stack([mix.bins.real, mix.bins.imag]), count * patch_frames, nbins)
    ri = ri.reshape(2, count, patch_frames, nbins).transpose(1, 0, 2, 3)
    dtype = model.net.dtype
    return Example(mix, target, target_wave, np.ascontiguousarray(inputs, dtype=dtype),
                   np.ascontiguousarray(ri, dtype=dtype))


@dataclass
class Segment:
    example: Example
    first_patch: int
    num_patches: int
    batch_offset: int

    @property
    def frames(self) -> tuple[int, int]:
        pf = self.example.inputs.shape[2]
        start = self.first_patch * pf
        stop = min((self.first_patch + self.num_patches) * pf, self.example.mixture.num_frames)
        return start, stop

    @property
    def whole(self) -> bool:
        return self.first_patch == 0 and self.num_patches == self.example.num_patches


def segment_loss(est_bins: np.ndarray, seg: Segment, loss_name: str, params: StftParams,
                 eps: float = losses.TRAIN_EPS) -> tuple[float, np.ndarray]:
    """Loss value and its gradient w.r.t. the segment's estimate bins."""
    start, stop = seg.frames
    target = seg.example.target.bins[start:stop]
    value, grad = 0.0, np.zeros_like(est_bins)
    if loss_name in ("mag", "sdr+mag"):
        mag = losses.magnitude_loss(target, est_bins)
        value += mag.value
        grad += mag.gradient
    if loss_name in ("sdr", "sdr+mag"):
        if seg.whole:
            n = len(seg.example.target_wave)
            est = istft(Spectrogram(est_bins, params), n).samples
            sdr = losses.sdr_loss(seg.example.target_wave, est, eps=eps)
            grad += istft_adjoint(sdr.gradient, est_bins.shape[0], params)
        else:
            ref = overlap_add(target, params)
            est = overlap_add(est_bins, params)
            if not np.any(ref):
                return value, grad
            sdr = losses.sdr_loss(ref, est, eps=eps)
            grad += overlap_add_adjoint(sdr.gradient, params)
        value += sdr.value
    return value, grad


def batch_loss(estimate: Tensor, segments: list[Segment], loss_name: str, params: StftParams) -> Tensor:
    """Mean per-segment loss of a (B, 2, patch_frames, bins) re/im estimate."""
    data = estimate.data.astype(np.float64)
    pf = data.shape[2]
    total = 0.0
    grad = np.zeros_like(data)
    for seg in segments:
        block = data[seg.batch_offset:seg.batch_offset + seg.num_patches]
        est = (block[:, 0] + 1j * block[:, 1]).reshape(-1, data.shape[3])
        start, stop = seg.frames
        est = est[:stop - start]
        value, g = segment_loss(est, seg, loss_name, params)
        total += value
        g_full = np.zeros((seg.num_patches * pf, data.shape[3]), dtype=np.complex128)
        g_full[:stop - start] = g
        g_full = g_full.reshape(seg.num_patches, pf, -1)
        grad[seg.batch_offset:seg.batch_offset + seg.num_patches, 0] = g_full.real
        grad[seg.batch_offset:seg.batch_offset + seg.num_patches, 1] = g_full.imag
    n = len(segments)
    return make(np.asarray(total / n), (estimate,), lambda g: ((g * grad / n).astype(estimate.dtype),))


def forward_loss(model: SourceModel, segments: list[Segment], loss_name: str, mode: str) -> Tensor:
    inputs = np.concatenate([s.example.inputs[s.first_patch:s.first_patch + s.num_patches] for s in segments])
    mixture = np.concatenate([s.example.mixture_ri[s.first_patch:s.first_patch + s.num_patches]
                              for s in segments])
    nbins = mixture.shape[3]
    out = model.net.forward(Tensor(inputs), mode)[:, :, :, :nbins]
    mask = mask_from_output(out, model.mask_type)
    estimate = apply_mask_op(mask, mixture, model.mask_type)
    return batch_loss(estimate, segments, loss_name, model.stft_params)


class Trainer:
    """Owns the model, optimizer and sampling state of one training run."""

    def __init__(self, model: SourceModel, tracks: list[StemSet], config: TrainConfig):
        if not tracks:
            raise ParameterError("no training tracks")
        self.model = model
        self.config = config
        self.tracks = tracks
        self.optimizer = Adam(model.net.params, lr=config.lr, betas=config.betas)
        self.rng = np.random.default_rng([config.seed, 2])
        model.net.reseed_dropout([config.seed, 3])
        self.step_count = 0
        self._cache: dict[tuple[int, int], Example] = {}
        self.originals = [prepare_example(t, model, config.patch_frames) for t in tracks]

    def example(self, track: int, variant: int) -> Example:
        if variant == 0:
            return self.originals[track]
        key = (track, variant)
        if key not in self._cache:
            if len(self._cache) > 64:
                self._cache.pop(next(iter(self._cache)))
            spec = AugmentSpec.random([self.config.seed, track, variant], self.tracks[track].sample_rate)
            stems = augment(self.tracks[track], spec)
            self._cache[key] = prepare_example(stems, self.model, self.config.patch_frames)
        return self._cache[key]

    def sample_batch(self) -> list[Segment]:
        cfg = self.config
        segments, used = [], 0
        for track in self.rng.permutation(len(self.tracks)):
            if used >= cfg.batch_size:
                break
            variant = int(self.rng.integers(0, cfg.augment + 1))
            ex = self.example(int(track), variant)
            take = min(ex.num_patches, cfg.batch_size - used)
            first = int(self.rng.integers(0, ex.num_patches - take + 1))
            segments.append(Segment(ex, first, take, used))
            used += take
        return segments

    def step(self) -> float:
        segments = self.sample_batch()
        self.optimizer.zero_grad()
        loss = forward_loss(self.model, segments, self.config.loss, "train")
        loss.backward()
        self.optimizer.step()
        self.step_count += 1
        return float(loss.data)

    def evaluate_loss(self, track: int = 0) -> float:
        """Eval-mode loss on the whole unaugmented track."""
        ex = self.originals[track]
        return float(forward_loss(self.model, [Segment(ex, 0, ex.num_patches, 0)], self.config.loss, "eval").data)

    def run(self, log_path: Path | None = None, validation: StemSet | None = None,
            val_log_path: Path | None = None, progress=None) -> list[float]:
        history = []
        log_file = open(log_path, "w", newline="") if log_path else None
        val_file = open(val_log_path, "w", newline="") if val_log_path and validation is not None else None
        try:
            writer = csv.writer(log_file) if log_file else None
            val_writer = csv.writer(val_file) if val_file else None
            if writer:
                writer.writerow(["step", "loss", "wall_ms"])
            if val_writer:
                val_writer.writerow(["step", "si_sdr_db"])
            for _ in range(self.config.steps):
                t0 = time.perf_counter()
                value = self.step()
                history.append(value)
                if writer:
                    writer.writerow([self.step_count, f"{value:.9g}", f"{(time.perf_counter() - t0) * 1e3:.1f}"])
                if val_writer and self.config.val_every and self.step_count % self.config.val_every == 0:
                    est = self.model.separate(validation.mixture)
                    val_writer.writerow([self.step_count, f"{si_sdr_db(validation.wave(self.model.source), est):.4f}"])
                if progress:
                    progress(self.step_count, value)
        finally:
            for f in (log_file, val_file):
                if f:
                    f.close()
        return history
