"""Command-line entry point: ``cmask <command> ...``.

Exit codes: 0 success, 2 usage or parameter error, 3 file-format error.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
import time
from pathlib import Path

import numpy as np

from . import masking
from .data import STEM_NAMES, load_dataset, read_wav, synth_stems, write_stemset, write_wav
from .errors import FormatError, ParameterError
from .metrics import evaluate, sdr_db, si_sdr_db
from .model import SourceModel
from .nn.checkpoint import MAGIC, load_checkpoint, save_checkpoint
from .nn.unet import UNetConfig
from .stft import StftParams, Waveform, istft, stft
from .training import LOSSES, TrainConfig, Trainer

log = logging.getLogger("cmask")

EXIT_OK, EXIT_PARAM, EXIT_FORMAT = 0, 2, 3


def _int_list(text: str) -> list[int]:
    try:
        return [int(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}")


def read_config_file(path) -> dict[str, str]:
    """Flat ``key=value`` file; blank lines and ``#`` comments are ignored."""
    try:
        lines = Path(path).read_text().splitlines()
    except OSError as exc:
        raise ParameterError(f"cannot read config file {path}: {exc}") from exc
    out = {}
    for n, line in enumerate(lines, 1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        key, sep, value = line.partition("=")
        if not sep:
            raise ParameterError(f"{path}:{n}: expected key=value, got {line!r}")
        out[key.strip().replace("-", "_")] = value.strip()
    return out


def stft_params(args) -> StftParams:
    return StftParams(window_size=args.window, hop_size=args.hop, sample_rate=args.sample_rate)


def load_models(path) -> list[SourceModel]:
    """A checkpoint file, or a manifest of ``source=checkpoint`` lines."""
    path = Path(path)
    if not path.is_file():
        raise ParameterError(f"no such file: {path}")
    try:
        head = path.read_bytes()[:4]
    except OSError as exc:
        raise FormatError(f"cannot read model {path}: {exc}") from exc
    if head == MAGIC:
        return [SourceModel.from_checkpoint(load_checkpoint(path))]
    entries = read_config_file(path)
    if not entries:
        raise FormatError(f"{path} is neither a checkpoint nor a manifest")
    models = []
    for source, ckpt in entries.items():
        ckpt_path = Path(ckpt) if Path(ckpt).is_absolute() else path.parent / ckpt
        model = SourceModel.from_checkpoint(load_checkpoint(ckpt_path))
        if model.source != source:
            raise FormatError(f"manifest lists {ckpt} as {source} but it was trained on {model.source}")
        models.append(model)
    return models


# ---------------------------------------------------------------------------
# commands


def cmd_synth(args) -> int:
    out = Path(args.outdir)
    for i in range(args.tracks):
        stems = synth_stems(args.seed + i, args.duration, args.sample_rate)
        track = out / f"track{i:03d}"
        write_stemset(track, stems)
        write_wav(track / "mixture.wav", stems.mixture)
        print(track)
    return EXIT_OK


def cmd_train(args) -> int:
    params = stft_params(args)
    tracks = [s for _, s in load_dataset(args.data, params.sample_rate)]
    channels = args.channels or UNetConfig().channels[:args.depth]
    ch = 1 if args.mask == "real" else 2
    config = UNetConfig(depth=args.depth, channels=channels, in_channels=ch, out_channels=ch,
                        leaky_slope=args.leaky_slope, dropout_rate=args.dropout, seed=args.seed,
                        dtype=args.dtype)
    model = SourceModel.create(config, args.mask, source=args.source, stft_params=params,
                               padded_bins=args.padded_bins)
    train_cfg = TrainConfig(loss=args.loss, steps=args.steps, lr=args.lr, batch_size=args.batch_size,
                            patch_frames=args.patch_frames, augment=args.augment, seed=args.seed,
                            val_every=args.val_every)
    trainer = Trainer(model, tracks, train_cfg)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    log_path = Path(args.log) if args.log else out.with_name(out.name + ".log.csv")
    validation = None
    if args.val_every > 0:
        candidate = synth_stems(args.seed + 100_003, len(tracks[0]) / params.sample_rate, params.sample_rate)
        if np.any(candidate.stems[args.source]):
            validation = candidate
    t0 = time.perf_counter()

    def progress(step, value):
        if step % max(1, args.steps // 10) == 0:
            log.info("step %d loss %.5f (%.1fs)", step, value, time.perf_counter() - t0)

    trainer.run(log_path, validation, out.with_name(out.name + ".val.csv"), progress)
    save_checkpoint(model.to_checkpoint(trainer.step_count, {"loss": args.loss}), out)
    final = trainer.evaluate_loss() if np.any(tracks[0].stems[args.source]) else float("nan")
    print(f"steps={trainer.step_count}\tfinal_loss={final:.6f}\tcheckpoint={out}")
    return EXIT_OK


def cmd_separate(args) -> int:
    models = load_models(args.model)
    rate = models[0].stft_params.sample_rate
    mixture = read_wav(args.input, rate)
    outdir = Path(args.outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    estimates = []
    for model in models:
        if model.stft_params.sample_rate != rate:
            raise ParameterError("all models must share one sample rate")
        est = model.separate(mixture)
        write_wav(outdir / f"{model.source}.wav", est)
        estimates.append(est)
    # quantize estimates first so the written files sum back to the input
    written = [Waveform(e.samples.astype(np.float32).astype(np.float64), rate) for e in estimates]
    other = masking.residual_other(mixture, written)
    write_wav(outdir / "other.wav", other)
    for model in models:
        print(outdir / f"{model.source}.wav")
    print(outdir / "other.wav")
    return EXIT_OK


def cmd_oracle(args) -> int:
    params = stft_params(args)
    mix = read_wav(args.mixture, params.sample_rate)
    src = read_wav(args.source, params.sample_rate)
    if len(mix) != len(src):
        raise ParameterError(f"length mismatch: mixture {len(mix)} vs source {len(src)} samples")
    est = oracle_estimate(src, mix, args.mask, params)
    if args.out:
        write_wav(args.out, est)
    report = evaluate(args.mask, src, est)
    print(json.dumps(report.as_dict()) if args.json else report.line())
    return EXIT_OK


def oracle_estimate(source: Waveform, mixture: Waveform, kind: str, params: StftParams) -> Waveform:
    xs, ys = stft(mixture, params), stft(source, params)
    if kind == "irm":
        est = masking.apply_real_mask(masking.ideal_real_mask(ys, xs), xs)
    elif kind in ("cirm", "cirm-clipped"):
        clip = 1.0 if kind == "cirm-clipped" else None
        est = masking.apply_complex_mask(masking.ideal_complex_mask(ys, xs, clip=clip), xs)
    else:
        raise ParameterError(f"unknown oracle mask {kind!r}")
    return istft(est, len(mixture))


def cmd_evaluate(args) -> int:
    ref = read_wav(args.reference, args.sample_rate)
    est = read_wav(args.estimate, args.sample_rate)
    report = evaluate(args.name, ref, est)
    print(json.dumps(report.as_dict()) if args.json else report.line())
    return EXIT_OK


def mask_rasters(mask: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """8-bit (frames, bins) rasters of mask modulus and absolute phase."""
    mag = np.round(np.clip(np.abs(mask), 0.0, 1.0) * 255).astype(np.uint8)
    ph = np.abs(np.angle(mask)) if np.iscomplexobj(mask) else np.zeros(mask.shape)
    ph = np.round(np.clip(ph / np.pi, 0.0, 1.0) * 255).astype(np.uint8)
    return mag, ph


def write_pgm(path, raster: np.ndarray) -> None:
    """Binary P5 greymap; width = bins, height = frames, maxval 255."""
    height, width = raster.shape
    with open(path, "wb") as f:
        f.write(f"P5\n{width} {height}\n255\n".encode("ascii"))
        f.write(np.ascontiguousarray(raster, dtype=np.uint8).tobytes())


def write_mask_csv(path, values: np.ndarray) -> None:
    frames, bins = values.shape
    f_idx, b_idx = np.meshgrid(np.arange(frames), np.arange(bins), indexing="ij")
    table = np.column_stack([f_idx.ravel(), b_idx.ravel(), values.ravel()])
    np.savetxt(path, table, fmt=["%d", "%d", "%.9g"], delimiter=",", header="frame,bin,value", comments="")


def dump_mask(mask: np.ndarray, source: str, outdir: Path, fmt: str, complex_mask: bool) -> list[Path]:
    outdir.mkdir(parents=True, exist_ok=True)
    written = []
    if fmt == "pgm":
        mag, ph = mask_rasters(mask)
        for kind, raster in (("mag", mag), ("phase", ph)):
            path = outdir / f"{source}_mask_{kind}.pgm"
            write_pgm(path, raster)
            written.append(path)
    elif fmt == "csv":
        ph = np.abs(np.angle(mask)) if complex_mask else np.zeros(mask.shape)
        for kind, values in (("mag", np.abs(mask)), ("phase", ph)):
            path = outdir / f"{source}_mask_{kind}.csv"
            write_mask_csv(path, values)
            written.append(path)
    else:
        raise ParameterError(f"format must be pgm or csv, got {fmt!r}")
    notes = [
        f"source: {source}",
        f"mask type: {'complex' if complex_mask else 'real'}",
        f"shape: {mask.shape[0]} frames x {mask.shape[1]} bins",
        "pgm layout: one row per frame (time runs top to bottom), "
        "one column per frequency bin (frequency ascends left to right)",
        "magnitude: |mask| in [0, 1] mapped linearly to 0..255",
        "phase: |angle(mask)| in [0, pi] mapped linearly to 0..255",
        "csv layout: frame,bin,value with raw (unquantized) values",
    ]
    if not complex_mask:
        notes.append("real-valued mask: it never rotates phase, so the phase file is all zeros")
    sidecar = outdir / f"{source}_mask.txt"
    sidecar.write_text("\n".join(notes) + "\n")
    written.append(sidecar)
    return written


def cmd_dump_mask(args) -> int:
    models = load_models(args.model)
    wave = read_wav(args.input, models[0].stft_params.sample_rate)
    for model in models:
        mask = model.mask(stft(wave, model.stft_params))
        for path in dump_mask(mask, model.source, Path(args.outdir), args.format, model.mask_type == "complex"):
            print(path)
    return EXIT_OK


# ---------------------------------------------------------------------------
# argument parsing


def build_parser() -> argparse.ArgumentParser:
    shared = argparse.ArgumentParser(add_help=False)
    shared.add_argument("--seed", type=int, default=0)
    shared.add_argument("--sample-rate", type=int, default=22050)
    shared.add_argument("--window", type=int, default=1024, help="STFT window size in samples")
    shared.add_argument("--hop", type=int, default=256, help="STFT hop size in samples")
    shared.add_argument("--config", help="key=value file of defaults; command-line flags win")
    shared.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="cmask", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", parents=[shared], help="write synthetic stem sets as WAV files")
    p.add_argument("outdir")
    p.add_argument("--tracks", type=int, default=1)
    p.add_argument("--duration", type=float, default=3.0)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("train", parents=[shared], help="train one source model")
    p.add_argument("--data", required=True, help="dataset root with <track>/<stem>.wav")
    p.add_argument("--out", default="model.ckpt")
    p.add_argument("--log", help="per-step CSV log (default: <out>.log.csv)")
    p.add_argument("--source", choices=STEM_NAMES, default="vocals")
    p.add_argument("--loss", choices=LOSSES, default="mag")
    p.add_argument("--mask", choices=("real", "complex"), default="real")
    p.add_argument("--depth", type=int, default=6)
    p.add_argument("--channels", type=_int_list)
    p.add_argument("--leaky-slope", type=float, default=0.2)
    p.add_argument("--dropout", type=float, default=0.5)
    p.add_argument("--dtype", choices=("float32", "float64"), default="float32")
    p.add_argument("--padded-bins", type=int, default=1024)
    p.add_argument("--steps", type=int, default=1000)
    p.add_argument("--lr", type=float, default=1e-4)
    p.add_argument("--batch-size", type=int, default=16)
    p.add_argument("--patch-frames", type=int, default=256)
    p.add_argument("--augment", type=int, default=10, help="random augmentations per track")
    p.add_argument("--val-every", type=int, default=100)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("separate", parents=[shared], help="separate a mixture with trained models")
    p.add_argument("model", help="checkpoint, or manifest of source=checkpoint lines")
    p.add_argument("input")
    p.add_argument("outdir")
    p.set_defaults(func=cmd_separate)

    p = sub.add_parser("oracle", parents=[shared], help="apply an ideal mask and report SDR")
    p.add_argument("mixture")
    p.add_argument("source")
    p.add_argument("--mask", choices=("irm", "cirm", "cirm-clipped"), default="cirm-clipped")
    p.add_argument("--out", help="write the estimate to this WAV file")
    p.add_argument("--json", action="store_true")
    p.set_defaults(func=cmd_oracle)

    p = sub.add_parser("evaluate", parents=[shared], help="SDR and SI-SDR of an estimate")
    p.add_argument("reference")
    p.add_argument("estimate")
    p.add_argument("--name", default="estimate")
    p.add_argument("--json", action="store_true")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("dump-mask", parents=[shared], help="write mask magnitude/phase images")
    p.add_argument("model")
    p.add_argument("input")
    p.add_argument("outdir")
    p.add_argument("--format", choices=("pgm", "csv"), default="pgm")
    p.set_defaults(func=cmd_dump_mask)
    return parser


def parse_args(argv=None) -> argparse.Namespace:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.config:
        values = read_config_file(args.config)
        sub = parser._subparsers._group_actions[0].choices[args.command]
        known = {a.dest for a in sub._actions}
        unknown = sorted(set(values) - known)
        if unknown:
            raise ParameterError(f"unknown config keys: {', '.join(unknown)}")
        flags = {a.dest for a in sub._actions if isinstance(a, argparse._StoreTrueAction)}
        for key in flags & set(values):
            values[key] = values[key].lower() in ("1", "true", "yes", "on")
        sub.set_defaults(**values)
        args = parser.parse_args(argv)
    return args


def main(argv=None) -> int:
    try:
        args = parse_args(argv)
        logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                            format="%(levelname)s %(name)s: %(message)s")
        return args.func(args)
    except ParameterError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_PARAM
    except FormatError as exc:
        print(f"format error: {exc}", file=sys.stderr)
        return EXIT_FORMAT


if __name__ == "__main__":
    sys.exit(main())
