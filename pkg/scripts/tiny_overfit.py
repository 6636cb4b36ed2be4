"""Overfit a small U-Net to one synthetic track and report separation quality.

    python scripts/tiny_overfit.py --mask complex --loss sdr --steps 500
"""
import argparse
import time

from cmask.data import synth_stems
from cmask.metrics import si_sdr_db
from cmask.model import SourceModel
from cmask.nn.unet import UNetConfig
from cmask.training import TrainConfig, Trainer


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--mask", choices=("real", "complex"), default="complex")
    ap.add_argument("--loss", choices=("mag", "sdr", "sdr+mag"), default="sdr")
    ap.add_argument("--source", default="vocals")
    ap.add_argument("--steps", type=int, default=500)
    ap.add_argument("--lr", type=float, default=1e-3)
    ap.add_argument("--seed", type=int, default=7)
    ap.add_argument("--channels", default="8,16")
    ap.add_argument("--log", help="CSV file for per-step losses")
    args = ap.parse_args()

    channels = [int(c) for c in args.channels.split(",")]
    stems = synth_stems(args.seed, 3.0)
    ch = 1 if args.mask == "real" else 2
    net = UNetConfig(depth=len(channels), channels=channels, in_channels=ch, out_channels=ch, seed=args.seed)
    model = SourceModel.create(net, args.mask, source=args.source)
    cfg = TrainConfig(loss=args.loss, steps=args.steps, lr=args.lr, augment=0, seed=args.seed, val_every=0)
    trainer = Trainer(model, [stems], cfg)

    t0 = time.perf_counter()
    trainer.run(log_path=args.log, progress=lambda step, loss: step % 50 == 0 and print(f"step {step}\tloss {loss:.4f}"))
    final = trainer.evaluate_loss()
    est = model.separate(stems.mixture)
    print(f"final_loss={final:.4f}\tsi_sdr_db={si_sdr_db(stems.wave(args.source), est):.2f}"
          f"\twall_s={time.perf_counter() - t0:.0f}")


if __name__ == "__main__":
    main()
