"""Compare real and complex oracle masks on synthetic mixtures.

    python scripts/oracle_study.py --mixtures 20 --duration 3 --json results.json
"""
import argparse
import json

import numpy as np

from cmask import masking
from cmask.data import STEM_NAMES, synth_stems
from cmask.metrics import sdr_db, si_sdr_db
from cmask.stft import StftParams, istft, stft


def study(mixtures: int, duration: float, seed: int, params: StftParams) -> dict:
    rows = []
    for i in range(mixtures):
        stems = synth_stems(seed + i, duration)
        mix = stems.mixture
        xs = stft(mix, params)
        for name in STEM_NAMES:
            src = stems.wave(name)
            ys = stft(src, params)
            estimates = {
                "irm": masking.apply_real_mask(masking.ideal_real_mask(ys, xs), xs),
                "cirm-clipped": masking.apply_complex_mask(masking.ideal_complex_mask(ys, xs, clip=1.0), xs),
                "cirm": masking.apply_complex_mask(masking.ideal_complex_mask(ys, xs), xs),
            }
            row = {"mixture": i, "stem": name}
            for kind, spec in estimates.items():
                est = istft(spec, len(mix))
                row[f"{kind}_sdr"] = sdr_db(src, est)
                row[f"{kind}_si_sdr"] = si_sdr_db(src, est)
            rows.append(row)
    return {"rows": rows}


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--mixtures", type=int, default=20)
    ap.add_argument("--duration", type=float, default=3.0)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--json")
    args = ap.parse_args()

    result = study(args.mixtures, args.duration, args.seed, StftParams())
    rows = result["rows"]
    print(f"{'stem':<11}{'IRM':>9}{'cIRM clip':>11}{'cIRM':>9}   (mean SDR dB)")
    for name in STEM_NAMES:
        sel = [r for r in rows if r["stem"] == name]
        means = [np.mean([r[f"{k}_sdr"] for r in sel]) for k in ("irm", "cirm-clipped", "cirm")]
        print(f"{name:<11}{means[0]:9.2f}{means[1]:11.2f}{means[2]:9.2f}")
    wins = sum(r["cirm-clipped_sdr"] >= r["irm_sdr"] for r in rows)
    print(f"clipped complex >= real on {wins}/{len(rows)} stem estimates")
    if args.json:
        with open(args.json, "w") as fh:
            json.dump(result, fh, indent=2)


if __name__ == "__main__":
    main()
