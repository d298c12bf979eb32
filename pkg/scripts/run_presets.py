#!/usr/bin/env python3
"""Run the shipped experiment presets and write their CSV outputs.

Examples:
    python scripts/run_presets.py --out out/
    python scripts/run_presets.py --out out/ --only fig12a fig12b --trials 200
"""

import argparse
import time
from pathlib import Path

from monotraj.experiments import PRESET_NAMES, load_config, run_config, write_outputs


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--out", default="out", help="output directory (default: out/)")
    parser.add_argument(
        "--only", nargs="+", choices=PRESET_NAMES, default=list(PRESET_NAMES),
        help="subset of presets to run",
    )
    parser.add_argument("--trials", type=int, default=None, help="override trial counts")
    parser.add_argument("--seed", type=int, default=None, help="override master seeds")
    args = parser.parse_args()

    out_dir = Path(args.out)
    for name in args.only:
        config = load_config(name)
        started = time.perf_counter()
        output = run_config(config, trials=args.trials, seed=args.seed)
        elapsed = time.perf_counter() - started
        aggregate_path, trials_path = write_outputs(output, out_dir)
        print(f"{name}: {elapsed:.1f} s -> {aggregate_path}")
        for row in output.aggregate_rows:
            rms = row["mean_rms_m"]
            extras = []
            if row["selection_accuracy"] is not None:
                extras.append(f"selection {row['selection_accuracy']:.3f}")
            if row["failures"]:
                extras.append(f"failures {row['failures']}")
            print(
                f"    {row['target']:>12s} window {row['window_s']:>4g} s "
                f"occl {row['occlusion']:g} order {str(row['order']) or 'auto':>4s} "
                f"{row['method']:>13s}: mean RMS "
                f"{rms:.3f} m" + ("  " + ", ".join(extras) if extras else "")
            )
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
