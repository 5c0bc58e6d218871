"""Compare FS models trained with sigma=1 mm shifts against models trained without shifts.

Both are tested on the shifted test split.

    python scripts/shift_robustness.py [--config cfg.json] [--out dir] [--jobs N]
"""

import argparse
from pathlib import Path

from psogsim.experiments import ExperimentConfig, load_config, run_shift_robustness

ap = argparse.ArgumentParser()
ap.add_argument("--config")
ap.add_argument("--out", default="runs/robustness")
ap.add_argument("--jobs", type=int, default=1)
args = ap.parse_args()

cfg = load_config(args.config) if args.config else ExperimentConfig()
res = run_shift_robustness(cfg, Path(args.out), jobs=args.jobs)
for row in res.summary:
    print(f"trained with {row['train_shift']:>5}: {row['mean_deg']:.3f} +- {row['std_deg']:.3f} deg "
          f"(median of seed means {row['median_seed_mean_deg']:.3f})")
