"""FS vs FT validation accuracy over epochs for a few subjects, with adjustable data volume.

    python scripts/epoch_pilot.py --shifts-per-image 20 --epochs 300 --targets 2
"""

import argparse
import dataclasses
import time

from psogsim.dataset import SplitSpec, split_random
from psogsim.experiments import ExperimentConfig, Workbench
from psogsim.nn import TrainConfig
from psogsim.trainer import PretrainPool, fine_tune, pretrain_loso, train_fs

ap = argparse.ArgumentParser()
ap.add_argument("--shifts-per-image", type=int, default=5)
ap.add_argument("--epochs", type=int, default=200)
ap.add_argument("--targets", type=int, default=2)
ap.add_argument("--jobs", type=int, default=1)
args = ap.parse_args()

cfg = ExperimentConfig()
cfg = dataclasses.replace(cfg, cohort=dataclasses.replace(cfg.cohort, shifts_per_image=args.shifts_per_image))
t0 = time.perf_counter()
data = Workbench(cfg, args.jobs).cohort["base"]
print(f"cohort built in {time.perf_counter() - t0:.1f}s, records/subject "
      f"{[len(d) for d in data.values()]}")

checkpoints = [c for c in (1, 2, 5, 10, 25, 50, 100, 200, 300, 500, 1000) if c <= args.epochs]
tc = TrainConfig(max_epochs=args.epochs, patience=None)
for sid in cfg.subject_ids[: args.targets]:
    d = data[sid]
    sp = split_random(d, SplitSpec((0.6, 0.1, 0.3), seed=0))
    fs = train_fs(d, sp, tc)
    pool = PretrainPool(sid, [v for k, v in data.items() if k != sid])
    ft = fine_tune(pretrain_loso(pool, cfg.pretrain.make(0)), d, sp, tc)
    for name, m in (("FS", fs), ("FT", ft)):
        curve = " ".join(f"{c}:{m.history.val_accuracy[c - 1]:.2f}" for c in checkpoints)
        print(f"{sid} {name} epoch0 {m.history.initial_val_accuracy:.2f}  {curve}")
