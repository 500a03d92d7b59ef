"""Does temporal modelling matter? A desk-scale ablation.

Four sprite classes differ only in motion direction, so any single frame is
uninformative. A per-frame 2D network should sit near chance; networks with
temporal operators should not. Each run takes about a minute on one core.

    python3 demos/04_toy_ablation.py [--epochs 30] [--variants tea plain2d p21d-shift]
"""
import argparse

from teanet.data import SyntheticSpec, make_splits
from teanet.train import VARIANTS, TrainConfig, train_toy

parser = argparse.ArgumentParser()
parser.add_argument("--epochs", type=int, default=30)
parser.add_argument("--seed", type=int, default=0)
parser.add_argument("--variants", nargs="+", default=["plain2d", "p21d-shift", "p21d-cw", "tea"],
                    choices=sorted(VARIANTS))
args = parser.parse_args()

data = make_splits(SyntheticSpec(), 500, 200)
print(f"{len(data[0])} training / {len(data[1])} validation clips, chance = 0.25\n")

results = {}
for variant in args.variants:
    cfg = TrainConfig(variant=variant, seed=args.seed, epochs=args.epochs)
    _, metrics = train_toy(cfg, data=data,
                           log=lambda r: print(f"  {variant:11s} epoch {r['epoch']:2d} "
                                               f"loss {r['train_loss']:.3f} val {r['val_accuracy']:.3f}")
                           if r["epoch"] % 10 == 0 else None)
    results[variant] = metrics
    print(f"{variant:11s} val accuracy {metrics['val_accuracy']:.3f} ({metrics['seconds']:.0f}s)\n")

print("summary")
for variant, m in sorted(results.items(), key=lambda kv: kv[1]["val_accuracy"]):
    print(f"  {variant:11s} {m['val_accuracy']:.3f}  {'#' * int(40 * m['val_accuracy'])}")
