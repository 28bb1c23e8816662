"""Run the fat-tree(4) LB / SP+MCF / RS sweep and print the normalized means.

    python3 scripts/desk_experiment.py --out results/ [--reps 10] [--workers 1]
"""
import argparse
import logging
from dataclasses import replace
from pathlib import Path

from greenflow.experiment import PRESETS, run_experiment


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--out", default="results")
    ap.add_argument("--preset", default="desk", choices=sorted(PRESETS))
    ap.add_argument("--reps", type=int, default=None)
    ap.add_argument("--seed", type=int, default=None)
    ap.add_argument("--workers", type=int, default=1)
    args = ap.parse_args()
    logging.basicConfig(level=logging.INFO, format="%(asctime)s %(message)s")
    logging.getLogger("greenflow.dcfs").setLevel(logging.WARNING)

    config = replace(PRESETS[args.preset], workers=args.workers)
    if args.reps is not None:
        config = replace(config, repetitions=args.reps)
    if args.seed is not None:
        config = replace(config, seed=args.seed)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    result = run_experiment(config, out / "experiment.csv", out / "summary.json", out / "plot.json")

    print(f"{'flows':>6} {'SP+MCF/LB':>10} {'RS/LB':>8}")
    for n, m in result.means().items():
        print(f"{n:>6} {m['sp_over_lb']:>10.3f} {m['rs_over_lb']:>8.3f}")
    print("RS/LB last point within 1.2x of the middle point:", result.converges())
    if result.failed:
        print(f"{len(result.failed)} runs failed; see summary.json")


if __name__ == "__main__":
    main()
