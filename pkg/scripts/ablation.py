"""Filter ablation on the synthetic benchmark: both filter branches on vs. off,
averaged over several training seeds. Writes one CSV row per run.

    python3 scripts/ablation.py --seeds 0 1 2 --out ablation.csv
"""

import argparse
import csv
import sys

import numpy as np

from fetcm.benchmark import build_benchmark, filters, run_benchmark
from fetcm.model import ModelConfig
from fetcm.training import TrainConfig


def main():
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--sessions", type=int, default=20000)
    ap.add_argument("--seeds", type=int, nargs="+", default=[0, 1, 2])
    ap.add_argument("--out", default="-")
    args = ap.parse_args()
    data = build_benchmark(args.sessions)
    out = sys.stdout if args.out == "-" else open(args.out, "w", newline="")
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(["filters", "seed", "test_ppl", "test_ll", "best_epoch", "seconds"])
    ppl = {True: [], False: []}
    for seed in args.seeds:
        for enabled in (True, False):
            run = run_benchmark(data, filters(ModelConfig(), enabled), TrainConfig(seed=seed))
            ppl[enabled].append(run.report.ppl_overall)
            writer.writerow(["on" if enabled else "off", seed, f"{run.report.ppl_overall:.6f}",
                             f"{run.report.ll:.6f}", run.result.checkpoint.epoch, f"{run.seconds:.0f}"])
            out.flush()
    on, off = np.mean(ppl[True]), np.mean(ppl[False])
    print(f"mean_ppl_on={on:.6f} mean_ppl_off={off:.6f} delta={off - on:+.6f}", file=sys.stderr)
    if out is not sys.stdout:
        out.close()


if __name__ == "__main__":
    main()
