"""Train on PBM-synthetic sessions and compare against the rank-CTR baseline
and the Bayes-optimal oracle.

    python3 scripts/synthetic_benchmark.py --sessions 20000 --seed 0
    python3 scripts/synthetic_benchmark.py --no-filters
"""

import argparse
import logging

from fetcm.benchmark import build_benchmark, filters, run_benchmark
from fetcm.model import ModelConfig
from fetcm.training import TrainConfig


def main():
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--sessions", type=int, default=20000)
    ap.add_argument("--seed", type=int, default=0, help="training seed (init, dropout, shuffling)")
    ap.add_argument("--data-seed", type=int, default=0)
    ap.add_argument("--max-epochs", type=int, default=50)
    ap.add_argument("--no-filters", action="store_true")
    args = ap.parse_args()
    logging.basicConfig(level=logging.WARNING)
    data = build_benchmark(args.sessions, seed=args.data_seed)
    run = run_benchmark(data, filters(ModelConfig(), not args.no_filters),
                        TrainConfig(seed=args.seed, max_epochs=args.max_epochs),
                        progress=lambda r: print(f"  epoch {r.epoch:3d} loss={r.train_loss:.5f} "
                                                 f"valid_ll={r.valid_ll:.5f} valid_ppl={r.valid_ppl:.5f}", flush=True))
    print(run.report.to_csv(), end="")
    print(run.report.summary(), f"best_epoch={run.result.checkpoint.epoch} seconds={run.seconds:.0f}")


if __name__ == "__main__":
    main()
