"""Strategy comparison on the fixture corpus: harvest and final F per strategy.

Usage: trend_matrix.py [seed ...] with knobs via environment-style flags:
    --budget N --cluster N --no-grid --mc C --mg G
"""

import argparse
import sys
import time
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parents[1] / "src"))

from queryguard.corpus import CorpusConfig, gen_corpus
from queryguard.loop import RunConfig, oracle_labeler, run_loop
from queryguard.selection import SelectionBudget

STRATEGIES = ("hybrid", "svm_al", "random", "constant_stack")


def main() -> None:
    ap = argparse.ArgumentParser()
    ap.add_argument("seeds", nargs="*", type=int, default=[101])
    ap.add_argument("--budget", type=int, default=65)
    ap.add_argument("--cluster", type=int, default=5)
    ap.add_argument("--no-grid", action="store_true")
    ap.add_argument("--mc", type=float, default=0.5)
    ap.add_argument("--mg", type=float, default=1.0)
    ap.add_argument("--init-benign", type=int, default=80)
    ap.add_argument("--init-mal", type=int, default=20)
    args = ap.parse_args()

    for seed in args.seeds or [101]:
        corpus = gen_corpus(
            CorpusConfig(
                batch_size=1000,
                malicious_per_batch=20,
                seed=seed,
                initial_benign=args.init_benign,
                initial_malicious=args.init_mal,
            )
        )
        labeler = oracle_labeler(corpus.truth())
        print(f"seed {seed}:")
        results = {}
        for strategy in STRATEGIES:
            t0 = time.time()
            config = RunConfig(
                seed=seed,
                strategy=strategy,
                grid_search=not args.no_grid,
                meta_c=args.mc,
                meta_gamma=args.mg,
                budget=SelectionBudget(total=args.budget, cluster_size=args.cluster),
            )
            reports = run_loop(config, corpus, labeler)
            harvest = sum(r["malicious_obtained"] for r in reports)
            final_f = reports[-1]["metrics"]["f_value"]
            results[strategy] = (harvest, final_f)
            print(
                f"  {strategy:15s} harvest={harvest:4d} finalF={final_f:.3f}"
                f"  ({time.time() - t0:.1f}s)"
            )
        h, f = results["hybrid"]
        checks = [
            ("F>=const", f >= results["constant_stack"][1]),
            ("F>=rand", f >= results["random"][1]),
            ("H>=1.5*al", h >= 1.5 * results["svm_al"][0]),
            ("H>=5*rand", h >= 5 * results["random"][0]),
        ]
        line = " ".join(f"{name}:{'PASS' if ok else 'FAIL'}" for name, ok in checks)
        print(f"  => {line}")


if __name__ == "__main__":
    main()
