"""Co-simulate the workload recursion and the task-level FIFO oracle.

    python scripts/oracle_check.py [--slots 100000] [--seeds 5] [--max-k 5]

Covers every (K, d) with K <= max-k under the iid and identical-replica
two-point laws, at 0.6 of the best known lower bound.
"""
import argparse
import time

from rdstab.bounds import bound_report
from rdstab.distributions import ServiceSpec
from rdstab.simulator import RunConfig, validate_equivalence


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--slots", type=int, default=100_000)
    ap.add_argument("--seeds", type=int, default=5)
    ap.add_argument("--max-k", type=int, default=5)
    args = ap.parse_args()
    laws = {"iid": ServiceSpec.two_point(10, 100, 0.9),
            "identical": ServiceSpec.two_point(10, 100, 0.9, identical=True)}
    bad = 0
    for name, spec in laws.items():
        for K in range(1, args.max_k + 1):
            for d in range(1, K + 1):
                lam = 0.6 * bound_report(spec, K, d).best_bound
                t0 = time.perf_counter()
                jobs = 0
                for seed in range(args.seeds):
                    rep = validate_equivalence(RunConfig(K, d, lam, args.slots, spec, seed=seed))
                    jobs += rep.jobs
                    if not rep.ok:
                        bad += 1
                        print(f"{name} K={K} d={d} seed={seed}: {rep.message}")
                print(f"{name:>9} K={K} d={d} jobs={jobs:>6} {time.perf_counter() - t0:5.1f}s")
    print("no divergence" if not bad else f"{bad} divergent runs")
    raise SystemExit(1 if bad else 0)


if __name__ == "__main__":
    main()
