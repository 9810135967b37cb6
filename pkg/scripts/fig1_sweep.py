"""Steady-state mean workload vs arrival rate for d = 1..K (K = 10 by default).

    python scripts/fig1_sweep.py [--config configs/fig1.ini] [--out results/fig1] [--workers N]

Writes sweep.csv and bounds.csv and prints the empirical stability edge
next to the two lower bounds for every d.
"""
import argparse
import time
from pathlib import Path

from rdstab import cli
from rdstab.bounds import bound_report
from rdstab.config import load
from rdstab.simulator import RunConfig, sweep


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--config", default=str(Path(__file__).parent.parent / "configs" / "fig1.ini"))
    ap.add_argument("--out", default="results/fig1")
    ap.add_argument("--workers", type=int)
    args = ap.parse_args()

    cfg = load(args.config)
    spec = cfg.service_spec()
    base = RunConfig(cfg.K, cfg.ds[0], cfg.lambdas[0], cfg.slots, spec, cfg.burn_in, cfg.seed, cfg.stride)
    t0 = time.perf_counter()
    res = sweep(base, cfg.ds, cfg.lambdas, workers=args.workers or cfg.parallelism,
                window_fraction=cfg.window_fraction, slope_tol=cfg.slope_tol)
    print(f"{len(res.rows)} cells in {time.perf_counter() - t0:.0f}s")

    out = Path(args.out)
    meta = cli._meta_line(cfg, "fig1_sweep")
    cli.write_csv(out / "sweep.csv", meta, ["d", "lambda", "mean_workload", "slope", "verdict", "slots", "seed"],
                  [(r.d, r.lam, r.mean_workload, r.slope, r.verdict, r.slots, r.seed) for r in res.rows])
    cli.write_csv(out / "bounds.csv", meta, ["d", "lambda_lb", "known_bound", "best_bound"], cli.bounds_rows(cfg))

    print(f"{'d':>3} {'edge':>6} {'lambda_lb':>10} {'known':>8}")
    for d in cfg.ds:
        rep = bound_report(spec, cfg.K, d)
        print(f"{d:>3} {res.edge(d) or 0:>6.2f} {rep.lambda_lb:>10.4f} {rep.known_bound:>8.4f}")


if __name__ == "__main__":
    main()
