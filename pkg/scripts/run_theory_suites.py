"""Run the value-bound, convergence, multi-scale and cost suites and write
JSON + CSV for each into an output directory.

    python scripts/run_theory_suites.py --out runs/theory [--quick]
"""
import argparse
import time
from pathlib import Path

from tapplan import theory


def main() -> None:
    ap = argparse.ArgumentParser(description="run all theory suites")
    ap.add_argument("--out", default="runs/theory")
    ap.add_argument("--quick", action="store_true", help="small grids, for a smoke run")
    args = ap.parse_args()
    out = Path(args.out)
    seeds = (0, 1) if args.quick else (0, 1, 2, 3, 4)

    t = time.perf_counter()
    sim = theory.run_simulation_lemma_suite(n_trials=24 if args.quick else 100)
    theory.write_suite(sim, out / "simlemma.json", out / "simlemma.csv")
    print(f"value bound: {sum(r.satisfied for r in sim)}/{len(sim)} satisfied, "
          f"median gap by delta {theory.median_gap_by_delta(sim)} ({time.perf_counter() - t:.1f}s)")

    t = time.perf_counter()
    ns = (100, 200, 400) if args.quick else (250, 1000, 4000)
    fit = theory.run_convergence_suite(ns=ns, seeds=seeds)
    theory.write_suite(fit, out / "convergence.json", out / "convergence.csv")
    print(f"convergence: slope {fit.slope:.3f} (reference -0.5, gap {fit.slope_gap:+.3f}), "
          f"errors {fit.errors} ({time.perf_counter() - t:.1f}s)")

    t = time.perf_counter()
    ms = theory.run_multiscale_suite(n_tasks=5 if args.quick else 20, seeds=seeds)
    theory.write_suite(ms, out / "multiscale.json", out / "multiscale.csv")
    print(f"multi-scale: median edits {ms.median_multiscale} vs token-only {ms.median_token_only} "
          f"({time.perf_counter() - t:.1f}s)")

    rows = theory.run_complexity_bench(reps=5 if args.quick else 20)
    theory.write_suite(rows, out / "bench.json", out / "bench.csv")
    for r in rows:
        print(f"bench K={r.candidates} H={r.horizon} d={r.d}: {r.transition_evals} evals, {r.median_seconds * 1e3:.2f} ms")
    print(f"time(2K)/time(K) = {rows[1].median_seconds / rows[0].median_seconds:.2f}")


if __name__ == "__main__":
    main()
