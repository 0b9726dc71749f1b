"""Show why the community model is maintained incrementally.

A naive aggregator rebuilds the weighted average over all N learner models
on every commit, an O(N * M) walk for M model entries. The cached form
subtracts the learner's previous contribution and adds the new one, touching
a single model regardless of N. This script times both paths on growing
federations and fits a seconds-versus-N line to each; the cached slope
should be statistically flat while the recompute slope grows.
"""

from fedsim.runner import bench_cache


def main():
    rows, fits = bench_cache(learner_counts=(10, 100, 1000),
                             model_entries=(10_000,),
                             repeats=5, inner=20, seed=7)

    print(f"{'mode':>10} {'N':>6} {'median s':>10}")
    print("-" * 29)
    for mode in ("cached", "recompute"):
        for n in (10, 100, 1000):
            vals = sorted(dt for m, nn, _, _, dt in rows
                          if m == mode and nn == n)
            print(f"{mode:>10} {n:>6} {vals[len(vals) // 2]:>10.5f}")

    print()
    for (mode, entries), fit in sorted(fits.items()):
        print(f"{mode} ({entries} entries): slope={fit['slope']:.3e} s/learner, "
              f"p={fit['slope_pvalue']:.3f}, R^2={fit['r_squared']:.3f}")

    cached = fits[("cached", 10_000)]
    recompute = fits[("recompute", 10_000)]
    print()
    if cached["slope_pvalue"] > 0.05:
        print("cached: slope indistinguishable from zero, cost independent of N")
    if recompute["r_squared"] >= 0.9:
        print("recompute: time grows linearly in N as expected")


if __name__ == "__main__":
    main()
