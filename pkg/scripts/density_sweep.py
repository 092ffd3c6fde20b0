"""Row counts and kernel cost as the generator's density varies.

Realized rows per subject shrink with density because all-zero rows are
filtered; this prints mean/max I_k, non-zeros and the specialized sweep time.
"""
import argparse

from sparsepf2.bench import bench_mttkrp
from sparsepf2.synthetic import GeneratorSpec, generate_synthetic


def main():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--K", type=int, default=5_000)
    p.add_argument("--J", type=int, default=500)
    p.add_argument("--I-max", dest="I_max", type=int, default=100)
    p.add_argument("--rank", type=int, default=10)
    p.add_argument("--densities", type=float, nargs="+", default=[0.0005, 0.001, 0.005, 0.01, 0.05])
    p.add_argument("--reps", type=int, default=3)
    args = p.parse_args()

    print("density\tK\tmean_I\tmax_I\tnnz\tsweep_ms\tnaive_ms\tspeedup")
    for d in args.densities:
        X = generate_synthetic(GeneratorSpec(K=args.K, J=args.J, I_max=args.I_max, R_true=args.rank, density=d))
        rep = bench_mttkrp(X, args.rank, reps=args.reps)
        spec, naive = rep.row("specialized", "sweep"), rep.row("naive", "sweep")
        nm = "OoM" if naive.median_ms is None else f"{naive.median_ms:.1f}"
        sp = "-" if rep.speedup["sweep"] is None else f"{rep.speedup['sweep']:.1f}x"
        print(f"{d}\t{X.n_slices}\t{X.row_counts.mean():.1f}\t{X.max_rows}\t{X.total_nnz}"
              f"\t{spec.median_ms:.1f}\t{nm}\t{sp}")


if __name__ == "__main__":
    main()
