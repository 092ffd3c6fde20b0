"""Time slice-wise MTTKRP against the materialized Khatri-Rao path at desk scale.

Defaults generate K=50,000 subjects, J=2,000 variables, at most 50 rows per
subject and a rank-10 model at density 0.001 (about 5M non-zeros), then
time every mode and the full three-mode sweep at rank 10.

    python3 scripts/bench_desk_scale.py --spill-dir /var/tmp --out bench.json
"""
import argparse
import json
import time

from sparsepf2.bench import bench_mttkrp
from sparsepf2.synthetic import GeneratorSpec, generate_synthetic


def main():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--K", type=int, default=50_000)
    p.add_argument("--J", type=int, default=2_000)
    p.add_argument("--I-max", dest="I_max", type=int, default=50)
    p.add_argument("--rank-true", dest="R_true", type=int, default=10)
    p.add_argument("--density", type=float, default=0.001)
    p.add_argument("--ranks", type=int, nargs="+", default=[10])
    p.add_argument("--reps", type=int, default=3)
    p.add_argument("--threads", type=int, default=1)
    p.add_argument("--budget-mb", type=float, default=2048)
    p.add_argument("--spill-dir", default=None)
    p.add_argument("--out", default=None)
    args = p.parse_args()

    t0 = time.perf_counter()
    spec = GeneratorSpec(K=args.K, J=args.J, I_max=args.I_max, R_true=args.R_true, density=args.density)
    X = generate_synthetic(spec)
    print(f"generated K={X.n_slices} J={X.n_cols} nnz={X.total_nnz} mean I_k={X.row_counts.mean():.1f}"
          f" in {time.perf_counter() - t0:.1f} s")

    results = []
    for R in args.ranks:
        rep = bench_mttkrp(X, R, reps=args.reps, threads=args.threads, budget_mb=args.budget_mb,
                           spill_dir=args.spill_dir)
        bound = X.n_slices * X.n_cols * R * 8
        spec_sweep = rep.row("specialized", "sweep")
        print(f"\nR={R}")
        print(f"{'kernel':<12}{'mode':<7}{'median ms':>11}  status")
        for row in rep.rows:
            med = "-" if row.median_ms is None else f"{row.median_ms:.1f}"
            print(f"{row.kernel:<12}{row.mode:<7}{med:>11}  {row.status}")
        for key, s in rep.speedup.items():
            print(f"speedup {key}: {'-' if s is None else f'{s:.1f}x'}")
        peak = spec_sweep.peak_bytes + rep.y_bytes
        print(f"specialized peak {peak / 2**20:.0f} MB ({100 * peak / bound:.1f}% of the KJR bound)")
        results.append({"spec": spec.to_dict(), "report": rep.to_dict(), "kjr_bound_bytes": bound})

    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            json.dump(results, fh, indent=2)


if __name__ == "__main__":
    main()
