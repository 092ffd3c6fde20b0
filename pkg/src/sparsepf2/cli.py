"""Command-line interface.

Exit codes: 0 success, 1 usage error, 2 data error, 3 numerical failure.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
import time
from pathlib import Path

from .bench import bench_mttkrp, data_summary
from .errors import ConfigError, DataError, NumericalError
from .formats import parse_coordinate_file, rank_components, read_factors, write_coordinate_file, write_factors
from .parafac2 import PRNG, SolverConfig, fit_with_restarts
from .synthetic import GeneratorSpec, generate_synthetic

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERICAL = 0, 1, 2, 3

log = logging.getLogger("sparsepf2")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _add_generator_args(p, required=True):
    p.add_argument("--K", type=int, required=required, help="number of subjects")
    p.add_argument("--J", type=int, required=required, help="number of variables")
    p.add_argument("--I-max", dest="I_max", type=int, required=required, help="rows per subject before filtering")
    p.add_argument("--rank-true", dest="R_true", type=int, required=required)
    p.add_argument("--density", type=float, default=1.0)
    p.add_argument("--gen-seed", dest="gen_seed", type=int, default=0)
    p.add_argument("--signed", action="store_true", help="draw Gaussian instead of non-negative factors")


def _generator_spec(args) -> GeneratorSpec:
    return GeneratorSpec(
        K=args.K, J=args.J, I_max=args.I_max, R_true=args.R_true, density=args.density,
        seed=args.gen_seed, nonneg_factors=not args.signed,
    )


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="sparsepf2", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("generate", help="write a synthetic coordinate file")
    _add_generator_args(p)
    p.add_argument("-o", "--out", required=True)

    p = sub.add_parser("info", help="print K, J, max I_k and nnz of a coordinate file")
    p.add_argument("input")

    p = sub.add_parser("fit", help="fit PARAFAC2 and export the factors")
    p.add_argument("input")
    p.add_argument("--rank", type=int, required=True)
    p.add_argument("--max-iters", type=int, default=200)
    p.add_argument("--tol", type=float, default=1e-8)
    p.add_argument("--nonneg", action=argparse.BooleanOptionalAction, default=True)
    p.add_argument("--init", choices=["random", "eye"], default="random")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--threads", type=int, default=1)
    p.add_argument("--restarts", type=int, default=1)
    p.add_argument("--out", required=True, help="output directory")

    p = sub.add_parser("rank", help="rank one subject's components by S_k")
    p.add_argument("factors", help="directory written by 'fit'")
    p.add_argument("--subject", type=int, required=True)
    p.add_argument("--top", type=int, default=None)

    p = sub.add_parser("bench", help="time slice-wise MTTKRP against the naive path")
    p.add_argument("--input", help="coordinate file; otherwise generate from the flags below")
    _add_generator_args(p, required=False)
    p.add_argument("--rank", type=int, required=True)
    p.add_argument("--modes", type=int, nargs="+", default=[1, 2, 3], choices=[1, 2, 3])
    p.add_argument("--reps", type=int, default=3)
    p.add_argument("--budget-mb", type=float, default=1024.0)
    p.add_argument("--threads", type=int, default=1)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--spill-dir", default=None, help="materialize over-budget Khatri-Rao products here")
    p.add_argument("--out", default=None, help="write the JSON report here")
    return parser


def cmd_generate(args):
    X = generate_synthetic(_generator_spec(args))
    write_coordinate_file(X, args.out)
    print(json.dumps(data_summary(X)))


def cmd_info(args):
    X = parse_coordinate_file(args.input)
    summary = data_summary(X)
    for key in ("K", "J", "max_I", "nnz"):
        print(f"{key}\t{summary[key]}")


def cmd_fit(args):
    config = SolverConfig(
        rank=args.rank, max_iters=args.max_iters, tol=args.tol, nonneg=args.nonneg,
        init=args.init, seed=args.seed, threads=args.threads,
    )
    X = parse_coordinate_file(args.input)
    t0 = time.perf_counter()
    factors, trace, best, traces = fit_with_restarts(X, config, args.restarts)
    wall = time.perf_counter() - t0
    out = Path(args.out)
    write_factors(factors, out, config={**config.to_dict(), "restarts": args.restarts, "prng": PRNG})
    with (out / "trace.tsv").open("w", encoding="utf-8", newline="\n") as fh:
        fh.write("iteration\tresidual_sq\tfit\n")
        for r in trace.records:
            fh.write(f"{r.iteration}\t{r.residual_sq:.17g}\t{r.fit:.17g}\n")
    report = {
        "config": config.to_dict(),
        "restarts": args.restarts,
        "best_restart": best,
        "threads": args.threads,
        "wall_s": wall,
        "data": data_summary(X),
        "traces": [{"seed": config.seed + i, "converged": t.converged, "rows": t.to_rows()} for i, t in enumerate(traces)],
    }
    (out / "report.json").write_text(json.dumps(report, indent=2) + "\n", encoding="utf-8")
    print(f"fit {trace.final_fit:.10f} after {len(trace)} iterations (restart {best}); factors in {out}")


def cmd_rank(args):
    factors = read_factors(args.factors, load_u=False)
    for r, score in rank_components(factors, args.subject, args.top):
        print(f"{r}\t{score:.17g}")


def cmd_bench(args):
    if args.input:
        X = parse_coordinate_file(args.input)
    else:
        missing = [f for f in ("K", "J", "I_max", "R_true") if getattr(args, f) is None]
        if missing:
            raise UsageError("bench needs --input or all of --K --J --I-max --rank-true")
        X = generate_synthetic(_generator_spec(args))
    report = bench_mttkrp(
        X, args.rank, modes=args.modes, reps=args.reps, threads=args.threads,
        budget_mb=args.budget_mb, seed=args.seed, spill_dir=args.spill_dir,
    )
    text = json.dumps(report.to_dict(), indent=2)
    if args.out:
        Path(args.out).write_text(text + "\n", encoding="utf-8")
    for row in report.rows:
        med = "-" if row.median_ms is None else f"{row.median_ms:.1f}"
        print(f"{row.kernel}\t{row.mode}\t{med} ms\t{row.status}")
    for key, s in report.speedup.items():
        print(f"speedup\t{key}\t{'-' if s is None else f'{s:.2f}x'}")


COMMANDS = {
    "generate": cmd_generate,
    "info": cmd_info,
    "fit": cmd_fit,
    "rank": cmd_rank,
    "bench": cmd_bench,
}


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except UsageError as exc:
        print(f"sparsepf2: usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, format="%(levelname)s: %(message)s")
    try:
        COMMANDS[args.command](args)
    except (UsageError, ConfigError) as exc:
        print(f"sparsepf2: usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (DataError, OSError) as exc:
        print(f"sparsepf2: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except NumericalError as exc:
        print(f"sparsepf2: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
