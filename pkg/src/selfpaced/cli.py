"""Command-line interface: ``spl <subcommand>``.

Exit status is 0 iff every certification emitted by the command passed.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from .diagnostics import certify_equivalence, certify_trace
from .experiments import (
    ExperimentConfig,
    GeneratorSpec,
    RunError,
    SWEEP_PARAMS,
    build_problem,
    generate,
    solver_from_dict,
    run,
    sweep,
    write_sweep,
)
from .models import save_dataset
from .regularizers import RegularizerKind, RegularizerSpec, check_sp_conditions, load_table
from .solvers import IterateTrace, Scheme, SolverError

logger = logging.getLogger("selfpaced")


def _load_config(args) -> ExperimentConfig:
    config = ExperimentConfig.load(args.config)
    if getattr(args, "seed", None) is not None:
        config.seed = args.seed
    if getattr(args, "scheme", None):
        scheme = Scheme(args.scheme)
        kept = [s for s in config.solvers if s.scheme is scheme]
        if kept:
            config.solvers = kept[:1]
        else:
            config.solvers = [solver_from_dict({"scheme": scheme.value}, config.loss)]
    return config


def cmd_gen_data(args) -> int:
    if args.config:
        config = ExperimentConfig.load(args.config)
        spec = config.generator
        if spec is None:
            raise SystemExit("config has no generator section")
        seed = args.seed if args.seed is not None else config.seed
    else:
        spec = GeneratorSpec(
            N=args.n,
            D=args.d,
            noise_sigma=args.noise_sigma,
            outlier_fraction=args.outlier_fraction,
            outlier_magnitude=args.outlier_magnitude,
        )
        seed = args.seed
    if seed is None:
        raise SystemExit("--seed is required for generated data")
    dataset, truth = generate(spec, seed)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    save_dataset(dataset, out / "dataset.csv")
    (out / "ground_truth.json").write_text(json.dumps(truth.to_dict(), indent=2, sort_keys=True) + "\n")
    print(f"wrote {out / 'dataset.csv'} ({spec.N} x {spec.D}, {len(truth.outlier_indices)} outliers)")
    return 0


def cmd_solve(args) -> int:
    config = _load_config(args)
    try:
        result = run(config, args.out)
    except (SolverError, RunError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    for name, report in result.reports.items():
        print(f"[{name}] verdict={'PASS' if report.verdict else 'FAIL'}")
        for line in report.lines():
            print("  " + line)
    return 0 if result.verdict else 1


def cmd_verify(args) -> int:
    config = _load_config(args)
    problem, _, _ = build_problem(config)
    trace = IterateTrace.from_csv(args.trace, problem, scheme=args.scheme)
    report = certify_trace(problem, trace)
    if args.against:
        other = IterateTrace.from_csv(args.against, problem)
        report.add(certify_equivalence(trace, other))
    text = report.to_json(indent=2)
    if args.out:
        Path(args.out).parent.mkdir(parents=True, exist_ok=True)
        Path(args.out).write_text(text + "\n")
    print(text)
    return 0 if report.verdict else 1


def cmd_sweep(args) -> int:
    config = _load_config(args)
    values = [float(v) for v in args.values.split(",")]
    rows = sweep(config, args.param, values)
    out = Path(args.out or config.out or "out")
    write_sweep(rows, out / f"sweep_{args.param}.csv")
    for r in rows:
        print(f"{r['param']}={r['value']:<10g} {r['scheme']:<11} iters={r['iters']:<4} "
              f"G={r['final_G']:.10g} |grad|={r['final_grad_norm']:.2e} verdict={r['verdict']}")
    return 0 if all(r["verdict"] for r in rows) else 1


def cmd_check_regularizer(args) -> int:
    if args.table:
        spec = load_table(args.table)
    else:
        spec = RegularizerSpec(RegularizerKind(args.kind), args.lam)
    l_grid = np.linspace(0.0, args.l_max, args.n_l)
    lam_grid = np.geomspace(args.lambda_min, args.lambda_max, args.n_lambda)
    report = check_sp_conditions(spec, l_grid, lam_grid)
    text = report.to_json(indent=2)
    if args.out:
        Path(args.out).parent.mkdir(parents=True, exist_ok=True)
        Path(args.out).write_text(text + "\n")
    print(text)
    return 0 if report.passed else 1


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="spl", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, config_required=True):
        p.add_argument("--config", required=config_required, help="YAML experiment config")
        p.add_argument("--seed", type=int)
        p.add_argument("--out", help="output directory")

    p = sub.add_parser("gen-data", help="generate a synthetic dataset")
    common(p, config_required=False)
    p.add_argument("--n", type=int, default=50)
    p.add_argument("--d", type=int, default=5)
    p.add_argument("--noise-sigma", type=float, default=0.1)
    p.add_argument("--outlier-fraction", type=float, default=0.2)
    p.add_argument("--outlier-magnitude", type=float, default=10.0)
    p.set_defaults(func=cmd_gen_data, out="data")

    schemes = [s.value for s in Scheme]
    p = sub.add_parser("solve", help="solve and certify")
    common(p)
    p.add_argument("--scheme", choices=schemes)
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("verify", help="certify an existing trace CSV")
    common(p)
    p.add_argument("--trace", required=True)
    p.add_argument("--against", help="second trace for the equivalence check")
    p.add_argument("--scheme", choices=schemes, help="override the scheme recorded in the sidecar")
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("sweep", help="grid over lambda or eps0")
    common(p)
    p.add_argument("--param", choices=SWEEP_PARAMS, required=True)
    p.add_argument("--values", required=True, help="comma-separated values")
    p.add_argument("--scheme", choices=schemes)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("check-regularizer", help="check the regularizer conditions")
    p.add_argument("--kind", choices=[k.value for k in RegularizerKind if k is not RegularizerKind.TABULATED],
                   default="entropic")
    p.add_argument("--lambda", dest="lam", type=float, default=1.0)
    p.add_argument("--table", help="CSV with header l,v (tabulated kind)")
    p.add_argument("--l-max", type=float, default=10.0)
    p.add_argument("--n-l", type=int, default=101)
    p.add_argument("--lambda-min", type=float, default=0.1)
    p.add_argument("--lambda-max", type=float, default=10.0)
    p.add_argument("--n-lambda", type=int, default=100)
    p.add_argument("--out", help="write the JSON report here")
    p.set_defaults(func=cmd_check_regularizer)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
