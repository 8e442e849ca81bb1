"""Command-line frontend: ``aimsat {solve,convert,gen,bench,sweep,verify}``.

Exit codes follow the DIMACS solver convention: 10 when a satisfying
assignment is found or verified, 0 when none was established, 1 on errors.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import asdict
from pathlib import Path

from . import bench, energy
from .cnf import CnfError, is_satisfied, model_lines, parse_model, read_dimacs, write_dimacs

EXIT_SAT = 10
EXIT_UNKNOWN = 0
EXIT_ERROR = 1

# flag dest -> solver parameter name
_PARAM_FLAGS = {
    "alpha": "alpha", "dt": "dt", "clamp": "clamp_duration", "multiplier": "multiplier_mode",
    "fan_in": "fan_in_limit", "noise_sigma": "noise_sigma", "coupling_sigma": "coupling_sigma",
    "gain_sigma": "gain_sigma", "c_m": "c_m", "c_b": "c_b", "eval_period": "eval_period",
    "latch": "latch", "p0": "p0", "p_final": "p_final", "t_initial": "t_initial",
    "t_final": "t_final", "schedule": "schedule", "k": "k", "walk_noise": "noise",
}


def _add_solver_flags(p: argparse.ArgumentParser):
    g = p.add_argument_group("solver parameters (override --config)")
    g.add_argument("--alpha", type=float)
    g.add_argument("--dt", type=float)
    g.add_argument("--clamp", type=float, help="clamp duration (RC units)")
    g.add_argument("--multiplier", choices=("ideal", "and_gate"))
    g.add_argument("--fan-in", type=int)
    g.add_argument("--noise-sigma", type=float)
    g.add_argument("--coupling-sigma", type=float)
    g.add_argument("--gain-sigma", type=float)
    g.add_argument("--c-m", type=float)
    g.add_argument("--c-b", type=float)
    g.add_argument("--eval-period", type=float)
    g.add_argument("--latch", action=argparse.BooleanOptionalAction, default=None)
    g.add_argument("--p0", type=float)
    g.add_argument("--p-final", type=float)
    g.add_argument("--t-initial", type=float)
    g.add_argument("--t-final", type=float)
    g.add_argument("--schedule", choices=("geometric", "linear"))
    g.add_argument("--k", type=float, help="Rosenberg penalty")
    g.add_argument("--walk-noise", type=float, help="WalkSAT noise probability")
    p.add_argument("--config", type=Path, help="JSON file with solver parameters")


def solver_params(args) -> dict:
    """Defaults < JSON config < flags."""
    params: dict = {}
    if getattr(args, "config", None):
        params.update(json.loads(Path(args.config).read_text()))
    for dest, name in _PARAM_FLAGS.items():
        val = getattr(args, dest, None)
        if val is not None:
            params[name] = val
    return params


def cmd_solve(args) -> int:
    f = read_dimacs(args.file)
    params = solver_params(args)
    budget = params.pop("budget", None) if args.budget is None else args.budget
    seed = params.pop("seed", 0) if args.seed is None else args.seed
    assignment, rec = bench.solve(f, args.solver, seed, budget, params,
                                  instance=Path(args.file).stem, trace=args.trace)
    result = {k: v for k, v in asdict(rec).items() if k != "assignment"}
    if args.json:
        Path(args.json).write_text(json.dumps(asdict(rec), indent=1))
    print("c " + json.dumps(result))
    if assignment is None:
        print("s UNKNOWN")
        return EXIT_UNKNOWN
    print("s SATISFIABLE")
    for line in model_lines(assignment):
        print(line)
    return EXIT_SAT


def cmd_convert(args) -> int:
    pubo = energy.pubo_from_cnf(read_dimacs(args.file))
    if args.rule == "none":
        out = pubo
    elif args.rule == "kzfd":
        out = energy.quadratize_kzfd(pubo)
    else:
        out = energy.quadratize_rosenberg(pubo, args.k)
    if args.ising:
        if args.rule == "none":
            raise ValueError("--ising needs a quadratic rule")
        out = energy.qubo_to_ising(out)
    text = energy.dumps(out)
    if args.out:
        Path(args.out).write_text(text + "\n")
    else:
        print(text)
    return 0


def _gen_config(args) -> bench.GeneratorConfig:
    kind = {"uniform": "uniform_random"}.get(args.kind, args.kind)
    return bench.GeneratorConfig(kind, args.n, args.ratio, args.exp, args.seed)


def cmd_gen(args) -> int:
    cfg = _gen_config(args)
    pairs = bench.generate_many(cfg, args.count, args.satisfiable_only)
    if args.out is None:
        if args.count != 1:
            raise ValueError("--count > 1 needs --out DIR")
        sys.stdout.write(write_dimacs(pairs[0][1], comments=[f"{pairs[0][0]} {cfg}"]))
        return 0
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for name, f in pairs:
        (out / f"{name}.cnf").write_text(write_dimacs(f, comments=[f"{name} {cfg}"]))
    print(f"c wrote {len(pairs)} instances to {out}")
    return 0


def cmd_bench(args) -> int:
    cfg = bench.load_config(args.suite)
    _, _, summaries = bench.run_config(cfg, Path(args.suite).parent, Path(args.out), args.workers)
    for s in summaries:
        print(f"c {s.solver}: p={s.p_success:.3f} tts={s.tts:.6g} phase={s.phase_points_adjusted:.6g}")
    return 0


def _sweep_instances(args):
    if args.files:
        return [(Path(p).stem, read_dimacs(p)) for p in args.files]
    return bench.generate_many(_gen_config(args), args.count, satisfiable_only=True)


def cmd_sweep(args) -> int:
    instances = _sweep_instances(args)
    params = solver_params(args)
    spec = bench.SolverSpec(args.solver, args.solver, params)
    if args.param == "clamp":
        values = args.values or bench.log_grid(args.lo, args.hi, args.num)
        rows = bench.sweep(instances, spec, "clamp_duration", values, args.reps,
                           args.budget, args.seed, args.workers)
    else:
        cms = args.cm_values or [0.1, 0.3, 1.0]
        cbs = args.cb_values or [0.1, 0.5, 1.5]
        rows = bench.sweep(instances, spec, ("c_m", "c_b"), [(a, b) for a in cms for b in cbs],
                           args.reps, args.budget, args.seed, args.workers)
    if args.out:
        bench.write_rows_csv(rows, args.out)
        if args.plot:
            bench.plot_sweep(rows, args.plot, logx=args.param == "clamp")
    else:
        bench.write_rows_csv(rows, "/dev/stdout")
    return 0


def cmd_verify(args) -> int:
    f = read_dimacs(args.file)
    bits = parse_model(Path(args.model).read_text(), f.num_vars)
    if is_satisfied(f, bits):
        print("s SATISFIABLE")
        return EXIT_SAT
    print("s NOT SATISFIED")
    return EXIT_UNKNOWN


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="aimsat", description=__doc__.splitlines()[0])
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("solve", help="run one solver on a DIMACS file")
    p.add_argument("file")
    p.add_argument("--solver", choices=bench.SOLVERS, default="aims")
    p.add_argument("--seed", type=int)
    p.add_argument("--budget", type=float,
                   help="RC time (aims/cbrim), sweeps (SA), restarts (schoning), flips (walksat)")
    p.add_argument("--json", help="write the run record as JSON here")
    p.add_argument("--trace", help="trajectory CSV (aims/cbrim)")
    _add_solver_flags(p)
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("convert", help="CNF to PUBO/QUBO/Ising JSON")
    p.add_argument("file")
    p.add_argument("--rule", choices=("kzfd", "rosenberg", "none"), default="kzfd")
    p.add_argument("--k", type=float, default=2.0)
    p.add_argument("--ising", action="store_true")
    p.add_argument("--out")
    p.set_defaults(func=cmd_convert)

    def gen_flags(p, count=1):
        p.add_argument("--kind", choices=("uniform", "uniform_random", "scale_free"),
                       default="uniform")
        p.add_argument("--n", type=int, default=50)
        p.add_argument("--ratio", type=float, default=4.25)
        p.add_argument("--exp", type=float, default=2.8)
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--count", type=int, default=count)

    p = sub.add_parser("gen", help="generate random 3-SAT instances")
    gen_flags(p)
    p.add_argument("--satisfiable-only", action="store_true",
                   help="keep only instances with a WalkSAT certificate")
    p.add_argument("--out", help="directory (required for --count > 1)")
    p.set_defaults(func=cmd_gen)

    p = sub.add_parser("bench", help="run a JSON suite; writes CSV and SVG")
    p.add_argument("suite")
    p.add_argument("--out", default="bench_out")
    p.add_argument("--workers", type=int)
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("sweep", help="clamp or gain sweep")
    p.add_argument("--param", choices=("clamp", "gains"), required=True)
    p.add_argument("files", nargs="*", help="DIMACS files (else generated satisfiable instances)")
    gen_flags(p, count=10)
    p.add_argument("--solver", choices=("aims", "cbrim"), default="aims")
    p.add_argument("--values", type=float, nargs="+", help="explicit clamp grid")
    p.add_argument("--lo", type=float, default=0.05)
    p.add_argument("--hi", type=float, default=5.0)
    p.add_argument("--num", type=int, default=7)
    p.add_argument("--cm-values", type=float, nargs="+")
    p.add_argument("--cb-values", type=float, nargs="+")
    p.add_argument("--reps", type=int, default=1)
    p.add_argument("--budget", type=float)
    p.add_argument("--workers", type=int)
    p.add_argument("--out", help="CSV path (stdout if omitted)")
    p.add_argument("--plot", help="SVG path (needs --out)")
    _add_solver_flags(p)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("verify", help="check a model against a formula")
    p.add_argument("file")
    p.add_argument("model")
    p.set_defaults(func=cmd_verify)
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    args = ap.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="c %(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (CnfError, OSError, ValueError, KeyError, TypeError) as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
