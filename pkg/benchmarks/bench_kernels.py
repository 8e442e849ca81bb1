"""Time the compiled kernels against the numpy fallback.

    python3 benchmarks/bench_kernels.py [--n 100] [--repeat 5]

Both backends consume the same pre-drawn random numbers, so each pair of
timings also checks that the outputs agree.
"""
import argparse
import time

import numpy as np

from aimsat import _backend, bench, dynsys
from aimsat.baselines import incidence_arrays
from aimsat.cnf import count_unsat
from aimsat.energy import pubo_from_cnf


def best_of(fn, repeat):
    times = []
    out = None
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        times.append(time.perf_counter() - t0)
    return min(times), out


def cases(n, seed):
    f = bench.gen_uniform(bench.GeneratorConfig(n_vars=n, seed=seed))
    cfg = dynsys.MachineConfig()
    m = dynsys.program_cnf(f, cfg)
    rng = np.random.default_rng(seed)
    v0 = rng.random(m.num_nodes)
    x0 = (v0 >= 0.5).astype(np.uint8)
    var, neg, size = f.arrays
    occ = f.occurrences
    sa_args = incidence_arrays(pubo_from_cnf(f))
    sweeps = 50
    temps = np.geomspace(2.0, 0.05, sweeps)
    u_sa = rng.random((sweeps, n))
    u_ws = rng.random((2000, 3))
    steps = 500

    def derivative(k):
        return lambda: k.derivative(v0, np.zeros(len(v0), np.uint8), 1.0, *m.kernel_args(), 0)

    def integrate(k):
        def go():
            s = dynsys.SystemState.from_voltages(v0)
            snaps = np.empty((steps, len(v0)), np.uint8)
            k.integrate(s.v, s.x, s.clamp_until, s.clamp_target, 0.0, cfg.dt, 1.0, steps,
                        *m.kernel_args(), 0, np.empty((0, len(v0))), snaps)
            return s.v
        return go

    def make_break(k):
        def go():
            mk = np.zeros(n, dtype=np.int_)
            br = np.zeros(n, dtype=np.int_)
            k.make_break(var, neg, size, x0[:n].copy(), mk, br)
            return np.concatenate([mk, br])
        return go

    def sa(k):
        def go():
            x = x0[:n].copy()
            e = float(count_unsat(f, x))
            best = x.copy()
            k.sa_sweeps(x, e, *sa_args, temps, u_sa, best, e, np.empty(sweeps),
                        np.zeros((0, 3), np.int32), np.zeros((0, 3), np.int32),
                        np.zeros(0, np.int32), np.empty((0, n), np.uint8), 0)
            return x
        return go

    def walksat(k):
        def go():
            x = x0[:n].copy()
            m_ = f.num_clauses
            numtrue = np.zeros(m_, np.int32)
            brk = np.zeros(n, dtype=np.int_)
            unsat = np.zeros(m_, np.int32)
            where = np.zeros(m_, np.int32)
            nu = k.walksat_init(var, neg, size, x, numtrue, brk, unsat, where)
            k.walksat_flips(var, neg, size, *occ, x, numtrue, brk, unsat, where, nu, 0.5, u_ws)
            return x
        return go

    return {"derivative": derivative, f"integrate x{steps}": integrate,
            "make_break": make_break, f"sa x{sweeps} sweeps": sa, "walksat x2000 flips": walksat}


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--n", type=int, default=100)
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args(argv)
    if not _backend.COMPILED:
        raise SystemExit("compiled kernels unavailable; build with `python3 setup.py build_ext --inplace`")
    print(f"N = {args.n}, best of {args.repeat}")
    print(f"{'kernel':<22}{'cython (ms)':>13}{'python (ms)':>13}{'speedup':>10}  agree")
    for name, make in cases(args.n, args.seed).items():
        tc, oc = best_of(make(_backend.compiled), args.repeat)
        tp, op = best_of(make(_backend.pure), args.repeat)
        agree = np.allclose(np.asarray(oc, float), np.asarray(op, float), atol=1e-12)
        print(f"{name:<22}{tc * 1e3:>13.3f}{tp * 1e3:>13.3f}{tp / tc:>9.1f}x  {agree}")


if __name__ == "__main__":
    main()
