"""Instance generation, solver dispatch, TTS metrics and suite orchestration."""
from __future__ import annotations

import csv
import json
import logging
import math
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Iterable, Optional, Sequence

import numpy as np

from . import anneal, baselines, dynsys
from .cnf import CnfFormula, count_unsat, read_dimacs
from .energy import pubo_from_cnf, quadratize_kzfd, quadratize_rosenberg

log = logging.getLogger(__name__)

SOLVERS = ("aims", "cbrim", "sac", "saq-kzfd", "saq-rosenberg", "schoning", "walksat")
CSV_COLUMNS = ("solver", "instance", "seed", "success", "t_run_rc", "wall_ms",
               "phase_points", "flips_h", "flips_n")


# ---------------------------------------------------------------------------
# time to solution


def tts_factor(p: float) -> float:
    """Repetitions needed for 99% confidence: log(0.01)/log(1-p), 1 once p >= 0.99."""
    if not 0 <= p <= 1:
        raise ValueError("success probability must lie in [0, 1]")
    if p >= 0.99:
        return 1.0
    if p == 0:
        return math.inf
    return math.log(0.01) / math.log1p(-p)


def compute_tts(t_run: float, p: float) -> float:
    """Expected time to reach a solution with 99% probability (inf when p == 0)."""
    if t_run <= 0:
        raise ValueError("t_run must be positive")
    return t_run * tts_factor(p)


def geometric_mean(values: Iterable[float]) -> float:
    vals = [v for v in values if v > 0 and math.isfinite(v)]
    if not vals:
        return math.inf
    return float(np.exp(np.mean(np.log(vals))))


# ---------------------------------------------------------------------------
# instance generation


@dataclass(frozen=True)
class GeneratorConfig:
    kind: str = "uniform_random"
    n_vars: int = 50
    clause_ratio: float = 4.25
    power_exponent: float = 2.8
    seed: int = 0

    def __post_init__(self):
        if self.kind not in ("uniform_random", "scale_free"):
            raise ValueError("kind must be 'uniform_random' or 'scale_free'")
        if self.n_vars < 3:
            raise ValueError("need at least 3 variables")
        if self.clause_ratio <= 0:
            raise ValueError("clause_ratio must be positive")
        if self.kind == "scale_free" and self.power_exponent <= 1:
            raise ValueError("power_exponent must exceed 1")

    @property
    def num_clauses(self) -> int:
        # round half up: 4.25 * 50 = 212.5 -> 213
        return int(math.floor(self.clause_ratio * self.n_vars + 0.5))


def _signed(rng, vs) -> list[int]:
    signs = rng.random(len(vs)) < 0.5
    return [int(v) + 1 if s else -(int(v) + 1) for v, s in zip(vs, signs)]


def gen_uniform(cfg: GeneratorConfig) -> CnfFormula:
    """Uniform random 3-SAT: 3 distinct variables per clause, fair-coin signs."""
    rng = np.random.default_rng(cfg.seed)
    clauses = [_signed(rng, rng.choice(cfg.n_vars, 3, replace=False))
               for _ in range(cfg.num_clauses)]
    return CnfFormula.from_lists(cfg.n_vars, clauses)


def scale_free_weights(n: int, beta: float, rng) -> np.ndarray:
    """Selection probabilities proportional to rank**(-1/(beta-1)), ranks shuffled."""
    w = np.arange(1, n + 1, dtype=float) ** (-1.0 / (beta - 1.0))
    w /= w.sum()
    return w[rng.permutation(n)]


def gen_scale_free(cfg: GeneratorConfig) -> CnfFormula:
    rng = np.random.default_rng(cfg.seed)
    probs = scale_free_weights(cfg.n_vars, cfg.power_exponent, rng)
    clauses = [_signed(rng, rng.choice(cfg.n_vars, 3, replace=False, p=probs))
               for _ in range(cfg.num_clauses)]
    return CnfFormula.from_lists(cfg.n_vars, clauses)


def generate(cfg: GeneratorConfig) -> CnfFormula:
    return gen_uniform(cfg) if cfg.kind == "uniform_random" else gen_scale_free(cfg)


def certify(f: CnfFormula, max_flips: int = 500_000, seed: int = 0) -> Optional[np.ndarray]:
    """A WalkSAT certificate, or None.  Incomplete: None does not prove UNSAT."""
    res = baselines.walksat_skc_solve(f, baselines.WalkSatConfig(max_flips=max_flips, seed=seed))
    return res.assignment


def generate_many(cfg: GeneratorConfig, count: int, satisfiable_only: bool = False,
                  prefix: str | None = None) -> list[tuple[str, CnfFormula]]:
    """``count`` instances with seeds cfg.seed, cfg.seed+1, ...

    With ``satisfiable_only``, instances without a WalkSAT certificate are
    skipped (the generator keeps drawing seeds).
    """
    prefix = prefix or ("uf" if cfg.kind == "uniform_random" else "sf") + str(cfg.n_vars)
    out = []
    seed = cfg.seed
    while len(out) < count:
        f = generate(GeneratorConfig(cfg.kind, cfg.n_vars, cfg.clause_ratio,
                                     cfg.power_exponent, seed))
        if not satisfiable_only or certify(f, seed=seed) is not None:
            out.append((f"{prefix}-s{seed:05d}", f))
        seed += 1
        if seed - cfg.seed > 100 * count + 100:
            raise RuntimeError("could not find enough satisfiable instances")
    return out


# ---------------------------------------------------------------------------
# running solvers


@dataclass
class RunRecord:
    solver: str
    instance: str
    seed: int
    success: bool
    t_run: float
    wall_clock: float  # milliseconds
    phase_points: int = 0
    flips_heuristic: int = 0
    flips_natural: int = 0
    assignment: Optional[list] = None
    error: Optional[str] = None

    def csv_row(self) -> list:
        return [self.solver, self.instance, self.seed, int(self.success), self.t_run,
                round(self.wall_clock, 3), self.phase_points, self.flips_heuristic,
                self.flips_natural]


@dataclass(frozen=True)
class SolverSpec:
    """A named solver setting; ``solver`` is one of :data:`SOLVERS`."""

    name: str
    solver: str
    params: dict = field(default_factory=dict)
    budget: Optional[float] = None

    def __post_init__(self):
        if self.solver not in SOLVERS:
            raise ValueError(f"unknown solver {self.solver!r}; choose from {SOLVERS}")


DEFAULT_BUDGET = {
    "aims": 1000.0,      # RC time units
    "cbrim": 1000.0,
    "sac": 1000,          # sweeps
    "saq-kzfd": 1000,
    "saq-rosenberg": 1000,
    "schoning": 1000,     # restarts
    "walksat": 500_000,   # flips
}

_MACHINE_KEYS = {"alpha", "dt", "multiplier_mode", "fan_in_limit", "clamp_duration",
                 "noise_sigma", "coupling_sigma", "gain_sigma"}


def machine_config(params: dict, seed: int) -> dynsys.MachineConfig:
    kw = {k: params[k] for k in _MACHINE_KEYS & params.keys()
          if k not in ("coupling_sigma", "gain_sigma")}
    cs, gs = params.get("coupling_sigma", 0.0), params.get("gain_sigma", 0.0)
    variation = dynsys.VariationModel(cs, gs) if (cs or gs) else None
    return dynsys.MachineConfig(**kw, variation=variation,
                                seed=params.get("machine_seed", seed))


def make_controller(solver: str, f: CnfFormula, params: dict, cfg: dynsys.MachineConfig,
                    budget: float):
    if solver == "aims":
        return anneal.TmbController(f, anneal.TmbConfig(
            c_m=params.get("c_m", 0.3), c_b=params.get("c_b", 0.5),
            eval_period=params.get("eval_period"), latch=params.get("latch", True)))
    period = params.get("eval_period") or cfg.clamp_duration
    p0 = params.get("p0", 0.05)
    decay = params.get("decay")
    if decay is None:
        decay = anneal.decay_for(p0, params.get("p_final", p0 * 1e-3), int(budget / period))
    return anneal.RandomFlipController(f, anneal.RandomFlipConfig(
        p0=p0, decay=decay, eval_period=params.get("eval_period"),
        latch=params.get("latch", False)))


def solve(f: CnfFormula, solver: str, seed: int = 0, budget: float | None = None,
          params: dict | None = None, instance: str = "-", name: str | None = None,
          trace=None) -> tuple[Optional[np.ndarray], RunRecord]:
    """Run one solver once.  Returns (verified assignment or None, record).

    Budget units: RC time for aims/cbrim, sweeps for SA, restarts for
    Schoening, flips for WalkSAT.  ``trace`` (machine solvers only) is a
    path for the per-evaluation trajectory CSV.
    """
    params = dict(params or {})
    budget = DEFAULT_BUDGET[solver] if budget is None else budget
    t0 = time.perf_counter()
    ph = fh = fn = 0
    if solver in ("aims", "cbrim"):
        cfg = machine_config(params, seed)
        m = dynsys.program_cnf(f, cfg)
        ctrl = make_controller(solver, f, params, cfg, budget)
        tr = dynsys.run(m, cfg, ctrl, budget=budget, seed=seed, sample=trace is not None)
        if trace is not None:
            tr.to_csv(str(trace))
        assignment = tr.assignment if tr.success else None
        t_run, ph, fh, fn = tr.t, tr.phase_points, tr.flips_heuristic, tr.flips_natural
    elif solver in ("sac", "saq-kzfd", "saq-rosenberg"):
        pubo = pubo_from_cnf(f)
        if solver == "sac":
            problem = pubo
        elif solver == "saq-kzfd":
            problem = quadratize_kzfd(pubo)
        else:
            problem = quadratize_rosenberg(pubo, params.get("k", 2.0))
        sa = baselines.SaConfig(params.get("t_initial", 2.0), params.get("t_final", 0.05),
                                int(budget), params.get("schedule", "geometric"), seed)
        res = baselines.sa_solve(problem, sa, formula=f, stop_on_solution=True)
        assignment = res.assignment if res.success else None
        t_run = res.solved_at if res.success else res.sweeps
    elif solver == "schoning":
        res = baselines.schoning_solve(f, np.random.default_rng(seed), restarts=int(budget))
        assignment, t_run = res.assignment, res.flips
    else:
        res = baselines.walksat_skc_solve(f, baselines.WalkSatConfig(
            max_flips=int(budget), noise=params.get("noise", 0.5), seed=seed))
        assignment, t_run = res.assignment, res.flips
    wall = (time.perf_counter() - t0) * 1e3
    if assignment is not None and count_unsat(f, assignment) != 0:
        raise AssertionError(f"{solver} returned an unverified assignment")
    rec = RunRecord(name or solver, instance, seed, assignment is not None, float(t_run), wall,
                    ph, fh, fn, None if assignment is None else [int(b) for b in assignment])
    return assignment, rec


# ---------------------------------------------------------------------------
# aggregation


@dataclass
class TtsReport:
    solver: str
    benchmark: str
    runs: int
    p_success: float
    t_run: float
    tts: float
    phase_points: float  # mean per run
    phase_points_adjusted: float  # scaled by the TTS repetition factor

    @property
    def dnf(self) -> bool:
        return math.isinf(self.tts)


def summarize(records: Sequence[RunRecord], benchmark: str | None = None) -> TtsReport:
    if not records:
        raise ValueError("no records")
    ok = [r for r in records if r.error is None]
    p = sum(r.success for r in ok) / len(ok) if ok else 0.0
    t_run = float(np.mean([r.t_run for r in ok])) if ok else math.nan
    factor = tts_factor(p)
    tts = t_run * factor if t_run > 0 else (0.0 if p > 0 else math.inf)
    phase = float(np.mean([r.phase_points for r in ok])) if ok else math.nan
    return TtsReport(records[0].solver, benchmark or records[0].instance, len(records), p,
                     t_run, tts, phase, phase * factor)


def suite_summary(reports: Sequence[TtsReport], suite: str) -> TtsReport:
    """Geometric means over the finite per-instance values."""
    return TtsReport(
        reports[0].solver, suite, sum(r.runs for r in reports),
        float(np.mean([r.p_success for r in reports])),
        geometric_mean(r.t_run for r in reports),
        geometric_mean(r.tts for r in reports),
        geometric_mean(r.phase_points for r in reports),
        geometric_mean(r.phase_points_adjusted for r in reports),
    )


# ---------------------------------------------------------------------------
# suites


def _job(args):
    f, spec, inst, seed, budget = args
    try:
        _, rec = solve(f, spec.solver, seed, budget, spec.params, inst, spec.name)
    except Exception as exc:  # keep the suite going
        log.warning("%s on %s (seed %d) failed: %s", spec.name, inst, seed, exc)
        rec = RunRecord(spec.name, inst, seed, False, float(budget or 0), 0.0, error=str(exc))
    return rec


def default_workers() -> int:
    return max(1, int(os.environ.get("AIMSAT_WORKERS", "1")))


def run_suite(instances: Sequence[tuple[str, CnfFormula]], solvers: Sequence[SolverSpec],
              reps: int = 10, budget: float | None = None, seed: int = 0,
              workers: int | None = None) -> tuple[list[RunRecord], list[TtsReport]]:
    """Run every (instance, solver) pair ``reps`` times with seeds seed..seed+reps-1."""
    jobs = []
    for inst, f in instances:
        for spec in solvers:
            b = spec.budget if spec.budget is not None else budget
            for r in range(reps):
                jobs.append((f, spec, inst, seed + r, b))
    workers = workers or default_workers()
    if workers > 1:
        with ProcessPoolExecutor(workers) as pool:
            records = list(pool.map(_job, jobs, chunksize=max(1, len(jobs) // (4 * workers))))
    else:
        records = [_job(j) for j in jobs]
    records.sort(key=lambda r: (r.instance, r.solver, r.seed))
    reports = []
    groups: dict[tuple[str, str], list[RunRecord]] = {}
    for r in records:
        groups.setdefault((r.instance, r.solver), []).append(r)
    for (inst, _), recs in groups.items():
        reports.append(summarize(recs, inst))
    return records, reports


def sweep(instances: Sequence[tuple[str, CnfFormula]], base: SolverSpec, param: str,
          values: Sequence, reps: int = 1, budget: float | None = None, seed: int = 0,
          workers: int | None = None) -> list[dict]:
    """Success probability and flip counts as one parameter varies.

    ``param`` may name a tuple of keys (e.g. ``("c_m", "c_b")``) with tuple values.
    """
    rows = []
    for val in values:
        params = dict(base.params)
        if isinstance(param, tuple):
            params.update(zip(param, val))
        else:
            params[param] = val
        spec = SolverSpec(base.name, base.solver, params, base.budget)
        records, _ = run_suite(instances, [spec], reps, budget, seed, workers)
        ok = [r for r in records if r.error is None]
        rows.append({
            "param": "/".join(param) if isinstance(param, tuple) else param,
            "value": val,
            "runs": len(records),
            "p_success": sum(r.success for r in ok) / max(1, len(ok)),
            "t_run": float(np.mean([r.t_run for r in ok])) if ok else math.nan,
            "flips_h": float(np.mean([r.flips_heuristic for r in ok])) if ok else math.nan,
            "flips_n": float(np.mean([r.flips_natural for r in ok])) if ok else math.nan,
            "phase_points": float(np.mean([r.phase_points for r in ok])) if ok else math.nan,
        })
    return rows


def log_grid(lo: float, hi: float, num: int) -> list[float]:
    return [float(v) for v in np.geomspace(lo, hi, num)]


# ---------------------------------------------------------------------------
# artifacts


def write_records_csv(records: Sequence[RunRecord], path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(CSV_COLUMNS)
        for r in records:
            w.writerow(r.csv_row())


def read_records_csv(path) -> list[RunRecord]:
    out = []
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            out.append(RunRecord(row["solver"], row["instance"], int(row["seed"]),
                                 bool(int(row["success"])), float(row["t_run_rc"]),
                                 float(row["wall_ms"]), int(row["phase_points"]),
                                 int(row["flips_h"]), int(row["flips_n"])))
    return out


def write_reports_csv(reports: Sequence[TtsReport], path) -> None:
    cols = list(asdict(reports[0]).keys()) if reports else ["solver"]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(cols)
        for r in reports:
            w.writerow([asdict(r)[c] for c in cols])


def write_rows_csv(rows: Sequence[dict], path) -> None:
    if not rows:
        Path(path).write_text("")
        return
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=list(rows[0].keys()))
        w.writeheader()
        w.writerows(rows)


def plot_tts(reports: Sequence[TtsReport], path) -> None:
    """Box plot of per-instance TTS by solver (quartile box, 1.5 IQR whiskers)."""
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    by_solver: dict[str, list[float]] = {}
    for r in reports:
        if not r.dnf:
            by_solver.setdefault(r.solver, []).append(r.tts)
    fig, ax = plt.subplots(figsize=(6, 4))
    names = sorted(by_solver)
    if names:
        ax.boxplot([by_solver[n] for n in names], whis=1.5)
        ax.set_xticks(range(1, len(names) + 1), names)
        ax.set_yscale("log")
    ax.set_ylabel("TTS (solver units)")
    fig.tight_layout()
    fig.savefig(path, format="svg")
    plt.close(fig)


def plot_sweep(rows: Sequence[dict], path, logx: bool = True) -> None:
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, (a1, a2) = plt.subplots(1, 2, figsize=(9, 3.5))
    xs = [r["value"] if not isinstance(r["value"], (tuple, list)) else i
          for i, r in enumerate(rows)]
    a1.plot(xs, [100 * r["p_success"] for r in rows], marker="o")
    a1.set_ylabel("success probability (%)")
    a2.plot(xs, [r["flips_h"] for r in rows], marker="o", label="heuristic")
    a2.plot(xs, [r["flips_n"] for r in rows], marker="s", label="natural")
    a2.set_ylabel("flips per run")
    a2.legend()
    for ax in (a1, a2):
        ax.set_xlabel(rows[0]["param"] if rows else "")
        if logx and all(isinstance(x, (int, float)) and x > 0 for x in xs):
            ax.set_xscale("log")
    fig.tight_layout()
    fig.savefig(path, format="svg")
    plt.close(fig)


# ---------------------------------------------------------------------------
# suite configuration files


def load_instances(spec, base_dir: Path = Path(".")) -> list[tuple[str, CnfFormula]]:
    """Instances from a list of DIMACS paths or a ``{"generate": {...}}`` block."""
    if isinstance(spec, dict) and "generate" in spec:
        g = dict(spec["generate"])
        count = int(g.pop("count", 1))
        sat_only = bool(g.pop("satisfiable_only", True))
        cfg = GeneratorConfig(**{k: g[k] for k in
                                 ("kind", "n_vars", "clause_ratio", "power_exponent", "seed")
                                 if k in g})
        return generate_many(cfg, count, sat_only)
    out = []
    for p in spec:
        path = Path(p) if Path(p).is_absolute() else base_dir / p
        out.append((path.stem, read_dimacs(path)))
    return out


def run_config(config: dict, base_dir: Path = Path("."), out_dir: Path | None = None,
               workers: int | None = None):
    instances = load_instances(config["instances"], base_dir)
    solvers = [SolverSpec(s.get("name", s["solver"]), s["solver"], s.get("params", {}),
                          s.get("budget")) for s in config["solvers"]]
    records, reports = run_suite(instances, solvers, config.get("reps", 10),
                                 config.get("budget"), config.get("seed", 0), workers)
    by_solver: dict[str, list[TtsReport]] = {}
    for r in reports:
        by_solver.setdefault(r.solver, []).append(r)
    summaries = [suite_summary(v, config.get("name", "suite")) for v in by_solver.values()]
    if out_dir is not None:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        write_records_csv(records, out_dir / "runs.csv")
        write_reports_csv(reports, out_dir / "tts.csv")
        write_reports_csv(summaries, out_dir / "summary.csv")
        plot_tts(reports, out_dir / "tts.svg")
    return records, reports, summaries


def load_config(path) -> dict:
    return json.loads(Path(path).read_text())
