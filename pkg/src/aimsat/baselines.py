"""Software reference solvers: Metropolis SA, Schoening's walk, WalkSAT/SKC."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from . import _backend
from .cnf import CnfFormula
from .energy import DegreeUnsupported, PuboPolynomial, QuboProblem

_CHUNK_UNIFORMS = 1 << 20


@dataclass(frozen=True)
class SaConfig:
    t_initial: float = 2.0
    t_final: float = 0.05
    sweeps: int = 1000
    schedule: str = "geometric"
    seed: int = 0

    def __post_init__(self):
        if not self.t_initial >= self.t_final > 0:
            raise ValueError("need t_initial >= t_final > 0")
        if self.sweeps < 1:
            raise ValueError("sweeps must be >= 1")
        if self.schedule not in ("geometric", "linear"):
            raise ValueError("schedule must be 'geometric' or 'linear'")

    def temperatures(self) -> np.ndarray:
        if self.sweeps == 1:
            return np.array([self.t_initial])
        if self.schedule == "geometric":
            return np.geomspace(self.t_initial, self.t_final, self.sweeps)
        return np.linspace(self.t_initial, self.t_final, self.sweeps)


@dataclass
class SaResult:
    best_x: np.ndarray
    best_energy: float
    energy: float
    trace: np.ndarray
    sweeps: int
    solved_at: int = -1  # sweeps completed when first satisfied (0: satisfying start), -1 if never
    assignment: Optional[np.ndarray] = None  # original variables of the satisfying/best state
    states: Optional[np.ndarray] = None

    @property
    def success(self) -> bool:
        return self.solved_at >= 0


def incidence_arrays(p: PuboPolynomial):
    """Per-variable CSR incidence: ``lin, q_ptr, q_idx, q_w, c_ptr, c_j, c_k, c_w``."""
    lin, quad, cub = p.local_fields()
    n = p.num_vars
    q_ptr = np.zeros(n + 1, dtype=np.int32)
    q_ptr[1:] = np.cumsum([len(r) for r in quad])
    c_ptr = np.zeros(n + 1, dtype=np.int32)
    c_ptr[1:] = np.cumsum([len(r) for r in cub])
    q_idx = np.array([j for r in quad for j, _ in r], dtype=np.int32)
    q_w = np.array([w for r in quad for _, w in r], dtype=float)
    c_j = np.array([j for r in cub for j, _, _ in r], dtype=np.int32)
    c_k = np.array([k for r in cub for _, k, _ in r], dtype=np.int32)
    c_w = np.array([w for r in cub for _, _, w in r], dtype=float)
    return np.asarray(lin, dtype=float), q_ptr, q_idx, q_w, c_ptr, c_j, c_k, c_w


def sa_solve(problem: PuboPolynomial | QuboProblem, cfg: SaConfig = SaConfig(),
             formula: CnfFormula | None = None, init=None, stop_on_solution: bool = False,
             temperatures=None, record_states: bool = False, kernels=None) -> SaResult:
    """Metropolis single-flip annealing, sweeping variables in index order.

    ``formula`` enables the per-sweep satisfiability check on the original
    variables (the leading ``formula.num_vars`` entries).  Auxiliary
    consistency is not required for success.
    """
    k = kernels or _backend.kernels
    if isinstance(problem, QuboProblem):
        poly = problem.as_pubo()
    else:
        poly = problem
    if poly.degree > 3:
        raise DegreeUnsupported("SA handles at most cubic energies")
    rng = np.random.default_rng(cfg.seed)
    n = poly.num_vars
    x = (rng.random(n) < 0.5).astype(np.uint8) if init is None else \
        np.ascontiguousarray(init, dtype=np.uint8).copy()
    temps = cfg.temperatures() if temperatures is None else np.asarray(temperatures, dtype=float)
    args = incidence_arrays(poly)
    if formula is not None:
        var, neg, size = formula.arrays
        n_orig = formula.num_vars
    else:
        var = np.zeros((0, 3), dtype=np.int32)
        neg = np.zeros((0, 3), dtype=np.int32)
        size = np.zeros(0, dtype=np.int32)
        n_orig = n
    energy = poly.evaluate(x.astype(float))
    best_x = x.copy()
    best_e = energy
    trace = np.empty(len(temps))
    states = np.empty((len(temps), n), dtype=np.uint8) if record_states else None
    solved_at = -1
    solution = None
    done = 0
    # a satisfying start counts as solved before any sweep
    if formula is not None and k.count_unsat(var, neg, size, np.ascontiguousarray(x[:n_orig])) == 0:
        solved_at = 0
        solution = x[:n_orig].copy()
        if stop_on_solution:
            return SaResult(best_x, best_e, energy, trace[:0], 0, 0, solution.astype(np.int8))
    chunk = max(1, _CHUNK_UNIFORMS // max(n, 1))
    while done < len(temps):
        s_end = min(len(temps), done + chunk)
        u = rng.random((s_end - done, n))
        rec = states[done:s_end] if record_states else np.empty((0, n), dtype=np.uint8)
        tr = np.empty(s_end - done)
        energy, best_e, got, ran = k.sa_sweeps(
            x, energy, *args, np.ascontiguousarray(temps[done:s_end]), u, best_x, best_e, tr,
            var, neg, size, rec, int(stop_on_solution or solved_at < 0))
        trace[done:done + ran] = tr[:ran]
        if got >= 0 and solved_at < 0:
            solved_at = done + got + 1
            solution = x[:n_orig].copy()
        done += ran
        if stop_on_solution and solved_at >= 0:
            break
        if solved_at >= 0 and var.shape[0] > 0:
            # already solved; keep annealing without per-sweep checks
            var = np.zeros((0, 3), dtype=np.int32)
            neg = np.zeros((0, 3), dtype=np.int32)
            size = np.zeros(0, dtype=np.int32)
    assignment = solution if solution is not None else best_x[:n_orig].copy()
    return SaResult(best_x, float(best_e), float(energy), trace[:done], done, solved_at,
                    assignment.astype(np.int8), states[:done] if record_states else None)


@dataclass
class SlsResult:
    assignment: Optional[np.ndarray]
    flips: int
    tries: int
    final: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int8))

    @property
    def success(self) -> bool:
        return self.assignment is not None


def schoning_solve(f: CnfFormula, rng: np.random.Generator | int = 0, restarts: int = 1,
                   on_flip: Callable | None = None) -> SlsResult:
    """Random walk: 3N steps per try, each flipping a random variable of a random unsat clause."""
    if not isinstance(rng, np.random.Generator):
        rng = np.random.default_rng(rng)
    var, neg, size = f.arrays
    occ_ptr, occ_clause, occ_slot = f.occurrences
    n = f.num_vars
    flips = 0
    x = np.zeros(n, dtype=np.uint8)
    for attempt in range(1, restarts + 1):
        x = (rng.random(n) < 0.5).astype(np.uint8)
        numtrue = (x[np.where(var >= 0, var, 0)] ^ neg).astype(np.int32)
        numtrue[var < 0] = 0
        numtrue = numtrue.sum(axis=1).tolist()
        unsat = {m for m, c in enumerate(numtrue) if c == 0}
        for _ in range(3 * n):
            if not unsat:
                return SlsResult(x.astype(np.int8), flips, attempt, x.astype(np.int8))
            c = sorted(unsat)[int(rng.integers(len(unsat)))]
            v = int(var[c, int(rng.integers(size[c]))])
            x[v] ^= 1
            flips += 1
            for p in range(occ_ptr[v], occ_ptr[v + 1]):
                m = occ_clause[p]
                if x[v] ^ neg[m, occ_slot[p]]:
                    numtrue[m] += 1
                    unsat.discard(m)
                else:
                    numtrue[m] -= 1
                    if numtrue[m] == 0:
                        unsat.add(m)
            if on_flip is not None:
                on_flip(v, c, x)
        if not unsat:
            return SlsResult(x.astype(np.int8), flips, attempt, x.astype(np.int8))
    return SlsResult(None, flips, restarts, x.astype(np.int8))


@dataclass(frozen=True)
class WalkSatConfig:
    max_flips: int = 500_000
    noise: float = 0.5
    restarts: int = 1
    seed: int = 0

    def __post_init__(self):
        if not 0 <= self.noise <= 1:
            raise ValueError("noise must lie in [0, 1]")
        if self.max_flips < 0 or self.restarts < 1:
            raise ValueError("max_flips >= 0 and restarts >= 1 required")


class WalkSatState:
    """Incremental clause bookkeeping: true-literal counts, break counts, unsat list."""

    def __init__(self, f: CnfFormula, x, kernels=None):
        self.k = kernels or _backend.kernels
        self.f = f
        self.var, self.neg, self.size = f.arrays
        self.occ = f.occurrences
        m = f.num_clauses
        self.x = np.ascontiguousarray(x, dtype=np.uint8).copy()
        self.numtrue = np.zeros(m, dtype=np.int32)
        self.brk = np.zeros(f.num_vars, dtype=np.int_)
        self.unsat = np.zeros(m, dtype=np.int32)
        self.where = np.zeros(m, dtype=np.int32)
        self.nu = self.k.walksat_init(self.var, self.neg, self.size, self.x, self.numtrue,
                                      self.brk, self.unsat, self.where)

    def flips(self, u, noise: float, **kw) -> int:
        self.nu, done = self.k.walksat_flips(
            self.var, self.neg, self.size, *self.occ, self.x, self.numtrue, self.brk,
            self.unsat, self.where, self.nu, noise, u, **kw)
        return done


def _notify(hook, v, nu, state):
    state.nu = nu
    hook(v, state)


def walksat_skc_solve(f: CnfFormula, cfg: WalkSatConfig = WalkSatConfig(),
                      on_flip: Callable | None = None, kernels=None) -> SlsResult:
    """WalkSAT with the SKC pick rule.

    In a random unsatisfied clause: take a zero-break variable if any,
    else with probability ``noise`` a random variable, else a minimal-break
    one (ties broken at random).  ``on_flip`` forces the Python kernel.
    """
    k = kernels or _backend.kernels
    if on_flip is not None:
        k = _backend.pure
    rng = np.random.default_rng(cfg.seed)
    total = 0
    x = np.zeros(f.num_vars, dtype=np.uint8)
    for attempt in range(1, cfg.restarts + 1):
        state = WalkSatState(f, rng.random(f.num_vars) < 0.5, kernels=k)
        x = state.x
        left = cfg.max_flips
        while state.nu > 0 and left > 0:
            block = rng.random((min(left, 1 << 14), 3))
            kw = {"on_flip": (lambda v, nu, s=state: _notify(on_flip, v, nu, s))} if on_flip else {}
            done = state.flips(block, cfg.noise, **kw)
            total += done
            left -= len(block)
        if state.nu == 0:
            return SlsResult(state.x.astype(np.int8), total, attempt, state.x.astype(np.int8))
    return SlsResult(None, total, cfg.restarts, x.astype(np.int8))
