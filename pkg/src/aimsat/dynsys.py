"""Cubic bit-based Ising machine simulated as a saturating gradient system.

Node voltages live in [0, 1]; the quantized bit of a node is ``v >= 0.5``.
Each node integrates the current ``alpha * (l_n + sum q_nj v_j + sum
c_njk v_j v_k)`` with RK4, is clipped to the rails after every step, and
can be clamped to a rail for a while by an annealing controller.
"""
from __future__ import annotations

import csv
import json
import math
from collections import defaultdict
from dataclasses import asdict, dataclass, field, replace
from typing import TYPE_CHECKING, Optional

import numpy as np

from . import _backend
from .cnf import CnfFormula
from .energy import PuboPolynomial, pubo_from_cnf

if TYPE_CHECKING:
    from .anneal import Controller


class DimensionMismatch(ValueError):
    pass


class FanInOverflowUnresolvable(RuntimeError):
    """Reserved: KZFD reduction of excess cubic terms cannot fail."""


MULTIPLIER_MODES = ("ideal", "and_gate")


@dataclass(frozen=True)
class VariationModel:
    coupling_sigma: float = 0.0
    gain_sigma: float = 0.0

    def __post_init__(self):
        if self.coupling_sigma < 0 or self.gain_sigma < 0:
            raise ValueError("variation sigmas must be non-negative")


@dataclass(frozen=True)
class MachineConfig:
    alpha: float = 1.0
    dt: float = 0.01
    multiplier_mode: str = "ideal"
    fan_in_limit: int = 0
    clamp_duration: Optional[float] = None  # defaults to 50 * dt
    variation: Optional[VariationModel] = None
    noise_sigma: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if self.alpha <= 0 or self.dt <= 0:
            raise ValueError("alpha and dt must be positive")
        if self.multiplier_mode not in MULTIPLIER_MODES:
            raise ValueError(f"multiplier_mode must be one of {MULTIPLIER_MODES}")
        if self.fan_in_limit < 0:
            raise ValueError("fan_in_limit must be >= 0")
        if self.clamp_duration is None:
            object.__setattr__(self, "clamp_duration", 50 * self.dt)
        if self.clamp_duration < 0 or self.noise_sigma < 0:
            raise ValueError("clamp_duration and noise_sigma must be >= 0")
        if isinstance(self.variation, dict):
            object.__setattr__(self, "variation", VariationModel(**self.variation))

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "MachineConfig":
        return cls(**d)


@dataclass
class SystemState:
    v: np.ndarray
    x: np.ndarray
    clamp_until: np.ndarray
    clamp_target: np.ndarray
    t: float = 0.0

    @classmethod
    def from_voltages(cls, v, t: float = 0.0) -> "SystemState":
        v = np.clip(np.asarray(v, dtype=float), 0.0, 1.0).copy()
        n = len(v)
        return cls(v, (v >= 0.5).astype(np.uint8), np.zeros(n), np.zeros(n, dtype=np.uint8), t)

    @property
    def clamped(self) -> np.ndarray:
        return self.clamp_until > 0.0

    def copy(self) -> "SystemState":
        return SystemState(self.v.copy(), self.x.copy(), self.clamp_until.copy(),
                           self.clamp_target.copy(), self.t)


@dataclass(frozen=True)
class ProgrammedMachine:
    """A problem mapped onto couplers.

    ``pubo`` is the nominal energy over all nodes (original variables
    first, then auxiliaries from fan-in reduction).  The CSR arrays hold
    the per-node coupler instances actually integrated, including any
    device variation.
    """

    pubo: PuboPolynomial
    num_original: int
    cubic_slots: tuple[tuple[tuple[int, int, float], ...], ...]
    overflow_qubo_terms: dict
    aux_map: dict
    lin: np.ndarray
    q_ptr: np.ndarray
    q_idx: np.ndarray
    q_w: np.ndarray
    c_ptr: np.ndarray
    c_j: np.ndarray
    c_k: np.ndarray
    c_w: np.ndarray
    gain_m: np.ndarray
    gain_b: np.ndarray
    formula: Optional[CnfFormula] = None

    @property
    def num_nodes(self) -> int:
        return self.pubo.num_vars

    @property
    def num_aux(self) -> int:
        return self.num_nodes - self.num_original

    def kernel_args(self):
        return (self.lin, self.q_ptr, self.q_idx, self.q_w,
                self.c_ptr, self.c_j, self.c_k, self.c_w)

    def energy(self, v) -> float:
        return self.pubo.evaluate(v)


def _csr(rows: list[list[tuple]], width: int):
    ptr = np.zeros(len(rows) + 1, dtype=np.int32)
    ptr[1:] = np.cumsum([len(r) for r in rows])
    flat = [e for r in rows for e in r]
    cols = [np.array([e[i] for e in flat], dtype=np.int32 if i < width - 1 else float)
            for i in range(width)]
    return (ptr, *cols)


def program(p: PuboPolynomial, cfg: MachineConfig = MachineConfig(),
            formula: CnfFormula | None = None) -> ProgrammedMachine:
    """Assign couplers to nodes, reduce fan-in overflow, apply variation.

    Cubic coefficients of magnitude m become ceil(m) unit instances.  With
    ``fan_in_limit > 0``, a cubic term that would push any of its nodes
    past the limit is KZFD-reduced to quadratic terms on a new auxiliary
    node instead.
    """
    d = cfg.fan_in_limit
    if d > 0 and not all(float(c).is_integer() for c in p.cubic.values()):
        raise ValueError("fan-in limited machines need integer cubic coefficients")
    n0 = p.num_vars
    used = [0] * n0
    kept: list[tuple[tuple[int, int, int], float, int]] = []
    extra: dict[tuple, float] = defaultdict(float)
    aux_map: dict[int, tuple[int, int, int]] = {}
    next_aux = n0
    for (a, b, c), coef in sorted(p.cubic.items()):
        inst = max(1, math.ceil(abs(coef)))
        if d > 0 and any(used[i] + inst > d for i in (a, b, c)):
            z = next_aux
            next_aux += 1
            aux_map[z] = (a, b, c)
            m = abs(coef)
            if coef > 0:  # additive term is -m x_a x_b x_c
                extra[(z,)] += 2 * m
                for i in (a, b, c):
                    extra[(i, z)] -= m
            else:
                extra[(z,)] += m
                extra[(a, z)] += m
                extra[(b, z)] -= m
                extra[(c, z)] -= m
                extra[(b, c)] += m
            continue
        for i in (a, b, c):
            used[i] += inst
        kept.append(((a, b, c), coef, inst))

    terms: dict[tuple, float] = defaultdict(float)
    for mono, coef in p.terms().items():
        if len(mono) < 3:
            terms[mono] += coef
    for mono, coef in extra.items():
        terms[mono] += coef
    for tri, coef, _ in kept:
        terms[tri] += -coef
    pubo = PuboPolynomial.from_terms(next_aux, terms)
    overflow = {k: v for k, v in extra.items() if v != 0}

    n = next_aux
    quad_rows: list[list[tuple]] = [[] for _ in range(n)]
    for (i, j), w in sorted(pubo.quadratic.items()):
        quad_rows[i].append((j, w))
        quad_rows[j].append((i, w))
    cub_rows: list[list[tuple]] = [[] for _ in range(n)]
    for (a, b, c), coef, inst in kept:
        w = coef / inst
        for _ in range(inst):
            cub_rows[a].append((b, c, w))
            cub_rows[b].append((a, c, w))
            cub_rows[c].append((a, b, w))
    lin = np.array([pubo.linear.get(i, 0.0) for i in range(n)])
    q_ptr, q_idx, q_w = _csr(quad_rows, 2)
    c_ptr, c_j, c_k, c_w = _csr(cub_rows, 3)

    gain_m = np.ones(n)
    gain_b = np.ones(n)
    var = cfg.variation
    if var is not None and (var.coupling_sigma > 0 or var.gain_sigma > 0):
        rng = np.random.default_rng([cfg.seed, 0x5EED])
        s = var.coupling_sigma
        lin = lin * (1 + s * rng.standard_normal(n))
        q_w = q_w * (1 + s * rng.standard_normal(len(q_w)))
        c_w = c_w * (1 + s * rng.standard_normal(len(c_w)))
        g = var.gain_sigma
        gain_m = np.clip(1 + g * rng.standard_normal(n), 0.0, None)
        gain_b = np.clip(1 + g * rng.standard_normal(n), 0.0, None)

    return ProgrammedMachine(
        pubo=pubo,
        num_original=n0,
        cubic_slots=tuple(tuple(r) for r in cub_rows),
        overflow_qubo_terms=overflow,
        aux_map=aux_map,
        lin=np.ascontiguousarray(lin, dtype=float),
        q_ptr=q_ptr, q_idx=q_idx, q_w=np.ascontiguousarray(q_w, dtype=float),
        c_ptr=c_ptr, c_j=c_j, c_k=c_k, c_w=np.ascontiguousarray(c_w, dtype=float),
        gain_m=gain_m, gain_b=gain_b,
        formula=formula,
    )


def program_cnf(f: CnfFormula, cfg: MachineConfig = MachineConfig()) -> ProgrammedMachine:
    return program(pubo_from_cnf(f), cfg, formula=f)


def _check_dims(m: ProgrammedMachine, s: SystemState):
    if len(s.v) != m.num_nodes:
        raise DimensionMismatch(f"state has {len(s.v)} nodes, machine has {m.num_nodes}")


def derivative(m: ProgrammedMachine, s: SystemState, cfg: MachineConfig = MachineConfig()) -> np.ndarray:
    """Incoming node currents dv/dt (zero on clamped nodes)."""
    _check_dims(m, s)
    return _backend.kernels.derivative(
        np.ascontiguousarray(s.v, dtype=float), s.clamped.astype(np.uint8), cfg.alpha,
        *m.kernel_args(), int(cfg.multiplier_mode == "and_gate"))


def _advance(m, s, cfg, nsteps, noise_rng=None, kernels=None):
    """In-place integration; returns (snapshots, natural_flips)."""
    k = kernels or _backend.kernels
    n = m.num_nodes
    if cfg.noise_sigma > 0:
        if noise_rng is None:
            raise ValueError("noise_sigma > 0 needs a random generator")
        noise = noise_rng.standard_normal((nsteps, n)) * (cfg.noise_sigma * cfg.dt)
    else:
        noise = np.empty((0, n))
    snaps = np.empty((nsteps, n), dtype=np.uint8)
    n_snap, natural, t = k.integrate(
        s.v, s.x, s.clamp_until, s.clamp_target, s.t, cfg.dt, cfg.alpha, nsteps,
        *m.kernel_args(), int(cfg.multiplier_mode == "and_gate"), noise, snaps)
    s.t = t
    return snaps[:n_snap], natural


def step(m: ProgrammedMachine, s: SystemState, cfg: MachineConfig = MachineConfig(),
         rng: np.random.Generator | None = None) -> SystemState:
    """One RK4 step with rail saturation and clamp bookkeeping."""
    _check_dims(m, s)
    out = s.copy()
    _advance(m, out, cfg, 1, rng)
    return out


def clamp_node(s: SystemState, n: int, target: int, duration: float) -> SystemState:
    """Hold node ``n`` (0-based) at rail ``target`` until ``t + duration``."""
    out = s.copy()
    _clamp_inplace(out, n, target, duration)
    return out


def _clamp_inplace(s: SystemState, n: int, target: int, duration: float) -> bool:
    if not 0 <= n < len(s.v):
        raise IndexError(f"node {n} out of range")
    if duration <= 0:
        raise ValueError("clamp duration must be positive")
    changed = s.x[n] != target
    s.v[n] = float(target)
    s.x[n] = target
    s.clamp_target[n] = target
    s.clamp_until[n] = s.t + duration
    return bool(changed)


def is_fixed_point(m: ProgrammedMachine, s: SystemState, cfg: MachineConfig = MachineConfig(),
                   tol: float = 1e-12) -> bool:
    """True when an RK4 step leaves every voltage unchanged (up to ``tol``)."""
    nxt = step(m, s, cfg)
    return bool(np.max(np.abs(nxt.v - s.v), initial=0.0) <= tol)


TRAJECTORY_COLUMNS = ("t", "H", "unsat_count", "flips_heuristic", "flips_natural", "phase_points")


@dataclass
class Trajectory:
    success: bool
    latched: bool
    assignment: np.ndarray
    t: float
    steps: int
    phase_points: int
    flips_heuristic: int
    flips_natural: int
    final_state: SystemState
    samples: list = field(default_factory=list)
    fixed_point: bool = False

    def to_csv(self, path_or_file, stride: int = 1):
        own = isinstance(path_or_file, str)
        fh = open(path_or_file, "w", newline="") if own else path_or_file
        try:
            w = csv.writer(fh)
            w.writerow(TRAJECTORY_COLUMNS)
            for row in self.samples[::max(1, stride)]:
                w.writerow(row)
        finally:
            if own:
                fh.close()


def _unsat(m: ProgrammedMachine, x) -> int:
    if m.formula is None:
        return int(round(m.pubo.evaluate(x.astype(float))))
    var, neg, size = m.formula.arrays
    return int(_backend.kernels.count_unsat(var, neg, size,
                                            np.ascontiguousarray(x[:m.num_original])))


def run(m: ProgrammedMachine, cfg: MachineConfig, controller: "Controller | None" = None,
        budget: float = 100.0, init=None, seed: int | None = None,
        sample: bool = True, sample_period: float | None = None) -> Trajectory:
    """Anneal until ``budget`` time units elapse or the controller latches.

    Without a controller the run also stops at a fixed point.  Returned
    ``success`` means the reported assignment satisfies the formula.
    """
    if budget < 0:
        raise ValueError("budget must be >= 0")
    ss = np.random.SeedSequence(cfg.seed if seed is None else seed)
    init_rng, noise_rng, ctrl_rng = (np.random.default_rng(s) for s in ss.spawn(3))
    n = m.num_nodes
    if init is None:
        v0 = init_rng.random(n)
    else:
        v0 = np.asarray(init, dtype=float)
        if len(v0) != n:
            if len(v0) == m.num_original:
                v0 = np.concatenate([v0, init_rng.random(n - len(v0))])
            else:
                raise DimensionMismatch("init vector length does not match machine")
    s = SystemState.from_voltages(v0)
    visited = {s.x.tobytes()}
    total_steps = int(round(budget / cfg.dt))
    if controller is not None:
        controller.reset(ctrl_rng, m)
        period = controller.eval_period or cfg.clamp_duration
    else:
        period = sample_period or 1.0
    chunk = max(1, int(round(period / cfg.dt)))
    samples: list = []
    flips_h = flips_n = steps = 0
    latched = fixed = False
    while True:
        n_orig = m.num_original
        decisions = []
        if controller is not None:
            decisions, sat_now = controller.observe(s.x[:n_orig], s.clamped[:n_orig])
            if sample:
                samples.append((s.t, m.energy(s.v), controller.last_unsat, flips_h, flips_n,
                                len(visited)))
            if sat_now and controller.latch:
                latched = True
                break
        elif sample:
            samples.append((s.t, m.energy(s.v), _unsat(m, s.x), flips_h, flips_n, len(visited)))
        if steps >= total_steps or fixed:
            break
        if decisions:
            for d in decisions:
                if _clamp_inplace(s, d.node, d.target, d.duration or cfg.clamp_duration):
                    flips_h += 1
            visited.add(s.x.tobytes())
        k = min(chunk, total_steps - steps)
        before = s.v.copy() if controller is None else None
        snaps, natural = _advance(m, s, cfg, k, noise_rng)
        steps += k
        flips_n += natural
        for row in snaps:
            visited.add(row.tobytes())
        if before is not None and not s.clamped.any() and np.array_equal(before, s.v):
            fixed = True
    assignment = s.x[:m.num_original].astype(np.int8)
    success = _unsat(m, s.x) == 0
    return Trajectory(
        success=success, latched=latched, assignment=assignment, t=s.t, steps=steps,
        phase_points=len(visited), flips_heuristic=flips_h, flips_natural=flips_n,
        final_state=s, samples=samples, fixed_point=fixed,
    )


def machine_to_json(m: ProgrammedMachine, cfg: MachineConfig) -> str:
    return json.dumps({
        "config": cfg.to_dict(),
        "pubo": m.pubo.to_dict(),
        "num_original": m.num_original,
        "aux_map": [[z, *src] for z, src in sorted(m.aux_map.items())],
    })


def config_with(cfg: MachineConfig, **kw) -> MachineConfig:
    return replace(cfg, **kw)
