"""Annealing controllers: the tanh make/break heuristic and random flips."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Protocol

import numpy as np

from . import _backend
from .cnf import CnfFormula, make_break_counts
from .energy import pubo_from_cnf


@dataclass(frozen=True)
class TmbConfig:
    c_m: float = 0.3
    c_b: float = 0.5
    eval_period: Optional[float] = None  # None: one decision per clamp window
    latch: bool = True

    def __post_init__(self):
        if self.c_m <= 0 or self.c_b <= 0:
            raise ValueError("TMB gains must be positive")
        if self.eval_period is not None and self.eval_period <= 0:
            raise ValueError("eval_period must be positive")


@dataclass(frozen=True)
class RandomFlipConfig:
    p0: float = 0.05
    decay: float = 1.0
    eval_period: Optional[float] = None
    latch: bool = False

    def __post_init__(self):
        if not 0 <= self.p0 <= 1:
            raise ValueError("p0 must be a probability")
        if not 0 < self.decay <= 1:
            raise ValueError("decay must lie in (0, 1]")


@dataclass(frozen=True)
class FlipDecision:
    node: int  # 0-based
    target: int
    duration: Optional[float] = None  # None: the machine's clamp_duration


def tmb_probability(make, brk, cfg: TmbConfig):
    """p = tanh(c_m * make) * (1 - tanh(c_b * break)); works elementwise."""
    p = np.tanh(cfg.c_m * np.asarray(make, dtype=float)) * \
        (1.0 - np.tanh(cfg.c_b * np.asarray(brk, dtype=float)))
    return float(p) if np.ndim(p) == 0 else p


class _Counter:
    """Make/break counts for all variables through the active kernel."""

    def __init__(self, formula: CnfFormula):
        self.formula = formula
        self.var, self.neg, self.size = formula.arrays
        self.make = np.zeros(formula.num_vars, dtype=np.int_)
        self.brk = np.zeros(formula.num_vars, dtype=np.int_)
        self.unsat = -1

    def __call__(self, x) -> int:
        x = np.ascontiguousarray(x, dtype=np.uint8)
        self.unsat = int(_backend.kernels.make_break(self.var, self.neg, self.size, x,
                                                     self.make, self.brk))
        return self.unsat


def tmb_observe(formula: CnfFormula, x, cfg: TmbConfig, rng: np.random.Generator,
                clamped=None, gain_m=None, gain_b=None, _counter=None):
    """One evaluation of the heuristic on quantized bits ``x``.

    Returns ``(decisions, latched)``.  ``latched`` is true exactly when no
    clause is unsatisfied (every make count is zero); no flips are issued
    then.
    """
    counter = _counter or _Counter(formula)
    unsat = counter(x)
    if unsat == 0:
        return [], True
    cm = cfg.c_m if gain_m is None else cfg.c_m * gain_m
    cb = cfg.c_b if gain_b is None else cfg.c_b * gain_b
    p = np.tanh(cm * counter.make) * (1.0 - np.tanh(cb * counter.brk))
    hit = rng.random(formula.num_vars) < p
    if clamped is not None:
        hit &= ~np.asarray(clamped, dtype=bool)
    xs = np.asarray(x)
    return [FlipDecision(int(n), 1 - int(xs[n])) for n in np.flatnonzero(hit)], False


def random_flip_observe(x, p: float, rng: np.random.Generator, clamped=None):
    """Flip each unclamped node with probability ``p``."""
    hit = rng.random(len(x)) < p
    if clamped is not None:
        hit &= ~np.asarray(clamped, dtype=bool)
    xs = np.asarray(x)
    return [FlipDecision(int(n), 1 - int(xs[n])) for n in np.flatnonzero(hit)]


class Controller(Protocol):
    eval_period: Optional[float]
    latch: bool
    last_unsat: int

    def reset(self, rng: np.random.Generator, machine=None) -> None: ...

    def observe(self, x, clamped) -> tuple[list[FlipDecision], bool]: ...


class TmbController:
    """Per-run stateful wrapper around :func:`tmb_observe`."""

    def __init__(self, formula: CnfFormula, cfg: TmbConfig = TmbConfig()):
        self.formula = formula
        self.cfg = cfg
        self.eval_period = cfg.eval_period
        self.latch = cfg.latch
        self._counter = _Counter(formula)
        self.rng = np.random.default_rng(0)
        self.gain_m = self.gain_b = None
        self.last_unsat = -1

    def reset(self, rng, machine=None):
        self.rng = rng
        self.last_unsat = -1
        if machine is not None:
            n = self.formula.num_vars
            self.gain_m = machine.gain_m[:n]
            self.gain_b = machine.gain_b[:n]

    def observe(self, x, clamped):
        decisions, sat = tmb_observe(self.formula, x, self.cfg, self.rng, clamped,
                                     self.gain_m, self.gain_b, self._counter)
        self.last_unsat = self._counter.unsat
        return decisions, sat

    def counts(self):
        return self._counter.make.copy(), self._counter.brk.copy()


class RandomFlipController:
    """Baseline annealer: flip with probability p, then shrink p geometrically.

    After k evaluations the flip probability is ``p0 * decay**k``.
    """

    def __init__(self, formula: CnfFormula, cfg: RandomFlipConfig = RandomFlipConfig()):
        self.formula = formula
        self.cfg = cfg
        self.eval_period = cfg.eval_period
        self.latch = cfg.latch
        self.rng = np.random.default_rng(0)
        self.p = cfg.p0
        self.evaluations = 0
        self.last_unsat = -1
        self._var, self._neg, self._size = formula.arrays

    def reset(self, rng, machine=None):
        self.rng = rng
        self.p = self.cfg.p0
        self.evaluations = 0
        self.last_unsat = -1

    def observe(self, x, clamped):
        x = np.ascontiguousarray(x, dtype=np.uint8)
        self.last_unsat = _backend.kernels.count_unsat(self._var, self._neg, self._size, x)
        sat = self.last_unsat == 0
        if sat and self.latch:
            return [], True
        decisions = random_flip_observe(x, self.p, self.rng, clamped)
        self.evaluations += 1
        self.p *= self.cfg.decay
        return decisions, sat


def decay_for(p0: float, p_final: float, evaluations: int) -> float:
    """Decay factor taking ``p0`` to ``p_final`` over ``evaluations`` steps."""
    if evaluations <= 0 or p0 <= 0 or p_final >= p0:
        return 1.0
    return math.exp(math.log(p_final / p0) / evaluations)


def recover_make_break(formula: CnfFormula, bits, n: int, alpha: float = 1.0) -> tuple[float, float]:
    """Recover (make, break) for 1-based ``n`` from node current and residual.

    Mirrors the analog path: H_n (clauses touching n) splits into terms with
    v_n and a residual R without it.  make = -x_n/alpha * dv_n/dt + R, and
    break follows from dv_n/dt = alpha (1 - 2 x_n)(make - break).
    """
    sub = CnfFormula(formula.num_vars,
                     tuple(c for c in formula.clauses if n in c.variables))
    h_n = pubo_from_cnf(sub)
    x = np.asarray(bits, dtype=float)
    current = -alpha * h_n.gradient(x)[n - 1]
    x0 = x.copy()
    x0[n - 1] = 0.0
    residual = h_n.evaluate(x0)
    xn = x[n - 1]
    make = -xn / alpha * current + residual
    brk = make - current / (alpha * (1 - 2 * xn))
    return make, brk


def check_recovery(formula: CnfFormula, bits, n: int) -> bool:
    """Compare :func:`recover_make_break` against direct clause counting."""
    got = recover_make_break(formula, bits, n)
    want = make_break_counts(formula, bits, n)
    return np.allclose(got, want)
