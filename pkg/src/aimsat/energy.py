"""Energy functions over binary variables.

All three containers use the same subtractive sign convention::

    H(v) = constant - sum l_n v_n - sum q_nj v_n v_j - sum c_njk v_n v_j v_k

so the coefficients are exactly the currents that drive the machine
(``dv_n/dt = alpha * (l_n + sum q_nj v_j + sum c_njk v_j v_k)``).
Indices are 0-based and every key tuple is strictly increasing.
"""
from __future__ import annotations

import itertools
import json
from collections import defaultdict
from dataclasses import dataclass, field
from functools import cached_property
from typing import Mapping

import numpy as np

from .cnf import CnfFormula, LengthMismatch

Monomial = tuple  # sorted tuple of 0-based indices, () is the constant


class PenaltyTooSmall(ValueError):
    pass


class DegreeUnsupported(ValueError):
    pass


def _additive_to_fields(terms: Mapping[Monomial, float]):
    """Split additive monomial coefficients into (const, l, q, c) dicts."""
    const = 0.0
    lin, quad, cub = {}, {}, {}
    for mono, coef in terms.items():
        if coef == 0:
            continue
        if len(mono) == 0:
            const += coef
        elif len(mono) == 1:
            lin[mono[0]] = -coef
        elif len(mono) == 2:
            quad[mono] = -coef
        elif len(mono) == 3:
            cub[mono] = -coef
        else:
            raise DegreeUnsupported(f"degree {len(mono)} term {mono}")
    return const, lin, quad, cub


def _check_keys(d: Mapping, degree: int, num_vars: int):
    for key in d:
        idx = (key,) if degree == 1 else key
        if len(idx) != degree or list(idx) != sorted(set(idx)):
            raise ValueError(f"index tuple {key!r} must be strictly increasing")
        if idx[0] < 0 or idx[-1] >= num_vars:
            raise IndexError(f"index tuple {key!r} out of range for {num_vars} vars")


@dataclass(frozen=True)
class PuboPolynomial:
    num_vars: int
    constant: float = 0.0
    linear: dict[int, float] = field(default_factory=dict)
    quadratic: dict[tuple[int, int], float] = field(default_factory=dict)
    cubic: dict[tuple[int, int, int], float] = field(default_factory=dict)

    def __post_init__(self):
        for name in ("linear", "quadratic", "cubic"):
            d = {k: float(v) for k, v in getattr(self, name).items() if v != 0}
            object.__setattr__(self, name, d)
        object.__setattr__(self, "constant", float(self.constant))
        _check_keys(self.linear, 1, self.num_vars)
        _check_keys(self.quadratic, 2, self.num_vars)
        _check_keys(self.cubic, 3, self.num_vars)

    @classmethod
    def from_terms(cls, num_vars: int, terms: Mapping[Monomial, float]) -> "PuboPolynomial":
        """Build from additive coefficients ``{monomial: a}`` (H = sum a * prod v)."""
        const, lin, quad, cub = _additive_to_fields(terms)
        return cls(num_vars, const, lin, quad, cub)

    def terms(self) -> dict[Monomial, float]:
        """Additive view: ``{(): const, (n,): -l_n, (n, j): -q_nj, ...}``."""
        out: dict[Monomial, float] = {}
        if self.constant:
            out[()] = self.constant
        out.update({(n,): -c for n, c in self.linear.items()})
        out.update({k: -c for k, c in self.quadratic.items()})
        out.update({k: -c for k, c in self.cubic.items()})
        return out

    @property
    def degree(self) -> int:
        if self.cubic:
            return 3
        if self.quadratic:
            return 2
        return 1 if self.linear else 0

    def is_integral(self) -> bool:
        vals = itertools.chain([self.constant], self.linear.values(),
                               self.quadratic.values(), self.cubic.values())
        return all(float(v).is_integer() for v in vals)

    @cached_property
    def _arrays(self):
        lin = np.zeros(self.num_vars)
        for n, c in self.linear.items():
            lin[n] = c
        qi = np.array(list(self.quadratic), dtype=np.int64).reshape(-1, 2)
        qc = np.array(list(self.quadratic.values()), dtype=float)
        ci = np.array(list(self.cubic), dtype=np.int64).reshape(-1, 3)
        cc = np.array(list(self.cubic.values()), dtype=float)
        return lin, qi, qc, ci, cc

    def _vec(self, v) -> np.ndarray:
        v = np.asarray(v, dtype=float)
        if v.shape[-1] != self.num_vars:
            raise LengthMismatch(f"vector has {v.shape[-1]} entries, polynomial has {self.num_vars}")
        return v

    def evaluate(self, v) -> float | np.ndarray:
        """Energy at ``v``; a 2-D input is treated as a batch of rows."""
        v = self._vec(v)
        lin, qi, qc, ci, cc = self._arrays
        h = self.constant - v @ lin
        if len(qc):
            h = h - (v[..., qi[:, 0]] * v[..., qi[:, 1]]) @ qc
        if len(cc):
            h = h - (v[..., ci[:, 0]] * v[..., ci[:, 1]] * v[..., ci[:, 2]]) @ cc
        return h if np.ndim(h) else float(h)

    def gradient(self, v) -> np.ndarray:
        """dH/dv_n = -l_n - sum_j q_nj v_j - sum_jk c_njk v_j v_k."""
        v = self._vec(v)
        lin, qi, qc, ci, cc = self._arrays
        g = -lin.copy()
        if len(qc):
            np.add.at(g, qi[:, 0], -qc * v[qi[:, 1]])
            np.add.at(g, qi[:, 1], -qc * v[qi[:, 0]])
        if len(cc):
            a, b, c = ci[:, 0], ci[:, 1], ci[:, 2]
            np.add.at(g, a, -cc * v[b] * v[c])
            np.add.at(g, b, -cc * v[a] * v[c])
            np.add.at(g, c, -cc * v[a] * v[b])
        return g

    def local_fields(self) -> tuple[list, list, list]:
        """Per-variable incidence lists used for incremental flip energies.

        Returns ``(lin, quad, cub)`` where ``quad[n]`` lists ``(j, q_nj)``
        and ``cub[n]`` lists ``(j, k, c_njk)``.
        """
        quad = [[] for _ in range(self.num_vars)]
        cub = [[] for _ in range(self.num_vars)]
        for (a, b), c in self.quadratic.items():
            quad[a].append((b, c))
            quad[b].append((a, c))
        for (a, b, d), c in self.cubic.items():
            cub[a].append((b, d, c))
            cub[b].append((a, d, c))
            cub[d].append((a, b, c))
        lin = [self.linear.get(n, 0.0) for n in range(self.num_vars)]
        return lin, quad, cub

    def to_dict(self) -> dict:
        return {
            "type": "pubo",
            "num_vars": self.num_vars,
            "index_base": 0,
            "sign_convention": "H = constant - sum(linear) - sum(quadratic) - sum(cubic)",
            "constant": self.constant,
            "linear": [[n, c] for n, c in sorted(self.linear.items())],
            "quadratic": [[*k, c] for k, c in sorted(self.quadratic.items())],
            "cubic": [[*k, c] for k, c in sorted(self.cubic.items())],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "PuboPolynomial":
        return cls(
            d["num_vars"],
            d.get("constant", 0.0),
            {int(r[0]): r[1] for r in d.get("linear", [])},
            {(int(r[0]), int(r[1])): r[2] for r in d.get("quadratic", [])},
            {(int(r[0]), int(r[1]), int(r[2])): r[3] for r in d.get("cubic", [])},
        )


@dataclass(frozen=True)
class QuboProblem:
    """Quadratic energy with bookkeeping for the auxiliary variables.

    Variables ``0..num_original-1`` are the original ones; auxiliaries
    follow.  ``aux_map`` maps each auxiliary to the original indices it
    stands in for: a pair for Rosenberg, the whole cubic triple for KZFD.
    """

    num_vars: int
    constant: float = 0.0
    linear: dict[int, float] = field(default_factory=dict)
    quadratic: dict[tuple[int, int], float] = field(default_factory=dict)
    num_original: int | None = None
    aux_map: dict[int, tuple[int, ...]] = field(default_factory=dict)
    rule: str = "none"
    penalty_k: float | None = None

    def __post_init__(self):
        if self.num_original is None:
            object.__setattr__(self, "num_original", self.num_vars - len(self.aux_map))
        if set(self.aux_map) != set(range(self.num_original, self.num_vars)):
            raise ValueError("aux_map must cover exactly the auxiliary indices")
        # reuse PuboPolynomial for validation and numerics
        object.__setattr__(self, "_poly", PuboPolynomial(
            self.num_vars, self.constant, self.linear, self.quadratic))
        object.__setattr__(self, "linear", self._poly.linear)
        object.__setattr__(self, "quadratic", self._poly.quadratic)
        object.__setattr__(self, "constant", self._poly.constant)

    @property
    def num_aux(self) -> int:
        return self.num_vars - self.num_original

    def as_pubo(self) -> PuboPolynomial:
        return self._poly

    def evaluate(self, v):
        return self._poly.evaluate(v)

    def min_over_aux(self, x_orig) -> float:
        """Minimum energy over all auxiliary settings (brute force)."""
        x_orig = np.asarray(x_orig, dtype=float)
        if self.num_aux == 0:
            return self.evaluate(x_orig)
        if self.num_aux > 20:
            raise ValueError("too many auxiliaries for exhaustive minimisation")
        aux = _all_bits(self.num_aux)
        pts = np.hstack([np.broadcast_to(x_orig, (len(aux), len(x_orig))), aux])
        return float(np.min(self.evaluate(pts)))

    @classmethod
    def from_matrix(cls, w: np.ndarray, constant: float = 0.0) -> "QuboProblem":
        """From an energy matrix E(x) = constant + x^T W x (upper or full).

        Diagonal entries fold into the linear terms since x_i^2 = x_i.
        """
        w = np.asarray(w, dtype=float)
        n = w.shape[0]
        lin = {i: -w[i, i] for i in range(n)}
        quad = {(i, j): -(w[i, j] + w[j, i]) for i in range(n) for j in range(i + 1, n)}
        return cls(n, constant, lin, quad)

    def to_dict(self) -> dict:
        d = self._poly.to_dict()
        d.update(
            type="qubo",
            num_original=self.num_original,
            rule=self.rule,
            penalty_k=self.penalty_k,
            aux_map=[[a, *src] for a, src in sorted(self.aux_map.items())],
        )
        d.pop("cubic")
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "QuboProblem":
        p = PuboPolynomial.from_dict({**d, "cubic": []})
        return cls(
            p.num_vars, p.constant, p.linear, p.quadratic,
            num_original=d.get("num_original"),
            aux_map={int(r[0]): tuple(int(x) for x in r[1:]) for r in d.get("aux_map", [])},
            rule=d.get("rule", "none"),
            penalty_k=d.get("penalty_k"),
        )


@dataclass(frozen=True)
class IsingProblem:
    """H(s) = constant - sum_{i<j} J_ij s_i s_j - sum_i h_i s_i, s in {-1, +1}."""

    num_spins: int
    J: dict[tuple[int, int], float] = field(default_factory=dict)
    h: dict[int, float] = field(default_factory=dict)
    constant: float = 0.0

    def __post_init__(self):
        for key in self.J:
            if key[0] == key[1]:
                raise ValueError("Ising couplings have no self-interaction")
        p = PuboPolynomial(self.num_spins, self.constant, self.h, self.J)
        object.__setattr__(self, "J", p.quadratic)
        object.__setattr__(self, "h", p.linear)
        object.__setattr__(self, "_poly", p)

    def evaluate(self, spins):
        return self._poly.evaluate(spins)

    def to_dict(self) -> dict:
        return {
            "type": "ising",
            "num_spins": self.num_spins,
            "index_base": 0,
            "sign_convention": "H = constant - sum(J s s) - sum(h s)",
            "constant": self.constant,
            "h": [[n, c] for n, c in sorted(self.h.items())],
            "J": [[*k, c] for k, c in sorted(self.J.items())],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "IsingProblem":
        return cls(d["num_spins"],
                   {(int(r[0]), int(r[1])): r[2] for r in d.get("J", [])},
                   {int(r[0]): r[1] for r in d.get("h", [])},
                   d.get("constant", 0.0))


# ---------------------------------------------------------------------------
# construction


def pubo_from_cnf(f: CnfFormula) -> PuboPolynomial:
    """Energy counting unsatisfied clauses.

    A positive literal x contributes the factor (1 - x), a negated one x;
    the clause product is expanded and merged over all clauses.
    """
    acc: dict[Monomial, float] = defaultdict(float)
    for clause in f.clauses:
        # each factor is (a0 + a1 * x_var); expand the product term by term
        factors = []
        for lit in clause.literals:
            idx = lit.variable - 1
            factors.append((0.0, idx, 1.0) if lit.negated else (1.0, idx, -1.0))
        for choice in itertools.product((0, 1), repeat=len(factors)):
            coef = 1.0
            mono = []
            for pick, (a0, idx, a1) in zip(choice, factors):
                if pick:
                    coef *= a1
                    mono.append(idx)
                else:
                    coef *= a0
                if coef == 0:
                    break
            if coef:
                acc[tuple(sorted(mono))] += coef
    return PuboPolynomial.from_terms(f.num_vars, acc)


def evaluate(p: PuboPolynomial, v) -> float:
    return p.evaluate(v)


def gradient(p: PuboPolynomial, v) -> np.ndarray:
    return p.gradient(v)


def _split_cubic(p: PuboPolynomial):
    base: dict[Monomial, float] = defaultdict(float)
    for mono, a in p.terms().items():
        if len(mono) < 3:
            base[mono] += a
    return base


def quadratize_rosenberg(p: PuboPolynomial, k: float = 2.0) -> QuboProblem:
    """Replace x_a x_b by an auxiliary z with penalty k(x_a x_b - 2(x_a + x_b) z + 3z).

    Cubic terms that share a variable pair share one auxiliary.  A term
    with additive coefficient s * m contributes s * m * z * x_c plus
    m * k times the penalty.
    """
    if k <= 1:
        raise PenaltyTooSmall(f"Rosenberg penalty k must exceed 1, got {k}")
    acc = _split_cubic(p)
    pair_to_aux: dict[tuple[int, int], int] = {}
    next_idx = p.num_vars
    for (a, b, c), coef in sorted(p.cubic.items()):
        term = -coef  # additive coefficient of x_a x_b x_c
        pairs = [((a, b), c), ((a, c), b), ((b, c), a)]
        chosen = next((pc for pc in pairs if pc[0] in pair_to_aux), pairs[0])
        (i, j), rest = chosen
        if (i, j) not in pair_to_aux:
            pair_to_aux[(i, j)] = next_idx
            next_idx += 1
        z = pair_to_aux[(i, j)]
        m = abs(term)
        acc[(rest, z)] += term
        acc[(i, j)] += k * m
        acc[(i, z)] += -2 * k * m
        acc[(j, z)] += -2 * k * m
        acc[(z,)] += 3 * k * m
    const, lin, quad, _ = _additive_to_fields(acc)
    return QuboProblem(
        next_idx, const, lin, quad, num_original=p.num_vars,
        aux_map={z: pair for pair, z in pair_to_aux.items()},
        rule="rosenberg", penalty_k=float(k),
    )


def quadratize_kzfd(p: PuboPolynomial) -> QuboProblem:
    """Sign-dependent substitution with one fresh auxiliary per cubic term.

    -x1 x2 x3 -> (2 - x1 - x2 - x3) z
    +x1 x2 x3 -> (1 + x1 - x2 - x3) z + x2 x3
    Magnitudes other than one scale the whole replacement.
    """
    acc = _split_cubic(p)
    aux_map: dict[int, tuple[int, ...]] = {}
    z = p.num_vars
    for (a, b, c), coef in sorted(p.cubic.items()):
        term = -coef
        m = abs(term)
        if term < 0:
            acc[(z,)] += 2 * m
            for i in (a, b, c):
                acc[(i, z)] += -m
        else:
            acc[(z,)] += m
            acc[(a, z)] += m
            acc[(b, z)] += -m
            acc[(c, z)] += -m
            acc[(b, c)] += m
        aux_map[z] = (a, b, c)
        z += 1
    const, lin, quad, _ = _additive_to_fields(acc)
    return QuboProblem(z, const, lin, quad, num_original=p.num_vars,
                       aux_map=aux_map, rule="kzfd")


def qubo_to_ising(q: QuboProblem) -> IsingProblem:
    """Substitute x = (s + 1) / 2."""
    h: dict[int, float] = defaultdict(float)
    J: dict[tuple[int, int], float] = {}
    const = q.constant
    for i, l in q.linear.items():
        h[i] += l / 2
        const -= l / 2
    for (i, j), w in q.quadratic.items():
        J[(i, j)] = w / 4
        h[i] += w / 4
        h[j] += w / 4
        const -= w / 4
    return IsingProblem(q.num_vars, J, dict(h), const)


def ising_to_qubo(s: IsingProblem, num_original: int | None = None,
                  aux_map: dict | None = None) -> QuboProblem:
    """Substitute s = 2x - 1."""
    lin: dict[int, float] = defaultdict(float)
    quad: dict[tuple[int, int], float] = {}
    const = s.constant
    for i, hi in s.h.items():
        lin[i] += 2 * hi
        const += hi
    for (i, j), Jij in s.J.items():
        quad[(i, j)] = 4 * Jij
        lin[i] -= 2 * Jij
        lin[j] -= 2 * Jij
        const -= Jij
    return QuboProblem(s.num_spins, const, dict(lin), quad,
                       num_original=num_original, aux_map=aux_map or {})


def spins_to_bits(spins) -> np.ndarray:
    return ((np.asarray(spins) + 1) // 2).astype(np.int8)


def bits_to_spins(bits) -> np.ndarray:
    return (2 * np.asarray(bits) - 1).astype(np.int8)


def _all_bits(n: int) -> np.ndarray:
    idx = np.arange(2 ** n)[:, None]
    return ((idx >> np.arange(n)[::-1]) & 1).astype(float)


def all_binary_points(n: int) -> np.ndarray:
    """All 2**n binary vectors as rows (first variable is the high bit)."""
    return _all_bits(n)


def dumps(obj: PuboPolynomial | QuboProblem | IsingProblem, **kw) -> str:
    return json.dumps(obj.to_dict(), **kw)


def loads(text: str) -> PuboPolynomial | QuboProblem | IsingProblem:
    d = json.loads(text)
    if d.get("type") == "qubo":
        return QuboProblem.from_dict(d)
    if d.get("type") == "ising":
        return IsingProblem.from_dict(d)
    return PuboPolynomial.from_dict(d)
