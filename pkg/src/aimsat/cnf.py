"""CNF formulas with at most three literals per clause.

Variables are 1-based in DIMACS text and in :class:`Literal`; every array
handed to the numeric kernels is 0-based.
"""
from __future__ import annotations

import io
import logging
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

log = logging.getLogger(__name__)

MAX_CLAUSE_LEN = 3


class CnfError(ValueError):
    """Base class for formula construction and parsing errors."""


class MissingHeader(CnfError):
    pass


class VariableOutOfRange(CnfError):
    pass


class ClauseTooLong(CnfError):
    pass


class EmptyClause(CnfError):
    """A clause with no literals; the formula is trivially unsatisfiable."""


class TautologicalClause(CnfError):
    pass


class LengthMismatch(ValueError):
    pass


@dataclass(frozen=True, order=True)
class Literal:
    variable: int
    negated: bool = False

    def __post_init__(self):
        if self.variable < 1:
            raise VariableOutOfRange(f"variable index must be >= 1, got {self.variable}")

    @classmethod
    def from_int(cls, lit: int) -> "Literal":
        if lit == 0:
            raise ValueError("0 is the DIMACS clause terminator, not a literal")
        return cls(abs(lit), lit < 0)

    def to_int(self) -> int:
        return -self.variable if self.negated else self.variable

    def value(self, bit: int) -> bool:
        """Truth value of the literal when its variable has value ``bit``."""
        return bool(bit) != self.negated

    def __str__(self):
        return str(self.to_int())


@dataclass(frozen=True)
class Clause:
    literals: tuple[Literal, ...]

    def __post_init__(self):
        lits = tuple(self.literals)
        if not lits:
            raise EmptyClause("clause has no literals")
        seen: dict[int, Literal] = {}
        deduped = []
        for lit in lits:
            prev = seen.get(lit.variable)
            if prev is None:
                seen[lit.variable] = lit
                deduped.append(lit)
            elif prev.negated != lit.negated:
                raise TautologicalClause(
                    f"clause contains both x{lit.variable} and its negation"
                )
            else:
                log.warning("duplicate literal %s dropped from clause", lit)
        if len(deduped) > MAX_CLAUSE_LEN:
            raise ClauseTooLong(f"clause has {len(deduped)} literals (max {MAX_CLAUSE_LEN})")
        object.__setattr__(self, "literals", tuple(deduped))

    @classmethod
    def from_ints(cls, lits: Iterable[int]) -> "Clause":
        return cls(tuple(Literal.from_int(v) for v in lits))

    @property
    def variables(self) -> tuple[int, ...]:
        return tuple(lit.variable for lit in self.literals)

    def to_ints(self) -> list[int]:
        return [lit.to_int() for lit in self.literals]

    def is_satisfied(self, bits: Sequence[int]) -> bool:
        return any(lit.value(bits[lit.variable - 1]) for lit in self.literals)

    def __len__(self):
        return len(self.literals)


@dataclass(frozen=True)
class CnfFormula:
    num_vars: int
    clauses: tuple[Clause, ...] = field(default_factory=tuple)

    def __post_init__(self):
        object.__setattr__(self, "clauses", tuple(self.clauses))
        if self.num_vars < 0:
            raise ValueError("num_vars must be non-negative")
        for i, clause in enumerate(self.clauses):
            for lit in clause.literals:
                if lit.variable > self.num_vars:
                    raise VariableOutOfRange(
                        f"clause {i + 1} uses x{lit.variable} but num_vars={self.num_vars}"
                    )

    @classmethod
    def from_lists(cls, num_vars: int, clauses: Iterable[Iterable[int]]) -> "CnfFormula":
        return cls(num_vars, tuple(Clause.from_ints(c) for c in clauses))

    @property
    def num_clauses(self) -> int:
        return len(self.clauses)

    def to_lists(self) -> list[list[int]]:
        return [c.to_ints() for c in self.clauses]

    @cached_property
    def arrays(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Dense clause arrays for the kernels.

        Returns ``(var, neg, size)`` where ``var`` and ``neg`` are (M, 3)
        int32 arrays of 0-based variable indices and negation flags
        (padding entries are -1 / 0) and ``size`` holds clause lengths.
        """
        m = len(self.clauses)
        var = np.full((m, MAX_CLAUSE_LEN), -1, dtype=np.int32)
        neg = np.zeros((m, MAX_CLAUSE_LEN), dtype=np.int32)
        size = np.zeros(m, dtype=np.int32)
        for i, clause in enumerate(self.clauses):
            size[i] = len(clause)
            for j, lit in enumerate(clause.literals):
                var[i, j] = lit.variable - 1
                neg[i, j] = int(lit.negated)
        return var, neg, size

    @cached_property
    def occurrences(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """CSR variable -> clause incidence: ``(ptr, clause_idx, slot)``."""
        var, _, size = self.arrays
        rows, cols = [], []
        for i in range(len(size)):
            for j in range(size[i]):
                rows.append(var[i, j])
                cols.append((i, j))
        order = np.argsort(np.asarray(rows, dtype=np.int64), kind="stable")
        ptr = np.zeros(self.num_vars + 1, dtype=np.int32)
        np.add.at(ptr, np.asarray(rows, dtype=np.int64) + 1, 1)
        ptr = np.cumsum(ptr).astype(np.int32)
        cols_arr = np.asarray(cols, dtype=np.int32).reshape(-1, 2)[order]
        return ptr, np.ascontiguousarray(cols_arr[:, 0]), np.ascontiguousarray(cols_arr[:, 1])


# ---------------------------------------------------------------------------
# DIMACS I/O


def parse_dimacs(text: str | bytes) -> CnfFormula:
    """Parse DIMACS CNF text.

    Clauses may span lines; each ends with ``0``.  A ``%`` line (SATLIB
    trailer) ends the clause section.
    """
    if isinstance(text, bytes):
        text = text.decode("utf-8", errors="replace")
    num_vars = num_clauses = None
    clauses: list[Clause] = []
    current: list[int] = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("c"):
            continue
        if line.startswith("%"):
            break
        if line.startswith("p"):
            parts = line.split()
            if len(parts) != 4 or parts[1] != "cnf":
                raise MissingHeader(f"line {lineno}: malformed problem line {line!r}")
            if num_vars is not None:
                raise CnfError(f"line {lineno}: duplicate problem line")
            num_vars, num_clauses = int(parts[2]), int(parts[3])
            continue
        if num_vars is None:
            raise MissingHeader(f"line {lineno}: clause before 'p cnf' header")
        for tok in line.split():
            lit = int(tok)
            if lit == 0:
                if not current:
                    raise EmptyClause(f"line {lineno}: empty clause")
                clauses.append(_make_clause(current, num_vars, lineno))
                current = []
            else:
                current.append(lit)
    if num_vars is None:
        raise MissingHeader("no 'p cnf N M' header found")
    if current:
        clauses.append(_make_clause(current, num_vars, -1))
    if len(clauses) != num_clauses:
        log.warning("header declares %d clauses, found %d", num_clauses, len(clauses))
    return CnfFormula(num_vars, tuple(clauses))


def _make_clause(lits: list[int], num_vars: int, lineno: int) -> Clause:
    for lit in lits:
        if abs(lit) > num_vars:
            raise VariableOutOfRange(f"line {lineno}: literal {lit} exceeds N={num_vars}")
    return Clause.from_ints(lits)


def read_dimacs(path: str | Path) -> CnfFormula:
    return parse_dimacs(Path(path).read_bytes())


def write_dimacs(formula: CnfFormula, out=None, comments: Sequence[str] = ()) -> str | None:
    """Serialize to DIMACS.  Returns the text when ``out`` is None."""
    buf = io.StringIO() if out is None else out
    for c in comments:
        buf.write(f"c {c}\n")
    buf.write(f"p cnf {formula.num_vars} {formula.num_clauses}\n")
    for clause in formula.clauses:
        buf.write(" ".join(str(v) for v in clause.to_ints()) + " 0\n")
    if out is None:
        return buf.getvalue()
    return None


# ---------------------------------------------------------------------------
# Evaluation


def _check_assignment(f: CnfFormula, bits) -> np.ndarray:
    a = np.asarray(bits, dtype=np.int8).ravel()
    if a.shape[0] != f.num_vars:
        raise LengthMismatch(f"assignment has {a.shape[0]} bits, formula has {f.num_vars} vars")
    return a


def true_literal_counts(f: CnfFormula, bits) -> np.ndarray:
    """Number of true literals in each clause."""
    a = _check_assignment(f, bits)
    var, neg, _ = f.arrays
    if var.shape[0] == 0:
        return np.zeros(0, dtype=np.int32)
    vals = a[np.where(var >= 0, var, 0)].astype(np.int32) ^ neg
    vals[var < 0] = 0
    return vals.sum(axis=1)


def count_unsat(f: CnfFormula, bits) -> int:
    """Number of clauses falsified by ``bits`` (0/1 vector, length N)."""
    return int(np.count_nonzero(true_literal_counts(f, bits) == 0))


def is_satisfied(f: CnfFormula, bits) -> bool:
    return count_unsat(f, bits) == 0


def make_break_counts(f: CnfFormula, bits, n: int) -> tuple[int, int]:
    """(make, break) counts for flipping 1-based variable ``n``."""
    if not 1 <= n <= f.num_vars:
        raise IndexError(f"variable {n} out of range 1..{f.num_vars}")
    a = _check_assignment(f, bits)
    make = brk = 0
    for clause in f.clauses:
        own = None
        ntrue = 0
        for lit in clause.literals:
            val = lit.value(a[lit.variable - 1])
            ntrue += val
            if lit.variable == n:
                own = val
        if own is None:
            continue
        if ntrue == 0:
            make += 1
        elif ntrue == 1 and own:
            brk += 1
    return make, brk


def all_make_break(f: CnfFormula, bits) -> tuple[np.ndarray, np.ndarray]:
    """Vectorized make/break counts for every variable (0-based arrays)."""
    a = _check_assignment(f, bits)
    var, neg, _ = f.arrays
    make = np.zeros(f.num_vars, dtype=np.int64)
    brk = np.zeros(f.num_vars, dtype=np.int64)
    if var.shape[0] == 0:
        return make, brk
    valid = var >= 0
    vals = (a[np.where(valid, var, 0)].astype(np.int32) ^ neg) * valid
    ntrue = vals.sum(axis=1)
    unsat = (ntrue == 0)[:, None] & valid
    np.add.at(make, var[unsat], 1)
    crit = (ntrue == 1)[:, None] & (vals == 1)
    np.add.at(brk, var[crit], 1)
    return make, brk


# ---------------------------------------------------------------------------
# Models


def parse_model(text: str, num_vars: int) -> np.ndarray:
    """Read an assignment as DIMACS ``v`` lines / signed literals, or as N bits.

    Literal form is assumed when a ``v`` line or a negative number appears;
    otherwise a sequence of exactly ``num_vars`` zeros and ones is read as
    bits.  Unmentioned variables in literal form default to 0.
    """
    tokens: list[int] = []
    literal_form = False
    for line in text.splitlines():
        s = line.strip()
        if not s or s[0] in "cs":
            continue
        if s[0] == "v":
            literal_form = True
            s = s[1:]
        tokens.extend(int(t) for t in s.split())
    if not literal_form and any(t < 0 for t in tokens):
        literal_form = True
    if not literal_form and len(tokens) == num_vars and set(tokens) <= {0, 1}:
        return np.array(tokens, dtype=np.int8)
    bits = np.zeros(num_vars, dtype=np.int8)
    for t in tokens:
        if t == 0:
            continue
        if abs(t) > num_vars:
            raise VariableOutOfRange(f"model literal {t} outside 1..{num_vars}")
        bits[abs(t) - 1] = 1 if t > 0 else 0
    return bits


def model_lines(bits, width: int = 10) -> list[str]:
    """DIMACS ``v`` lines for an assignment, terminated by 0."""
    lits = [str(i + 1) if b else str(-(i + 1)) for i, b in enumerate(bits)] + ["0"]
    return ["v " + " ".join(lits[i:i + width]) for i in range(0, len(lits), width)]
