import itertools

import numpy as np
import pytest
from hypothesis import strategies as st

from aimsat import _backend
from aimsat.cnf import CnfFormula


def random_formula(rng, n, m, max_len=3):
    clauses = []
    for _ in range(m):
        k = int(rng.integers(1, min(max_len, n) + 1))
        vs = rng.choice(n, k, replace=False) + 1
        clauses.append([int(v) if rng.random() < 0.5 else -int(v) for v in vs])
    return CnfFormula.from_lists(n, clauses)


@st.composite
def formulas(draw, min_vars=1, max_vars=8, max_clauses=12):
    n = draw(st.integers(min_vars, max_vars))
    m = draw(st.integers(0, max_clauses))
    clauses = []
    for _ in range(m):
        vs = draw(st.lists(st.integers(1, n), min_size=1, max_size=min(3, n), unique=True))
        signs = draw(st.lists(st.booleans(), min_size=len(vs), max_size=len(vs)))
        clauses.append([-v if s else v for v, s in zip(vs, signs)])
    return CnfFormula.from_lists(n, clauses)


def all_bits(n):
    return np.array(list(itertools.product((0, 1), repeat=n)), dtype=np.int8).reshape(2 ** n, n)


def naive_unsat(f, bits):
    return sum(not any((bits[abs(l) - 1] == 1) == (l > 0) for l in c) for c in f.to_lists())


BACKENDS = [_backend.pure] + ([_backend.compiled] if _backend.COMPILED else [])


@pytest.fixture(params=BACKENDS, ids=lambda k: k.__name__.rsplit(".", 1)[-1])
def kernels(request):
    return request.param


ACCEPTANCE = {}


def report(cid, passed, detail):
    """Record one acceptance line; printed in the terminal summary."""
    line = f"[{'PASS' if passed else 'FAIL'}] {cid}: {detail}"
    ACCEPTANCE[cid] = line
    print(line)
    return passed


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section(f"acceptance criteria (backend: {_backend.NAME})")
    for cid in sorted(ACCEPTANCE, key=lambda c: int(c.split()[0][1:])):
        terminalreporter.write_line(ACCEPTANCE[cid])
