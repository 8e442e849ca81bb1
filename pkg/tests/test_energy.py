import itertools
import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from aimsat import energy
from aimsat.cnf import CnfFormula
from aimsat.energy import (
    DegreeUnsupported, IsingProblem, PenaltyTooSmall, PuboPolynomial, QuboProblem,
    all_binary_points, bits_to_spins, ising_to_qubo, pubo_from_cnf, quadratize_kzfd,
    quadratize_rosenberg, qubo_to_ising, spins_to_bits,
)

from conftest import all_bits, formulas, naive_unsat


def test_single_clause_expansion():
    # (1-x1)(1-x2)(1-x3) = 1 - x1 - x2 - x3 + x1x2 + x1x3 + x2x3 - x1x2x3
    p = pubo_from_cnf(CnfFormula.from_lists(3, [[1, 2, 3]]))
    assert p.constant == 1
    assert p.linear == {0: 1, 1: 1, 2: 1}
    assert p.quadratic == {(0, 1): -1, (0, 2): -1, (1, 2): -1}
    assert p.cubic == {(0, 1, 2): 1}


def test_negated_literals_expansion():
    # x1 * x2 * (1 - x3) = x1x2 - x1x2x3
    p = pubo_from_cnf(CnfFormula.from_lists(3, [[-1, -2, 3]]))
    assert p.terms() == {(0, 1): 1, (0, 1, 2): -1}


@settings(max_examples=80)
@given(formulas(max_vars=7))
def test_pubo_counts_unsat_everywhere(f):
    p = pubo_from_cnf(f)
    pts = all_bits(f.num_vars)
    assert np.array_equal(p.evaluate(pts), [naive_unsat(f, b) for b in pts])
    assert p.is_integral()
    assert p.degree <= 3


def test_from_terms_and_terms_are_inverse():
    terms = {(): 2.0, (1,): -1.5, (0, 2): 3.0, (0, 1, 2): -4.0}
    p = PuboPolynomial.from_terms(3, terms)
    assert p.terms() == terms
    assert p.linear == {1: 1.5} and p.cubic == {(0, 1, 2): 4.0}
    assert p.evaluate([1, 1, 1]) == 2 - 1.5 + 3 - 4


def test_bad_keys():
    with pytest.raises(ValueError):
        PuboPolynomial(3, quadratic={(1, 0): 1.0})
    with pytest.raises(IndexError):
        PuboPolynomial(2, linear={2: 1.0})
    with pytest.raises(DegreeUnsupported):
        PuboPolynomial.from_terms(4, {(0, 1, 2, 3): 1.0})


def random_poly(rng, n):
    lin = {i: rng.normal() for i in range(n)}
    quad = {k: rng.normal() for k in itertools.combinations(range(n), 2) if rng.random() < 0.5}
    cub = {k: rng.normal() for k in itertools.combinations(range(n), 3) if rng.random() < 0.5}
    return PuboPolynomial(n, rng.normal(), lin, quad, cub)


def test_gradient_matches_central_differences():
    rng = np.random.default_rng(0)
    h = 1e-6
    for _ in range(20):
        n = int(rng.integers(3, 8))
        p = random_poly(rng, n)
        v = rng.random(n)
        num = np.array([(p.evaluate(v + h * e) - p.evaluate(v - h * e)) / (2 * h)
                        for e in np.eye(n)])
        assert np.allclose(p.gradient(v), num, rtol=1e-6, atol=1e-8)


def test_batch_evaluate_matches_rows():
    rng = np.random.default_rng(1)
    p = random_poly(rng, 5)
    pts = rng.random((7, 5))
    assert np.allclose(p.evaluate(pts), [p.evaluate(r) for r in pts])


def brute_min_over_aux(q: QuboProblem, x):
    best = np.inf
    for z in itertools.product((0, 1), repeat=q.num_aux):
        best = min(best, q.evaluate(np.concatenate([x, z])))
    return best


@pytest.mark.parametrize("rule", ["kzfd", "rosenberg"])
@settings(max_examples=40, deadline=None)
@given(f=formulas(min_vars=3, max_vars=6, max_clauses=6))
def test_quadratization_preserves_minimum(rule, f):
    p = pubo_from_cnf(f)
    q = quadratize_kzfd(p) if rule == "kzfd" else quadratize_rosenberg(p)
    assert q.num_original == f.num_vars and q.rule == rule
    for x in all_bits(f.num_vars):
        assert brute_min_over_aux(q, x) == p.evaluate(x)
        if q.num_aux <= 20:
            assert q.min_over_aux(x) == p.evaluate(x)
        for z in all_bits(q.num_aux):
            assert q.evaluate(np.concatenate([x, z])) >= p.evaluate(x)


def test_kzfd_adds_one_aux_per_cubic_term():
    f = CnfFormula.from_lists(4, [[1, 2, 3], [-1, 2, 4], [2, 3, -4], [1, -2]])
    p = pubo_from_cnf(f)
    q = quadratize_kzfd(p)
    assert len(p.cubic) == 3
    assert q.num_vars == 4 + 3
    assert q.aux_map == {4: (0, 1, 2), 5: (0, 1, 3), 6: (1, 2, 3)}


def test_kzfd_negative_term_hand_values():
    # H = -x1x2x3 -> (2 - x1 - x2 - x3) z; minimum over z equals -x1x2x3
    p = PuboPolynomial.from_terms(3, {(0, 1, 2): -1.0})
    q = quadratize_kzfd(p)
    assert q.linear == {3: -2.0}
    assert q.quadratic == {(0, 3): 1.0, (1, 3): 1.0, (2, 3): 1.0}


def test_rosenberg_shares_pair_auxiliaries():
    p = PuboPolynomial.from_terms(4, {(0, 1, 2): 1.0, (0, 1, 3): -1.0})
    q = quadratize_rosenberg(p, k=2)
    assert q.num_aux == 1
    assert q.aux_map == {4: (0, 1)}
    for x in all_bits(4):
        assert q.min_over_aux(x) == p.evaluate(x)


def test_rosenberg_penalty_must_exceed_one():
    p = PuboPolynomial.from_terms(3, {(0, 1, 2): 1.0})
    with pytest.raises(PenaltyTooSmall):
        quadratize_rosenberg(p, k=1.0)


def test_rosenberg_penalty_vanishes_only_on_product():
    p = PuboPolynomial.from_terms(3, {(0, 1, 2): 1.0})
    q = quadratize_rosenberg(p, k=3)
    for x in all_bits(3):
        for z in (0, 1):
            e = q.evaluate(np.array([*x, z], dtype=float))
            if z == x[0] * x[1]:
                assert e == p.evaluate(x)
            else:
                assert e > p.evaluate(x)


@settings(max_examples=30, deadline=None)
@given(f=formulas(min_vars=3, max_vars=5, max_clauses=5), rule=st.sampled_from(["kzfd", "rosenberg"]))
def test_ising_roundtrip(f, rule):
    p = pubo_from_cnf(f)
    q = quadratize_kzfd(p) if rule == "kzfd" else quadratize_rosenberg(p)
    s = qubo_to_ising(q)
    pts = all_bits(q.num_vars)
    assert np.allclose(s.evaluate(bits_to_spins(pts)), q.evaluate(pts))
    back = ising_to_qubo(s, q.num_original, q.aux_map)
    assert np.allclose(back.evaluate(pts), q.evaluate(pts))


def test_spin_bit_maps():
    assert bits_to_spins([0, 1]).tolist() == [-1, 1]
    assert spins_to_bits([-1, 1]).tolist() == [0, 1]
    with pytest.raises(ValueError):
        IsingProblem(2, {(1, 1): 1.0})


def test_from_matrix():
    w = np.array([[1.0, 2.0], [0.0, -3.0]])
    q = QuboProblem.from_matrix(w, constant=0.5)
    for x in all_bits(2):
        assert q.evaluate(x) == 0.5 + x @ w @ x


def test_all_binary_points_order():
    assert all_binary_points(2).tolist() == [[0, 0], [0, 1], [1, 0], [1, 1]]


def test_json_roundtrip():
    f = CnfFormula.from_lists(4, [[1, -2, 3], [2, 3, 4], [-1, -4]])
    p = pubo_from_cnf(f)
    for obj in (p, quadratize_kzfd(p), quadratize_rosenberg(p, 3.0),
                qubo_to_ising(quadratize_kzfd(p))):
        text = energy.dumps(obj)
        d = json.loads(text)
        assert d["index_base"] == 0
        assert energy.loads(text) == obj


def test_aux_map_must_cover_auxiliaries():
    with pytest.raises(ValueError):
        QuboProblem(3, num_original=2, aux_map={})
