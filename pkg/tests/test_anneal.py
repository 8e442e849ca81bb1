import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from aimsat import anneal, dynsys
from aimsat.anneal import (
    FlipDecision, RandomFlipConfig, RandomFlipController, TmbConfig, TmbController,
    check_recovery, decay_for, random_flip_observe, recover_make_break, tmb_observe,
    tmb_probability,
)
from aimsat.cnf import CnfFormula, all_make_break

from conftest import formulas, random_formula


def test_tmb_probability_values():
    cfg = TmbConfig(c_m=0.3, c_b=0.5)
    assert tmb_probability(0, 0, cfg) == 0.0
    assert tmb_probability(2, 0, cfg) == pytest.approx(math.tanh(0.6))
    assert tmb_probability(2, 1, cfg) == pytest.approx(math.tanh(0.6) * (1 - math.tanh(0.5)))
    p = tmb_probability(np.array([1, 2]), np.array([0, 3]), cfg)
    assert p.shape == (2,)


@given(st.integers(0, 30), st.integers(0, 30))
def test_tmb_probability_bounds_and_monotonicity(m, b):
    cfg = TmbConfig()
    p = tmb_probability(m, b, cfg)
    assert 0 <= p < 1
    assert tmb_probability(m + 1, b, cfg) >= p
    assert tmb_probability(m, b + 1, cfg) <= p


def test_config_validation():
    with pytest.raises(ValueError):
        TmbConfig(c_m=0)
    with pytest.raises(ValueError):
        TmbConfig(eval_period=-1)
    with pytest.raises(ValueError):
        RandomFlipConfig(p0=1.5)
    with pytest.raises(ValueError):
        RandomFlipConfig(decay=0)


def test_latch_fires_exactly_when_satisfied():
    f = CnfFormula.from_lists(3, [[1, 2], [-1, 3]])
    rng = np.random.default_rng(0)
    decisions, latched = tmb_observe(f, np.array([1, 0, 1], dtype=np.uint8), TmbConfig(), rng)
    assert latched and decisions == []
    decisions, latched = tmb_observe(f, np.array([0, 0, 0], dtype=np.uint8), TmbConfig(), rng)
    assert not latched


def test_only_make_positive_variables_flip():
    f = CnfFormula.from_lists(4, [[1, 2], [-1, 3]])
    x = np.array([0, 0, 0, 1], dtype=np.uint8)  # clause 1 unsat; x3, x4 have make 0
    rng = np.random.default_rng(1)
    flipped = set()
    for _ in range(200):
        ds, _ = tmb_observe(f, x, TmbConfig(c_m=5, c_b=0.1), rng)
        for d in ds:
            assert d.target == 1 - x[d.node]
            flipped.add(d.node)
    assert flipped == {0, 1}


def test_clamped_nodes_are_skipped():
    f = CnfFormula.from_lists(2, [[1, 2]])
    x = np.zeros(2, dtype=np.uint8)
    rng = np.random.default_rng(2)
    for _ in range(50):
        ds, _ = tmb_observe(f, x, TmbConfig(c_m=10), rng, clamped=np.array([True, False]))
        assert all(d.node == 1 for d in ds)


def test_flip_frequency_matches_probability():
    f = CnfFormula.from_lists(3, [[1, 2, 3], [1, -2]])
    x = np.array([0, 1, 0], dtype=np.uint8)
    cfg = TmbConfig()
    make, brk = all_make_break(f, x)
    want = tmb_probability(make, brk, cfg)
    rng = np.random.default_rng(3)
    hits = np.zeros(3)
    trials = 20000
    for _ in range(trials):
        for d in tmb_observe(f, x, cfg, rng)[0]:
            hits[d.node] += 1
    assert np.allclose(hits / trials, want, atol=0.015)


def test_random_flip_controller_decays():
    f = CnfFormula.from_lists(3, [[1, 2, 3]])
    c = RandomFlipController(f, RandomFlipConfig(p0=0.5, decay=0.5))
    c.reset(np.random.default_rng(0))
    x = np.zeros(3, dtype=np.uint8)
    for k in range(4):
        assert c.p == pytest.approx(0.5 * 0.5 ** k)
        c.observe(x, np.zeros(3, dtype=bool))
    assert c.evaluations == 4


def test_random_flip_controller_latch_option():
    f = CnfFormula.from_lists(2, [[1, 2]])
    sat = np.array([1, 0], dtype=np.uint8)
    off = RandomFlipController(f, RandomFlipConfig(p0=1.0))
    off.reset(np.random.default_rng(0))
    ds, sat_now = off.observe(sat, np.zeros(2, dtype=bool))
    assert sat_now and len(ds) == 2 and not off.latch
    on = RandomFlipController(f, RandomFlipConfig(p0=1.0, latch=True))
    on.reset(np.random.default_rng(0))
    assert on.observe(sat, np.zeros(2, dtype=bool)) == ([], True)


def test_random_flip_observe():
    ds = random_flip_observe(np.array([0, 1, 0]), 1.0, np.random.default_rng(0),
                             clamped=np.array([False, True, False]))
    assert ds == [FlipDecision(0, 1), FlipDecision(2, 1)]


def test_decay_for():
    d = decay_for(0.1, 0.001, 100)
    assert 0.1 * d ** 100 == pytest.approx(0.001)
    assert decay_for(0.1, 0.2, 10) == 1.0
    assert decay_for(0.1, 0.01, 0) == 1.0


@settings(max_examples=50, deadline=None)
@given(formulas(min_vars=2, max_vars=8), st.data())
def test_current_route_recovers_counts(f, data):
    bits = np.array(data.draw(st.lists(st.integers(0, 1), min_size=f.num_vars,
                                       max_size=f.num_vars)))
    make, brk = all_make_break(f, bits)
    for n in range(1, f.num_vars + 1):
        got = recover_make_break(f, bits, n, alpha=1.7)
        assert got == pytest.approx((make[n - 1], brk[n - 1]), abs=1e-9)
        assert check_recovery(f, bits, n)


def test_controller_uses_machine_gains():
    rng = np.random.default_rng(0)
    f = random_formula(rng, 10, 40)
    cfg = dynsys.MachineConfig(variation=dynsys.VariationModel(0.0, 0.2), seed=1)
    m = dynsys.program_cnf(f, cfg)
    c = TmbController(f)
    c.reset(np.random.default_rng(0), m)
    assert np.array_equal(c.gain_m, m.gain_m[:10])
    c.observe(np.zeros(10, dtype=np.uint8), np.zeros(10, dtype=bool))
    make, brk = c.counts()
    assert np.array_equal(make, all_make_break(f, np.zeros(10))[0])
    assert c.last_unsat >= 0
