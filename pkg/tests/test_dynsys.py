import csv
import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from aimsat import dynsys
from aimsat.anneal import TmbConfig, TmbController
from aimsat.cnf import CnfFormula, all_make_break, count_unsat
from aimsat.dynsys import (
    DimensionMismatch, MachineConfig, SystemState, VariationModel, clamp_node, derivative,
    is_fixed_point, program, program_cnf, run, step,
)
from aimsat.energy import PuboPolynomial, pubo_from_cnf

from conftest import all_bits, formulas, random_formula


def uf(n, m, seed):
    rng = np.random.default_rng(seed)
    return random_formula(rng, n, m)


def test_config_defaults_and_validation():
    cfg = MachineConfig()
    assert cfg.clamp_duration == pytest.approx(0.5)
    assert MachineConfig(dt=0.02).clamp_duration == pytest.approx(1.0)
    assert MachineConfig.from_dict(cfg.to_dict()) == cfg
    assert MachineConfig(variation={"coupling_sigma": 0.1}).variation == VariationModel(0.1)
    for bad in ({"alpha": 0}, {"dt": -1}, {"multiplier_mode": "x"}, {"fan_in_limit": -1},
                {"noise_sigma": -0.1}):
        with pytest.raises(ValueError):
            MachineConfig(**bad)


@settings(max_examples=40, deadline=None)
@given(formulas(min_vars=2, max_vars=8), st.floats(0.1, 5.0), st.integers(0, 2**31))
def test_derivative_is_negative_scaled_gradient(f, alpha, seed):
    m = program_cnf(f)
    cfg = MachineConfig(alpha=alpha)
    v = np.random.default_rng(seed).random(m.num_nodes)
    got = derivative(m, SystemState.from_voltages(v), cfg)
    assert np.allclose(got, -alpha * m.pubo.gradient(v), atol=1e-12)


@settings(max_examples=40, deadline=None)
@given(formulas(min_vars=2, max_vars=8), st.integers(0, 2**31))
def test_make_break_identity_at_corners(f, seed):
    # at binary states the node current is alpha (1 - 2x)(make - break)
    m = program_cnf(f)
    x = np.random.default_rng(seed).integers(0, 2, f.num_vars)
    d = derivative(m, SystemState.from_voltages(x.astype(float)), MachineConfig(alpha=2.0))
    make, brk = all_make_break(f, x)
    assert np.array_equal(d, 2.0 * (1 - 2 * x) * (make - brk))


def test_clamped_nodes_have_zero_current():
    f = uf(6, 20, 1)
    m = program_cnf(f)
    s = SystemState.from_voltages(np.full(6, 0.3))
    s = clamp_node(s, 2, 1, 1.0)
    d = derivative(m, s)
    assert d[2] == 0.0
    assert s.v[2] == 1.0 and s.x[2] == 1 and s.clamped[2]


def test_clamp_holds_then_releases():
    f = uf(8, 30, 2)
    cfg = MachineConfig(dt=0.01)
    m = program_cnf(f)
    s = SystemState.from_voltages(np.full(8, 0.5))
    s = clamp_node(s, 0, 0, 0.1)
    for _ in range(9):
        s = step(m, s, cfg)
        assert s.v[0] == 0.0 and s.clamped[0]
    s = step(m, s, cfg)
    assert not s.clamped[0]
    assert s.t == pytest.approx(0.1)


def test_clamp_rejects_bad_input():
    s = SystemState.from_voltages([0.5, 0.5])
    with pytest.raises(IndexError):
        clamp_node(s, 2, 1, 1.0)
    with pytest.raises(ValueError):
        clamp_node(s, 0, 1, 0.0)


def test_step_stays_on_rails_and_does_not_mutate():
    f = uf(10, 42, 3)
    m = program_cnf(f)
    cfg = MachineConfig(alpha=5.0, dt=0.1)
    s = SystemState.from_voltages(np.random.default_rng(0).random(10))
    v0 = s.v.copy()
    for _ in range(50):
        s2 = step(m, s, cfg)
        assert np.all((s2.v >= 0) & (s2.v <= 1))
        assert np.array_equal(s2.x, (s2.v >= 0.5).astype(np.uint8))
        s = s2
    assert not np.array_equal(v0, s.v)


def test_dimension_mismatch():
    m = program_cnf(uf(5, 10, 0))
    with pytest.raises(DimensionMismatch):
        derivative(m, SystemState.from_voltages(np.zeros(4)))


def test_energy_descends_without_controller():
    f = uf(12, 50, 4)
    m = program_cnf(f)
    cfg = MachineConfig()
    s = SystemState.from_voltages(np.random.default_rng(5).random(12))
    h = m.energy(s.v)
    for _ in range(3000):
        s = step(m, s, cfg)
        h2 = m.energy(s.v)
        assert h2 <= h + 1e-9
        h = h2
    assert is_fixed_point(m, s, cfg)


def test_and_gate_matches_ideal_at_binary_states():
    f = uf(7, 25, 6)
    m = program_cnf(f)
    for x in all_bits(7)[::5]:
        s = SystemState.from_voltages(x.astype(float))
        a = derivative(m, s, MachineConfig())
        b = derivative(m, s, MachineConfig(multiplier_mode="and_gate"))
        assert np.array_equal(a, b)


def test_and_gate_quantizes_products():
    p = PuboPolynomial(3, cubic={(0, 1, 2): 1.0})
    m = program(p)
    s = SystemState.from_voltages([0.2, 0.7, 0.9])
    # ideal: node 0 current is v1 * v2 = 0.63; gated: bits 1 and 1 -> 1
    assert derivative(m, s)[0] == pytest.approx(0.63)
    assert derivative(m, s, MachineConfig(multiplier_mode="and_gate"))[0] == 1.0
    assert derivative(m, s, MachineConfig(multiplier_mode="and_gate"))[1] == 0.0


def test_integer_cubic_coefficients_become_unit_instances():
    p = PuboPolynomial(3, cubic={(0, 1, 2): 3.0})
    m = program(p)
    assert [len(r) for r in m.cubic_slots] == [3, 3, 3]
    assert all(w == 1.0 for r in m.cubic_slots for *_, w in r)


@pytest.mark.parametrize("limit", [1, 3, 6])
def test_fan_in_limit_reduces_overflow(limit):
    f = uf(8, 40, 7)
    p = pubo_from_cnf(f)
    m = program(p, MachineConfig(fan_in_limit=limit), formula=f)
    assert max(len(r) for r in m.cubic_slots) <= limit
    assert m.num_nodes == 8 + len(m.aux_map)
    assert m.num_original == 8
    # minimising over the auxiliaries recovers the original energy
    aux = all_bits(m.num_aux) if m.num_aux <= 12 else None
    if aux is not None:
        for x in all_bits(8)[::17]:
            pts = np.hstack([np.broadcast_to(x, (len(aux), 8)), aux]).astype(float)
            assert m.pubo.evaluate(pts).min() == count_unsat(f, x)


def test_fan_in_limit_needs_integer_cubics():
    p = PuboPolynomial(3, cubic={(0, 1, 2): 0.5})
    with pytest.raises(ValueError):
        program(p, MachineConfig(fan_in_limit=2))


def test_variation_is_seeded():
    f = uf(10, 40, 8)
    cfg = MachineConfig(variation=VariationModel(0.05, 0.1), seed=3)
    a, b = program_cnf(f, cfg), program_cnf(f, cfg)
    c = program_cnf(f, dynsys.config_with(cfg, seed=4))
    assert np.array_equal(a.c_w, b.c_w) and np.array_equal(a.gain_m, b.gain_m)
    assert not np.array_equal(a.c_w, c.c_w)
    nominal = program_cnf(f)
    assert np.allclose(a.c_w, nominal.c_w, rtol=0.5)
    assert np.all(a.gain_m >= 0)


def test_integrate_backends_agree(kernels):
    f = uf(15, 60, 9)
    cfg = MachineConfig(noise_sigma=0.05)
    m = program_cnf(f, cfg)
    ref = None
    for k in (dynsys._backend.pure, kernels):
        s = SystemState.from_voltages(np.random.default_rng(1).random(15))
        s = clamp_node(s, 3, 1, 0.2)
        snaps, nat = dynsys._advance(m, s, cfg, 200, np.random.default_rng(2), kernels=k)
        out = (s.v.copy(), s.x.copy(), s.t, nat, snaps.copy())
        if ref is None:
            ref = out
        else:
            assert np.allclose(out[0], ref[0], atol=1e-12)
            assert np.array_equal(out[1], ref[1]) and out[2:4] == ref[2:4]
            assert np.array_equal(out[4], ref[4])


def test_derivative_backends_agree(kernels):
    f = uf(12, 50, 10)
    m = program_cnf(f)
    v = np.random.default_rng(3).random(12)
    clamped = np.zeros(12, dtype=np.uint8)
    clamped[4] = 1
    for gate in (0, 1):
        a = dynsys._backend.pure.derivative(v, clamped, 1.5, *m.kernel_args(), gate)
        b = kernels.derivative(v, clamped, 1.5, *m.kernel_args(), gate)
        assert np.allclose(a, b, atol=1e-13)


def test_run_is_seed_deterministic_and_verified():
    f = uf(20, 85, 11)
    cfg = MachineConfig()
    m = program_cnf(f, cfg)
    a = run(m, cfg, TmbController(f, TmbConfig()), budget=200, seed=5)
    b = run(m, cfg, TmbController(f, TmbConfig()), budget=200, seed=5)
    assert (a.t, a.phase_points, a.flips_heuristic, a.flips_natural) == \
        (b.t, b.phase_points, b.flips_heuristic, b.flips_natural)
    assert np.array_equal(a.assignment, b.assignment)
    assert a.success == (count_unsat(f, a.assignment) == 0)
    if a.latched:
        assert a.success
    assert a.phase_points <= a.steps + a.flips_heuristic + 1


def test_run_without_controller_stops_at_fixed_point():
    f = uf(10, 42, 12)
    cfg = MachineConfig()
    tr = run(program_cnf(f, cfg), cfg, None, budget=1000, seed=0)
    assert tr.fixed_point and tr.t < 1000
    assert tr.flips_heuristic == 0


def test_zero_budget_run():
    f = uf(10, 42, 13)
    cfg = MachineConfig()
    tr = run(program_cnf(f, cfg), cfg, TmbController(f), budget=0, seed=0)
    assert tr.steps == 0 and tr.t == 0.0 and tr.phase_points == 1


def test_run_init_vector():
    f = uf(6, 10, 14)
    cfg = MachineConfig()
    m = program_cnf(f, cfg)
    tr = run(m, cfg, None, budget=0, init=np.ones(6))
    assert tr.final_state.v.tolist() == [1.0] * 6
    with pytest.raises(DimensionMismatch):
        run(m, cfg, None, budget=0, init=np.ones(5))


def test_trajectory_csv(tmp_path):
    f = uf(10, 42, 15)
    cfg = MachineConfig()
    tr = run(program_cnf(f, cfg), cfg, TmbController(f), budget=20, seed=1)
    path = tmp_path / "t.csv"
    tr.to_csv(str(path), stride=2)
    rows = list(csv.reader(path.open()))
    assert rows[0] == ["t", "H", "unsat_count", "flips_heuristic", "flips_natural", "phase_points"]
    assert len(rows) - 1 == len(tr.samples[::2])
    # the energy of a binary state counts unsatisfied clauses
    assert all(float(r[2]) >= 0 for r in rows[1:])


def test_machine_json():
    f = uf(5, 10, 16)
    cfg = MachineConfig(fan_in_limit=2)
    m = program_cnf(f, cfg)
    d = json.loads(dynsys.machine_to_json(m, cfg))
    assert d["num_original"] == 5
    assert len(d["aux_map"]) == m.num_aux
