import json
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from herald_sim.dynamics import evolve_effective
from herald_sim.effective import balanced_model, effective_numeric
from herald_sim.model import PhysicalParams, caption_params
from herald_sim.protocol import (
    CZ,
    H1,
    I2,
    Channel,
    GateResult,
    GateVariant,
    HeraldedCZ,
    Level,
    LogicalCircuit,
    ProtocolDegenerate,
    SingleQubitGate,
    apply_circuit_channel,
    collective_dephasing,
    correction_phases,
    dfs_indices,
    logical_cnot,
    logical_hadamard,
    logical_unitary,
    phase_aligned_distance,
    plus_plus,
    prepare_params,
    pulse_time,
    run_cphase,
    run_cphase_dfs,
    run_cphase_nonlocal,
    single_qubit_correction,
)

CNOT = np.array([[1, 0, 0, 0], [0, 1, 0, 0], [0, 0, 0, 1], [0, 0, 1, 0]], dtype=complex)
finite = st.floats(-1e3, 1e3, allow_nan=False)


# -------------------------------------------------------------- pulse & phases

def test_pulse_time_examples():
    t, T = pulse_time((0.0, 0.0, 1.0))
    assert t == pytest.approx(math.pi)
    assert T == pytest.approx(math.pi)
    t, T = pulse_time((0.0, -1.0, -1.0))
    assert t == pytest.approx(math.pi)
    assert T == pytest.approx(math.pi)
    t, T = pulse_time((0.0, 1.0, 0.0))
    assert T == math.inf


def test_pulse_time_degenerate():
    with pytest.raises(ProtocolDegenerate):
        pulse_time((1.0, 2.0, 3.0))
    with pytest.raises(ProtocolDegenerate):
        pulse_time((0.0, 0.0, math.nan))


@settings(max_examples=50, deadline=None)
@given(finite, finite, finite)
def test_correction_turns_phases_into_cz(d0, d1, d2):
    den = d2 - 2 * d1 + d0
    if abs(den) < 1e-3:
        return
    t, _ = pulse_time((d0, d1, d2))
    u = single_qubit_correction(d0, d1, t)
    assert np.allclose(u.conj().T @ u, I2)
    assert abs(np.linalg.det(u)) == pytest.approx(1.0)
    # sectors |00>, |01>, |10>, |11> carry N = 0, 1, 1, 2
    dyn = np.diag(np.exp(-1j * np.array([d0, d1, d1, d2]) * t))
    assert np.allclose(np.kron(u, u) @ dyn, CZ, atol=1e-9)


def test_correction_phases_values():
    assert correction_phases(2.0, 3.0, 1.0) == (1.0, 2.0)


# -------------------------------------------------------------- full gate runs

def test_nonlocal_full_values(gate_run):
    r = gate_run("nonlocal", 100.0, 10.0, 100.0)
    assert r.variant is GateVariant.NONLOCAL and r.level is Level.FULL
    assert r.P_success == pytest.approx(0.2292, abs=5e-4)
    assert r.infidelity == pytest.approx(7.94e-4, rel=0.02)
    assert r.P_success < r.P_analytic
    assert r.leakage < 1e-3
    d = r.diagnostics
    assert d["max_trace_error"] < 1e-9 and d["min_eigenvalue"] > -1e-9


def test_probability_grows_with_cooperativity(gate_run):
    lo = gate_run("nonlocal", 100.0, 10.0, 100.0)
    hi = gate_run("nonlocal", 600.0, 10.0, 180.0)
    assert hi.P_success > lo.P_success
    assert hi.infidelity < lo.infidelity


def test_dfs_full_values(gate_run):
    r = gate_run("dfs", 600.0, 1.84, 220.0)
    assert r.variant is GateVariant.DFS
    assert r.P_success == pytest.approx(0.7339, abs=1e-3)
    assert r.infidelity < 2.4e-4


def test_variant_guards():
    p_nl, _ = prepare_params(100.0, 10.0, 100.0, "nonlocal")
    p_dfs, _ = prepare_params(100.0, 1.84, 100.0, "dfs")
    with pytest.raises(ValueError):
        run_cphase_dfs(p_nl, "analytic")
    with pytest.raises(ValueError):
        run_cphase_nonlocal(p_dfs, "analytic")
    with pytest.raises(ValueError):
        prepare_params(100.0, 1.0, 100.0, "triangle")


def test_no_drive_cannot_herald():
    p, _ = prepare_params(100.0, 10.0, 100.0)
    with pytest.raises(ValueError, match="does not couple"):
        run_cphase(p.replace(Omega=0.0), "effective")


def test_levels_agree_roughly():
    p, _ = prepare_params(100.0, 10.0, 100.0)
    eff = run_cphase(p, "effective")
    ana = run_cphase(p, "analytic")
    assert ana.P_success == ana.P_analytic == pytest.approx(math.exp(-ana.Gamma * ana.t_gate))
    assert eff.P_success == pytest.approx(ana.P_success, rel=0.1)
    assert eff.t_gate == ana.t_gate


# -------------------------------------------------------------- effective level

@pytest.mark.parametrize("variant,C,lam,dE2", [("nonlocal", 600.0, 10.0, 180.0), ("dfs", 600.0, 1.84, 220.0)])
def test_balanced_effective_gate_is_exact(variant, C, lam, dE2):
    p, _ = prepare_params(C, lam, dE2, variant)
    for source in ("numeric", "balanced"):
        r = run_cphase(p, "effective", balanced=True, shift_source=source)
        assert abs(1 - r.fidelity) < 1e-12
        assert r.P_success == pytest.approx(math.exp(-r.Gamma * r.t_gate), rel=1e-12)


def test_balanced_preserves_coherence_magnitudes():
    p, Gamma = prepare_params(600.0, 10.0, 180.0)
    bal = balanced_model(effective_numeric(p), Gamma)
    rng = np.random.default_rng(2)
    a = rng.normal(size=(4, 4)) + 1j * rng.normal(size=(4, 4))
    rho = a @ a.conj().T
    rho /= np.trace(rho)
    out, P = evolve_effective(rho, bal, 4000.0)
    assert np.allclose(np.abs(out / P), np.abs(rho), atol=1e-12)


def test_process_fidelity_effective():
    p, _ = prepare_params(600.0, 10.0, 180.0)
    r = run_cphase(p, "effective", balanced=True, process=True)
    assert r.process_fidelity == pytest.approx(1.0, abs=1e-12)
    ch = r.channel
    assert np.allclose(ch.apply(plus_plus()), CZ @ plus_plus() @ CZ)


# -------------------------------------------------------------- serialization

def test_result_json_round_trip(gate_run):
    r = gate_run("nonlocal", 100.0, 10.0, 100.0)
    d = json.loads(r.to_json())
    assert d["variant"] == "NonlocalCZ" and d["level"] == "full"
    assert d["infidelity"] == pytest.approx(r.infidelity)
    assert PhysicalParams.from_dict(d["params_echo"]) == r.params_echo
    assert isinstance(r, GateResult)


def test_scale_invariance():
    p, _ = prepare_params(100.0, 10.0, 100.0)
    a = run_cphase(p, "full", samples=5)
    b = run_cphase(p.scaled(3.0), "full", samples=5)
    assert b.t_gate == pytest.approx(a.t_gate / 3.0, rel=1e-9)
    assert b.P_success == pytest.approx(a.P_success, abs=1e-8)
    assert b.fidelity == pytest.approx(a.fidelity, abs=1e-8)


def test_unscaled_caption_gamma():
    a = caption_params(100.0, 10.0, 100.0)
    b = caption_params(100.0, 10.0, 100.0, gamma=2.0)
    assert b.g == pytest.approx(2 * a.g)
    assert b.Omega_m == pytest.approx(2 * a.Omega_m)


# -------------------------------------------------------------- logical layer

def test_logical_hadamard():
    hl = logical_hadamard()
    assert len(hl.heralded()) == 1
    assert phase_aligned_distance(logical_unitary(hl), H1) < 1e-12
    assert phase_aligned_distance(logical_unitary(hl.then(hl)), I2) < 1e-12


def test_logical_hadamard_stays_in_subspace():
    U = logical_hadamard().unitary()
    idx = dfs_indices(1)
    block = U[np.ix_(idx, idx)]
    assert np.allclose(block.conj().T @ block, I2, atol=1e-12)


def test_logical_cnot():
    c = logical_cnot()
    assert len(c.heralded()) == 3
    assert [e.variant for e in c.heralded()] == [GateVariant.DFS, GateVariant.NONLOCAL, GateVariant.DFS]
    assert phase_aligned_distance(logical_unitary(c), CNOT) < 1e-12


def test_dfs_indices():
    assert dfs_indices(1) == [1, 2]
    assert dfs_indices(2) == [5, 6, 9, 10]


@settings(max_examples=30, deadline=None)
@given(st.floats(-10, 10), st.floats(-10, 10))
def test_collective_dephasing_leaves_logical_states(phi, theta):
    Udeph = collective_dephasing(phi, theta)
    idx = dfs_indices(2)
    assert np.allclose(Udeph[np.ix_(idx, idx)], np.eye(4), atol=1e-12)
    # dephasing before the circuit does not change the logical action
    U = logical_cnot().unitary()
    assert np.allclose((U @ Udeph)[np.ix_(idx, idx)], U[np.ix_(idx, idx)], atol=1e-12)


def test_circuit_composition_associative():
    a = LogicalCircuit((1, 2), [SingleQubitGate("H", 1)])
    b = LogicalCircuit((1, 2), [HeraldedCZ((1, 2), GateVariant.DFS)])
    c = LogicalCircuit((1, 2), [SingleQubitGate("S", 2), SingleQubitGate("X", 1)])
    assert np.allclose(a.then(b).then(c).unitary(), a.then(b.then(c)).unitary())
    assert np.allclose(a.then(b).unitary(), b.unitary() @ a.unitary())


def test_ideal_channels_compose():
    c = logical_cnot()
    chans = {GateVariant.NONLOCAL: Channel.unitary(CZ, 0.5), GateVariant.DFS: Channel.unitary(CZ, 0.8)}
    S, P, F = apply_circuit_channel(c, chans)
    assert P == pytest.approx(0.5 * 0.8 ** 2)
    assert F == pytest.approx(1.0, abs=1e-12)
    assert c.success_probability({GateVariant.NONLOCAL: 0.5, GateVariant.DFS: 0.8}) == pytest.approx(P)


def test_empty_circuit_is_identity():
    S, P, F = apply_circuit_channel(LogicalCircuit((1, 2), []), {})
    assert P == 1.0
    assert np.allclose(S, np.eye(4))
    assert F == pytest.approx(1.0)


def test_missing_channel_raises():
    with pytest.raises(KeyError):
        apply_circuit_channel(logical_hadamard(), {})
    with pytest.raises(ValueError):
        apply_circuit_channel(LogicalCircuit((1, 2, 3), []), {})


def test_simulated_channel_in_cnot(gate_run):
    r = gate_run("nonlocal", 100.0, 10.0, 100.0, process=True)
    bound = 1 - r.process_fidelity
    assert 0 <= bound < 5e-3
    S, P, F = apply_circuit_channel(logical_cnot(), {GateVariant.NONLOCAL: r.channel,
                                                     GateVariant.DFS: Channel.unitary(CZ)})
    assert P == pytest.approx(r.P_success)
    assert F >= 1 - 3 * bound
