"""Logical gates on the |01>, |10> encoding built from heralded CZs."""

# %%
import numpy as np

from herald_sim.protocol import (
    CZ,
    Channel,
    GateVariant,
    apply_circuit_channel,
    logical_cnot,
    logical_hadamard,
    logical_unitary,
    phase_aligned_distance,
    prepare_params,
    run_cphase,
)

# %%
hl = logical_hadamard()
print("H_L elements:", [getattr(e, "name", "CZ") for e in hl.elements])
print(np.round(logical_unitary(hl) * np.sqrt(2), 12))

# %%
cnot = logical_cnot()
U = logical_unitary(cnot)
CNOT = np.eye(4)[[0, 1, 3, 2]]
print("heralded CZs in CNOT_L:", len(cnot.heralded()))
print("distance to CNOT up to a phase:", phase_aligned_distance(U, CNOT))
print("global phase:", np.round(U[0, 0], 12))

# %% [markdown]
# Replace each heralded CZ by the simulated channel and compose.

# %%
p_nl, _ = prepare_params(600.0, 10.0, 180.0, "nonlocal")
p_dfs, _ = prepare_params(600.0, 1.84, 220.0, "dfs")
nl = run_cphase(p_nl, "full", samples=20, process=True)
dfs = run_cphase(p_dfs, "full", samples=20, process=True)
print(f"nonlocal: P = {nl.P_success:.4f}  process F = {nl.process_fidelity:.6f}")
print(f"dfs:      P = {dfs.P_success:.4f}  process F = {dfs.process_fidelity:.6f}")

# %%
S, P, F = apply_circuit_channel(cnot, {GateVariant.NONLOCAL: nl.channel, GateVariant.DFS: dfs.channel})
print(f"logical CNOT: success probability {P:.4f}, process fidelity {F:.6f}")

# %%
S0, P0, F0 = apply_circuit_channel(cnot, {v: Channel.unitary(CZ) for v in GateVariant})
print("ideal channels:", P0, F0)
