"""Gate-level orchestration: heralded CZ runs, phase corrections, fidelities, logical circuits."""

from __future__ import annotations

import enum
import json
import math
import time
from dataclasses import dataclass, field
from functools import reduce
from typing import Sequence

import numpy as np

from .dynamics import (
    QUBIT_BASIS,
    evolve,
    evolve_effective,
    herald_and_reduce,
    propagate_many,
)
from .effective import (
    EffectiveModel,
    balanced_model,
    balanced_shifts,
    effective_closed_form,
    effective_operators_numeric,
    target_decay_rate,
    tune,
)
from .hilbert import DensityMatrix, HeraldImpossible
from .model import PhysicalParams, Variant, build_dfs_model, build_nonlocal_model, caption_params

H1 = np.array([[1, 1], [1, -1]], dtype=complex) / math.sqrt(2)
S1 = np.diag([1, 1j])
X1 = np.array([[0, 1], [1, 0]], dtype=complex)
Z1 = np.diag([1.0 + 0j, -1.0])
I2 = np.eye(2, dtype=complex)
CZ = np.diag([1.0 + 0j, 1, 1, -1])
PAULI = {"H": H1, "S": S1, "X": X1, "Z": Z1, "I": I2}
TARGET_PLUS = np.array([1, 1, 1, -1], dtype=complex) / 2


class GateVariant(str, enum.Enum):
    NONLOCAL = "NonlocalCZ"
    DFS = "LocalCZ_DFS"


class Level(str, enum.Enum):
    FULL = "full"
    EFFECTIVE = "effective"
    ANALYTIC = "analytic"


class ProtocolDegenerate(ValueError):
    """Shifts give no conditional phase (``Delta_2 - 2 Delta_1 + Delta_0 = 0``)."""


@dataclass
class GateResult:
    """Outcome of one heralded CZ run."""

    variant: GateVariant
    level: Level
    t_gate: float
    T_pi: float
    P_success: float
    P_analytic: float
    fidelity: float
    correction_phases: tuple[float, float]
    leakage: float
    shifts: tuple[float, float, float]
    Gamma: float
    params_echo: PhysicalParams
    runtime_s: float = 0.0
    integrator_steps: int = 0
    process_fidelity: float | None = None
    diagnostics: dict = field(default_factory=dict)
    channel: "Channel | None" = field(default=None, repr=False)

    @property
    def infidelity(self) -> float:
        return 1.0 - self.fidelity

    def to_dict(self) -> dict:
        d = {
            "variant": self.variant.value,
            "level": self.level.value,
            "t_gate": self.t_gate,
            "T_pi": self.T_pi,
            "P_success": self.P_success,
            "P_analytic": self.P_analytic,
            "fidelity": self.fidelity,
            "infidelity": self.infidelity,
            "correction_phases": list(self.correction_phases),
            "leakage": self.leakage,
            "shifts": list(self.shifts),
            "Gamma": self.Gamma,
            "runtime_s": self.runtime_s,
            "integrator_steps": self.integrator_steps,
            "params_echo": self.params_echo.to_dict(),
        }
        if self.process_fidelity is not None:
            d["process_fidelity"] = self.process_fidelity
        if self.diagnostics:
            d["diagnostics"] = self.diagnostics
        return d

    def to_json(self, **kw) -> str:
        return json.dumps(self.to_dict(), **kw)


# ------------------------------------------------------------ pulse & phases

def pulse_time(shifts: Sequence[float]) -> tuple[float, float]:
    """``(t_CZ, T_pi) = (pi / |D2 - 2 D1 + D0|, pi / |D2|)``."""
    d0, d1, d2 = (float(x) for x in shifts)
    den = d2 - 2 * d1 + d0
    if den == 0 or not math.isfinite(den):
        raise ProtocolDegenerate(f"no conditional phase: D2 - 2 D1 + D0 = {den!r}")
    T_pi = math.pi / abs(d2) if d2 != 0 else math.inf
    return math.pi / abs(den), T_pi


def correction_phases(d0: float, d1: float, t: float) -> tuple[float, float]:
    return d0 * t / 2, (2 * d1 - d0) * t / 2


def single_qubit_correction(d0: float, d1: float, t: float) -> np.ndarray:
    """Diagonal phase gate ``diag(exp(i D0 t/2), exp(i (2 D1 - D0) t/2))``."""
    p0, p1 = correction_phases(d0, d1, t)
    return np.diag([np.exp(1j * p0), np.exp(1j * p1)])


def _fidelity(rho: np.ndarray, target: np.ndarray = TARGET_PLUS) -> float:
    return float(np.real(np.vdot(target, rho @ target)))


def plus_plus() -> np.ndarray:
    v = np.full(4, 0.5, dtype=complex)
    return np.outer(v, v.conj())


# -------------------------------------------------------------- channels

@dataclass
class Channel:
    """Linear map on two qubits as a 16x16 row-major superoperator.

    ``superop`` is the conditional (heralded) map divided by ``probability``,
    so for a balanced gate it is close to trace preserving.
    """

    superop: np.ndarray
    probability: float = 1.0

    def apply(self, rho: np.ndarray) -> np.ndarray:
        return (self.superop @ np.asarray(rho).reshape(-1)).reshape(4, 4)

    @classmethod
    def unitary(cls, U: np.ndarray, probability: float = 1.0) -> "Channel":
        return cls(np.kron(U, U.conj()), probability)

    def choi(self) -> np.ndarray:
        """Normalized Choi matrix ``sum_ij |i><j| (x) E(|i><j|) / 4``."""
        J = np.zeros((16, 16), dtype=complex)
        for i in range(4):
            for j in range(4):
                E = np.zeros((4, 4), dtype=complex)
                E[i, j] = 1
                J += np.kron(E, self.apply(E)) / 4
        return J

    def process_fidelity(self, U: np.ndarray) -> float:
        J = self.choi()
        phi = np.zeros(16, dtype=complex)
        for i in range(4):
            e = np.zeros(4)
            e[i] = 1
            phi += np.kron(e, U[:, i]) / 2
        return float(np.real(np.vdot(phi, J @ phi)) / np.real(np.trace(J)))


def _channel_from_outputs(outputs: dict, U_corr: np.ndarray, prob: float) -> Channel:
    S = np.zeros((16, 16), dtype=complex)
    for (i, j), out in outputs.items():
        col = (U_corr @ out @ U_corr.conj().T).reshape(-1)
        S[:, 4 * i + j] = col / prob
    return Channel(S, prob)


# ------------------------------------------------------------------ runs

def prepare_params(C: float, lam: float, delta_E2_over_gamma: float, variant="nonlocal",
                   **kw) -> tuple[PhysicalParams, float]:
    """Preset-rule parameters with tuned ``Delta_e``, ``Delta_E1``; also returns the target rate."""
    v = _as_variant(variant)
    p = caption_params(C, lam, delta_E2_over_gamma, v, **kw)
    return tune(p)


def _as_variant(variant) -> Variant:
    if isinstance(variant, Variant):
        return variant
    if isinstance(variant, GateVariant):
        return Variant.DFS if variant is GateVariant.DFS else Variant.NONLOCAL
    s = str(variant).lower()
    if s in ("dfs", "dfs2cav", "localcz_dfs", "local"):
        return Variant.DFS
    if s in ("nonlocal", "nonlocal3cav", "nonlocalcz"):
        return Variant.NONLOCAL
    raise ValueError(f"unknown variant {variant!r}")


def _shifts(p: PhysicalParams, eff: EffectiveModel, source: str) -> tuple[float, float, float]:
    if source == "numeric":
        return eff.shifts()
    if source == "closed":
        if p.variant is Variant.DFS:
            raise ValueError("closed-form sector shifts exist only for the three-cavity setup")
        return effective_closed_form(p).shifts()
    if source == "balanced":
        return balanced_shifts(p)
    raise ValueError(f"unknown shift source {source!r}")


def run_cphase(p: PhysicalParams, level: Level | str = Level.FULL, *, n_max: int = 1,
               excitation_cap: int | None = 2, tol: float = 1e-9, method: str = "expm",
               samples: int = 200, shift_source: str = "numeric", balanced: bool = False,
               process: bool = False, dump: str = "d") -> GateResult:
    """Run the heralded CZ for the setup selected by ``p`` (``J_1 = 0`` means two-cavity)."""
    level = Level(level)
    t_start = time.perf_counter()
    setup = p.variant
    builder = build_dfs_model if setup is Variant.DFS else build_nonlocal_model
    model = builder(p, n_max=1, excitation_cap=2, dump=dump)
    eff = effective_operators_numeric(model)
    Gamma = target_decay_rate(p)
    shifts = _shifts(p, eff, shift_source)
    t_cz, T_pi = pulse_time(shifts)
    phases = correction_phases(shifts[0], shifts[1], t_cz)
    u = single_qubit_correction(shifts[0], shifts[1], t_cz)
    U = np.kron(u, u)
    P_analytic = math.exp(-Gamma * t_cz)
    diag = {"gamma_sectors": {f"{m}{n}": g for (m, n), g in eff.gammas().items()}}
    steps = 0
    leakage = 0.0
    channel = None
    proc_F = None

    if level is Level.FULL:
        if n_max != 1 or excitation_cap != 2 or method != "expm":
            model = builder(p, n_max=n_max, excitation_cap=excitation_cap, dump=dump)
        rho0 = _initial_state(model, plus_plus())
        res = evolve(rho0, model, t_cz, tol=tol, samples=samples, method=method)
        hs = herald_and_reduce(res, model)
        rho_q = U @ hs.rho_qubit @ U.conj().T
        P = hs.probability
        leakage = hs.leakage
        steps = int(res.integrator_stats.get("steps", 0))
        diag.update({
            "max_trace_error": res.max_trace_error,
            "min_eigenvalue": res.worst_eigenvalue,
            "hermiticity_error": res.hermiticity_error,
            "reachable_states": res.integrator_stats.get("reachable_states"),
            "reachable_pairs": res.integrator_stats.get("reachable_pairs"),
            "herald_prob_final": float(res.herald_prob_trace[-1]),
            "dimension": model.space.dim,
        })
        if process:
            channel = _full_channel(model, t_cz, U, P)
    else:
        use = eff
        if balanced:
            r_g = np.mean([complex(eff[k].rates.get("g", 0.0)) for k in eff.sectors])
            use = balanced_model(eff, Gamma, r_g, shifts if shift_source != "numeric" else None)
        rho_t, P_eff = evolve_effective(plus_plus(), use, t_cz)
        if not (P_eff > 1e-300):
            raise HeraldImpossible(f"herald probability {P_eff:.3g}")
        rho_q = U @ (rho_t / P_eff) @ U.conj().T
        P = P_eff if level is Level.EFFECTIVE else P_analytic
        if process:
            outs = {}
            for i in range(4):
                for j in range(4):
                    E = np.zeros((4, 4), dtype=complex)
                    E[i, j] = 1
                    outs[(i, j)] = evolve_effective(E, use, t_cz)[0]
            channel = _channel_from_outputs(outs, U, P)

    if not (P > 1e-12):
        raise HeraldImpossible(f"herald probability {P:.3g}")
    F = min(max(_fidelity(rho_q), 0.0), 1.0)
    if channel is not None:
        proc_F = channel.process_fidelity(CZ)
    gv = GateVariant.DFS if setup is Variant.DFS else GateVariant.NONLOCAL
    return GateResult(
        variant=gv, level=level, t_gate=t_cz, T_pi=T_pi,
        P_success=min(max(float(P), 0.0), 1.0), P_analytic=P_analytic, fidelity=F,
        correction_phases=phases, leakage=leakage, shifts=tuple(float(s) for s in shifts),
        Gamma=Gamma, params_echo=p, runtime_s=time.perf_counter() - t_start,
        integrator_steps=steps, process_fidelity=proc_F, diagnostics=diag, channel=channel,
    )


def run_cphase_nonlocal(p: PhysicalParams, level: Level | str = Level.FULL, **kw) -> GateResult:
    """Heralded CZ between qubit atoms in the two outer cavities."""
    if p.variant is not Variant.NONLOCAL:
        raise ValueError("nonlocal run needs J_1 = J_2 > 0")
    return run_cphase(p, level, **kw)


def run_cphase_dfs(p: PhysicalParams, level: Level | str = Level.FULL, **kw) -> GateResult:
    """Heralded CZ between two qubit atoms sharing one cavity (two-cavity setup)."""
    if p.variant is not Variant.DFS:
        raise ValueError("two-cavity run needs J_1 = 0")
    return run_cphase(p, level, **kw)


def _initial_state(model, rho_q: np.ndarray) -> DensityMatrix:
    """``|g><g| (x) rho_q (x) |vac><vac|`` on the model space."""
    sp = model.space
    vac = [0] * len(model.mode_slots)
    idx = [sp.index((str(a), str(b), "g", *vac)) for a, b in QUBIT_BASIS]
    data = np.zeros((sp.dim, sp.dim), dtype=complex)
    data[np.ix_(idx, idx)] = rho_q
    return DensityMatrix(sp, data)


def _full_channel(model, t: float, U: np.ndarray, prob: float) -> Channel:
    inputs, keys = [], []
    for i in range(4):
        for j in range(4):
            E = np.zeros((4, 4), dtype=complex)
            E[i, j] = 1
            inputs.append(_initial_state(model, E).data)
            keys.append((i, j))
    finals = propagate_many(inputs, model.H_total, model.lindblad_list(), t)
    outs = {}
    for key, fin in zip(keys, finals):
        # heralding is linear: reuse the projection on a non-Hermitian operator
        outs[key] = _herald_block(model, fin)
    return _channel_from_outputs(outs, U, prob)


def _herald_block(model, rho: np.ndarray) -> np.ndarray:
    sp = model.space
    k = sp.slot_index(model.aux_slot)
    q = [sp.slot_index(s) for s in model.qubit_slots]
    g = sp.slots[k].index("g")
    sel = np.flatnonzero(sp.states[:, k] == g)
    out = np.zeros((4, 4), dtype=complex)
    lv = {0: sp.slots[q[0]].index("0"), 1: sp.slots[q[0]].index("1")}
    rest = [i for i in range(len(sp.slots)) if i not in q and i != k]
    key = {}
    for i in sel:
        st = sp.states[i]
        a, b = st[q[0]], st[q[1]]
        if a not in (lv[0], lv[1]) or b not in (lv[0], lv[1]):
            continue
        qi = 2 * (a == lv[1]) + (b == lv[1])
        key.setdefault(tuple(st[rest]), []).append((int(qi), i))
    for group in key.values():
        for qa, ia in group:
            for qb, ib in group:
                out[qa, qb] += rho[ia, ib]
    return out


# -------------------------------------------------------------- logical layer

@dataclass(frozen=True)
class SingleQubitGate:
    name: str
    atom: int

    def matrix(self) -> np.ndarray:
        return PAULI[self.name]


@dataclass(frozen=True)
class HeraldedCZ:
    atoms: tuple[int, int]
    variant: GateVariant


@dataclass
class LogicalCircuit:
    """Gate list in time order (first element acts first) on physical atoms ``atoms``."""

    atoms: tuple[int, ...]
    elements: list

    def heralded(self) -> list[HeraldedCZ]:
        return [e for e in self.elements if isinstance(e, HeraldedCZ)]

    def success_probability(self, probs: dict | None = None) -> float:
        """Product of herald probabilities; ``probs`` maps a variant to its probability."""
        probs = probs or {}
        return float(np.prod([probs.get(e.variant, 1.0) for e in self.heralded()]))

    def then(self, other: "LogicalCircuit") -> "LogicalCircuit":
        atoms = tuple(sorted(set(self.atoms) | set(other.atoms)))
        return LogicalCircuit(atoms, list(self.elements) + list(other.elements))

    def _pos(self, atom: int) -> int:
        return self.atoms.index(atom)

    def unitary(self) -> np.ndarray:
        """Ideal unitary (every heralded element replaced by an exact CZ)."""
        n = len(self.atoms)
        U = np.eye(2 ** n, dtype=complex)
        for e in self.elements:
            U = _element_unitary(e, self.atoms) @ U
        return U


def _element_unitary(e, atoms) -> np.ndarray:
    n = len(atoms)
    if isinstance(e, SingleQubitGate):
        ops = [I2] * n
        ops[atoms.index(e.atom)] = e.matrix()
        return reduce(np.kron, ops)
    i, j = (atoms.index(a) for a in e.atoms)
    diag = np.ones(2 ** n, dtype=complex)
    for s in range(2 ** n):
        if (s >> (n - 1 - i)) & 1 and (s >> (n - 1 - j)) & 1:
            diag[s] = -1
    return np.diag(diag)


def _gates(seq: str, atom: int) -> list:
    """``"HSX"`` read as a matrix product: X acts first."""
    return [SingleQubitGate(c, atom) for c in reversed(seq)]


def logical_hadamard(atoms: tuple[int, int] = (3, 4)) -> LogicalCircuit:
    """Hadamard on the logical qubit ``|0_L> = |01>``, ``|1_L> = |10>`` of the atom pair."""
    a, b = atoms
    el = []
    el += _gates("HSX", a) + _gates("X", b)
    el += _gates("H", b) + [HeraldedCZ((a, b), GateVariant.DFS)] + _gates("H", b)
    el += _gates("HSHZ", a) + _gates("HSH", b)
    return LogicalCircuit(tuple(atoms), el)


def logical_cnot() -> LogicalCircuit:
    """Logical CNOT: Hadamard on logical qubit 2, nonlocal CZ on atoms (1, 3), Hadamard again."""
    hl = logical_hadamard((3, 4))
    el = list(hl.elements) + [HeraldedCZ((1, 3), GateVariant.NONLOCAL)] + list(hl.elements)
    return LogicalCircuit((1, 2, 3, 4), el)


def dfs_indices(n_logical: int) -> list[int]:
    """Physical basis indices of the logical basis states, logical qubit 1 most significant."""
    enc = {0: (0, 1), 1: (1, 0)}
    out = []
    for bits in np.ndindex(*([2] * n_logical)):
        phys = [x for b in bits for x in enc[b]]
        out.append(int("".join(map(str, phys)), 2))
    return out


def logical_unitary(circuit: LogicalCircuit) -> np.ndarray:
    """Circuit unitary restricted to the DFS logical basis."""
    idx = dfs_indices(len(circuit.atoms) // 2)
    return circuit.unitary()[np.ix_(idx, idx)]


def phase_aligned_distance(A: np.ndarray, B: np.ndarray) -> float:
    """``min_phi max|A - e^{i phi} B|`` (phase taken from the largest overlap)."""
    ov = np.vdot(B.reshape(-1), A.reshape(-1))
    ph = ov / abs(ov) if abs(ov) > 0 else 1.0
    return float(np.max(np.abs(A - ph * B)))


def _apply_pair_channel(rho: np.ndarray, S: np.ndarray, i: int, j: int, n: int) -> np.ndarray:
    """Apply a two-qubit superoperator on qubits ``i, j`` of an ``n``-qubit density matrix."""
    T = rho.reshape([2] * (2 * n))
    E = S.reshape([2] * 8)   # (o_i, o_j, p_i, p_j, a_i, a_j, b_i, b_j)
    letters = "abcdefghijklmnopqrstuvwxyz"
    ket = list(letters[:n])
    bra = list(letters[n:2 * n])
    new_ket, new_bra = ket.copy(), bra.copy()
    o = letters[2 * n:2 * n + 4]
    new_ket[i], new_ket[j], new_bra[i], new_bra[j] = o[0], o[1], o[2], o[3]
    spec = (f"{o[0]}{o[1]}{o[2]}{o[3]}{ket[i]}{ket[j]}{bra[i]}{bra[j]},"
            f"{''.join(ket)}{''.join(bra)}->{''.join(new_ket)}{''.join(new_bra)}")
    return np.einsum(spec, E, T).reshape(rho.shape)


def apply_circuit_channel(circuit: LogicalCircuit, channels: dict):
    """Compose ideal single-qubit gates with simulated heralded two-qubit channels.

    Parameters
    ----------
    channels : dict
        Maps a :class:`GateVariant` (or a specific :class:`HeraldedCZ` element) to a
        :class:`Channel` acting on the element's atom pair in the given order.

    Returns
    -------
    logical : ndarray, shape (4**k, 4**k)
        Superoperator on the DFS logical space (``k`` logical qubits).
    probability : float
        Product of the element herald probabilities.
    fidelity : float
        Process fidelity of the logical map against the ideal circuit.
    """
    n = len(circuit.atoms)
    if n % 2:
        raise ValueError("logical circuits act on atom pairs")
    k = n // 2
    idx = dfs_indices(k)
    dL = 2 ** k
    prob = 1.0
    for e in circuit.heralded():
        ch = channels.get(e, channels.get(e.variant))
        if ch is None:
            raise KeyError(f"no channel for heralded element on atoms {e.atoms}")
        prob *= ch.probability
    logical = np.zeros((dL * dL, dL * dL), dtype=complex)
    for x in range(dL):
        for y in range(dL):
            rho = np.zeros((2 ** n, 2 ** n), dtype=complex)
            rho[idx[x], idx[y]] = 1
            for e in circuit.elements:
                if isinstance(e, SingleQubitGate):
                    U = _element_unitary(e, circuit.atoms)
                    rho = U @ rho @ U.conj().T
                else:
                    ch = channels.get(e, channels.get(e.variant))
                    i, j = (circuit.atoms.index(a) for a in e.atoms)
                    rho = _apply_pair_channel(rho, ch.superop, i, j, n)
            logical[:, x * dL + y] = rho[np.ix_(idx, idx)].reshape(-1)
    ideal = logical_unitary(circuit)
    return logical, prob, _superop_fidelity(logical, ideal)


def _superop_fidelity(S: np.ndarray, U: np.ndarray) -> float:
    d = U.shape[0]
    J = np.zeros((d * d, d * d), dtype=complex)
    for i in range(d):
        for j in range(d):
            E = np.zeros((d, d), dtype=complex)
            E[i, j] = 1
            J += np.kron(E, (S @ E.reshape(-1)).reshape(d, d)) / d
    phi = sum(np.kron(np.eye(d)[i], U[:, i]) for i in range(d)) / math.sqrt(d)
    tr = np.real(np.trace(J))
    return float(np.real(np.vdot(phi, J @ phi)) / tr) if tr > 0 else 0.0


def collective_dephasing(phi: float, theta: float) -> np.ndarray:
    """``exp(i phi (Z1 + Z2)) (x) exp(i theta (Z3 + Z4))`` on four atoms."""
    zsum = np.array([2, 0, 0, -2])
    return np.kron(np.diag(np.exp(1j * phi * zsum)), np.diag(np.exp(1j * theta * zsum)))
