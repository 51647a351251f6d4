"""Lindblad time evolution, closed-form effective propagation and heralding.

The full-model propagator works on the forward-reachable part of the density
matrix: starting from the support of ``rho0``, only matrix elements ``(i, j)``
reachable through ``H_NH`` and the jump operators ever become non-zero. That
set is closed under the dynamics, so the Liouvillian restricted to it is exact.
It is split into independent connected blocks and each block is propagated
with a dense matrix exponential. This is unconditionally stable, which matters
here because the fast cavity scale (thousands of gamma) and the gate time
(thousands of 1/gamma) are ten orders of magnitude apart in step count for an
explicit integrator. Adaptive Runge-Kutta (via ``scipy.integrate.solve_ivp``)
is available for short or small problems and serves as an independent check.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
from scipy.integrate import solve_ivp
from scipy.sparse.csgraph import breadth_first_order, connected_components

from .effective import SECTORS, EffectiveModel
from .hilbert import DensityMatrix, HeraldImpossible, Operator, herald_project, partial_trace
from .model import ModelOperators

QUBIT_BASIS = ((0, 0), (0, 1), (1, 0), (1, 1))
RK_STEP_BUDGET = 2_000_000


class IntegratorError(RuntimeError):
    """Propagation failed (step-size underflow, budget exceeded, non-finite state)."""


@dataclass
class EvolutionResult:
    """Final state, diagnostic samples and integrator statistics of one evolution.

    ``rho_final`` is a :class:`DensityMatrix` when the evolution knows its
    space and a plain array otherwise.
    """

    rho_final: DensityMatrix | np.ndarray
    times: np.ndarray
    herald_prob_trace: np.ndarray
    trace: np.ndarray
    min_eigenvalue: np.ndarray
    hermiticity_error: float
    integrator_stats: dict = field(default_factory=dict)

    @property
    def max_trace_error(self) -> float:
        return float(np.max(np.abs(self.trace - 1.0)))

    @property
    def worst_eigenvalue(self) -> float:
        return float(np.min(self.min_eigenvalue))


def _csr(op) -> sp.csr_matrix:
    if isinstance(op, Operator):
        return op.data
    return sp.csr_matrix(op)


def _dense(x) -> np.ndarray:
    if isinstance(x, DensityMatrix):
        return x.data
    if isinstance(x, Operator):
        return x.dense()
    if sp.issparse(x):
        return x.toarray()
    return np.asarray(x, dtype=complex)


def lindblad_rhs(rho, H, Ls) -> np.ndarray:
    """``i[rho, H] + sum_j (L rho L^dag - (L^dag L rho + rho L^dag L)/2)``."""
    r = _dense(rho)
    Hs = _csr(H)
    if Hs.shape != r.shape:
        raise ValueError(f"H shape {Hs.shape} does not match rho shape {r.shape}")
    out = -1j * (Hs @ r - (Hs.T @ r.T).T)
    for L in Ls:
        Lm = _csr(L)
        if Lm.shape != r.shape:
            raise ValueError(f"jump operator shape {Lm.shape} does not match rho shape {r.shape}")
        Ld = Lm.conj().T.tocsr()
        LdL = (Ld @ Lm).tocsr()
        Lr = Lm @ r
        out += (Ld.T @ Lr.T).T                       # L rho L^dag
        out -= 0.5 * (LdL @ r + (LdL.T @ r.T).T)
    return np.asarray(out)


def _nonhermitian(H: sp.csr_matrix, Ls: list) -> sp.csr_matrix:
    K = sp.csr_matrix(H.shape, dtype=complex)
    for L in Ls:
        K = K + L.conj().T @ L
    return (H - 0.5j * K).tocsr()


def reachable_states(rho0: np.ndarray, Hn: sp.csr_matrix, Ls: list) -> np.ndarray:
    """States that can acquire population or coherence starting from ``supp(rho0)``."""
    n = Hn.shape[0]
    adj = abs(Hn).astype(bool).astype(np.int8)
    for L in Ls:
        adj = adj + abs(L).astype(bool).astype(np.int8)
    # edge column -> row (amplitude flows from state i to state k)
    graph = adj.T.tocsr()
    seed = np.flatnonzero(np.any(rho0 != 0, axis=0) | np.any(rho0 != 0, axis=1))
    if seed.size == 0:
        return seed
    aug = sp.bmat([[sp.csr_matrix((1, 1)), sp.csr_matrix((np.ones(seed.size), (np.zeros(seed.size), seed)),
                                                          shape=(1, n))],
                   [sp.csr_matrix((n, 1)), graph]], format="csr")
    order = breadth_first_order(aug, 0, directed=True, return_predecessors=False)
    return np.sort(order[order > 0] - 1)


def liouvillian(Hn: sp.csr_matrix, Ls: list) -> sp.csr_matrix:
    """Row-major superoperator: ``vec(A rho B) = kron(A, B^T) vec(rho)``."""
    n = Hn.shape[0]
    I = sp.identity(n, dtype=complex, format="csr")
    Lv = -1j * sp.kron(Hn, I) + 1j * sp.kron(I, Hn.conj())
    for L in Ls:
        Lv = Lv + sp.kron(L, L.conj())
    return Lv.tocsr()


@dataclass
class _Block:
    idx: np.ndarray          # flat pair indices in the reduced vec space
    prop: np.ndarray         # propagator over one sample interval


def _blocks(Lv: sp.csr_matrix, v0: np.ndarray) -> list[np.ndarray]:
    n2 = Lv.shape[0]
    pattern = abs(Lv).astype(bool)
    graph = pattern.T.tocsr()           # edge j -> i when Lv[i, j] != 0
    seed = np.flatnonzero(v0)
    aug = sp.bmat([[sp.csr_matrix((1, 1)), sp.csr_matrix((np.ones(seed.size), (np.zeros(seed.size), seed)),
                                                          shape=(1, n2))],
                   [sp.csr_matrix((n2, 1)), graph]], format="csr")
    order = breadth_first_order(aug, 0, directed=True, return_predecessors=False)
    reach = np.sort(order[order > 0] - 1)
    sub = graph[reach][:, reach]
    ncomp, labels = connected_components(sub, directed=True, connection="weak")
    return [reach[labels == c] for c in range(ncomp)]


def _sample_diagnostics(rho: np.ndarray, herald_idx):
    tr = float(np.trace(rho).real)
    pg = float(np.sum(np.diag(rho)[herald_idx]).real) if herald_idx is not None else float("nan")
    h = 0.5 * (rho + rho.conj().T)
    ev = float(np.linalg.eigvalsh(h)[0]) if h.size else 0.0
    return tr, pg, ev


def evolve_operators(rho0, H, Ls, t_final: float, tol: float = 1e-9, samples: int = 200,
                     method: str = "expm", herald_indices=None, space=None) -> EvolutionResult:
    """Propagate ``rho0`` under ``H`` and jump operators ``Ls`` up to ``t_final``.

    Parameters
    ----------
    method : {"expm", "rk45", "dop853"}
        ``expm`` propagates the reachable Liouvillian blocks exactly; the other
        two use adaptive explicit Runge-Kutta with relative tolerance ``tol``.
    herald_indices : array of int, optional
        Basis states whose summed population is recorded as the herald probability.
    """
    if not tol > 0:
        raise ValueError("tol must be positive")
    if t_final < 0:
        raise ValueError("t_final must be non-negative")
    r0 = _dense(rho0)
    Hs = _csr(H).astype(complex)
    Lm = [_csr(L).astype(complex) for L in Ls]
    n = r0.shape[0]
    if Hs.shape != (n, n):
        raise ValueError("H does not match rho0")
    Hn = _nonhermitian(Hs, Lm)
    states = reachable_states(r0, Hn, Lm)
    k = states.size
    Hr = Hn[states][:, states].tocsr()
    Lr = [L[states][:, states].tocsr() for L in Lm]
    r0r = r0[np.ix_(states, states)]
    hidx = None
    if herald_indices is not None:
        pos = np.full(n, -1)
        pos[states] = np.arange(k)
        hidx = pos[np.asarray(herald_indices)]
        hidx = hidx[hidx >= 0]
    samples = max(int(samples), 1)
    times = np.linspace(0.0, t_final, samples + 1)
    t0 = time.perf_counter()
    if method == "expm":
        frames, stats = _run_expm(r0r, Hr, Lr, times)
    elif method in ("rk45", "dop853"):
        frames, stats = _run_rk(r0r, Hr, Lr, times, tol, method)
    else:
        raise ValueError(f"unknown method {method!r}")
    stats["wall_time_s"] = time.perf_counter() - t0
    stats["reachable_states"] = int(k)
    tr, pg, ev = zip(*(_sample_diagnostics(f, hidx) for f in frames))
    final = np.zeros((n, n), dtype=complex)
    final[np.ix_(states, states)] = frames[-1]
    if not np.all(np.isfinite(final)):
        raise IntegratorError("non-finite density matrix produced")
    herm = float(np.max(np.abs(final - final.conj().T))) if n else 0.0
    return EvolutionResult(
        rho_final=DensityMatrix(space, final) if space is not None else final,
        times=times, herald_prob_trace=np.array(pg), trace=np.array(tr),
        min_eigenvalue=np.array(ev), hermiticity_error=herm, integrator_stats=stats,
    )


def _run_expm(r0, Hr, Lr, times):
    k = r0.shape[0]
    Lv = liouvillian(Hr, Lr)
    v = r0.reshape(-1).copy()
    blocks = _blocks(Lv, v)
    dts = np.diff(times)
    uniform = np.allclose(dts, dts[0], rtol=1e-14, atol=0) if dts.size else True
    props = []
    for idx in blocks:
        Lb = Lv[idx][:, idx].toarray()
        props.append(_Block(idx, sla.expm(Lb * dts[0]) if dts.size else np.eye(idx.size)))
    frames = [r0.copy()]
    cur = np.zeros(k * k, dtype=complex)
    for b in props:
        cur[b.idx] = v[b.idx]
    for s, dt in enumerate(dts):
        nxt = np.zeros_like(cur)
        for b in props:
            P = b.prop if uniform else sla.expm(Lv[b.idx][:, b.idx].toarray() * dt)
            nxt[b.idx] = P @ cur[b.idx]
        cur = nxt
        frames.append(cur.reshape(k, k))
    stats = {
        "method": "expm",
        "steps": int(dts.size),
        "blocks": len(blocks),
        "block_sizes": sorted((int(b.size) for b in blocks), reverse=True),
        "reachable_pairs": int(sum(b.size for b in blocks)),
    }
    return frames, stats


def propagate_many(rhos, H, Ls, t_final: float) -> list[np.ndarray]:
    """Exact final states for several inputs sharing one set of block propagators.

    Inputs need not be Hermitian (e.g. ``|i><j|`` operator-basis elements for
    process tomography); the map is linear.
    """
    mats = [_dense(r) for r in rhos]
    if not mats:
        return []
    n = mats[0].shape[0]
    Hs = _csr(H).astype(complex)
    Lm = [_csr(L).astype(complex) for L in Ls]
    Hn = _nonhermitian(Hs, Lm)
    support = np.zeros((n, n), dtype=bool)
    for r in mats:
        support |= r != 0
    states = reachable_states(support.astype(complex), Hn, Lm)
    k = states.size
    Lv = liouvillian(Hn[states][:, states].tocsr(), [L[states][:, states].tocsr() for L in Lm])
    seed = support[np.ix_(states, states)].reshape(-1).astype(complex)
    props = [_Block(idx, sla.expm(Lv[idx][:, idx].toarray() * t_final)) for idx in _blocks(Lv, seed)]
    out = []
    for r in mats:
        v = r[np.ix_(states, states)].reshape(-1)
        w = np.zeros_like(v)
        for b in props:
            w[b.idx] = b.prop @ v[b.idx]
        full = np.zeros((n, n), dtype=complex)
        full[np.ix_(states, states)] = w.reshape(k, k)
        out.append(full)
    return out


def _run_rk(r0, Hr, Lr, times, tol, method):
    k = r0.shape[0]
    Hd = Hr.conj().T.tocsr()
    Lds = [L.conj().T.tocsr() for L in Lr]
    # crude stiffness budget: explicit steps scale with the spectral radius times duration
    scale = float(abs(Hr).sum(axis=1).max()) if Hr.nnz else 0.0
    est = scale * times[-1]
    if est > RK_STEP_BUDGET:
        raise IntegratorError(
            f"explicit integration would need ~{est:.3g} steps (|H|={scale:.3g}, t={times[-1]:.3g}); "
            "use method='expm'")

    def f(_t, y):
        r = y.reshape(k, k)
        out = -1j * (Hr @ r) + 1j * (Hd.T @ r.T).T
        for L, Ld in zip(Lr, Lds):
            out = out + (Ld.T @ (L @ r).T).T
        return out.reshape(-1)

    sol = solve_ivp(f, (times[0], times[-1]), r0.reshape(-1).astype(complex),
                    method="RK45" if method == "rk45" else "DOP853",
                    t_eval=times, rtol=tol, atol=tol * 1e-3)
    if sol.status != 0:
        raise IntegratorError(f"integrator failed: {sol.message}")
    frames = [sol.y[:, i].reshape(k, k) for i in range(sol.y.shape[1])]
    per_step = 6 if method == "rk45" else 12
    stats = {"method": method, "steps": int(sol.nfev // per_step), "nfev": int(sol.nfev),
             "rtol": tol}
    return frames, stats


def herald_indices(m: ModelOperators, level: str = "g") -> np.ndarray:
    k = m.space.slot_index(m.aux_slot)
    j = m.space.slots[k].index(level)
    return np.flatnonzero(m.space.states[:, k] == j)


def evolve(rho0, m: ModelOperators, t_final: float, tol: float = 1e-9, samples: int = 200,
           method: str = "expm") -> EvolutionResult:
    """Full master-equation evolution of ``rho0`` (a DensityMatrix on ``m.space``)."""
    if isinstance(rho0, DensityMatrix) and rho0.space != m.space:
        raise ValueError("rho0 lives on a different space")
    return evolve_operators(rho0, m.H_total, m.lindblad_list(), t_final, tol, samples, method,
                            herald_indices=herald_indices(m), space=m.space)


@dataclass
class HeraldedState:
    rho_qubit: np.ndarray      # 4x4 on |00>,|01>,|10>,|11>, trace = 1 - leakage
    probability: float
    leakage: float


def herald_and_reduce(res, m: ModelOperators) -> HeraldedState:
    """Project the auxiliary atom on ``g``, trace out the cavities, keep the qubit levels.

    Populations of ``e``/``d`` in the heralded branch are dropped from the
    qubit block and reported as ``leakage``.
    """
    rho = res.rho_final if isinstance(res, EvolutionResult) else res
    if not isinstance(rho, DensityMatrix):
        rho = DensityMatrix(m.space, _dense(rho))
    branch, prob = herald_project(rho, m.aux_slot, "g")
    red = partial_trace(branch, list(m.qubit_slots))
    q1, q2 = red.space.slots
    sel = [red.space.index((q1.levels[a], q2.levels[b])) for a, b in QUBIT_BASIS]
    block = red.data[np.ix_(sel, sel)]
    leakage = max(0.0, float(1.0 - np.trace(block).real))
    return HeraldedState(block, prob, leakage)


# ---------------------------------------------------------- effective layer

def _sector_arrays(eff: EffectiveModel):
    D = np.array([eff[s].Delta for s in QUBIT_BASIS_SECTORS])
    G = np.array([eff[s].Gamma for s in QUBIT_BASIS_SECTORS])
    rg = np.array([complex(eff[s].rates.get("g", 0.0)) for s in QUBIT_BASIS_SECTORS])
    return D, G, rg


# basis |ab> with a = qubit in cavity A (m), b = qubit in cavity C (n)
QUBIT_BASIS_SECTORS = tuple((a, b) for a, b in QUBIT_BASIS)


def evolve_effective(rho_qubit0, eff: EffectiveModel, t: float):
    """Heralded two-qubit state at time ``t`` under the effective dynamics, in closed form.

    Returns the unnormalized ``g``-branch qubit density matrix and its trace
    ``P(t)``. Coherences pick up ``exp(-i(D_N - D_N')t - (G_N + G_N')t/2)``
    together with the exact contribution of the ``g`` dephasing channel, which
    vanishes when ``r_g`` is sector-independent.
    """
    r0 = np.asarray(rho_qubit0, dtype=complex)
    if r0.shape != (4, 4):
        raise ValueError("expected a 4x4 two-qubit density matrix")
    D, G, rg = _sector_arrays(eff)
    rate = (1j * (D[:, None] - D[None, :]) + 0.5 * (G[:, None] + G[None, :])
            + 0.5 * (np.abs(rg[:, None]) ** 2 + np.abs(rg[None, :]) ** 2) - rg[:, None] * rg[None, :].conj())
    rho = r0 * np.exp(-rate * t)
    return rho, float(np.trace(rho).real)


def effective_master_equation(eff: EffectiveModel):
    """``(H_eff, [L_eff])`` on ``aux{g, f} (x) qubit (x) qubit`` (dimension 8, aux index major).

    Heralded jumps are represented as ``|f><g| (x) diag(r_{zeta,N})``; where the
    jump also changes a qubit level (``e -> d``) the qubit part is left diagonal,
    which is immaterial for the ``g`` branch.
    """
    D, _, rg = _sector_arrays(eff)
    gg = np.diag([1.0, 0.0])
    fg = np.array([[0.0, 0.0], [1.0, 0.0]])
    H = np.kron(gg, np.diag(D)).astype(complex)
    Ls = [np.kron(gg, np.diag(rg))]
    for ch in eff.channels():
        if ch == "g":
            continue
        amps = np.array([complex(eff[s].rates.get(ch, 0.0)) for s in QUBIT_BASIS_SECTORS])
        if np.any(amps):
            Ls.append(np.kron(fg, np.diag(amps)))
    return H, Ls


def integrate_effective(rho_qubit0, eff: EffectiveModel, times, rtol: float = 1e-12, atol: float = 1e-14):
    """ODE integration of the effective master equation; returns g-branch qubit states at ``times``."""
    H, Ls = effective_master_equation(eff)
    r0 = np.zeros((8, 8), dtype=complex)
    r0[:4, :4] = np.asarray(rho_qubit0, dtype=complex)
    Lds = [L.conj().T for L in Ls]
    K = sum(Ld @ L for L, Ld in zip(Ls, Lds))
    Hn = H - 0.5j * K

    def f(_t, y):
        r = y.reshape(8, 8)
        out = -1j * (Hn @ r - r @ Hn.conj().T)
        for L, Ld in zip(Ls, Lds):
            out += L @ r @ Ld
        return out.reshape(-1)

    times = np.asarray(times, dtype=float)
    sol = solve_ivp(f, (0.0, float(times[-1])), r0.reshape(-1), method="DOP853",
                    t_eval=times, rtol=rtol, atol=atol)
    if sol.status != 0:
        raise IntegratorError(sol.message)
    return [sol.y[:, i].reshape(8, 8)[:4, :4] for i in range(len(times))]


def trace_distance(a, b) -> float:
    """``||a - b||_1 / 2`` for Hermitian matrices."""
    d = np.asarray(a) - np.asarray(b)
    return 0.5 * float(np.sum(np.abs(np.linalg.eigvalsh(0.5 * (d + d.conj().T)))))


__all__ = [
    "EvolutionResult", "IntegratorError", "HeraldImpossible", "HeraldedState",
    "lindblad_rhs", "evolve_operators", "evolve", "herald_and_reduce", "herald_indices",
    "evolve_effective", "effective_master_equation", "integrate_effective", "trace_distance",
    "reachable_states", "liouvillian", "propagate_many", "SECTORS",
]
