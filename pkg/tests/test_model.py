import json
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from herald_sim.hilbert import Mode, build_space
from herald_sim.model import (
    SQRT2,
    PhysicalParams,
    Variant,
    build_dfs_model,
    build_model,
    build_nonlocal_model,
    caption_params,
    dark_state,
    eliminate_E2,
    fiber_loss_fraction,
    fiber_loss_rate,
    normal_mode_matrix,
    normal_modes,
    reduced,
    scaling_factor,
)
from herald_sim.effective import effective_operators_numeric, tune


def nonlocal_params(C=600.0, lam=10.0, dE2=180.0, **kw):
    return caption_params(C, lam, dE2, Variant.NONLOCAL, **kw)


def dfs_params(C=600.0, lam=1.84, dE2=220.0):
    return caption_params(C, lam, dE2, Variant.DFS)


param_sets = st.builds(
    lambda C, lam, dE2, dfs: caption_params(C, lam, dE2, Variant.DFS if dfs else Variant.NONLOCAL),
    st.floats(20, 1000), st.floats(1.5, 20), st.floats(40, 300), st.booleans(),
)


def ground_label(space, a="0", b="0", aux="g"):
    return space.index((a, b, aux) + (0,) * (len(space.slots) - 3))


# ------------------------------------------------------------ PhysicalParams

def test_params_json_roundtrip():
    p = nonlocal_params()
    q = PhysicalParams.from_json(p.to_json())
    assert q == p
    assert set(json.loads(p.to_json())) == set(PhysicalParams.field_names())


def test_params_unknown_key_rejected():
    d = nonlocal_params().to_dict()
    d["bogus"] = 1.0
    with pytest.raises(KeyError, match="bogus"):
        PhysicalParams.from_dict(d)


@pytest.mark.parametrize("field,value", [("kappa", 0.0), ("g", -1.0), ("gamma_g", -0.1),
                                         ("Omega", -1.0), ("Delta_e", math.inf), ("alpha_l", 1.0)])
def test_params_invariants(field, value):
    with pytest.raises(ValueError):
        nonlocal_params().replace(**{field: value})


def test_reduced_quantities():
    rp = reduced(nonlocal_params())
    assert rp.C == pytest.approx(600)
    assert rp.lam == pytest.approx(10)
    assert rp.D == pytest.approx(1 / math.sqrt(600))
    assert rp.J_tilde_1.imag == -0.5 and rp.J_tilde_2.imag == -0.5
    # caption rules give Omega_tilde = gamma / 3 exactly
    assert rp.Omega_tilde == pytest.approx(1 / 3, rel=1e-14)


@settings(max_examples=30, deadline=None)
@given(p=param_sets)
def test_reduced_idempotent(p):
    assert reduced(p) == reduced(PhysicalParams.from_dict(p.to_dict()))


def test_scaling_factor_value():
    # frozen from an mpmath evaluation at 30 digits
    assert scaling_factor(10, 1) == pytest.approx(4.44969957310053, rel=1e-12)


# ------------------------------------------------------------- normal modes

def test_normal_mode_commutators():
    sp = build_space([Mode("A", 2), Mode("B", 2), Mode("C", 2)])
    cs = normal_modes(sp, Variant.NONLOCAL)
    low = np.all(sp.states < 2, axis=1)
    for i, ci in enumerate(cs):
        for j, cj in enumerate(cs):
            comm = (ci @ cj.dag() - cj.dag() @ ci).dense()[np.ix_(low, low)]
            assert np.allclose(comm, np.eye(low.sum()) * (i == j), atol=1e-12)


def test_normal_modes_kill_vacuum():
    sp = build_space([Mode("A", 1), Mode("B", 1), Mode("C", 1)], excitation_cap=2)
    vac = sp.basis((0, 0, 0))
    for c in normal_modes(sp, Variant.NONLOCAL):
        assert np.allclose(c.data @ vac, 0)


def test_normal_mode_inverse():
    for v in (Variant.NONLOCAL, Variant.DFS):
        M = normal_mode_matrix(v)
        assert np.max(np.abs(np.linalg.inv(M) @ M - np.eye(len(M)))) < 1e-12
        assert np.max(np.abs(M @ M.T - np.eye(len(M)))) < 1e-12


def test_wrong_mode_count():
    sp = build_space([Mode("A", 1), Mode("B", 1)])
    with pytest.raises(ValueError):
        normal_modes(sp, Variant.NONLOCAL)


# ------------------------------------------------------------- nonlocal model

def test_nonlocal_dimensions_and_labels():
    m = build_nonlocal_model(nonlocal_params())
    assert m.space.dim == 260
    assert list(m.lindblads) == ["c1", "c2", "c3", "f", "g", "1", "2"]


def test_ground_block_invariant_without_drive():
    m = build_nonlocal_model(nonlocal_params().replace(Omega=0.0))
    H = m.H_total.dense()
    ground = [ground_label(m.space, a, b) for a in "01" for b in "01"]
    rest = np.setdiff1d(np.arange(m.space.dim), ground)
    assert np.all(H[np.ix_(rest, ground)] == 0)


def test_aux_cavity_coupling_element():
    p = nonlocal_params()
    m = build_nonlocal_model(p)
    sp = m.space
    # one photon in c1 = (aA^dag - sqrt2 aB^dag + aC^dag) / 2 on vacuum
    c1_photon = (0.5 * sp.basis(("0", "0", "f", 1, 0, 0)) - (SQRT2 / 2) * sp.basis(("0", "0", "f", 0, 1, 0))
                 + 0.5 * sp.basis(("0", "0", "f", 0, 0, 1)))
    E1 = sp.basis(("0", "0", "E1", 0, 0, 0))
    amp = E1.conj() @ (m.H_total.data @ c1_photon)
    assert amp == pytest.approx(-p.g_f / SQRT2, rel=1e-12)


def test_resonance_frame_mode_energies():
    p = nonlocal_params()
    m = build_nonlocal_model(p.replace(Omega=0.0))
    sp = m.space
    M = normal_mode_matrix(Variant.NONLOCAL)
    H = m.H_e.dense()
    energies = []
    for row in M:
        v = sum(row[k] * sp.basis(("0", "0", "g") + tuple(int(i == k) for i in range(3))) for k in range(3))
        energies.append((v.conj() @ H @ v).real)
    assert energies[0] == pytest.approx(0.0, abs=1e-12)
    assert energies[1] == pytest.approx(2 * SQRT2 * p.J, rel=1e-12)
    assert energies[2] == pytest.approx(SQRT2 * p.J, rel=1e-12)


@settings(max_examples=25, deadline=None)
@given(p=param_sets)
def test_hermiticity(p):
    q = tune(p)[0]
    assert build_model(q).hermiticity_error() < 1e-12


def test_cavity_lindblad_annihilates_vacuum():
    m = build_nonlocal_model(nonlocal_params())
    g = m.space.basis(("0", "1", "g", 0, 0, 0))
    for lab in ("c1", "c2", "c3"):
        assert np.allclose(m.lindblads[lab].data @ g, 0)


def test_stark_compensation_term():
    p = nonlocal_params()
    on = build_nonlocal_model(p).H_e.dense()
    off = build_nonlocal_model(p.replace(stark_compensation=False)).H_e.dense()
    diff = on - off
    i = ground_label(build_nonlocal_model(p).space)
    assert diff[i, i] == pytest.approx(p.Omega ** 2 / (4 * p.Delta_E2))
    assert np.count_nonzero(np.abs(diff) > 1e-15) == np.count_nonzero(
        build_nonlocal_model(p).space.states[:, 2] == 0)


def test_nonlocal_rejects_dfs_params():
    with pytest.raises(ValueError):
        build_nonlocal_model(dfs_params())


def test_large_J_suppresses_c2_c3():
    """Amplitudes routed through c2/c3 scale as 1/J."""
    def rates(lam):
        return effective_operators_numeric(build_nonlocal_model(nonlocal_params(lam=lam)))

    e10, e100, e1000 = rates(10.0), rates(100.0), rates(1000.0)
    r = abs(e100[(0, 0)].rates["c2"]) / abs(e10[(0, 0)].rates["c2"])
    assert r == pytest.approx(0.1, rel=1e-3)
    # with a qubit excited the 1/J regime sets in once G >> C^(1/2)
    r = abs(e1000[(1, 0)].rates["c3"]) / abs(e100[(1, 0)].rates["c3"])
    assert r == pytest.approx(0.1, rel=0.1)


# ------------------------------------------------------------------ DFS model

def test_dfs_a_plus_energy():
    p = dfs_params()
    m = build_dfs_model(p.replace(Omega=0.0))
    sp = m.space
    v = (sp.basis(("0", "0", "g", 1, 0)) + sp.basis(("0", "0", "g", 0, 1))) / SQRT2
    w = (sp.basis(("0", "0", "g", 1, 0)) - sp.basis(("0", "0", "g", 0, 1))) / SQRT2
    H = m.H_e.dense()
    assert (v @ H @ v).real == pytest.approx(2 * p.J_2, rel=1e-12)
    assert abs(w @ H @ w) < 1e-12


def test_dfs_labels_dim_and_invariant_block():
    m = build_dfs_model(dfs_params().replace(Omega=0.0))
    assert m.space.dim == 176
    assert list(m.lindblads) == ["c_plus", "c_minus", "f", "g", "1", "2"]
    H = m.H_total.dense()
    ground = [ground_label(m.space, a, b) for a in "01" for b in "01"]
    rest = np.setdiff1d(np.arange(m.space.dim), ground)
    assert np.all(H[np.ix_(rest, ground)] == 0)


def test_dfs_requires_zero_J1():
    with pytest.raises(ValueError):
        build_dfs_model(nonlocal_params())


# ----------------------------------------------------------- eliminate E2

def test_eliminated_omega_tilde():
    p = nonlocal_params()
    m = eliminate_E2(build_nonlocal_model(p))
    sp = m.space
    amp = sp.basis(("0", "0", "E1", 0, 0, 0)) @ (m.V.data @ sp.basis(("0", "0", "g", 0, 0, 0)))
    assert amp == pytest.approx(-reduced(p).Omega_tilde)
    assert reduced(p).Omega_tilde == pytest.approx(1 / 3, rel=1e-14)
    assert m.variant is Variant.ELIMINATED


def test_eliminate_requires_detuning():
    p = nonlocal_params()
    m = build_nonlocal_model(p)
    with pytest.raises(ValueError):
        eliminate_E2(m, p.replace(Delta_E2=0.0))


def test_dark_state_nullity():
    p = tune(nonlocal_params())[0]
    m = eliminate_E2(build_nonlocal_model(p))
    psi = dark_state(p, m.space)
    H = m.H_total.dense()
    assert np.linalg.norm(psi) == pytest.approx(1.0)
    assert np.linalg.norm(H @ psi) / np.linalg.norm(H, 2) <= 1e-10


def test_dark_state_weak_drive_limit():
    p = tune(nonlocal_params())[0].replace(Omega=1e-12)
    m = eliminate_E2(build_nonlocal_model(p))
    psi = dark_state(p, m.space)
    assert abs(psi[m.space.index(("0", "0", "g", 0, 0, 0))]) == pytest.approx(1.0, abs=1e-12)


# --------------------------------------------------------------- fiber loss

def test_fiber_loss_zero():
    assert fiber_loss_rate(1.0, 0.0) == 0.0


def test_fiber_loss_monotone():
    a = np.linspace(0, 0.9, 10)
    k = [fiber_loss_rate(1.0, x) for x in a]
    assert np.all(np.diff(k) > 0)
    L = [fiber_loss_rate(x, 0.1) for x in (0.5, 1.0, 2.0)]
    assert L[0] > L[1] > L[2]


def test_fiber_loss_inverse_and_millesimal_gamma():
    gamma = 2 * math.pi * 6.07e6
    a = fiber_loss_fraction(1e-3 * gamma, 1.0)
    assert fiber_loss_rate(1.0, a) == pytest.approx(1e-3 * gamma, rel=1e-12)
    # frozen: a metre of fiber needs ~3.8e-4 single-pass loss for kappa_fc = 1e-3 gamma
    assert a == pytest.approx(3.813e-4, rel=1e-3)


def test_fiber_loss_errors():
    with pytest.raises(ValueError):
        fiber_loss_rate(1.0, 1.0)
    with pytest.raises(ValueError):
        fiber_loss_rate(0.0, 0.1)


def test_scaled_params():
    p = nonlocal_params()
    q = p.scaled(2.0)
    assert q.g == 2 * p.g and q.kappa == 2 * p.kappa and q.Delta_E2 == 2 * p.Delta_E2
    assert reduced(q).C == pytest.approx(reduced(p).C)
