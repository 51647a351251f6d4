"""Effective ground-space dynamics from adiabatic elimination of the excited manifold.

For each qubit sector ``(m, n)`` (number of qubit atoms in ``|1>`` in the two
cavities) the drive couples the ground state ``|g>`` to a small decaying
single-excitation block. Inverting the non-Hermitian Hamiltonian of that block
gives the ac Stark shift ``Delta_N`` and the effective jump amplitudes
``r_{zeta,N}``. Three independent evaluations are provided: direct numeric
inversion on the built model, the full closed-form expressions, and their
weak-``Omega_m`` simplification.
"""

from __future__ import annotations

import enum
import math
import warnings
from dataclasses import dataclass, field, replace

import numpy as np

from .hilbert import Operator
from .model import (
    SQRT2,
    ModelOperators,
    PhysicalParams,
    Variant,
    build_model,
    reduced,
)

SECTORS = ((0, 0), (1, 0), (0, 1), (1, 1))
COND_LIMIT = 1e12
POLE_TOL = 1e-12


class Provenance(str, enum.Enum):
    NUMERIC = "NumericInversion"
    CLOSED_FORM = "ClosedForm"
    WEAK_DRIVE = "WeakDrive"
    BALANCED = "Balanced"


class SingularBlockError(ArithmeticError):
    """The excited-manifold block is (numerically) singular."""

    def __init__(self, msg, condition_number=math.inf):
        super().__init__(msg)
        self.condition_number = condition_number


class PoleError(ArithmeticError):
    """A closed-form denominator vanishes."""


@dataclass
class SectorRecord:
    """Stark shift and effective jump amplitudes of one qubit sector."""

    m: int
    n: int
    Delta: float
    rates: dict
    provenance: Provenance

    @property
    def N(self) -> int:
        return self.m + self.n

    @property
    def Gamma(self) -> float:
        """Heralded (g -> f) decay rate: every channel except the g dephasing."""
        return float(sum(abs(r) ** 2 for k, r in self.rates.items() if k != "g"))

    def to_dict(self) -> dict:
        return {
            "m": self.m, "n": self.n, "Delta": self.Delta, "Gamma": self.Gamma,
            "rates": {k: [complex(v).real, complex(v).imag] for k, v in self.rates.items()},
            "provenance": self.provenance.value,
        }


@dataclass
class EffectiveModel:
    """Sector table ``(m, n) -> SectorRecord``."""

    sectors: dict
    provenance: Provenance
    variant: Variant = Variant.NONLOCAL
    meta: dict = field(default_factory=dict)

    def __getitem__(self, key) -> SectorRecord:
        return self.sectors[key]

    def Delta(self, m: int, n: int) -> float:
        return self.sectors[(m, n)].Delta

    def Gamma(self, m: int, n: int) -> float:
        return self.sectors[(m, n)].Gamma

    def shifts(self) -> tuple[float, float, float]:
        """``(Delta_0, Delta_1, Delta_2)``; the ``N = 1`` value is the mean of both one-excitation sectors."""
        d1 = 0.5 * (self.sectors[(1, 0)].Delta + self.sectors[(0, 1)].Delta)
        return self.sectors[(0, 0)].Delta, d1, self.sectors[(1, 1)].Delta

    def gammas(self) -> dict:
        return {k: s.Gamma for k, s in self.sectors.items()}

    def channels(self) -> list[str]:
        names = []
        for s in self.sectors.values():
            names += [k for k in s.rates if k not in names]
        return names

    def to_dict(self) -> dict:
        return {
            "provenance": self.provenance.value,
            "variant": self.variant.value,
            "sectors": {f"{m}{n}": s.to_dict() for (m, n), s in sorted(self.sectors.items())},
            **({"meta": self.meta} if self.meta else {}),
        }


# ---------------------------------------------------------------- numeric path

def build_h_nh(m: ModelOperators) -> Operator:
    """``H_e - (i/2) sum_j L_j^dag L_j`` on the full model space."""
    K = sum((L.dag() @ L for L in m.lindblad_list()), start=0 * m.H_e)
    out = m.H_e - 0.5j * K
    out.label = "H_NH"
    return out


def ground_index(m: ModelOperators, mq: int, nq: int) -> int:
    space = m.space
    labels = ["1" if mq else "0", "1" if nq else "0", "g"] + [0] * len(m.mode_slots)
    return space.index(labels)


@dataclass
class SectorBlock:
    ground: int
    basis: np.ndarray
    H: np.ndarray
    v: np.ndarray
    ground_energy: float


def sector_block(m: ModelOperators, mq: int, nq: int, h_nh: Operator | None = None) -> SectorBlock:
    """Decaying block reached from ``V |ground>`` for qubit sector ``(mq, nq)``."""
    h_nh = build_h_nh(m) if h_nh is None else h_nh
    g0 = ground_index(m, mq, nq)
    Vcol = m.V.data[:, [g0]].tocoo()
    start = set(Vcol.row.tolist())
    if not start:
        raise ValueError("drive V does not couple the ground state")
    A = h_nh.data.tocsc()
    seen = set(start)
    stack = list(start)
    while stack:
        i = stack.pop()
        for j in A.indices[A.indptr[i]:A.indptr[i + 1]]:
            j = int(j)
            if j not in seen and j != g0:
                seen.add(j)
                stack.append(j)
    basis = np.array(sorted(seen))
    H = h_nh.data[basis][:, basis].toarray()
    v = np.asarray(m.V.data[basis][:, [g0]].toarray()).ravel()
    e0 = complex(m.H_e.data[g0, g0]).real
    return SectorBlock(g0, basis, H, v, e0)


def effective_operators_numeric(m: ModelOperators) -> EffectiveModel:
    """Per-sector shifts and jump amplitudes by direct inversion of the decaying block."""
    h_nh = build_h_nh(m)
    sectors = {}
    conds = {}
    for mq, nq in SECTORS:
        blk = sector_block(m, mq, nq, h_nh)
        cond = np.linalg.cond(blk.H)
        conds[f"{mq}{nq}"] = float(cond)
        if not np.isfinite(cond) or cond > COND_LIMIT:
            raise SingularBlockError(
                f"excited block of sector ({mq},{nq}) is singular (condition number {cond:.3g})", cond)
        x = np.linalg.solve(blk.H, blk.v)
        Delta = -float(np.real(np.vdot(blk.v, x))) + blk.ground_energy
        full = np.zeros(m.space.dim, dtype=complex)
        full[blk.basis] = x
        rates = {}
        for lab, L in m.lindblads.items():
            y = L.data @ full
            if not np.any(y):
                if lab in ("1", "2"):
                    continue
                rates[lab] = 0j
                continue
            k = int(np.argmax(np.abs(y)))
            rates[lab] = complex(y[k])
        # qubit-decay channels only exist when that atom is in |1>
        if not mq:
            rates.pop("1", None)
        if not nq:
            rates.pop("2", None)
        sectors[(mq, nq)] = SectorRecord(mq, nq, Delta, rates, Provenance.NUMERIC)
    variant = m.params.variant if m.variant is Variant.ELIMINATED else m.variant
    return EffectiveModel(sectors, Provenance.NUMERIC, variant, {"condition_numbers": conds})


def effective_numeric(p: PhysicalParams, eliminated: bool = False) -> EffectiveModel:
    """Convenience wrapper: build the single-excitation model of ``p`` and invert it."""
    from .model import eliminate_E2

    m = build_model(p, n_max=1, excitation_cap=2)
    if eliminated:
        m = eliminate_E2(m)
    return effective_operators_numeric(m)


# ------------------------------------------------------------ closed forms

def _check_pole(val, scale, what):
    if not np.isfinite(val) or abs(val) <= POLE_TOL * max(scale, 1e-300):
        raise PoleError(f"{what} vanishes (|{what}| = {abs(val):.3g}, scale {scale:.3g})")


def delta_n_closed_form(p: PhysicalParams, m: int, n: int) -> SectorRecord:
    """Full closed-form shift and amplitudes of sector ``(m, n)`` for the three-cavity setup."""
    if p.Delta_E2 == 0:
        raise ValueError("closed form requires Delta_E2 != 0")
    rp = reduced(p)
    C, Cf, gam = rp.C, rp.C_f, p.gamma
    J1, J2 = rp.J_tilde_1, rp.J_tilde_2
    De, DE2 = rp.Delta_e_tilde, rp.Delta_E2_tilde
    S1, S2, Z = rp.S_1, rp.S_2, rp.Z
    Om, Omt_m = p.Omega, rp.Omega_m_tilde
    R1 = (De * C * (m + n) * (J2 + 2 * J1 + 2j * J1 * J2)
          - 2 * C ** 2 * m * n * (2j * J1 + 1) - 4 * De ** 2 * J1 * J2)
    R2 = (4 * De * C * (m + n) * (2j * (J1 + 2 * J2) + 1)
          - 32j * C ** 2 * m * n - 8 * De ** 2 * J2 * (2j * J1 + 1))
    a, b = Cf * DE2 * R2, R1 * Z
    X = a - b
    _check_pole(X, max(abs(a), abs(b)), "X_N")
    br = C * De * (m + n) * (S1 + J2 * S2) - 2 * De ** 2 * J2 * S1 - 2 * m * n * C ** 2 * S2
    Delta = -(Om ** 2 / gam) * float(np.real(br / X))
    if p.stark_compensation:
        Delta += Om ** 2 / (4 * p.Delta_E2)
    dl = math.sqrt(Cf) * Om * Omt_m / (math.sqrt(gam) * X)
    rates = {
        "g": 2 * Om * math.sqrt(p.gamma_g) / (gam * X) * br,
        "f": Om * Omt_m * R1 * math.sqrt(p.gamma_f) / (gam * X),
        "c1": 2 * SQRT2 * 1j * dl * (De * C * (J1 + J2) * (m + n) - 2 * De ** 2 * J1 * J2 - 2 * C ** 2 * m * n),
        "c2": SQRT2 * dl * (2 * De ** 2 * J2 + 4j * C ** 2 * m * n - C * De * (1 + 2j * J2) * (m + n)),
        "c3": C * dl * (De * (1 - 2j * J1) * (m - n)),
    }
    if m:
        rates["1"] = math.sqrt(2 * C) * dl * ((1 - 2j * J1) * (n * C - De * J2))
    if n:
        rates["2"] = math.sqrt(2 * C) * dl * ((1 - 2j * J1) * (m * C - De * J2))
    rates = {k: complex(v) for k, v in rates.items()}
    return SectorRecord(m, n, Delta, rates, Provenance.CLOSED_FORM)


def delta_n_weak_drive(p: PhysicalParams, m: int, n: int, drop_suppressed: bool = True) -> SectorRecord:
    """Weak ``E2 <-> E1`` drive simplification of the closed forms.

    With ``drop_suppressed`` the ``gamma_g_tilde`` correction to ``r_g`` is
    dropped, so ``r_g = Omega sqrt(gamma_g) / (2 Delta_E2)`` in every sector.
    The state-independent light shift ``-Omega^2/(4 Delta_E2)`` is kept unless
    Stark compensation is on.
    """
    if p.Delta_E2 == 0:
        raise ValueError("weak-drive form requires Delta_E2 != 0")
    ratio = p.Omega_m / abs(p.Delta_E2)
    if ratio > 0.2:
        warnings.warn(f"Omega_m/Delta_E2 = {ratio:.3g} is not small; weak-drive forms are inaccurate",
                      stacklevel=2)
    rp = reduced(p)
    C, Cf, gam = rp.C, rp.C_f, p.gamma
    J1, J2 = rp.J_tilde_1, rp.J_tilde_2
    De, DE1 = rp.Delta_e_tilde, rp.Delta_E1_tilde
    Omt = rp.Omega_tilde
    R = (2 * De ** 2 * (-1j + 2 * J1) * J2 + 8 * C ** 2 * m * n
         - C * De * (-1j + 2 * J1 + 4 * J2) * (m + n))
    Q = (4j * De * J1 * J2 + 2 * C ** 2 * (1j - 2 * J1) * m * n
         + C * De * (2 * J1 * J2 - 1j * (J2 + 2 * J1)) * (m + n))
    a, b = Cf * R, DE1 * Q
    den = a + b
    _check_pole(den, max(abs(a), abs(b)), "C_f R + Delta_E1 Q")
    Delta = -Omt ** 2 / (4 * gam) * float(np.real(Q / den))
    if not p.stark_compensation:
        Delta -= p.Omega ** 2 / (4 * p.Delta_E2)
    dp = Omt * math.sqrt(Cf) / (2 * math.sqrt(gam) * den)
    r_g = p.Omega * math.sqrt(p.gamma_g) / (2 * p.Delta_E2)
    if not drop_suppressed:
        r_g = r_g + Omt * Q * math.sqrt(rp.gamma_g_tilde) / (2 * gam * den)
    rates = {
        "g": r_g,
        "f": -Omt * Q * math.sqrt(p.gamma_f) / (2 * gam * den),
        "c1": 2 * SQRT2 * dp * (2 * De ** 2 * J1 * J2 + 2 * C ** 2 * m * n - C * De * (J1 + J2) * (m + n)),
        "c2": SQRT2 * dp * (2j * De ** 2 * J2 - 4 * C ** 2 * m * n + C * De * (2 * J2 - 1j) * (m + n)),
        "c3": dp * (C * De * (1j + 2 * J1) * (m - n)),
    }
    # alpha' * delta reduces to i * delta'
    if m:
        rates["1"] = 1j * dp * math.sqrt(2 * C) * ((1 - 2j * J1) * (n * C - De * J2))
    if n:
        rates["2"] = 1j * dp * math.sqrt(2 * C) * ((1 - 2j * J1) * (m * C - De * J2))
    rates = {k: complex(v) for k, v in rates.items()}
    return SectorRecord(m, n, Delta, rates, Provenance.WEAK_DRIVE)


def effective_closed_form(p: PhysicalParams) -> EffectiveModel:
    return EffectiveModel({s: delta_n_closed_form(p, *s) for s in SECTORS}, Provenance.CLOSED_FORM)


def effective_weak_drive(p: PhysicalParams, drop_suppressed: bool = True) -> EffectiveModel:
    return EffectiveModel({s: delta_n_weak_drive(p, *s, drop_suppressed=drop_suppressed) for s in SECTORS},
                          Provenance.WEAK_DRIVE)


# ------------------------------------------------------------------ tuning

def target_decay_rate(p: PhysicalParams) -> float:
    """State-independent heralded decay rate ``Omega_tilde^2 / (2 gamma alpha C)``."""
    rp = reduced(p)
    return rp.Omega_tilde ** 2 / (2 * p.gamma * p.alpha * rp.C)


def tune_detunings_nonlocal(p: PhysicalParams) -> tuple[PhysicalParams, float]:
    """Set ``Delta_E1`` and ``Delta_e`` for a sector-independent decay rate (three-cavity setup)."""
    rp = reduced(p)
    C, D, Gb = rp.C, rp.D, rp.Gbar
    if C < 20 or rp.G < 5:
        warnings.warn(f"tuning assumes C, G >> 1 (C = {C:.3g}, G = {rp.G:.3g})", stacklevel=2)
    if Gb - 2 * D == 0:
        raise ZeroDivisionError("Gbar = 2D makes the Delta_e tuning singular")
    dE1 = p.alpha * C * D / SQRT2
    de = (-2 + C * (Gb ** 2 - 4 * D * Gb)) / (2 * SQRT2 * (Gb - 2 * D))
    q = replace(p, Delta_E1=dE1 * p.gamma, Delta_e=de * p.gamma)
    return q, target_decay_rate(q)


def balanced_shifts_nonlocal(p: PhysicalParams, Gamma: float | None = None) -> tuple[float, float, float]:
    """Asymptotic shifts ``(Delta_0, Delta_1, Delta_2)`` after tuning."""
    rp = reduced(p)
    G = target_decay_rate(p) if Gamma is None else Gamma
    C, D, Gb = rp.C, rp.D, rp.Gbar
    d0 = -G * (4 * D - Gb) / (8 * SQRT2)
    d1 = -(G / SQRT2) * (2 * D - Gb) / (2 / C + Gb ** 2 - D * Gb + 2 * D ** 2)
    d2 = -(G / SQRT2) * (2 * D - Gb) / (1 / C + Gb ** 2 / 2 - D * Gb + 2 * D ** 2)
    return d0, d1, d2


def tune_detunings_dfs(p: PhysicalParams) -> tuple[PhysicalParams, tuple[float, float, float]]:
    """Tuning for the two-cavity setup; returns tuned params and asymptotic shifts."""
    if p.J_1 != 0:
        raise ValueError("two-cavity tuning needs J_1 = 0")
    rp = reduced(p)
    C, Gb, D1 = rp.C, rp.Gbar, rp.D_1
    if C < 20 or rp.G < 1:
        warnings.warn(f"tuning assumes C >> 1 (C = {C:.3g}, G = {rp.G:.3g})", stacklevel=2)
    de = 1.0 / (2 * (2 * D1 + Gb))
    dE1 = p.alpha * C * (D1 + Gb)
    q = replace(p, Delta_E1=dE1 * p.gamma, Delta_e=de * p.gamma)
    return q, balanced_shifts_dfs(q)


def balanced_shifts_dfs(p: PhysicalParams) -> tuple[float, float, float]:
    rp = reduced(p)
    C, Gb, D1 = rp.C, rp.Gbar, rp.D_1
    G = target_decay_rate(p)
    pref = rp.Omega_tilde ** 2 / (2 * p.gamma)
    out = [-G * D1 / 2]
    for n in (1, 2):
        out.append(-pref * n * (2 * D1 + Gb) / (p.alpha * C * (4 * n * D1 ** 2 + 2 * n * D1 * Gb + 1 / C)))
    return tuple(out)


def tune(p: PhysicalParams) -> tuple[PhysicalParams, float]:
    """Tune either setup; returns tuned params and the target decay rate."""
    if p.variant is Variant.DFS:
        q, _ = tune_detunings_dfs(p)
        return q, target_decay_rate(q)
    return tune_detunings_nonlocal(p)


def balanced_shifts(p: PhysicalParams) -> tuple[float, float, float]:
    return balanced_shifts_dfs(p) if p.variant is Variant.DFS else balanced_shifts_nonlocal(p)


def gamma_flatness(eff: EffectiveModel, Gamma: float) -> float:
    """Largest relative deviation of the sector decay rates from ``Gamma``."""
    return max(abs(s.Gamma - Gamma) / Gamma for s in eff.sectors.values())


def balanced_model(eff: EffectiveModel, Gamma: float, r_g: complex = 0.0,
                   shifts: tuple[float, float, float] | None = None) -> EffectiveModel:
    """Copy of ``eff`` with every sector decaying at exactly ``Gamma``.

    The heralded channels are lumped into one amplitude ``sqrt(Gamma)`` and the
    dephasing amplitude ``r_g`` is made sector-independent. ``shifts``, if
    given, replaces the sector energies by ``(Delta_0, Delta_1, Delta_2)``
    indexed by ``N = m + n``.
    """
    sectors = {
        k: SectorRecord(s.m, s.n, s.Delta if shifts is None else float(shifts[s.m + s.n]),
                        {"g": complex(r_g), "f": complex(math.sqrt(Gamma))}, Provenance.BALANCED)
        for k, s in eff.sectors.items()
    }
    return EffectiveModel(sectors, Provenance.BALANCED, eff.variant)


def analytic_success_probability(p: PhysicalParams, t: float, Gamma: float | None = None):
    """``(exp(-Gamma t), 1 - Z_p pi / sqrt(C), Z_p)``."""
    rp = reduced(p)
    G = target_decay_rate(p) if Gamma is None else Gamma
    return math.exp(-G * t), 1.0 - rp.Z_p * math.pi / math.sqrt(rp.C), rp.Z_p


def relative_gaps(a: EffectiveModel, b: EffectiveModel) -> dict:
    """Per-sector relative gaps in ``Delta`` and in each ``|r|^2``."""
    out = {}
    for key in SECTORS:
        sa, sb = a[key], b[key]
        gaps = {"Delta": abs(sa.Delta - sb.Delta) / max(abs(sb.Delta), 1e-300)}
        # channels that vanish by symmetry are compared against the sector total
        floor = 1e-14 * max(sb.Gamma, 1e-300)
        for lab in sb.rates:
            ra = abs(sa.rates.get(lab, 0.0)) ** 2
            rb = abs(sb.rates[lab]) ** 2
            scale = max(rb, floor)
            gaps[f"|r_{lab}|^2"] = 0.0 if ra == rb else abs(ra - rb) / scale
        out[f"{key[0]}{key[1]}"] = gaps
    return out
