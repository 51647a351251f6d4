"""Physical parameters and rotating-frame models of the cavity network.

Two setups are supported:

* ``Nonlocal3Cav``: qubit atoms 1 and 2 sit in cavities A and C, the auxiliary
  atom sits in the middle cavity B, and A-B, B-C are coupled with strength J.
  The Hamiltonian is written in terms of the three normal modes
  ``c1 = (aA - sqrt2 aB + aC)/2``, ``c2 = (aA + sqrt2 aB + aC)/2`` and
  ``c3 = (aA - aC)/sqrt2`` in the frame where ``c1`` is resonant.
* ``DFS2Cav``: both qubit atoms share cavity C, the auxiliary atom sits in B,
  and only B-C are coupled. The modes ``a+- = (aB +- aC)/sqrt2`` sit at 2J and 0.

All rates are in the same (arbitrary) angular-frequency unit, normally gamma.
"""

from __future__ import annotations

import enum
import json
import math
from dataclasses import asdict, dataclass, field, fields, replace
from typing import Mapping

import numpy as np

from .hilbert import (
    Atom,
    HilbertSpace,
    Mode,
    Operator,
    annihilator,
    build_space,
    transition,
)

SQRT2 = math.sqrt(2.0)
QUBIT_LEVELS = ("0", "1", "e", "d")
AUX_LEVELS = ("g", "f", "E1", "E2")
AUX_LEVELS_ELIMINATED = ("g", "f", "E1")


class Variant(str, enum.Enum):
    NONLOCAL = "Nonlocal3Cav"
    DFS = "DFS2Cav"
    ELIMINATED = "EliminatedE2"


@dataclass(frozen=True)
class PhysicalParams:
    """All couplings, rates, detunings and drive amplitudes of the composite system.

    ``alpha`` and ``beta`` are the ratios ``C_f = alpha C`` and
    ``gamma_f = beta gamma`` used by the detuning-tuning formulas. They are
    stored independently of ``g_f`` and ``gamma_f``; :meth:`ratio_mismatch`
    reports any inconsistency.
    """

    g: float
    g_f: float
    J_1: float
    J_2: float
    kappa: float = 10.0
    gamma: float = 1.0
    gamma_g: float = 1.0
    gamma_f: float = 1.0
    Omega: float = 0.0
    Omega_m: float = 0.0
    Delta_e: float = 0.0
    Delta_E1: float = 0.0
    Delta_E2: float = 0.0
    alpha: float = 1.0
    beta: float = 1.0
    stark_compensation: bool = True
    L_fc: float | None = None
    alpha_l: float | None = None

    def __post_init__(self):
        for name in ("g", "g_f", "kappa", "gamma"):
            v = getattr(self, name)
            if not (isinstance(v, (int, float)) and math.isfinite(v) and v > 0):
                raise ValueError(f"{name} must be a positive finite number, got {v!r}")
        for name in ("gamma_g", "gamma_f", "Omega", "Omega_m", "J_1", "J_2"):
            v = getattr(self, name)
            if not (isinstance(v, (int, float)) and math.isfinite(v) and v >= 0):
                raise ValueError(f"{name} must be a non-negative finite number, got {v!r}")
        for name in ("Delta_e", "Delta_E1", "Delta_E2"):
            v = getattr(self, name)
            if not (isinstance(v, (int, float)) and math.isfinite(v)):
                raise ValueError(f"{name} must be a finite real number, got {v!r}")
        for name in ("alpha", "beta"):
            v = getattr(self, name)
            if not (isinstance(v, (int, float)) and math.isfinite(v) and v > 0):
                raise ValueError(f"{name} must be a positive finite number, got {v!r}")
        if not isinstance(self.stark_compensation, bool):
            raise ValueError("stark_compensation must be a boolean")
        if self.alpha_l is not None and not (0.0 <= self.alpha_l < 1.0):
            raise ValueError(f"alpha_l must lie in [0, 1), got {self.alpha_l!r}")
        if self.L_fc is not None and not self.L_fc > 0:
            raise ValueError(f"L_fc must be positive, got {self.L_fc!r}")

    # -- serialization -------------------------------------------------
    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self, **kw) -> str:
        return json.dumps(self.to_dict(), **kw)

    @classmethod
    def field_names(cls) -> tuple[str, ...]:
        return tuple(f.name for f in fields(cls))

    @classmethod
    def from_dict(cls, d: Mapping) -> "PhysicalParams":
        unknown = set(d) - set(cls.field_names())
        if unknown:
            raise KeyError(f"unknown parameter field(s): {', '.join(sorted(unknown))}")
        return cls(**dict(d))

    @classmethod
    def from_json(cls, s: str) -> "PhysicalParams":
        d = json.loads(s)
        if not isinstance(d, dict):
            raise ValueError("parameters must be a JSON object")
        return cls.from_dict(d)

    # -- convenience ---------------------------------------------------
    @property
    def J(self) -> float:
        return self.J_2

    @property
    def variant(self) -> Variant:
        return Variant.DFS if self.J_1 == 0 else Variant.NONLOCAL

    def replace(self, **changes) -> "PhysicalParams":
        return replace(self, **changes)

    def scaled(self, s: float) -> "PhysicalParams":
        """Multiply every rate, coupling and detuning by ``s``."""
        keys = ("g", "g_f", "J_1", "J_2", "kappa", "gamma", "gamma_g", "gamma_f",
                "Omega", "Omega_m", "Delta_e", "Delta_E1", "Delta_E2")
        return replace(self, **{k: getattr(self, k) * s for k in keys})

    def ratio_mismatch(self) -> float:
        """Largest relative gap between (alpha, beta) and (C_f/C, gamma_f/gamma)."""
        a = (self.g_f / self.g) ** 2
        b = self.gamma_f / self.gamma
        return max(abs(a - self.alpha) / self.alpha, abs(b - self.beta) / self.beta)


def caption_params(C: float, lam: float, delta_E2_over_gamma: float,
                   variant: Variant | str = Variant.NONLOCAL, gamma: float = 1.0,
                   kappa_over_gamma: float = 10.0, stark_compensation: bool = True) -> PhysicalParams:
    """Parameters from the standard preset rules (untuned ``Delta_e``, ``Delta_E1``).

    ``kappa = 10 gamma``, ``gamma_g = gamma_f = gamma``, ``g = g_f = sqrt(C kappa gamma)``,
    ``J = lam kappa sqrt(C)``, ``Omega = Delta_E2 / (6 C^(1/4))`` and
    ``Omega_m = 4 gamma C^(1/4)``.
    """
    variant = Variant(variant) if not isinstance(variant, Variant) else variant
    if C <= 0 or lam <= 0:
        raise ValueError("C and lambda must be positive")
    kappa = kappa_over_gamma * gamma
    g = math.sqrt(C * kappa * gamma)
    J = lam * kappa * math.sqrt(C)
    dE2 = delta_E2_over_gamma * gamma
    return PhysicalParams(
        g=g, g_f=g,
        J_1=0.0 if variant is Variant.DFS else J, J_2=J,
        kappa=kappa, gamma=gamma, gamma_g=gamma, gamma_f=gamma,
        Omega=abs(dE2) / (6.0 * C ** 0.25), Omega_m=4.0 * gamma * C ** 0.25,
        Delta_E2=dE2, alpha=1.0, beta=1.0, stark_compensation=stark_compensation,
    )


@dataclass(frozen=True)
class ReducedParams:
    """Dimensionless combinations derived from :class:`PhysicalParams`."""

    C: float
    C_f: float
    G: float
    lam: float
    Gbar: float
    D: float
    D_1: float
    d: float
    Omega_tilde: float
    gamma_g_tilde: float
    Omega_m_tilde: float
    J_tilde_1: complex
    J_tilde_2: complex
    Delta_e_tilde: complex
    Delta_E1_tilde: complex
    Delta_E2_tilde: complex
    Lambda: tuple[float, float, float]
    Z_p: float
    S_1: complex = field(default=0j)
    S_2: complex = field(default=0j)
    Z: complex = field(default=0j)

    @property
    def S_k(self) -> tuple[int, int]:
        return (1, -1)


def reduced(p: PhysicalParams) -> ReducedParams:
    """Compute the reduced parameter set (pure function of ``p``)."""
    C = p.g ** 2 / (p.kappa * p.gamma)
    C_f = p.g_f ** 2 / (p.kappa * p.gamma)
    J = p.J_2
    G = J / p.kappa
    Gbar = 1.0 / G if G > 0 else math.inf
    D = math.sqrt(p.beta / (p.alpha * C))
    D_1 = math.sqrt((Gbar ** 2 + p.beta / (p.alpha * C)) / 2.0)
    d = math.sqrt(p.beta / p.alpha)
    lam = J / (p.kappa * math.sqrt(C))
    if p.Delta_E2 != 0:
        Om_t = p.Omega * p.Omega_m / (2.0 * p.Delta_E2)
        gg_t = p.gamma_g * p.Omega_m ** 2 / (2.0 * p.Delta_E2) ** 2
    else:
        Om_t, gg_t = math.nan, math.nan
    J1 = 2 * SQRT2 * J / p.kappa - 0.5j
    J2 = SQRT2 * J / p.kappa - 0.5j
    De = p.Delta_e / p.gamma - 0.5j
    DE1 = p.Delta_E1 / p.gamma - 0.5j * p.gamma_f / p.gamma
    DE2 = p.Delta_E2 / p.gamma - 0.5j * p.gamma_g / p.gamma
    Om_m_t = p.Omega_m / p.gamma
    return ReducedParams(
        C=C, C_f=C_f, G=G, lam=lam, Gbar=Gbar, D=D, D_1=D_1, d=d,
        Omega_tilde=Om_t, gamma_g_tilde=gg_t, Omega_m_tilde=Om_m_t,
        J_tilde_1=J1, J_tilde_2=J2, Delta_e_tilde=De, Delta_E1_tilde=DE1, Delta_E2_tilde=DE2,
        Lambda=(-SQRT2 * J, SQRT2 * J, 0.0),
        Z_p=scaling_factor(lam, d) if lam > 0 and 2 * d * lam != 1 else math.nan,
        S_1=C_f * (2j * J1 + 1) - 2 * DE1 * J1,
        S_2=4j * C_f - DE1 * (2j * J1 + 1),
        Z=4 * DE1 * DE2 - Om_m_t ** 2,
    )


def scaling_factor(lam: float, d: float) -> float:
    """Success-probability scaling factor ``Z_p(lambda, d)``."""
    return (SQRT2 * d
            + (1 + 2 * lam ** 2) ** 2 / (SQRT2 * d * lam ** 2 * (1 - 2 * d * lam) ** 2)
            + (3 + 6 * lam ** 2) / (SQRT2 * lam * (2 * d * lam - 1)))


@dataclass(frozen=True)
class ModelOperators:
    """``(H_e, V, {L_j})`` partition of a model on its Hilbert space."""

    space: HilbertSpace
    H_e: Operator
    V: Operator
    lindblads: dict
    variant: Variant
    params: PhysicalParams
    qubit_slots: tuple[str, ...] = ("q1", "q2")
    aux_slot: str = "aux"
    mode_slots: tuple[str, ...] = ()
    dump: str = "d"

    @property
    def H_total(self) -> Operator:
        return self.H_e + self.V + self.V.dag()

    def lindblad_list(self) -> list[Operator]:
        return list(self.lindblads.values())

    def hermiticity_error(self) -> float:
        h = self.H_total.data
        d = (h - h.conj().T)
        return float(abs(d).max()) if d.nnz else 0.0


def normal_modes(space: HilbertSpace, variant: Variant | str):
    """Normal-mode annihilators built from the physical mode slots of ``space``.

    Returns ``(c1, c2, c3)`` for the three-cavity setup (modes in order A, B, C)
    and ``(a_plus, a_minus)`` for the two-cavity setup (modes B, C).
    """
    variant = Variant(variant)
    modes = [k for k, s in enumerate(space.slots) if isinstance(s, Mode)]
    if variant is Variant.DFS:
        if len(modes) != 2:
            raise ValueError(f"two-cavity setup needs 2 mode slots, found {len(modes)}")
        aB, aC = (annihilator(space, k) for k in modes)
        ap = (aB + aC) / SQRT2
        am = (aB - aC) / SQRT2
        ap.label, am.label = "a_plus", "a_minus"
        return ap, am
    if len(modes) != 3:
        raise ValueError(f"three-cavity setup needs 3 mode slots, found {len(modes)}")
    aA, aB, aC = (annihilator(space, k) for k in modes)
    c1 = (aA - SQRT2 * aB + aC) * 0.5
    c2 = (aA + SQRT2 * aB + aC) * 0.5
    c3 = (aA - aC) / SQRT2
    c1.label, c2.label, c3.label = "c1", "c2", "c3"
    return c1, c2, c3


def normal_mode_matrix(variant: Variant | str) -> np.ndarray:
    """Rows give each normal mode as a combination of the physical modes."""
    if Variant(variant) is Variant.DFS:
        return np.array([[1, 1], [1, -1]]) / SQRT2
    return np.array([[0.5, -SQRT2 / 2, 0.5], [0.5, SQRT2 / 2, 0.5], [1 / SQRT2, 0, -1 / SQRT2]])


def _space(variant: Variant, n_max: int, excitation_cap: int | None, eliminated: bool) -> HilbertSpace:
    qubit = ("q1", "q2")
    aux = Atom("aux", AUX_LEVELS_ELIMINATED if eliminated else AUX_LEVELS)
    slots = [Atom(qubit[0], QUBIT_LEVELS), Atom(qubit[1], QUBIT_LEVELS), aux]
    names = ("A", "B", "C") if variant is Variant.NONLOCAL else ("B", "C")
    slots += [Mode(n, n_max) for n in names]
    return build_space(slots, excitation_cap)


def _check_dump(dump: str) -> None:
    if dump not in ("d", "0", "1"):
        raise ValueError("dump must be one of 'd', '0', '1'")


def _assemble(p: PhysicalParams, setup: Variant, n_max: int, excitation_cap: int | None,
              dump: str, eliminated: bool) -> ModelOperators:
    _check_dump(dump)
    if eliminated and p.Delta_E2 == 0:
        raise ValueError("cannot eliminate E2 with Delta_E2 = 0")
    space = _space(setup, n_max, excitation_cap, eliminated)
    modes = normal_modes(space, setup)
    aux = "aux"
    pE1 = transition(space, aux, "E1", "E1")
    H = (p.Delta_E1 - (p.Omega_m ** 2 / (4 * p.Delta_E2) if eliminated else 0.0)) * pE1

    if setup is Variant.NONLOCAL:
        c1, c2, c3 = modes
        J = p.J_2
        H = H + (2 * SQRT2 * J) * (c2.dag() @ c2) + (SQRT2 * J) * (c3.dag() @ c3)
        cav_aux = (p.g_f / SQRT2) * (c2 - c1)
        qubit_mode = [0.5 * p.g * (c1 + c2 + SQRT2 * c3), 0.5 * p.g * (c1 + c2 - SQRT2 * c3)]
        cav_labels = ("c1", "c2", "c3")
    else:
        ap, am = modes
        H = H + (2 * p.J_2) * (ap.dag() @ ap)
        cav_aux = (p.g_f / SQRT2) * (ap + am)
        qubit_mode = [(p.g / SQRT2) * (ap - am)] * 2
        cav_labels = ("c_plus", "c_minus")

    t = cav_aux @ transition(space, aux, "E1", "f")
    H = H + t + t.dag()
    for k, q in enumerate(("q1", "q2")):
        t = qubit_mode[k] @ transition(space, q, "e", "1")
        H = H + p.Delta_e * transition(space, q, "e", "e") + t + t.dag()

    if eliminated:
        Om_t = p.Omega * p.Omega_m / (2 * p.Delta_E2)
        V = -Om_t * transition(space, aux, "E1", "g")
    else:
        H = H + p.Delta_E2 * transition(space, aux, "E2", "E2")
        t = 0.5 * p.Omega_m * transition(space, aux, "E1", "E2")
        H = H + t + t.dag()
        V = 0.5 * p.Omega * transition(space, aux, "E2", "g")
        if p.stark_compensation and p.Delta_E2 != 0:
            # cancels the drive-induced light shift of |g>
            H = H + (p.Omega ** 2 / (4 * p.Delta_E2)) * transition(space, aux, "g", "g")

    kappa = p.kappa
    Ls = {}
    for lab, c in zip(cav_labels, modes):
        Ls[lab] = math.sqrt(kappa) * c
    Ls["f"] = math.sqrt(p.gamma_f) * transition(space, aux, "f", "E1")
    if eliminated:
        gg_t = p.gamma_g * p.Omega_m ** 2 / (2 * p.Delta_E2) ** 2
        Ls["g"] = math.sqrt(gg_t) * transition(space, aux, "g", "E1")
    else:
        Ls["g"] = math.sqrt(p.gamma_g) * transition(space, aux, "g", "E2")
    for k, q in enumerate(("q1", "q2")):
        Ls[str(k + 1)] = math.sqrt(p.gamma) * transition(space, q, dump, "e")
    for lab, L in Ls.items():
        L.label = f"L_{lab}"
    H.label = "H_e"
    V.label = "V"
    mode_slots = tuple(s.name for s in space.slots if isinstance(s, Mode))
    return ModelOperators(space=space, H_e=H, V=V, lindblads=Ls,
                          variant=Variant.ELIMINATED if eliminated else setup,
                          params=p, mode_slots=mode_slots, dump=dump)


def build_nonlocal_model(p: PhysicalParams, n_max: int = 1, excitation_cap: int | None = 2,
                         dump: str = "d") -> ModelOperators:
    """Three-cavity model with qubit atoms in A and C and the auxiliary atom in B."""
    if not (p.J_1 > 0 and p.J_1 == p.J_2):
        raise ValueError("nonlocal setup needs J_1 = J_2 > 0")
    return _assemble(p, Variant.NONLOCAL, n_max, excitation_cap, dump, eliminated=False)


def build_dfs_model(p: PhysicalParams, n_max: int = 1, excitation_cap: int | None = 2,
                    dump: str = "d") -> ModelOperators:
    """Two-cavity model with both qubit atoms in C and the auxiliary atom in B."""
    if not (p.J_1 == 0 and p.J_2 > 0):
        raise ValueError("two-cavity setup needs J_1 = 0 and J_2 > 0")
    return _assemble(p, Variant.DFS, n_max, excitation_cap, dump, eliminated=False)


def build_model(p: PhysicalParams, **kw) -> ModelOperators:
    return build_dfs_model(p, **kw) if p.variant is Variant.DFS else build_nonlocal_model(p, **kw)


def eliminate_E2(m: ModelOperators, p: PhysicalParams | None = None) -> ModelOperators:
    """Adiabatically eliminate ``E2``: the auxiliary atom becomes a three-level system.

    ``E1`` is shifted by ``-Omega_m^2 / (4 Delta_E2)``, the drive becomes
    ``V' = -Omega_tilde |E1><g|`` and ``E2 -> g`` decay is replaced by the
    suppressed rate ``gamma_g Omega_m^2 / (2 Delta_E2)^2`` acting on ``E1``.
    """
    if m.variant is Variant.ELIMINATED:
        raise ValueError("model is already eliminated")
    p = m.params if p is None else p
    if p.Delta_E2 == 0:
        raise ValueError("cannot eliminate E2 with Delta_E2 = 0")
    n_max = next(s.n_max for s in m.space.slots if isinstance(s, Mode))
    return _assemble(p, m.variant, n_max, m.space.excitation_cap, m.dump, eliminated=True)


def dark_state(p: PhysicalParams, space: HilbertSpace) -> np.ndarray:
    """Zero-energy state ``(g_f |00,g,vac> - sqrt2 Om_t |00,f,1_c1>) / norm`` of the eliminated model."""
    names = [s.name for s in space.slots]
    if names[:3] != ["q1", "q2", "aux"] or len(names) != 6:
        raise ValueError("dark_state expects the three-cavity slot layout")
    Om_t = p.Omega * p.Omega_m / (2 * p.Delta_E2)
    psi = p.g_f * space.basis(("0", "0", "g", 0, 0, 0))
    # one photon in c1 = (aA^dag - sqrt2 aB^dag + aC^dag)/2 acting on vacuum
    c1_photon = (0.5 * space.basis(("0", "0", "f", 1, 0, 0))
                 - (SQRT2 / 2) * space.basis(("0", "0", "f", 0, 1, 0))
                 + 0.5 * space.basis(("0", "0", "f", 0, 0, 1)))
    psi = psi - SQRT2 * Om_t * c1_photon
    return psi / np.linalg.norm(psi)


def fiber_loss_rate(L_fc: float, alpha_l: float, c_fiber: float = 2.0e8) -> float:
    """Intrinsic loss rate ``-c ln(1 - alpha_l) / (2 L_fc)`` of a fiber link (1/s)."""
    if not L_fc > 0:
        raise ValueError("L_fc must be positive")
    if not 0.0 <= alpha_l < 1.0:
        raise ValueError("alpha_l must lie in [0, 1)")
    return -c_fiber * math.log1p(-alpha_l) / (2.0 * L_fc)


def fiber_loss_fraction(kappa_fc: float, L_fc: float, c_fiber: float = 2.0e8) -> float:
    """Single-pass loss fraction that produces ``kappa_fc`` (inverse of :func:`fiber_loss_rate`)."""
    return -math.expm1(-2.0 * L_fc * kappa_fc / c_fiber)


def ground_projector(m: ModelOperators) -> Operator:
    return transition(m.space, m.aux_slot, "g", "g")


__all__ = [
    "PhysicalParams", "ReducedParams", "ModelOperators", "Variant",
    "caption_params", "reduced", "scaling_factor", "normal_modes", "normal_mode_matrix",
    "build_nonlocal_model", "build_dfs_model", "build_model", "eliminate_E2",
    "dark_state", "fiber_loss_rate", "fiber_loss_fraction", "ground_projector",
]
