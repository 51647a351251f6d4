"""Tensor-product Hilbert spaces with an optional global excitation cap.

A space is an ordered list of slots. Each slot is either a few-level
``Atom`` with named levels or a truncated bosonic ``Mode``. Basis states are
ordered lexicographically in slot order (the same order as ``np.kron``), and
an excitation cap simply drops product states whose total excitation exceeds
the cap. Operators are stored as canonical CSR matrices on the retained basis.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from itertools import product
from typing import Iterable, Sequence, Union

import numpy as np
import scipy.sparse as sp

ZERO_TOL = 1e-15
EXCITED_LEVELS = frozenset({"e", "E1", "E2"})


class HeraldImpossible(ValueError):
    """Raised when a herald outcome has (numerically) zero probability."""


@dataclass(frozen=True)
class Atom:
    """Few-level atom. ``excited`` lists the levels that count as one excitation."""

    name: str
    levels: tuple[str, ...]
    excited: frozenset[str] = EXCITED_LEVELS

    def __post_init__(self):
        object.__setattr__(self, "levels", tuple(self.levels))
        if len(self.levels) < 2:
            raise ValueError(f"atom {self.name!r} needs at least two levels")
        if len(set(self.levels)) != len(self.levels):
            raise ValueError(f"atom {self.name!r} has duplicate level names")

    @property
    def dim(self) -> int:
        return len(self.levels)

    def index(self, level: str) -> int:
        try:
            return self.levels.index(level)
        except ValueError:
            raise KeyError(f"atom {self.name!r} has no level {level!r}") from None

    def excitations(self) -> np.ndarray:
        return np.array([int(lv in self.excited) for lv in self.levels])


@dataclass(frozen=True)
class Mode:
    """Bosonic mode truncated at ``n_max`` photons."""

    name: str
    n_max: int = 1

    def __post_init__(self):
        if int(self.n_max) < 1:
            raise ValueError(f"mode {self.name!r} needs n_max >= 1")

    @property
    def dim(self) -> int:
        return self.n_max + 1

    def excitations(self) -> np.ndarray:
        return np.arange(self.dim)


Slot = Union[Atom, Mode]


class HilbertSpace:
    """Product space of ``slots``, optionally restricted by ``excitation_cap``.

    Attributes
    ----------
    slots : tuple of Atom or Mode
    dims : tuple of int
        Local dimension of each slot.
    states : ndarray, shape (dim, n_slots)
        Local level index of every retained basis state.
    product_index : ndarray, shape (dim,)
        Flat index of each retained state in the uncapped product basis.
    """

    def __init__(self, slots: Sequence[Slot], excitation_cap: int | None = None):
        slots = tuple(slots)
        if not slots:
            raise ValueError("a Hilbert space needs at least one slot")
        names = [s.name for s in slots]
        if len(set(names)) != len(names):
            raise ValueError("slot names must be unique")
        self.slots = slots
        self.dims = tuple(s.dim for s in slots)
        self.excitation_cap = excitation_cap
        self.product_dim = int(np.prod(self.dims))

        grids = np.indices(self.dims).reshape(len(slots), -1).T
        exc = np.zeros(len(grids), dtype=int)
        for k, s in enumerate(slots):
            exc += s.excitations()[grids[:, k]]
        keep = np.ones(len(grids), dtype=bool) if excitation_cap is None else exc <= excitation_cap
        self.states = grids[keep]
        self.excitation = exc[keep]
        self.product_index = np.flatnonzero(keep)
        self._position = np.full(self.product_dim, -1, dtype=np.int64)
        self._position[self.product_index] = np.arange(len(self.product_index))
        for arr in (self.states, self.excitation, self.product_index, self._position):
            arr.setflags(write=False)

    @property
    def dim(self) -> int:
        return len(self.product_index)

    def __len__(self) -> int:
        return self.dim

    def __repr__(self) -> str:
        parts = ", ".join(f"{s.name}:{s.dim}" for s in self.slots)
        return f"HilbertSpace([{parts}], cap={self.excitation_cap}, dim={self.dim})"

    def __eq__(self, other) -> bool:
        return (
            isinstance(other, HilbertSpace)
            and self.slots == other.slots
            and self.excitation_cap == other.excitation_cap
        )

    def __hash__(self) -> int:
        return hash((self.slots, self.excitation_cap))

    def slot_index(self, slot: int | str) -> int:
        if isinstance(slot, str):
            for k, s in enumerate(self.slots):
                if s.name == slot:
                    return k
            raise KeyError(f"no slot named {slot!r}")
        if not 0 <= slot < len(self.slots):
            raise IndexError(f"slot index {slot} out of range")
        return slot

    def local_index(self, slot: int | str, level: str | int) -> int:
        k = self.slot_index(slot)
        s = self.slots[k]
        if isinstance(s, Atom):
            return s.index(level) if isinstance(level, str) else int(level)
        return int(level)

    def index(self, labels: Sequence[str | int]) -> int:
        """Flat basis index of the state with the given per-slot labels."""
        if len(labels) != len(self.slots):
            raise ValueError("need one label per slot")
        multi = [self.local_index(k, lv) for k, lv in enumerate(labels)]
        pos = self._position[np.ravel_multi_index(multi, self.dims)]
        if pos < 0:
            raise KeyError(f"state {tuple(labels)} is excluded by the excitation cap")
        return int(pos)

    def labels(self, i: int) -> tuple:
        """Per-slot labels (level names for atoms, photon numbers for modes)."""
        out = []
        for k, s in enumerate(self.slots):
            j = int(self.states[i, k])
            out.append(s.levels[j] if isinstance(s, Atom) else j)
        return tuple(out)

    def positions(self, product_indices: np.ndarray) -> np.ndarray:
        """Map product-basis indices to retained positions (-1 if excluded)."""
        return self._position[product_indices]

    def basis(self, labels: Sequence[str | int]) -> np.ndarray:
        v = np.zeros(self.dim, dtype=complex)
        v[self.index(labels)] = 1.0
        return v

    def lift(self, mat: np.ndarray) -> np.ndarray:
        """Embed a retained-basis matrix into the uncapped product space."""
        full = np.zeros((self.product_dim, self.product_dim), dtype=complex)
        full[np.ix_(self.product_index, self.product_index)] = mat
        return full


def build_space(slots: Sequence[Slot], excitation_cap: int | None = None) -> HilbertSpace:
    """Build a (possibly excitation-capped) product space."""
    return HilbertSpace(slots, excitation_cap)


def _canonical(mat) -> sp.csr_matrix:
    m = sp.csr_matrix(mat, dtype=complex, copy=True)
    m.sum_duplicates()
    m.data[np.abs(m.data) <= ZERO_TOL] = 0.0
    m.eliminate_zeros()
    m.sort_indices()
    return m


class Operator:
    """Sparse complex operator on a :class:`HilbertSpace`."""

    __array_priority__ = 20

    def __init__(self, space: HilbertSpace, data, label: str = ""):
        m = _canonical(data)
        if m.shape != (space.dim, space.dim):
            raise ValueError(f"operator shape {m.shape} does not match space dim {space.dim}")
        self.space = space
        self.data = m
        self.label = label

    def __repr__(self) -> str:
        return f"Operator({self.label!r}, dim={self.space.dim}, nnz={self.data.nnz})"

    def _check(self, other: "Operator"):
        if other.space != self.space:
            raise ValueError("operators live on different spaces")

    def __add__(self, other):
        if isinstance(other, Operator):
            self._check(other)
            return Operator(self.space, self.data + other.data, self.label)
        if other == 0:
            return self
        return NotImplemented

    __radd__ = __add__

    def __sub__(self, other):
        self._check(other)
        return Operator(self.space, self.data - other.data, self.label)

    def __neg__(self):
        return Operator(self.space, -self.data, self.label)

    def __mul__(self, c):
        if isinstance(c, Operator):
            return NotImplemented
        return Operator(self.space, self.data * complex(c), self.label)

    __rmul__ = __mul__

    def __truediv__(self, c):
        return Operator(self.space, self.data / complex(c), self.label)

    def __matmul__(self, other):
        if isinstance(other, Operator):
            self._check(other)
            return Operator(self.space, self.data @ other.data, self.label)
        return self.data @ other

    def dag(self) -> "Operator":
        return Operator(self.space, self.data.conj().T, self.label + "†" if self.label else "")

    def dense(self) -> np.ndarray:
        return self.data.toarray()

    def __eq__(self, other) -> bool:
        if not isinstance(other, Operator) or other.space != self.space:
            return False
        a, b = self.data, other.data
        return (
            np.array_equal(a.indptr, b.indptr)
            and np.array_equal(a.indices, b.indices)
            and np.array_equal(a.data, b.data)
        )

    __hash__ = None


def identity(space: HilbertSpace) -> Operator:
    return Operator(space, sp.identity(space.dim, dtype=complex, format="csr"), "I")


@dataclass
class DensityMatrix:
    """Dense density matrix on a space. Unnormalized (heralded) branches are allowed."""

    space: HilbertSpace
    data: np.ndarray = field(repr=False)

    def __post_init__(self):
        self.data = np.asarray(self.data, dtype=complex)
        if self.data.shape != (self.space.dim, self.space.dim):
            raise ValueError("density matrix shape does not match space")

    @classmethod
    def from_ket(cls, space: HilbertSpace, psi) -> "DensityMatrix":
        psi = np.asarray(psi, dtype=complex)
        return cls(space, np.outer(psi, psi.conj()))

    def trace(self) -> float:
        return float(np.trace(self.data).real)

    def hermiticity_error(self) -> float:
        return float(np.max(np.abs(self.data - self.data.conj().T)))

    def min_eigenvalue(self) -> float:
        h = 0.5 * (self.data + self.data.conj().T)
        # zero rows/columns carry zero eigenvalues; restrict to the support
        support = np.flatnonzero(np.any(np.abs(h) > 0, axis=0))
        if support.size == 0:
            return 0.0
        ev = np.linalg.eigvalsh(h[np.ix_(support, support)])
        return float(ev[0]) if support.size == self.space.dim else float(min(ev[0], 0.0))

    def validate(self, normalized: bool = True, herm_tol: float = 1e-10,
                 trace_tol: float = 1e-9, psd_tol: float = -1e-9) -> None:
        """Raise ``ValueError`` if the state violates the density-matrix invariants."""
        if self.hermiticity_error() > herm_tol:
            raise ValueError(f"not Hermitian (max deviation {self.hermiticity_error():.3g})")
        tr = self.trace()
        if normalized and abs(tr - 1.0) > trace_tol:
            raise ValueError(f"trace {tr!r} is not 1")
        if not normalized and not (0.0 < tr <= 1.0 + trace_tol):
            raise ValueError(f"branch trace {tr!r} outside (0, 1]")
        if self.min_eigenvalue() < psd_tol:
            raise ValueError(f"not positive semidefinite (min eigenvalue {self.min_eigenvalue():.3g})")


def embed(local_op, slot_index: int | str, space: HilbertSpace, label: str = "") -> Operator:
    """``local_op`` on one slot, identity elsewhere, restricted to retained states."""
    k = space.slot_index(slot_index)
    local = np.asarray(local_op, dtype=complex)
    d = space.dims[k]
    if local.shape != (d, d):
        raise ValueError(f"local operator shape {local.shape} does not match slot dimension {d}")
    before = int(np.prod(space.dims[:k]))
    after = int(np.prod(space.dims[k + 1:]))
    full = sp.kron(sp.kron(sp.identity(before), sp.csr_matrix(local)), sp.identity(after), format="csr")
    idx = space.product_index
    return Operator(space, full[idx][:, idx], label)


def annihilator(space: HilbertSpace, slot_index: int | str) -> Operator:
    k = space.slot_index(slot_index)
    s = space.slots[k]
    if not isinstance(s, Mode):
        raise TypeError(f"slot {s.name!r} is not a bosonic mode")
    a = np.diag(np.sqrt(np.arange(1, s.dim)), 1)
    return embed(a, k, space, f"a_{s.name}")


def transition(space: HilbertSpace, slot_index: int | str, upper: str, lower: str) -> Operator:
    """The jump ``|upper><lower|`` on an atom slot."""
    k = space.slot_index(slot_index)
    s = space.slots[k]
    if not isinstance(s, Atom):
        raise TypeError(f"slot {s.name!r} is not an atom")
    m = np.zeros((s.dim, s.dim))
    m[s.index(upper), s.index(lower)] = 1.0
    return embed(m, k, space, f"|{upper}><{lower}|_{s.name}")


def _split_indices(space: HilbertSpace, keep: Sequence[int]):
    rest = [k for k in range(len(space.slots)) if k not in keep]
    kd = [space.dims[k] for k in keep]
    rd = [space.dims[k] for k in rest]
    kidx = np.ravel_multi_index(space.states[:, keep].T, kd) if keep else np.zeros(space.dim, int)
    ridx = np.ravel_multi_index(space.states[:, rest].T, rd) if rest else np.zeros(space.dim, int)
    return rest, kidx, ridx


def partial_trace(rho: DensityMatrix, keep: Iterable[int | str]) -> DensityMatrix:
    """Reduced state on the ``keep`` slots, as a matrix on their uncapped product.

    Excitation-capped states are treated as the zero-padded embedding into the
    full product space, so the reduction is exact.
    """
    space = rho.space
    keep = sorted({space.slot_index(k) for k in keep})
    if not keep:
        raise ValueError("keep must name at least one slot")
    rest, kidx, ridx = _split_indices(space, keep)
    out_space = HilbertSpace([space.slots[k] for k in keep])
    red = np.zeros((out_space.dim, out_space.dim), dtype=complex)
    order = np.argsort(ridx, kind="stable")
    bounds = np.flatnonzero(np.diff(ridx[order])) + 1
    for group in np.split(order, bounds):
        ki = kidx[group]
        red[np.ix_(ki, ki)] += rho.data[np.ix_(group, group)]
    return DensityMatrix(out_space, red)


def herald_project(rho: DensityMatrix, slot_index: int | str, level: str,
                   min_probability: float = 1e-12) -> tuple[DensityMatrix, float]:
    """Project ``slot_index`` onto ``level``; return the normalized remainder and its probability.

    The returned state lives on the remaining slots. If the parent space was
    capped at ``k`` excitations and ``level`` carries ``x`` of them, the
    remainder is capped at ``k - x``, which reproduces exactly the retained set.
    """
    space = rho.space
    k = space.slot_index(slot_index)
    s = space.slots[k]
    if not isinstance(s, Atom):
        raise TypeError(f"slot {s.name!r} is not an atom")
    j = s.index(level)
    sel = np.flatnonzero(space.states[:, k] == j)
    prob = float(np.real(np.trace(rho.data[np.ix_(sel, sel)])))
    if prob < min_probability:
        raise HeraldImpossible(f"herald on {s.name}={level} has probability {prob:.3g}")
    rest_slots = [sl for i, sl in enumerate(space.slots) if i != k]
    cap = space.excitation_cap
    if cap is not None:
        cap -= int(level in s.excited)
    out_space = HilbertSpace(rest_slots, cap)
    rest = [i for i in range(len(space.slots)) if i != k]
    flat = np.ravel_multi_index(space.states[sel][:, rest].T, out_space.dims)
    pos = out_space.positions(flat)
    if np.any(pos < 0):
        raise ValueError("projected states fall outside the reduced space")
    data = np.zeros((out_space.dim, out_space.dim), dtype=complex)
    data[np.ix_(pos, pos)] = rho.data[np.ix_(sel, sel)]
    return DensityMatrix(out_space, data / prob), prob


def enumerate_basis(slots: Sequence[Slot]) -> list[tuple]:
    """All product-basis label tuples in lexicographic slot order."""
    ranges = [s.levels if isinstance(s, Atom) else range(s.dim) for s in slots]
    return list(product(*ranges))
