"""Ladder, transition and projector operators, and the RWA Hamiltonian.

Every operator is a ``scipy.sparse.csr_matrix`` over a :class:`StateSpace`.
Operators are built by mapping each basis state to its image; images that
fall outside the space (above a cutoff, onto a forbidden electron pair, or
outside a reachable subspace) are dropped.
"""

from __future__ import annotations

import enum
import hashlib
from dataclasses import dataclass, fields
from typing import Callable, Iterable

import numpy as np
import scipy.sparse as sp

from .hilbert import BasisState, ElectronLevel, StateSpace, is_allowed

__all__ = [
    "Mode",
    "ModelParams",
    "map_operator",
    "projector",
    "ladder_annihilate",
    "ladder_create",
    "number_operator",
    "electron_lower",
    "electron_detach",
    "bond_sigma",
    "nuclei_sigma",
    "hamiltonian_terms",
    "assemble_hamiltonian",
    "excitation_number",
    "dump_operator",
    "load_operator",
    "operator_hash",
]

Phi0, Phi1, Phi2, Detached = ElectronLevel


class Mode(str, enum.Enum):
    """Bosonic registers, valued by their basis-state field."""

    OMEGA12_UP = "p1"
    OMEGA12_DN = "p2"
    OMEGA01_UP = "p3"
    OMEGA01_DN = "p4"
    PHONON = "p5"


@dataclass(frozen=True)
class ModelParams:
    """Physical constants in internal units (hbar = 1, frequencies in units of Omega_01).

    ``atom_energy_spin_symmetric`` replaces the spin-up frequencies on the
    spin-down Phi2 level energy with the spin-down ones. ``nuclear_tunneling``
    selects the tunneling term: ``True`` lets the nuclei hop between cavities
    while the bond is broken and restricts bond formation to a shared cavity;
    ``False`` keeps the purely diagonal form, under which ``k`` never changes.
    """

    hbar: float = 1.0
    omega01_up: float = 1.0
    omega01_dn: float = 1.0
    omega12_up: float = 1.0
    omega12_dn: float = 1.0
    omega_ph: float = 0.1
    g01_up: float = 0.02
    g01_dn: float = 0.02
    g12_up: float = 0.02
    g12_dn: float = 0.02
    g_omega: float = 0.02
    zeta: float = 0.01
    atom_energy_spin_symmetric: bool = False
    nuclear_tunneling: bool = True

    def __post_init__(self):
        if not self.hbar > 0:
            raise ValueError("hbar must be positive")
        for f in fields(self):
            value = getattr(self, f.name)
            if isinstance(value, bool):
                continue
            if not np.isfinite(value) or value < 0:
                raise ValueError(f"{f.name} must be real and non-negative, got {value!r}")

    def swapped(self) -> "ModelParams":
        """Exchange every spin-up constant with its spin-down partner."""
        d = {f.name: getattr(self, f.name) for f in fields(self)}
        for up in [n for n in d if n.endswith("_up")]:
            dn = up[:-3] + "_dn"
            d[up], d[dn] = d[dn], d[up]
        return ModelParams(**d)


def map_operator(
    space: StateSpace,
    action: Callable[[BasisState], Iterable[tuple[BasisState, complex]]],
) -> sp.csr_matrix:
    """Operator with ``<image|O|state> = amplitude`` for every pair ``action`` yields."""
    rows, cols, vals = [], [], []
    index = space.index
    for j, state in enumerate(space.states):
        for image, amp in action(state):
            i = index.get(image)
            if i is not None and amp != 0:
                rows.append(i)
                cols.append(j)
                vals.append(amp)
    n = space.dim
    return sp.csr_matrix(
        (np.asarray(vals, dtype=complex), (np.asarray(rows, int), np.asarray(cols, int))),
        shape=(n, n),
    )


def projector(space: StateSpace, mask) -> sp.csr_matrix:
    """Diagonal 0/1 operator; ``mask`` is a boolean array or a predicate on states."""
    if callable(mask):
        mask = np.fromiter((bool(mask(s)) for s in space.states), dtype=bool, count=space.dim)
    return sp.diags(np.asarray(mask, dtype=complex), format="csr")


def _diag(values) -> sp.csr_matrix:
    return sp.diags(np.asarray(values, dtype=complex), format="csr")


def _annihilate_act(reg: str):
    def act(s):
        p = getattr(s, reg)
        if p > 0:
            yield s.replace(**{reg: p - 1}), np.sqrt(p)

    return act


def _create_act(reg: str):
    def act(s):
        p = getattr(s, reg)
        yield s.replace(**{reg: p + 1}), np.sqrt(p + 1)

    return act


def _in_full_basis(space: StateSpace, s: BasisState) -> bool:
    """Whether ``s`` belongs to the unrestricted basis with ``space``'s cutoffs."""
    cut = space.cutoffs
    return (
        s.p1 <= cut.p1
        and s.p2 <= cut.p2
        and s.p3 <= cut.p3
        and s.p4 <= cut.p4
        and s.p5 <= cut.p5
        and is_allowed(s.l1, s.l2)
    )


def _compose(space: StateSpace, outer, inner):
    """Action of ``outer @ inner`` evaluated state by state.

    The intermediate state only has to exist in the full basis, so products
    stay exact on a reachable subspace that omits it.
    """

    def act(s):
        for mid, a in inner(s):
            if _in_full_basis(space, mid):
                for image, b in outer(mid):
                    yield image, a * b

    return act


def ladder_annihilate(space: StateSpace, mode: Mode | str) -> sp.csr_matrix:
    return map_operator(space, _annihilate_act(Mode(mode).value))


def ladder_create(space: StateSpace, mode: Mode | str) -> sp.csr_matrix:
    # images above the cutoff are not in the index, so the top occupation maps to zero
    return map_operator(space, _create_act(Mode(mode).value))


def number_operator(space: StateSpace, mode: Mode | str) -> sp.csr_matrix:
    return _diag(space.column(Mode(mode).value))


def _spin_register(spin: str) -> str:
    if spin not in ("up", "dn"):
        raise ValueError(f"spin must be 'up' or 'dn', got {spin!r}")
    return "l1" if spin == "up" else "l2"


_TRANSITIONS = {"01": (Phi1, Phi0), "12": (Phi2, Phi1)}


def _lower_act(spin: str, transition: str):
    reg = _spin_register(spin)
    try:
        upper, lower = _TRANSITIONS[transition]
    except KeyError:
        raise ValueError(f"transition must be '01' or '12', got {transition!r}") from None

    def act(s):
        if getattr(s, reg) == upper:
            yield s.replace(**{reg: lower}), 1.0

    return act


def electron_lower(space: StateSpace, spin: str, transition: str) -> sp.csr_matrix:
    """Relaxation Phi1 -> Phi0 (``transition="01"``) or Phi2 -> Phi1 (``"12"``)."""
    return map_operator(space, _lower_act(spin, transition))


def electron_detach(space: StateSpace, spin: str) -> sp.csr_matrix:
    """Escape of a transitional-orbital electron: Phi2 -> Detached."""
    reg = _spin_register(spin)

    def act(s):
        if getattr(s, reg) == Phi2:
            yield s.replace(**{reg: Detached}), 1.0

    return map_operator(space, act)


def _flag_lower_act(reg: str):
    def act(s):
        if getattr(s, reg) == 1:
            yield s.replace(**{reg: 0}), 1.0

    return act


def bond_sigma(space: StateSpace) -> sp.csr_matrix:
    """Lowers the bond flag, L=1 (broken) -> L=0 (formed)."""
    return map_operator(space, _flag_lower_act("L"))


def nuclei_sigma(space: StateSpace) -> sp.csr_matrix:
    """Lowers the nuclei flag, k=1 (separate cavities) -> k=0 (shared cavity)."""
    return map_operator(space, _flag_lower_act("k"))


def _level_mask(space: StateSpace, reg: str, *levels: ElectronLevel) -> np.ndarray:
    return np.isin(space.column(reg), [int(x) for x in levels])


def hamiltonian_terms(space: StateSpace, params: ModelParams) -> dict[str, sp.csr_matrix]:
    """The five Hamiltonian pieces keyed ``atom``, ``field``, ``int``, ``bond``, ``tun``."""
    hb = params.hbar
    up2 = params.omega01_up + params.omega12_up
    dn2 = params.omega01_dn + params.omega12_dn if params.atom_energy_spin_symmetric else up2
    # Detached carries the Phi2 energy so the escape jump is energy-neutral
    e_up = (
        params.omega01_up * _level_mask(space, "l1", Phi1)
        + up2 * _level_mask(space, "l1", Phi2, Detached)
    )
    e_dn = (
        params.omega01_dn * _level_mask(space, "l2", Phi1)
        + dn2 * _level_mask(space, "l2", Phi2, Detached)
    )
    atom = _diag(hb * (e_up + e_dn))

    field_energy = (
        params.omega12_up * space.column("p1")
        + params.omega12_dn * space.column("p2")
        + params.omega01_up * space.column("p3")
        + params.omega01_dn * space.column("p4")
    )
    field = _diag(hb * field_energy)

    bond_formed = projector(space, space.column("L") == 0)
    bond_broken = projector(space, space.column("L") == 1)
    exchange = sp.csr_matrix((space.dim, space.dim), dtype=complex)
    couplings = [
        (params.g01_up, Mode.OMEGA01_UP, "up", "01"),
        (params.g01_dn, Mode.OMEGA01_DN, "dn", "01"),
        (params.g12_up, Mode.OMEGA12_UP, "up", "12"),
        (params.g12_dn, Mode.OMEGA12_DN, "dn", "12"),
    ]
    for g, mode, spin, transition in couplings:
        if g == 0:
            continue
        emit = map_operator(space, _compose(space, _create_act(mode.value), _lower_act(spin, transition)))
        exchange = exchange + g * (emit + emit.conj().T)
    interaction = (exchange @ bond_formed).tocsr()

    form = map_operator(space, _compose(space, _create_act("p5"), _flag_lower_act("L")))
    bond_exchange = params.g_omega * (form + form.conj().T)
    if params.nuclear_tunneling:
        # bond forms only while the nuclei share a cavity
        shared = projector(space, space.column("k") == 0)
        bond_exchange = shared @ bond_exchange
    bond = (
        _diag(hb * params.omega_ph * space.column("p5"))
        + hb * params.omega_ph * bond_broken
        + bond_exchange
    )

    s_n = nuclei_sigma(space)
    if params.nuclear_tunneling:
        hop = s_n + s_n.conj().T
    else:
        # the two-level completeness relation, written without intermediate states
        hop = projector(space, space.column("k") == 1) + projector(space, space.column("k") == 0)
    tun = params.zeta * (hop @ bond_broken)

    return {
        "atom": atom.tocsr(),
        "field": field.tocsr(),
        "int": interaction,
        "bond": sp.csr_matrix(bond),
        "tun": sp.csr_matrix(tun),
    }


def assemble_hamiltonian(space: StateSpace, params: ModelParams) -> sp.csr_matrix:
    terms = hamiltonian_terms(space, params)
    H = sum(terms.values(), sp.csr_matrix((space.dim, space.dim), dtype=complex)).tocsr()
    H.sum_duplicates()
    H.eliminate_zeros()
    if H.shape != (space.dim, space.dim):
        raise ValueError(f"Hamiltonian shape {H.shape} does not match space dimension {space.dim}")
    return H


def excitation_number(space: StateSpace) -> sp.csr_matrix:
    """Diagonal quanta count conserved by the RWA exchange terms.

    Photons and phonons count one each, a broken bond one, and the electron
    levels Phi0/Phi1/Phi2 zero/one/two (Detached as Phi2).
    """
    weights = {Phi0: 0, Phi1: 1, Phi2: 2, Detached: 2}
    level = np.vectorize(lambda v: weights[ElectronLevel(v)])
    n = (
        space.column("p1")
        + space.column("p2")
        + space.column("p3")
        + space.column("p4")
        + space.column("p5")
        + space.column("L")
        + level(space.column("l1"))
        + level(space.column("l2"))
    )
    return _diag(n)


def dump_operator(path, op: sp.spmatrix, space: StateSpace, label: str = "") -> None:
    """Write ``row col re im`` per nonzero, headed by the basis ordering hash."""
    coo = sp.coo_matrix(op)
    order = np.lexsort((coo.col, coo.row))
    with open(path, "w") as fh:
        fh.write(f"# label: {label}\n")
        fh.write(f"# dim: {space.dim}\n")
        fh.write(f"# basis_hash: {space.ordering_hash()}\n")
        fh.write("# row col re im\n")
        for r, c, v in zip(coo.row[order], coo.col[order], coo.data[order]):
            fh.write(f"{r} {c} {v.real:.17g} {v.imag:.17g}\n")


def load_operator(path) -> tuple[sp.csr_matrix, dict[str, str]]:
    header = {}
    rows, cols, vals = [], [], []
    with open(path) as fh:
        for line in fh:
            if line.startswith("#"):
                key, _, value = line[1:].partition(":")
                if value:
                    header[key.strip()] = value.strip()
                continue
            r, c, re_, im = line.split()
            rows.append(int(r))
            cols.append(int(c))
            vals.append(complex(float(re_), float(im)))
    n = int(header["dim"])
    op = sp.csr_matrix((np.asarray(vals, complex), (rows, cols)), shape=(n, n))
    return op, header


def operator_hash(op: sp.spmatrix) -> str:
    m = sp.csr_matrix(op)
    m.sort_indices()
    h = hashlib.sha1()
    for arr in (m.indptr, m.indices, m.data):
        h.update(np.ascontiguousarray(arr).tobytes())
    return h.hexdigest()[:16]
