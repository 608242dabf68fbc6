"""Composite basis of the hydrogen-ionization model.

A basis state is one configuration of nine registers::

    |p1 p2 p3 p4 p5> |L>_bond |k>_nuclei |l1>_up |l2>_down

``p1``/``p2`` count photons of the two spin-selective Phi1->Phi2 modes,
``p3``/``p4`` photons of the Phi0->Phi1 modes and ``p5`` bond phonons.
``L`` is 0 for a formed covalent bond and 1 for a broken one, ``k`` is 0
when both nuclei share a cavity. ``l1``/``l2`` are the orbital levels of
the spin-up and spin-down electrons.

Two electron configurations are excluded from the basis: both electrons in
the transitional orbital, and both electrons detached.
"""

from __future__ import annotations

import enum
import itertools
from dataclasses import dataclass, field
from typing import Iterable, NamedTuple

import numpy as np
import scipy.sparse as sp
from scipy.sparse.csgraph import breadth_first_order

__all__ = [
    "ElectronLevel",
    "BasisState",
    "Cutoffs",
    "StateSpace",
    "build_state_space",
    "reachable_subspace",
    "is_allowed",
    "REGISTERS",
]


class ElectronLevel(enum.IntEnum):
    """Orbital occupied by one electron. ``Detached`` means it left the molecule."""

    Phi0 = 0
    Phi1 = 1
    Phi2 = 2
    Detached = 3


REGISTERS = ("p1", "p2", "p3", "p4", "p5", "L", "k", "l1", "l2")


class BasisState(NamedTuple):
    p1: int
    p2: int
    p3: int
    p4: int
    p5: int
    L: int
    k: int
    l1: ElectronLevel
    l2: ElectronLevel

    def replace(self, **changes) -> "BasisState":
        return self._replace(**changes)


class Cutoffs(NamedTuple):
    """Largest occupation kept for each bosonic register."""

    p1: int = 2
    p2: int = 2
    p3: int = 1
    p4: int = 1
    p5: int = 1

    @classmethod
    def uniform(cls, cutoff12: int = 2, cutoff01: int = 1) -> "Cutoffs":
        return cls(cutoff12, cutoff12, cutoff01, cutoff01, cutoff01)


def is_allowed(l1: ElectronLevel, l2: ElectronLevel) -> bool:
    """At most one electron in Phi2 and at most one detached electron."""
    both_excited = l1 == ElectronLevel.Phi2 and l2 == ElectronLevel.Phi2
    both_detached = l1 == ElectronLevel.Detached and l2 == ElectronLevel.Detached
    return not (both_excited or both_detached)


@dataclass(frozen=True)
class StateSpace:
    """Ordered, constraint-filtered basis with a dense index.

    ``parent`` holds, for a subspace, the index of every state in the
    originally enumerated space (``None`` for a freshly built space).
    """

    states: tuple[BasisState, ...]
    cutoffs: Cutoffs
    parent: np.ndarray | None = None
    index: dict[BasisState, int] = field(init=False, repr=False, compare=False)
    table: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "index", {s: i for i, s in enumerate(self.states)})
        table = np.array(self.states, dtype=np.int64).reshape(len(self.states), 9)
        table.setflags(write=False)
        object.__setattr__(self, "table", table)

    @property
    def dim(self) -> int:
        return len(self.states)

    def __len__(self) -> int:
        return len(self.states)

    def column(self, register: str) -> np.ndarray:
        """Values of one register over the whole basis."""
        return self.table[:, REGISTERS.index(register)]

    def subspace(self, indices: Iterable[int]) -> "StateSpace":
        """Restrict to ``indices`` (kept in ascending order)."""
        idx = np.unique(np.fromiter(indices, dtype=np.int64))
        if idx.size and (idx[0] < 0 or idx[-1] >= self.dim):
            raise IndexError("subspace index out of range")
        parent = idx if self.parent is None else self.parent[idx]
        return StateSpace(tuple(self.states[i] for i in idx), self.cutoffs, parent)

    def ordering_hash(self) -> str:
        """Short digest of the basis ordering, written into file headers."""
        import hashlib

        return hashlib.sha1(self.table.tobytes()).hexdigest()[:16]


def build_state_space(cutoffs: Cutoffs | None = None) -> StateSpace:
    """Enumerate every allowed basis state in lexicographic register order."""
    cutoffs = Cutoffs() if cutoffs is None else Cutoffs(*cutoffs)
    if min(cutoffs) < 0:
        raise ValueError("cutoffs must be non-negative")
    levels = list(ElectronLevel)
    ranges = [range(c + 1) for c in cutoffs] + [range(2), range(2), levels, levels]
    states = tuple(
        BasisState(*combo)
        for combo in itertools.product(*ranges)
        if is_allowed(combo[7], combo[8])
    )
    return StateSpace(states, cutoffs)


def _adjacency(dim: int, generator_support) -> sp.csr_matrix:
    mats = []
    pairs = []
    for item in generator_support:
        if sp.issparse(item) or isinstance(item, np.ndarray):
            m = sp.csr_matrix(item)
            if m.shape != (dim, dim):
                raise ValueError(f"operator shape {m.shape} does not match dimension {dim}")
            m.eliminate_zeros()
            mats.append((m != 0).astype(np.int8))
        else:
            pairs.append(item)
    if pairs:
        rows, cols = np.asarray(pairs, dtype=np.int64).reshape(-1, 2).T
        if rows.size and (min(rows.min(), cols.min()) < 0 or max(rows.max(), cols.max()) >= dim):
            raise IndexError("support pair out of range")
        mats.append(sp.csr_matrix((np.ones(rows.size, np.int8), (rows, cols)), shape=(dim, dim)))
    adj = sp.csr_matrix((dim, dim), dtype=np.int8)
    for m in mats:
        adj = adj + m
    return (adj + adj.T).tocsr()


def reachable_subspace(space: StateSpace, generator_support, seed: Iterable[int]) -> StateSpace:
    """Smallest subset containing ``seed`` and closed under the couplings.

    ``generator_support`` is an iterable of sparse/dense operators over
    ``space`` and/or explicit ``(row, col)`` pairs; every nonzero couples its
    two states in both directions.
    """
    seed = sorted(set(int(s) for s in seed))
    if not seed:
        raise ValueError("empty reachability seed")
    if seed[0] < 0 or seed[-1] >= space.dim:
        raise IndexError("seed index out of range")
    adj = _adjacency(space.dim, generator_support)
    # virtual root joined to all seeds so one BFS covers every component
    n = space.dim
    root_edges = sp.csr_matrix(
        (np.ones(len(seed), np.int8), (np.full(len(seed), n), seed)), shape=(n + 1, n + 1)
    )
    graph = sp.block_diag([adj, sp.csr_matrix((1, 1), dtype=np.int8)]).tocsr() + root_edges
    order = breadth_first_order(graph, n, directed=False, return_predecessors=False)
    return space.subspace(order[order != n])
