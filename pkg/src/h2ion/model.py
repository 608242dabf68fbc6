"""The hydrogen-ionization scenario on top of the generic machinery.

Initial states, the three named subspaces (separate atoms, neutral molecule,
molecular cation), dissipation channels, the stabilization-time detector
and the conserved charges used to split the basis into sectors.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Mapping

import numpy as np
import scipy.sparse as sp

from .hilbert import BasisState, ElectronLevel, StateSpace
from .lindblad import Channel, TimeSeries
from .operators import Mode, electron_detach, ladder_annihilate

__all__ = [
    "InitialStateId",
    "SubspaceLabel",
    "StabilizationResult",
    "CHANNEL_NAMES",
    "PHOTON_CHANNELS",
    "initial_ket",
    "build_initial_state",
    "classify",
    "classify_space",
    "subspace_masks",
    "subspace_probabilities",
    "detect_stabilization",
    "jump_operator",
    "make_channels",
    "anode_channels",
    "charge_labels",
    "settled_value",
]

Phi0, Phi1, Phi2, Detached = ElectronLevel


class InitialStateId(str, enum.Enum):
    Psi0 = "Psi0"
    Psi1 = "Psi1"
    Psi2 = "Psi2"
    Psi3 = "Psi3"
    Psi4 = "Psi4"
    Psi5 = "Psi5"
    Psi6 = "Psi6"
    Psi7 = "Psi7"


class SubspaceLabel(str, enum.Enum):
    Atoms = "atoms"
    Molecule = "molecule"
    Cation = "cation"
    Other = "other"


_R2 = 1 / np.sqrt(2)

# amplitudes over (p1, p2), the photons of the two Phi1 -> Phi2 modes
_PHOTON_PART = {
    InitialStateId.Psi0: {(1, 0): 1.0},
    InitialStateId.Psi1: {(0, 1): 1.0},
    InitialStateId.Psi2: {(1, 0): _R2, (0, 1): _R2},
    InitialStateId.Psi3: {(2, 0): 1.0},
    InitialStateId.Psi4: {(0, 2): 1.0},
    InitialStateId.Psi5: {(1, 1): 1.0},
    InitialStateId.Psi6: {(2, 0): 0.5, (0, 2): 0.5, (1, 1): _R2},
    InitialStateId.Psi7: {(0, 0): 1.0},
}

# one electron per atomic orbital, rewritten in the molecular orbitals
_ELECTRON_PART = {
    (Phi0, Phi0): 0.5,
    (Phi0, Phi1): -0.5,
    (Phi1, Phi0): 0.5,
    (Phi1, Phi1): -0.5,
}


def initial_ket(space: StateSpace, state_id: InitialStateId | str) -> np.ndarray:
    """Amplitude vector of one of the eight prepared states.

    All registers other than ``p1``/``p2`` and the electrons are fixed: no
    other photons or phonons, bond broken (L=1), nuclei apart (k=1).
    """
    state_id = InitialStateId(state_id)
    psi = np.zeros(space.dim, dtype=complex)
    for (p1, p2), a in _PHOTON_PART[state_id].items():
        for reg, p in (("p1", p1), ("p2", p2)):
            if p > getattr(space.cutoffs, reg):
                raise ValueError(
                    f"{state_id.value} needs {p} quanta in register {reg}, "
                    f"cutoff is {getattr(space.cutoffs, reg)}"
                )
        for (l1, l2), b in _ELECTRON_PART.items():
            s = BasisState(p1, p2, 0, 0, 0, 1, 1, l1, l2)
            i = space.index.get(s)
            if i is None:
                raise ValueError(f"{state_id.value}: basis state {s} missing from the space")
            psi[i] += a * b
    return psi


def build_initial_state(space: StateSpace, state_id: InitialStateId | str):
    """Pure density matrix of :func:`initial_ket`."""
    from .lindblad import DensityMatrix

    return DensityMatrix.from_ket(initial_ket(space, state_id))


def classify(state: BasisState) -> SubspaceLabel:
    if state.L == 1:
        return SubspaceLabel.Atoms
    if state.k != 0:
        return SubspaceLabel.Other
    gone = (state.l1 == Detached, state.l2 == Detached)
    if not any(gone):
        return SubspaceLabel.Molecule
    if gone[0] != gone[1]:
        return SubspaceLabel.Cation
    return SubspaceLabel.Other


def classify_space(space: StateSpace) -> np.ndarray:
    """Label of every basis state, as an object array of :class:`SubspaceLabel`."""
    return np.array([classify(s) for s in space.states], dtype=object)


def subspace_masks(space: StateSpace) -> dict[SubspaceLabel, np.ndarray]:
    labels = classify_space(space)
    return {lab: np.fromiter((x is lab for x in labels), bool, len(labels)) for lab in SubspaceLabel}


def subspace_probabilities(rho, space: StateSpace) -> dict[SubspaceLabel, float]:
    """Summed diagonal of ``rho`` (a matrix, a density object, or a population vector)."""
    if hasattr(rho, "populations"):
        pops = rho.populations()
    else:
        rho = np.asarray(rho)
        pops = np.real(np.diagonal(rho)) if rho.ndim == 2 else np.real(rho)
    return {lab: float(pops[m].sum()) for lab, m in subspace_masks(space).items()}


@dataclass
class StabilizationResult:
    t_stb: float | None
    threshold: float
    final_probs: dict = field(default_factory=dict)
    resolution: float | None = None

    @property
    def reached(self) -> bool:
        return self.t_stb is not None


def detect_stabilization(
    series: TimeSeries | tuple[np.ndarray, np.ndarray],
    threshold: float = 0.999,
) -> StabilizationResult:
    """First sample after which molecule + cation stays above ``threshold``.

    Accepts a :class:`TimeSeries` with ``molecule`` and ``cation`` columns or
    a ``(times, values)`` pair with the combined probability.
    """
    if isinstance(series, TimeSeries):
        times = np.asarray(series.times)
        values = np.asarray(series["molecule"]) + np.asarray(series["cation"])
        final = {name: float(col[-1]) for name, col in series.columns.items()} if len(series) else {}
    else:
        times, values = (np.asarray(x, dtype=float) for x in series)
        final = {"combined": float(values[-1])} if len(values) else {}
    if len(times) == 0:
        raise ValueError("empty time series")
    if np.any(np.diff(times) <= 0):
        raise ValueError("sample times must increase monotonically")
    resolution = float(np.max(np.diff(times))) if len(times) > 1 else None
    above = values > threshold
    if not above[-1]:
        return StabilizationResult(None, threshold, final, resolution)
    below = np.flatnonzero(~above)
    first = 0 if below.size == 0 else below[-1] + 1
    return StabilizationResult(float(times[first]), threshold, final, resolution)


def settled_value(values, tol: float = 1e-5, fraction: float = 0.1) -> tuple[float, bool]:
    """Final value and whether it moved less than ``tol`` over the last ``fraction`` of samples."""
    values = np.asarray(values, dtype=float)
    tail = values[-max(2, int(np.ceil(fraction * len(values)))) :]
    return float(values[-1]), bool(np.ptp(tail) < tol)


CHANNEL_NAMES = (
    "photon12_up",
    "photon12_dn",
    "photon01_up",
    "photon01_dn",
    "phonon",
    "electron_up",
    "electron_dn",
)
PHOTON_CHANNELS = CHANNEL_NAMES[:4]

_JUMPS = {
    "photon12_up": lambda s: ladder_annihilate(s, Mode.OMEGA12_UP),
    "photon12_dn": lambda s: ladder_annihilate(s, Mode.OMEGA12_DN),
    "photon01_up": lambda s: ladder_annihilate(s, Mode.OMEGA01_UP),
    "photon01_dn": lambda s: ladder_annihilate(s, Mode.OMEGA01_DN),
    "phonon": lambda s: ladder_annihilate(s, Mode.PHONON),
    "electron_up": lambda s: electron_detach(s, "up"),
    "electron_dn": lambda s: electron_detach(s, "dn"),
}


def jump_operator(space: StateSpace, name: str) -> sp.csr_matrix:
    try:
        return _JUMPS[name](space)
    except KeyError:
        raise ValueError(f"unknown channel {name!r}") from None


def make_channels(
    space: StateSpace,
    gammas: Mapping[str, float],
    mus: Mapping[str, float] | None = None,
) -> list[Channel]:
    """Channels with nonzero rate, in the fixed order of :data:`CHANNEL_NAMES`."""
    mus = mus or {}
    unknown = (set(gammas) | set(mus)) - set(CHANNEL_NAMES)
    if unknown:
        raise ValueError(f"unknown channels: {sorted(unknown)}")
    out = []
    for name in CHANNEL_NAMES:
        gamma = float(gammas.get(name, 0.0))
        mu = float(mus.get(name, 0.0))
        if gamma > 0:
            out.append(Channel(name, gamma, jump_operator(space, name), mu))
    return out


def anode_channels(space: StateSpace, gamma_e: float) -> list[Channel]:
    """Electron capture by the anode: detachment of either spin, no influx."""
    if gamma_e < 0:
        raise ValueError("gamma_e must be non-negative")
    return [Channel(name, gamma_e, jump_operator(space, name)) for name in ("electron_up", "electron_dn")]


def charge_labels(space: StateSpace) -> np.ndarray:
    """Conserved charges of every basis state, one row per state.

    Columns: spin-up Phi1->Phi2 quanta, spin-up Phi0->Phi1 quanta, spin-up
    detached flag, the same three for spin down, and bond quanta (phonons
    plus a broken bond). The Hamiltonian preserves each column and every jump
    operator shifts them by a fixed amount.
    """
    t = space.table
    p1, p2, p3, p4, p5, L, _k, l1, l2 = t.T
    cols = []
    for pa, pb, lev in ((p1, p3, l1), (p2, p4, l2)):
        cols.append(pa + (lev == Phi2))
        cols.append(pb + ((lev == Phi1) | (lev == Phi2)))
        cols.append((lev == Detached).astype(np.int64))
    cols.append(p5 + L)
    return np.stack(cols, axis=1)
