"""Density-matrix evolution under the Lindblad master equation.

Each time step is split in two: a unitary conjugation with the precomputed
step operator, then one first-order step of the dissipator

    L(rho) = sum_k g_k  (A rho A^+ - 1/2 {rho, A^+ A})
           + sum_k g'_k (A^+ rho A - 1/2 {rho, A A^+}),    g'_k = mu_k g_k

on the result. The dissipative substep comes in two forms:

``euler``
    ``rho + dt L(rho)``. Exactly trace preserving, but the dropped
    ``dt^2/4 G rho G`` term (``G = sum g A^+ A``) makes it slightly
    non-positive: eigenvalues dip by roughly ``(g dt)^2``.
``kraus`` (default)
    ``K rho K^+ + dt sum g A rho A^+`` with ``K = sqrt(1 - dt G)``. The same
    first-order update written as a completely positive, exactly trace
    preserving map. When ``G`` is diagonal the populations it produces from
    a given state match ``euler`` exactly; only coherences differ, at
    ``O(dt^2)``.
 Two drivers share this scheme: :func:`evolve` on dense
matrices, and :class:`SectorEvolver`, which keeps only the diagonal blocks
of rho over a partition of the basis into conserved-charge sectors. When the
Hamiltonian is block diagonal over the sectors and every jump operator maps
whole sectors onto whole sectors, populations evolve identically on both.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable, Mapping, Sequence

import numpy as np
import scipy.sparse as sp

from .propagator import Propagator, PtsimConfig, build_propagator, ptsim_expm

__all__ = [
    "IntegrationError",
    "DensityMatrix",
    "Channel",
    "TimeSeries",
    "dissipator_apply",
    "step",
    "evolve",
    "SectorEvolver",
    "sample_steps",
    "SUBSTEPS",
    "no_jump_generator",
]

SUBSTEPS = ("kraus", "euler")

log = logging.getLogger(__name__)


class IntegrationError(RuntimeError):
    pass


@dataclass
class DensityMatrix:
    rho: np.ndarray
    time: float = 0.0
    hermiticity_defect: float = 0.0

    @classmethod
    def from_ket(cls, psi, time: float = 0.0) -> "DensityMatrix":
        psi = np.asarray(psi, dtype=complex)
        return cls(np.outer(psi, psi.conj()), time)

    @property
    def dim(self) -> int:
        return self.rho.shape[0]

    def populations(self) -> np.ndarray:
        return np.real(np.diagonal(self.rho)).copy()

    def trace(self) -> float:
        return float(np.real(np.trace(self.rho)))

    def min_eigenvalue(self) -> float:
        return float(np.linalg.eigvalsh(self.rho)[0])

    def purity(self) -> float:
        return float(np.real(np.vdot(self.rho, self.rho)))

    def asymmetry(self) -> float:
        """``max |rho - rho^dagger|`` of the stored matrix."""
        return float(np.max(np.abs(self.rho - self.rho.conj().T), initial=0.0))


@dataclass(frozen=True)
class Channel:
    """One dissipation channel with jump operator ``jump`` and optional influx.

    ``mu`` is the influx-to-dissipation ratio; the influx term runs at
    ``mu * gamma`` with the creation-side dissipator of the same operator.
    """

    name: str
    gamma: float
    jump: sp.csr_matrix = field(repr=False)
    mu: float = 0.0

    def __post_init__(self):
        if not self.gamma >= 0:
            raise ValueError(f"{self.name}: gamma must be non-negative")
        if not 0 <= self.mu < 1:
            raise ValueError(f"{self.name}: mu must lie in [0, 1) for a net-dissipative channel")
        jump = sp.csr_matrix(self.jump, dtype=complex)
        if jump.shape[0] != jump.shape[1]:
            raise ValueError(f"{self.name}: jump operator must be square")
        object.__setattr__(self, "jump", jump)

    @property
    def influx_rate(self) -> float:
        return self.mu * self.gamma

    def terms(self):
        """``(rate, operator)`` pairs in the generic form ``rate * D[operator]``."""
        out = []
        if self.gamma > 0:
            out.append((self.gamma, self.jump))
        if self.influx_rate > 0:
            out.append((self.influx_rate, self.jump.conj().T.tocsr()))
        return out

    def restrict(self, idx) -> "Channel":
        idx = np.asarray(idx)
        return Channel(self.name, self.gamma, self.jump[idx][:, idx], self.mu)


def _sandwich(A: sp.csr_matrix, rho: np.ndarray) -> np.ndarray:
    # A rho A^+ with both products sparse-on-the-left
    X = A @ rho
    return (A @ X.conj().T).conj().T


def dissipator_apply(rho, channels: Sequence[Channel]) -> np.ndarray:
    """Dissipator increment ``L(rho)`` summed over ``channels``."""
    rho = rho.rho if isinstance(rho, DensityMatrix) else np.asarray(rho)
    out = np.zeros_like(rho, dtype=complex)
    for ch in channels:
        if ch.jump.shape != rho.shape:
            raise ValueError(
                f"{ch.name}: jump operator shape {ch.jump.shape} does not match rho {rho.shape}"
            )
        for rate, A in ch.terms():
            K = (A.conj().T @ A).tocsr()
            Krho = K @ rho
            out += rate * (_sandwich(A, rho) - 0.5 * (Krho + Krho.conj().T))
    return out


def no_jump_generator(channels: Sequence[Channel], n: int) -> sp.csr_matrix:
    """``G = sum rate A^+ A`` over every term of every channel."""
    G = sp.csr_matrix((n, n), dtype=complex)
    for ch in channels:
        for rate, A in ch.terms():
            G = G + rate * (A.conj().T @ A)
    G = G.tocsr()
    G.eliminate_zeros()
    return G


def _check_substep(substep: str):
    if substep not in SUBSTEPS:
        raise ValueError(f"unknown dissipative substep {substep!r}; choose from {SUBSTEPS}")


def _too_large(tau: float, rate: float):
    return IntegrationError(
        f"step size too large for the dissipative substep (dt * rate = {tau * rate:.6g} > 1)"
    )


def _no_jump_factor(G, tau: float) -> np.ndarray:
    """``sqrt(1 - tau G)``: a vector when ``G`` is diagonal, a matrix otherwise."""
    G = sp.csr_matrix(G)
    d = np.real(G.diagonal())
    if (G - sp.diags(G.diagonal())).count_nonzero() == 0:
        if d.size and tau * d.max() > 1:
            raise _too_large(tau, d.max())
        return np.sqrt(1.0 - tau * d)
    w, V = np.linalg.eigh(G.toarray())
    if tau * w.max() > 1:
        raise _too_large(tau, w.max())
    return (V * np.sqrt(np.clip(1.0 - tau * w, 0.0, None))) @ V.conj().T


def _kraus_apply(rho: np.ndarray, channels: Sequence[Channel], K: np.ndarray, tau: float) -> np.ndarray:
    out = K[:, None] * rho * K.conj()[None, :] if K.ndim == 1 else K @ rho @ K.conj().T
    for ch in channels:
        for rate, A in ch.terms():
            out = out + (rate * tau) * _sandwich(A, rho)
    return out


def step(
    state: DensityMatrix,
    propagator: Propagator,
    channels: Sequence[Channel],
    dt: float,
    trace_tol: float = 1e-4,
    hbar: float = 1.0,
    substep: str = "kraus",
    no_jump=None,
) -> DensityMatrix:
    """Unitary substep with ``propagator`` then one first-order dissipative substep.

    ``no_jump`` may carry a precomputed ``sqrt(1 - dt G)`` for the ``kraus`` form.
    """
    _check_substep(substep)
    U = propagator.U
    if not np.isclose(propagator.dt, dt, rtol=1e-12, atol=0):
        raise ValueError("propagator was built for a different dt")
    rho = U @ state.rho @ U.conj().T
    if channels:
        tau = dt / hbar
        if substep == "euler":
            rho = rho + dissipator_apply(rho, channels) * tau
        else:
            if no_jump is None:
                no_jump = _no_jump_factor(no_jump_generator(channels, rho.shape[0]), tau)
            rho = _kraus_apply(rho, channels, no_jump, tau)
    defect = float(np.max(np.abs(rho - rho.conj().T), initial=0.0))
    rho = 0.5 * (rho + rho.conj().T)
    tr = float(np.real(np.trace(rho)))
    if abs(tr - 1.0) > trace_tol:
        raise IntegrationError(
            f"step size too large for the dissipative substep (trace {tr:.9g} at t={state.time + dt:.6g})"
        )
    return DensityMatrix(rho, state.time + dt, defect)


@dataclass
class TimeSeries:
    times: np.ndarray
    columns: dict[str, np.ndarray]
    meta: dict = field(default_factory=dict)

    def __getitem__(self, name: str) -> np.ndarray:
        return self.columns[name]

    def __len__(self) -> int:
        return len(self.times)

    @property
    def names(self) -> list[str]:
        return list(self.columns)


Probe = Callable[[object], float]


def sample_steps(n_steps: int, stride: int) -> np.ndarray:
    """Step numbers at which observers fire: every ``stride`` steps plus the last."""
    if stride < 1:
        raise ValueError("stride must be at least 1")
    marks = list(range(0, n_steps + 1, stride))
    if marks[-1] != n_steps:
        marks.append(n_steps)
    return np.asarray(marks)


def _spot_indices(n_samples: int, count: int) -> set[int]:
    if n_samples == 0:
        return set()
    return set(np.unique(np.linspace(0, n_samples - 1, min(count, n_samples)).round().astype(int)))


class _Recorder:
    def __init__(self, probes: Mapping[str, Probe], n_steps: int, stride: int, spot_checks: int):
        self.probes = dict(probes)
        self.marks = sample_steps(n_steps, stride)
        self.spots = _spot_indices(len(self.marks), spot_checks)
        self.times: list[float] = []
        self.rows: list[list[float]] = []
        self.min_eigs: list[tuple[float, float]] = []
        self.max_defect = 0.0
        self.max_asymmetry = 0.0

    def record(self, state, sample_no: int):
        self.times.append(state.time)
        self.rows.append([float(p(state)) for p in self.probes.values()])
        self.max_asymmetry = max(self.max_asymmetry, state.asymmetry())
        if sample_no in self.spots:
            self.min_eigs.append((state.time, state.min_eigenvalue()))

    def series(self, **meta) -> TimeSeries:
        data = np.asarray(self.rows, dtype=float).reshape(len(self.rows), len(self.probes))
        cols = {name: data[:, i] for i, name in enumerate(self.probes)}
        meta.setdefault("min_eigenvalues", self.min_eigs)
        meta.setdefault("max_hermiticity_defect", self.max_defect)
        meta.setdefault("max_recorded_asymmetry", self.max_asymmetry)
        return TimeSeries(np.asarray(self.times), cols, meta)


def _n_steps(dt: float, t_end: float) -> int:
    if not dt > 0:
        raise ValueError("dt must be positive")
    if t_end < 0:
        raise ValueError("t_end must be non-negative")
    n = int(round(t_end / dt))
    if not np.isclose(n * dt, t_end, rtol=1e-9, atol=1e-12):
        raise ValueError("t_end must be an integer multiple of dt")
    return n


def evolve(
    rho0,
    H,
    channels: Sequence[Channel],
    dt: float,
    t_end: float,
    probes: Mapping[str, Probe] | None = None,
    stride: int = 100,
    config: PtsimConfig = PtsimConfig(),
    hbar: float = 1.0,
    trace_tol: float = 1e-4,
    spot_checks: int = 10,
    substep: str = "kraus",
) -> TimeSeries:
    """Dense evolution of ``rho0`` (a :class:`DensityMatrix` or a ket) to ``t_end``.

    ``probes`` map column names to callables of the current state; a
    ``trace`` column is always recorded.
    """
    state = rho0 if isinstance(rho0, DensityMatrix) else DensityMatrix.from_ket(rho0)
    n_steps = _n_steps(dt, t_end)
    probes = {"trace": DensityMatrix.trace, **(probes or {})}
    rec = _Recorder(probes, n_steps, stride, spot_checks)
    marks = set(rec.marks.tolist())
    _check_substep(substep)
    prop = build_propagator(H, dt, config, hbar) if n_steps else None
    no_jump = None
    if channels and substep == "kraus":
        no_jump = _no_jump_factor(no_jump_generator(channels, state.dim), dt / hbar)
    rec.record(state, 0)
    for n in range(1, n_steps + 1):
        state = step(state, prop, channels, dt, trace_tol, hbar, substep, no_jump)
        rec.max_defect = max(rec.max_defect, state.hermiticity_defect)
        if n in marks:
            rec.record(state, len(rec.times))
    return rec.series(dt=dt, t_end=t_end, steps=n_steps, final_state=state)


class _BlockState:
    """View of the sector-block density handed to probes."""

    def __init__(self, engine: "SectorEvolver", time: float):
        self._engine = engine
        self.time = time

    def populations(self) -> np.ndarray:
        return self._engine.populations()

    def trace(self) -> float:
        return float(self._engine.populations().sum())

    def min_eigenvalue(self) -> float:
        return self._engine.min_eigenvalue()

    def asymmetry(self) -> float:
        return self._engine.asymmetry()


class SectorEvolver:
    """Split-step evolution restricted to the sector-diagonal blocks of rho.

    ``labels`` assigns each basis index a sector (any hashable rows, e.g. a
    2-D integer array of conserved charges). Construction fails if ``H``
    couples different sectors or a jump operator splits a sector, since the
    block restriction would then change the populations.
    """

    def __init__(
        self,
        H,
        channels: Sequence[Channel],
        labels,
        dt: float,
        config: PtsimConfig = PtsimConfig(),
        hbar: float = 1.0,
        trace_tol: float = 1e-4,
        substep: str = "kraus",
    ):
        H = sp.csr_matrix(H, dtype=complex)
        n = H.shape[0]
        labels = np.asarray(labels)
        if labels.shape[0] != n:
            raise ValueError("one sector label per basis state required")
        if labels.ndim == 1:
            labels = labels[:, None]
        _, sector_of = np.unique(labels, axis=0, return_inverse=True)
        sector_of = sector_of.ravel()
        self.dim = n
        self.dt = dt
        self.hbar = hbar
        self.trace_tol = trace_tol
        self.time = 0.0

        coo = H.tocoo()
        if np.any(sector_of[coo.row] != sector_of[coo.col]):
            raise ValueError("Hamiltonian couples different sectors")

        n_sec = int(sector_of.max()) + 1
        self.n_sectors = n_sec
        members = [np.flatnonzero(sector_of == s) for s in range(n_sec)]
        sizes = np.array([len(m) for m in members])
        # lay blocks out bucket by bucket (equal sizes contiguous) in one flat vector
        order = np.lexsort((np.arange(n_sec), sizes))
        self._buckets = []  # (size, first_sector_slot, count, offset)
        offset = 0
        slot_of = np.empty(n_sec, dtype=np.int64)
        block_offset = np.empty(n_sec, dtype=np.int64)
        for size in np.unique(sizes):
            secs = order[sizes[order] == size]
            self._buckets.append((int(size), secs, offset))
            for j, s in enumerate(secs):
                slot_of[s] = j
                block_offset[s] = offset + j * size * size
            offset += len(secs) * size * size
        self.n_entries = offset

        local = np.empty(n, dtype=np.int64)
        for m in members:
            local[m] = np.arange(len(m))
        self._sector_of = sector_of
        self._local = local
        self._block_offset = block_offset
        sizes_of = sizes[sector_of]

        def flat(i, j):
            # position of rho[i, j] for i, j in the same sector
            return block_offset[sector_of[i]] + local[i] * sizes_of[i] + local[j]

        self._flat = flat
        self.diag_pos = flat(np.arange(n), np.arange(n))

        # unitary step per bucket: stacked PTSIM on the dense sector blocks
        Hd_cache = H.tolil()
        self._U = []
        for size, secs, _ in self._buckets:
            blocks = np.empty((len(secs), size, size), dtype=complex)
            for j, s in enumerate(secs):
                idx = members[s]
                blocks[j] = Hd_cache[idx][:, idx].toarray()
            U = ptsim_expm(-1j / hbar * blocks, dt, config)
            self._U.append(U)
        self.config = config

        _check_substep(substep)
        self.substep = substep
        self._bucket_members = [np.stack([members[s] for s in secs]) for _, secs, _ in self._buckets]
        self._J, G = self._jump_superop(channels)
        self._D = self._no_jump_flat = self._no_jump_blocks = None
        if substep == "euler":
            self._D = (self._J + self._anticommutator_superop(G, members)).tocsr()
            self._D.eliminate_zeros()
        else:
            self._no_jump_flat, self._no_jump_blocks = self._no_jump(G, members, dt / hbar)
        self.v = np.zeros(self.n_entries, dtype=complex)

    def _jump_superop(self, channels) -> tuple[sp.csr_matrix, sp.csr_matrix]:
        """Sandwich terms ``rate A rho A^+`` on the flat block vector, and ``G``."""
        rows, cols, vals = [], [], []
        sector_of, flat = self._sector_of, self._flat
        n = self.dim
        for ch in channels:
            if ch.jump.shape != (n, n):
                raise ValueError(f"{ch.name}: jump operator does not match the space")
            for rate, A in ch.terms():
                A = sp.csr_matrix(A)
                A.eliminate_zeros()
                a = A.tocoo()
                target = {}
                for src, dst in zip(sector_of[a.col], sector_of[a.row]):
                    if target.setdefault(src, dst) != dst:
                        raise ValueError(f"{ch.name}: jump operator splits a sector")
                if len(set(target.values())) != len(target):
                    raise ValueError(f"{ch.name}: jump operator merges sectors")
                # entry (i,j) feeds (i',j') with A[i',i] conj(A[j',j])
                by_src = {}
                for r, c, x in zip(a.row, a.col, a.data):
                    by_src.setdefault(sector_of[c], []).append((r, c, x))
                for entries in by_src.values():
                    rr, cc, xx = (np.array(col) for col in zip(*entries))
                    I1, I2 = (g.ravel() for g in np.meshgrid(np.arange(len(rr)), np.arange(len(rr)), indexing="ij"))
                    rows.append(flat(rr[I1], rr[I2]))
                    cols.append(flat(cc[I1], cc[I2]))
                    vals.append(rate * xx[I1] * np.conj(xx[I2]))
        m = self.n_entries
        if rows:
            J = sp.csr_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(m, m))
            J.sum_duplicates()
            J.eliminate_zeros()
        else:
            J = sp.csr_matrix((m, m), dtype=complex)
        G = no_jump_generator(channels, n)
        g = G.tocoo()
        if np.any(sector_of[g.row] != sector_of[g.col]):
            raise ValueError("A^+A couples different sectors")
        return J, G

    def _anticommutator_superop(self, G, members) -> sp.csr_matrix:
        """``-1/2 {G, rho}`` on the flat block vector."""
        rows, cols, vals = [], [], []
        diag_acc = np.zeros(self.n_entries, dtype=complex)
        flat, sector_of = self._flat, self._sector_of
        g = G.tocoo()
        for r, c, x in zip(g.row, g.col, g.data):
            idx = members[sector_of[r]]
            # (G rho)[r, j] += x rho[c, j];  (rho G)[j, c] += rho[j, r] x
            if r == c:
                diag_acc[flat(np.full(len(idx), r), idx)] += -0.5 * x
                diag_acc[flat(idx, np.full(len(idx), c))] += -0.5 * x
            else:
                rows += [flat(np.full(len(idx), r), idx), flat(idx, np.full(len(idx), c))]
                cols += [flat(np.full(len(idx), c), idx), flat(idx, np.full(len(idx), r))]
                vals += [np.full(len(idx), -0.5 * x)] * 2
        m = self.n_entries
        off = sp.csr_matrix((m, m), dtype=complex)
        if rows:
            off = sp.csr_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(m, m))
        return (off + sp.diags(diag_acc)).tocsr()

    def _no_jump(self, G, members, tau):
        """``sqrt(1 - tau G)`` as a flat entrywise factor, or per-bucket matrices."""
        if G.nnz == 0:
            return None, None
        K = _no_jump_factor(G, tau) if (G - sp.diags(G.diagonal())).count_nonzero() == 0 else None
        if K is not None:
            fac = np.empty(self.n_entries)
            for (size, secs, offset), M in zip(self._buckets, self._bucket_members):
                k = K[M]
                fac[offset : offset + len(secs) * size * size] = (k[:, :, None] * k[:, None, :]).ravel()
            return fac, None
        Gl = G.tolil()
        blocks = []
        for M in self._bucket_members:
            Gb = np.stack([Gl[idx][:, idx].toarray() for idx in M])
            w, V = np.linalg.eigh(Gb)
            if tau * w.max() > 1:
                raise _too_large(tau, w.max())
            blocks.append((V * np.sqrt(np.clip(1.0 - tau * w, 0.0, None))[:, None, :]) @ np.conj(np.swapaxes(V, 1, 2)))
        return None, blocks

    # state handling -----------------------------------------------------
    def load_ket(self, psi, time: float = 0.0):
        psi = np.asarray(psi, dtype=complex)
        self.v[:] = 0
        nz = np.flatnonzero(psi)
        I, J = np.meshgrid(nz, nz, indexing="ij")
        same = self._sector_of[I] == self._sector_of[J]
        self.v[self._flat(I[same], J[same])] = psi[I[same]] * np.conj(psi[J[same]])
        self.time = time

    def load_dense(self, rho, time: float = 0.0):
        rho = rho.rho if isinstance(rho, DensityMatrix) else np.asarray(rho)
        I, J = np.nonzero(self._sector_of[:, None] == self._sector_of[None, :])
        self.v[:] = 0
        self.v[self._flat(I, J)] = rho[I, J]
        self.time = time

    def to_dense(self) -> np.ndarray:
        I, J = np.nonzero(self._sector_of[:, None] == self._sector_of[None, :])
        rho = np.zeros((self.dim, self.dim), dtype=complex)
        rho[I, J] = self.v[self._flat(I, J)]
        return rho

    def _views(self):
        for (size, secs, offset), U in zip(self._buckets, self._U):
            count = len(secs)
            yield self.v[offset : offset + count * size * size].reshape(count, size, size), U

    def populations(self) -> np.ndarray:
        return self.v[self.diag_pos].real.copy()

    def min_eigenvalue(self) -> float:
        return float(min(np.linalg.eigvalsh(X).min() for X, _ in self._views()))

    def asymmetry(self) -> float:
        """Largest ``|rho - rho^dagger|`` entry over the stored blocks."""
        return max(float(np.max(np.abs(X - np.conj(np.swapaxes(X, 1, 2))), initial=0.0)) for X, _ in self._views())

    def step(self):
        for X, U in self._views():
            X[...] = U @ X @ np.conj(np.swapaxes(U, 1, 2))
        tau = self.dt / self.hbar
        if self._D is not None:
            if self._D.nnz:
                self.v += self._D @ self.v * tau
        else:
            jumps = self._J @ self.v if self._J.nnz else None
            if self._no_jump_flat is not None:
                self.v *= self._no_jump_flat
            elif self._no_jump_blocks is not None:
                for (X, _), K in zip(self._views(), self._no_jump_blocks):
                    X[...] = K @ X @ np.conj(np.swapaxes(K, 1, 2))
            if jumps is not None:
                self.v += tau * jumps
        defect = 0.0
        for X, _ in self._views():
            Xh = np.conj(np.swapaxes(X, 1, 2))
            defect = max(defect, float(np.max(np.abs(X - Xh), initial=0.0)))
            X[...] = 0.5 * (X + Xh)
        self.time += self.dt
        tr = float(self.v[self.diag_pos].real.sum())
        if abs(tr - 1.0) > self.trace_tol:
            raise IntegrationError(
                f"step size too large for the dissipative substep (trace {tr:.9g} at t={self.time:.6g})"
            )
        return defect

    def run(
        self,
        t_end: float,
        probes: Mapping[str, Probe] | None = None,
        stride: int = 100,
        spot_checks: int = 10,
    ) -> TimeSeries:
        n_steps = _n_steps(self.dt, t_end)
        probes = {"trace": _BlockState.trace, **(probes or {})}
        rec = _Recorder(probes, n_steps, stride, spot_checks)
        marks = set(rec.marks.tolist())
        rec.record(_BlockState(self, self.time), 0)
        for n in range(1, n_steps + 1):
            rec.max_defect = max(rec.max_defect, self.step())
            if n in marks:
                rec.record(_BlockState(self, self.time), len(rec.times))
        return rec.series(dt=self.dt, t_end=t_end, steps=n_steps, sectors=self.n_sectors)
