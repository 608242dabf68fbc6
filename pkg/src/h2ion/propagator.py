"""One-step evolution operator via increment doubling.

``ptsim_expm`` approximates ``exp(A dt)`` by seeding a small increment

    T_0 = (A e) + (A e)^2/2! + (A e)^3/3! + (A e)^4/4!,   e = dt / 2**M

and doubling it ``M`` times with ``T_n = 2 T_{n-1} + T_{n-1} T_{n-1}``. The
identity is added once, after the last doubling, so the tiny increment is
never swamped by the unit diagonal while it is being squared.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

__all__ = [
    "PtsimConfig",
    "Propagator",
    "ptsim_expm",
    "oracle_expm",
    "build_propagator",
    "norm_dt_bound",
]


@dataclass(frozen=True)
class PtsimConfig:
    M: int = 20
    taylor_terms: int = 4

    def __post_init__(self):
        if self.M < 1:
            raise ValueError("M must be at least 1")
        if self.taylor_terms < 1:
            raise ValueError("taylor_terms must be at least 1")


def _dense(A, stacked: bool = False) -> np.ndarray:
    A = A.toarray() if sp.issparse(A) else np.asarray(A)
    if A.ndim < 2 or (A.ndim > 2 and not stacked) or A.shape[-1] != A.shape[-2]:
        raise ValueError(f"expected a square matrix, got shape {A.shape}")
    return A.astype(complex, copy=False)


def ptsim_expm(A, dt: float, config: PtsimConfig = PtsimConfig(), *, increment: bool = True) -> np.ndarray:
    """Approximate ``exp(A * dt)``.

    ``A`` may also be a stack of equally sized matrices (shape ``(..., n, n)``).
    With ``increment=False`` the seed ``I + T_0`` is squared directly, which
    loses the low-order digits of ``T_0``; that path exists for comparison only.
    """
    A = _dense(A, stacked=True)
    if not dt > 0:
        raise ValueError("dt must be positive")
    n = A.shape[-1]
    Ae = A * (dt / 2.0**config.M)
    T = np.zeros_like(Ae)
    term = np.broadcast_to(np.eye(n, dtype=complex), Ae.shape)
    for j in range(1, config.taylor_terms + 1):
        term = term @ Ae / j
        T += term
    if increment:
        for _ in range(config.M):
            T = 2.0 * T + T @ T
        return np.eye(n, dtype=complex) + T
    U = np.eye(n, dtype=complex) + T
    for _ in range(config.M):
        U = U @ U
    return U


def oracle_expm(H, dt: float, hbar: float = 1.0, atol: float = 1e-12) -> np.ndarray:
    """``exp(-i H dt / hbar)`` from the eigendecomposition of Hermitian ``H``."""
    H = _dense(H)
    defect = np.max(np.abs(H - H.conj().T), initial=0.0)
    if defect > atol:
        raise ValueError(f"matrix is not Hermitian (defect {defect:.3e})")
    w, V = np.linalg.eigh(H)
    return (V * np.exp(-1j * w * dt / hbar)) @ V.conj().T


def _hash(H) -> str:
    m = sp.csr_matrix(H)
    m.sort_indices()
    h = hashlib.sha1()
    for arr in (m.indptr, m.indices, m.data):
        h.update(np.ascontiguousarray(arr).tobytes())
    return h.hexdigest()[:16]


@dataclass(frozen=True)
class Propagator:
    U: np.ndarray = field(repr=False)
    dt: float
    config: PtsimConfig
    source_hash: str

    def unitarity_defect(self) -> float:
        n = self.U.shape[0]
        return float(np.max(np.abs(self.U.conj().T @ self.U - np.eye(n)), initial=0.0))


def build_propagator(H, dt: float, config: PtsimConfig = PtsimConfig(), hbar: float = 1.0) -> Propagator:
    """Step operator ``exp(-i H dt / hbar)`` for a time-independent ``H``."""
    A = -1j / hbar * (H.toarray() if sp.issparse(H) else np.asarray(H, dtype=complex))
    return Propagator(ptsim_expm(A, dt, config), dt, config, _hash(H))


def norm_dt_bound(H) -> float:
    """Cheap upper bound on the spectral norm (max absolute row sum)."""
    if sp.issparse(H):
        return float(abs(H).sum(axis=1).max()) if H.nnz else 0.0
    return float(np.abs(H).sum(axis=1).max(initial=0.0))

