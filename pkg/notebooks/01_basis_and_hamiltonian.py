# %% [markdown]
# # The basis and the Hamiltonian
#
# Nine registers per basis state: five bosonic counters, the bond flag L,
# the nuclear position k and the two electron levels. Truncation and the
# per-pair electron constraint fix the dimension.

# %%
import numpy as np

from h2ion.hilbert import Cutoffs, build_state_space, reachable_subspace
from h2ion.model import initial_ket
from h2ion.operators import ModelParams, assemble_hamiltonian, hamiltonian_terms

space = build_state_space()
print("full dimension:", space.dim)
print("with no photons or phonons:", build_state_space(Cutoffs.uniform(0, 0)).dim)
print("first states:", *space.states[:3], sep="\n  ")

# %% [markdown]
# The Hamiltonian is a sum of named sparse pieces.

# %%
params = ModelParams()
for name, term in hamiltonian_terms(space, params).items():
    print(f"{name:>6}: {term.nnz:6d} nonzeros")
H = assemble_hamiltonian(space, params)
print("Hermitian:", abs(H - H.conj().T).max() == 0)

# %% [markdown]
# Most of the basis is never visited from a given start. Pruning to the
# states connected to the initial support keeps the dense blocks small.

# %%
for sid in ("Psi0", "Psi5", "Psi6", "Psi7"):
    psi = initial_ket(space, sid)
    sub = reachable_subspace(space, [H], np.flatnonzero(psi))
    print(f"{sid}: {sub.dim} of {space.dim} states reachable under H alone")
