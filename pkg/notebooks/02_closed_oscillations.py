# %% [markdown]
# # Closed-system oscillations
#
# Without dissipation the separate-atoms probability oscillates forever.
# The photon-free start has the largest swing.

# %%
import numpy as np

from h2ion.runner import simulate

runs = {sid: simulate(sid, t_end=1500.0, stride=2) for sid in ("Psi0", "Psi3", "Psi5", "Psi6", "Psi7")}
for sid, ts in runs.items():
    a = ts["atoms"]
    print(f"{sid}: P_atoms in [{a.min():.4f}, {a.max():.4f}], amplitude {np.ptp(a):.4f}")

# %% [markdown]
# Single- and double-photon starts are not interchangeable: the second
# quantum enters the exchange with a sqrt(2) matrix element, so Psi3
# drifts out of phase with Psi0.

# %%
gap = np.max(np.abs(runs["Psi0"]["atoms"] - runs["Psi3"]["atoms"]))
print(f"max |P_atoms(Psi0) - P_atoms(Psi3)| = {gap:.3e}")

# %% [markdown]
# A coarse text trace of Psi7, one character per 60 time units.

# %%
ts = runs["Psi7"]
step = int(round(60.0 / (ts.times[1] - ts.times[0])))
print("".join(" .:-=+*#%@"[min(9, int(v * 10))] for v in ts["atoms"][::step]))
