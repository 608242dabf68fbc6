# %% [markdown]
# # Ionization into an anode
#
# Electrons that reach the detached level are carried off. With phonon
# relaxation pinning the bond once it forms, each start settles on a
# fixed cation probability.

# %%
from h2ion.model import settled_value
from h2ion.runner import simulate

rate = 10**7 * 1e-8
gammas = {"electron_up": rate, "electron_dn": rate, "phonon": rate}
for sid in ("Psi0", "Psi2", "Psi3", "Psi5", "Psi6", "Psi7"):
    ts = simulate(sid, gammas, t_end=6000.0)
    value, settled = settled_value(ts["cation"])
    print(f"{sid}: P_cation -> {value:.6f}  settled={settled}  basis={ts.meta['dim']}")

# %% [markdown]
# Without the phonon loss the bond keeps breaking and re-forming, and
# the cation probability keeps drifting instead of settling.

# %%
ts = simulate("Psi5", {"electron_up": rate, "electron_dn": rate}, t_end=6000.0)
print("Psi5, no phonon loss:", settled_value(ts["cation"]))
