# %% [markdown]
# # Photon loss against electron escape
#
# A 3x3 corner of the dissipative sweep from the doubly excited
# superposition. Rates are log10 exponents scaled by the default unit.
# This takes a few minutes on one core.

# %%
from h2ion.config import parse_config
from h2ion.runner import run_sweep

cfg = parse_config(
    """
scenario = "dissipative"
initial_state = "Psi6"
[integration]
t_end = 4000.0
[[sweep.axis]]
quantity = "gamma_photon"
values = [4, 5.5, 7]
[[sweep.axis]]
quantity = "gamma_electron"
values = [4, 5.5, 7]
"""
)
cells = run_sweep(cfg)

# %%
print("gamma_photon gamma_electron  P_molecule  P_cation   t_stb")
for c in cells:
    gp, ge = c.coords.values()
    print(f"{gp:12g} {ge:14g}  {c.final['molecule']:10.4f}  {c.final['cation']:8.4f}   {c.t_stb}")

# %% [markdown]
# Strong photon loss pulls the cation probability down and shortens the
# time to settle; strong electron escape pushes it up.
