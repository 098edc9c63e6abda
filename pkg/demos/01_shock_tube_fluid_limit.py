"""
Shock tube in the fluid limit
=============================

Solve the deterministic shock-tube problem (random interface scenario at
its midpoint z = 0) with a vanishing Knudsen number and compare the
macroscopic fields against the exact Riemann solution of the compressible
Euler system.  This demonstrates the asymptotic-preserving property: the
kinetic solver becomes a shock-capturing Euler solver as eps -> 0 without
resolving eps in the time step.
"""

# %%
# Imports and setup
# -----------------
import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

from bgkuq.random_inputs import get_scenario
from bgkuq.reference import euler_riemann_exact, solve_scenario_fields

scenario = get_scenario("test2_interface")
t = scenario.t_final
nx = 320

# %%
# Kinetic solve at eps = 1e-6
# ---------------------------
# The scenario already carries eps = 1e-6; one call gives (rho, U, T).
fields = solve_scenario_fields(scenario, 0.0, nx, t)
x = (np.arange(nx) + 0.5) / nx

# %%
# Exact Euler reference
# ---------------------
rho_ex, u_ex, t_ex = euler_riemann_exact(
    (1.0, 0.0, 1.0), (0.125, 0.0, 0.25), (x - 0.5) / t)

l1 = np.sum(np.abs(fields[0] - rho_ex)) / nx
print(f"L1(rho) distance to the exact Riemann solution at N={nx}: {l1:.3e}")

# %%
# Plot
# ----
fig, axes = plt.subplots(1, 3, figsize=(12, 3.2), constrained_layout=True)
for ax, qi, name, exact in zip(axes, range(3), ("rho", "U", "T"),
                               (rho_ex, u_ex, t_ex)):
    ax.plot(x, exact, "k-", lw=1, label="exact Euler")
    ax.plot(x, fields[qi], "C0.", ms=2, label=f"BGK, eps=1e-6")
    ax.set_title(name)
    ax.set_xlabel("x")
axes[0].legend(frameon=False)
fig.savefig("demo01_shock_tube.png", dpi=140)
print("wrote demo01_shock_tube.png")
