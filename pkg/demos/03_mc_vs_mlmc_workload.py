"""
MC versus MLMC at matched workload
==================================

On the smooth random-initial-data benchmark, compare the overall error of
plain Monte Carlo at several mesh sizes with a three-level MLMC telescope,
as a function of the computational workload W = sum_l M_l (N_l^2 +
N_{l-1}^2).  The multilevel estimator reaches a given accuracy at a
fraction of the single-level cost.

This is a scaled-down study (desk scale); increase the sample sizes for
publication-quality curves.
"""

# %%
# Setup
# -----
import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

from bgkuq.estimators import LevelPlan, plan_workload, run_plan
from bgkuq.random_inputs import get_scenario
from bgkuq.reference import collocation_reference, error_overall, restrict

scenario = get_scenario("test1_smooth")
K = 6  # replications per error estimate
reference = collocation_reference(scenario, nc=20, nx=160, t=0.1)

def overall_error(plan, seed):
    fields = run_plan(scenario, plan, seed, threads=2)
    reps = np.stack([f.mean for f in fields])
    ref = restrict(reference.mean, plan.finest_nx)
    return error_overall(reps, ref, 1.0 / plan.finest_nx)[0]  # density

# %%
# Plain MC at N = 10, 20, 40 with growing sample counts
# -----------------------------------------------------
mc_curves = {}
for nx in (10, 20, 40):
    pts = []
    for m in (10, 40, 160):
        plan = LevelPlan(levels=((nx, m),), optimizer="none", replications=K)
        pts.append((plan_workload(plan), overall_error(plan, seed=50 + nx + m)))
        print(f"MC  N={nx:3d} M={m:4d}: W={pts[-1][0]:9.0f}  E={pts[-1][1]:.4e}")
    mc_curves[nx] = np.array(pts)

# %%
# MLMC with levels 10/20/40 and M_l = M1 / 4^(l-1)
# ------------------------------------------------
ml_pts = []
for m1 in (64, 256):
    plan = LevelPlan(levels=((10, m1), (20, m1 // 4), (40, m1 // 16)),
                     optimizer="standard", replications=K)
    ml_pts.append((plan_workload(plan), overall_error(plan, seed=77 + m1)))
    print(f"MLMC M1={m1:4d}: W={ml_pts[-1][0]:9.0f}  E={ml_pts[-1][1]:.4e}")
ml_pts = np.array(ml_pts)

# %%
# Error versus workload
# ---------------------
fig, ax = plt.subplots(figsize=(5.2, 3.6), constrained_layout=True)
for nx, pts in mc_curves.items():
    ax.loglog(pts[:, 0], pts[:, 1], "o--", label=f"MC N={nx}")
ax.loglog(ml_pts[:, 0], ml_pts[:, 1], "ks-", label="MLMC 10/20/40")
ax.set_xlabel("workload")
ax.set_ylabel("E(t=0.1) for density")
ax.legend(frameon=False, fontsize=8)
fig.savefig("demo03_workload.png", dpi=140)
print("wrote demo03_workload.png")
