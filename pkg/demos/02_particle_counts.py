"""How many particles each solver carries as the run proceeds."""
from bgkhybrid.harness import RunConfig, run

# %%
series = {}
for solver, eps in (("mcm", 1e-4), ("fsi", 1e-2), ("fsi", 1e-3), ("fsi", 1e-4), ("fsi1", 1e-4)):
    rep = run(RunConfig(solver=solver, epsilon=eps, reference="none"))
    series[f"{solver} eps={eps:g}"] = rep.timeseries

# %% the count drops to a fraction exp(-dt/eps) of the Monte Carlo count in the first step
for name, ts in series.items():
    n = ts[:, 1].astype(int)
    print(f"{name:<16} steps={len(n) - 1:4d}  start={n[0]:6d}  step10={n[min(10, len(n) - 1)]:6d}  end={n[-1]:6d}")

# %% the final step is clipped to land on t_final, so exp(-dt/eps) is close to 1 there
# and the last count jumps back up; timeseries.csv written by the CLI shows the same
