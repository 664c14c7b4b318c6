"""Shock reflected from a wall and the Lax tube with the hybrid solver.

Prints the final density profile every few cells next to the
discrete-velocity reference. Pass an output directory to also write the
CSV files.
"""
import sys

from bgkhybrid.harness import RunConfig, run

out = sys.argv[1] if len(sys.argv) > 1 else None

for scenario in ("shock", "lax"):
    rep = run(RunConfig(scenario=scenario, solver="fsi1", epsilon=1e-3, cells=100, ppc=200,
                        out=f"{out}/{scenario}" if out else None))
    # %%
    print(f"{scenario}: t={rep.t:.4f} steps={rep.steps} L1 errors "
          + ", ".join(f"{k}={v:.4f}" for k, v in rep.errors.items()))
    print("     x      rho    rho_ref    beta")
    for i in range(0, rep.x.size, 10):
        print(f"{rep.x[i]:6.3f} {rep.U[0, i]:8.4f} {rep.reference_U[0, i]:9.4f} {rep.beta[i]:7.3f}")
