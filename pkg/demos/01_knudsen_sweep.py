"""Error of the three particle solvers on the smooth periodic problem.

Runs pure Monte Carlo, the basic hybrid and the optimized hybrid at four
Knudsen numbers and prints the mean L1 error against a discrete-velocity
reference. Takes about a minute with the default two seeds.
"""
import sys

import numpy as np

from bgkhybrid.harness import RunConfig, run

EPSILONS = (1e-2, 1e-3, 5e-4, 1e-4)
SOLVERS = ("mcm", "fsi", "fsi1")
n_seeds = int(sys.argv[1]) if len(sys.argv) > 1 else 2

# %% one row per solver, one column per epsilon, density error in units of 1e-2
print("density L1 error x 1e-2")
print("solver " + "".join(f"{e:>10.0e}" for e in EPSILONS))
for solver in SOLVERS:
    row = []
    for eps in EPSILONS:
        errs = [run(RunConfig(solver=solver, epsilon=eps, seed=s)).errors["rho"] for s in range(n_seeds)]
        row.append(100 * np.mean(errs))
    print(f"{solver:<7}" + "".join(f"{x:10.3f}" for x in row))

# %% the pure particle error is set by the particle count alone; the hybrids
# lose their noise as the Maxwellian part takes over the mass
