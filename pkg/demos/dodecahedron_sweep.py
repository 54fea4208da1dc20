"""How relative error grows as failures become rarer on the dodecahedron.

Run with ``python demos/dodecahedron_sweep.py [out.dat]``.  A few minutes.
"""

import sys

from stochflow import ExperimentConfig, ParametricFamily, dodecahedron, sweep
from stochflow.harness import write_gnuplot

EPSILONS = (1e-2, 1e-4, 1e-6, 1e-8)


def family(eps):
    return dodecahedron(ParametricFamily(rho=0.7, epsilon=eps, b=4), demand=5)


# %% Both estimators keep a bounded relative error while u falls by many orders.
results = []
for method, n in (("pmc", 20_000), ("gs", 5_000)):
    results += sweep(ExperimentConfig(method, n, seed=11), family, EPSILONS)

print(f"{'method':8s} {'epsilon':>8s} {'estimate':>11s} {'RE':>7s} {'time':>7s}")
for r in results:
    print(f"{r.method:8s} {r.epsilon:8.0e} {r.estimate:11.3e} {r.re:7.3f} {r.time_s:6.1f}s")

# %% Optionally dump a gnuplot file with one data block per method.
if len(sys.argv) > 1:
    write_gnuplot(results, sys.argv[1])
    print(f"wrote {sys.argv[1]}")
