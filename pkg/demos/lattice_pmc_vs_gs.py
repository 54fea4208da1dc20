"""PMC against generalized splitting on the 4x4 lattice.

Run with ``python demos/lattice_pmc_vs_gs.py``.  Takes about half a minute.
"""

# %% A 4x4 lattice, every link with levels 0..8 and geometric probabilities.
from stochflow import ExperimentConfig, ParametricFamily, lattice, run

family = ParametricFamily(rho=0.6, epsilon=1e-4, b=8)
model = lattice(4, family, demand=10)
print(f"{len(model.links)} links, source {model.source}, sink {model.sink}, demand {model.demand}")
print(f"state space: {model.state_count():.3g} capacity vectors, far beyond enumeration")

# %% Crude Monte Carlo would need ~1/u samples just to see one failure.
# PMC integrates out the jump times; each replication is a whole probability.
pmc = run(ExperimentConfig("pmc", 20_000, seed=7), model, epsilon=1e-4)
print(f"PMC      u ~ {pmc.estimate:.3e}  RE {pmc.re:.3f}  {pmc.time_s:.1f}s")

# %% FilterAll drops jumps that can no longer change the flow.
filt = run(ExperimentConfig("pmc-all", 20_000, seed=7, nu=1), model, epsilon=1e-4)
print(f"PMC+all  u ~ {filt.estimate:.3e}  RE {filt.re:.3f}  {filt.time_s:.1f}s")

# %% GS learns a ladder of levels in a pilot, then splits trajectories across it.
gs = run(ExperimentConfig("gs", 5_000, seed=7), model, epsilon=1e-4)
print(f"GS       u ~ {gs.estimate:.3e}  RE {gs.re:.3f}  {gs.time_s:.1f}s "
      f"({len(gs.levels) - 1} levels, pilot {gs.pilot_time_s:.1f}s)")

# %% Work-normalized variance compares methods at equal computing time.
for r in (pmc, filt, gs):
    print(f"{r.method:9s} WNRV {r.wnrv:.3g}")
